"""Per-sequence dual-branch encoder and multi-scale pool-concat-project fusion."""
from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ContractError
from .mambaout import MambaOut3D
from .samnet import SAMNet, StagePlan


def pool_stages(stages) -> torch.Tensor:
    """Spatial mean of each stage map, concatenated along channels -> (B, sum widths)."""
    return torch.cat([s.mean(dim=(2, 3, 4)) for s in stages], dim=1)


def _check_aligned(a, b):
    if len(a) != len(b):
        raise ContractError(f"stage counts differ: {len(a)} vs {len(b)}")
    for k, (sa, sb) in enumerate(zip(a, b)):
        if sa.shape[0] != sb.shape[0] or sa.shape[2:] != sb.shape[2:]:
            raise ContractError(
                f"stage {k} maps are not aligned: {tuple(sa.shape)} vs {tuple(sb.shape)}")


class MultiScaleFusion(nn.Module):
    """Pool every stage of every active branch, concatenate, project to ``out_dim``."""

    def __init__(self, pooled_dim: int, out_dim: int):
        super().__init__()
        self.pooled_dim = pooled_dim
        self.proj = nn.Linear(pooled_dim, out_dim)

    def forward(self, samnet_stages=None, mambaout_stages=None) -> torch.Tensor:
        if samnet_stages is not None and mambaout_stages is not None:
            _check_aligned(samnet_stages, mambaout_stages)
        parts = [pool_stages(s) for s in (samnet_stages, mambaout_stages) if s is not None]
        if not parts:
            raise ContractError("fusion needs at least one stage pyramid")
        pooled = torch.cat(parts, dim=1)
        if pooled.shape[1] != self.pooled_dim:
            raise ContractError(f"pooled length {pooled.shape[1]} != expected {self.pooled_dim}")
        return self.proj(pooled)


def fuse_multiscale(samnet_stages, mambaout_stages, fusion: MultiScaleFusion) -> torch.Tensor:
    return fusion(samnet_stages, mambaout_stages)


class SequenceEncoder(nn.Module):
    """SAMNet and/or MambaOut over one sequence volume, fused into an initial feature f_i."""

    def __init__(self, config, in_channels: int = 1):
        super().__init__()
        plan = StagePlan.from_config(config)
        self.samnet = (SAMNet(in_channels, plan, config.enable_frequency_path)
                       if config.enable_cnn_encoder else None)
        self.mambaout = MambaOut3D(in_channels, plan) if config.enable_mamba_encoder else None
        n_branches = int(self.samnet is not None) + int(self.mambaout is not None)
        self.fusion = MultiScaleFusion(n_branches * sum(plan.widths), config.feature_dim)
        self.feature_dim = config.feature_dim

    def forward(self, x) -> torch.Tensor:
        a = self.samnet(x) if self.samnet is not None else None
        b = self.mambaout(x) if self.mambaout is not None else None
        return self.fusion(a, b)


def encode_sequence(x_i, encoder: SequenceEncoder) -> torch.Tensor:
    return encoder(x_i)
