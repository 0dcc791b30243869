"""Full multi-sequence classifier and a single-encoder SAMNet classifier."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn

from .config import ModelConfig, derive_seed
from .drlm import DRLM, DecoupledBundle, drlm_losses, pair_keys
from .errors import ContractError
from .fusion import SequenceEncoder
from .head import ClassifierHead, LossBreakdown, TabularEncoder, TabularSchema, total_loss
from .samnet import SAMNet, StagePlan


def _seeded(seed: int, component: str, build):
    """Build a submodule under its own derived seed without touching the global RNG."""
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(derive_seed(seed, component))
        return build()


@dataclass
class ModelOutput:
    logits: torch.Tensor
    features: list[torch.Tensor]
    bundle: DecoupledBundle | None = None


class DeSamba(nn.Module):
    """Per-sequence encoders -> (optional) DRLM -> head, with an optional tabular branch.

    ``forward(volumes, tabular)`` takes ``volumes`` of shape (B, N, D, H, W), one
    channel per sequence, and the collated tabular dict (or None).
    """

    def __init__(self, config: ModelConfig, schema: TabularSchema | None = None):
        super().__init__()
        self.config = config
        n = config.num_sequences
        seed = config.seed
        self.encoders = nn.ModuleList(
            _seeded(seed, f"encoder.{name}", lambda: SequenceEncoder(config))
            for name in config.sequence_names)
        self.drlm = None
        if config.enable_decouple:
            self.drlm = _seeded(seed, "drlm", lambda: DRLM(
                n, config.feature_dim, config.d_unique, config.d_shared,
                cross_single_fallback=config.cross_single_fallback))
        self.tabular = None
        if config.enable_tabular_encoder:
            if schema is None:
                raise ContractError("tabular encoder enabled but no schema given")
            self.tabular = _seeded(seed, "tabular",
                                   lambda: TabularEncoder(schema, config.tabular_dim))
        if config.enable_decouple:
            rep_dim = n * config.d_unique + len(pair_keys(n)) * config.d_shared
        else:
            rep_dim = n * config.feature_dim
        if self.tabular is not None:
            rep_dim += config.tabular_dim
        self.head = _seeded(seed, "head", lambda: ClassifierHead(
            rep_dim, config.head_hidden, config.num_classes, config.dropout))

    def encode(self, volumes) -> list[torch.Tensor]:
        if volumes.dim() != 5 or volumes.shape[1] != len(self.encoders):
            raise ContractError(
                f"expected (B, {len(self.encoders)}, D, H, W) volumes, got {tuple(volumes.shape)}")
        return [enc(volumes[:, i:i + 1]) for i, enc in enumerate(self.encoders)]

    def classify(self, features, bundle, tab_embedding):
        if (bundle is None) == (self.drlm is not None):
            raise ContractError("decoupled bundle presence does not match the De flag")
        if (tab_embedding is None) == (self.tabular is not None):
            raise ContractError("tabular embedding presence does not match the TE flag")
        rep = bundle.representation() if bundle is not None else torch.cat(features, dim=-1)
        if tab_embedding is not None:
            rep = torch.cat([rep, tab_embedding], dim=-1)
        return self.head(rep)

    def forward(self, volumes, tabular=None) -> ModelOutput:
        features = self.encode(volumes)
        bundle = None
        if self.drlm is not None:
            # reconstructions are only built for the loss terms that are switched on
            bundle = self.drlm(features, self_recon=self.config.enable_self_loss,
                               cross_recon=self.config.enable_cross_loss)
        tab = None
        if self.tabular is not None:
            if tabular is None:
                raise ContractError("model has a tabular encoder but no tabular input was given")
            tab = self.tabular(tabular)
        return ModelOutput(self.classify(features, bundle, tab), features, bundle)

    def loss(self, out: ModelOutput, labels) -> LossBreakdown:
        rec = None
        if out.bundle is not None:
            rec = drlm_losses(out.bundle, out.features, self.config.enable_self_loss,
                              self.config.enable_cross_loss)
        return total_loss(out.logits, labels, rec, self.config)


class SAMNetClassifier(nn.Module):
    """One SAMNet over all sequences stacked as input channels.

    Each stage map is summarized by its per-channel log mean square; the
    concatenated summaries go through a LayerNorm and a linear layer. Texture
    classes differ in local energy, which a plain spatial mean of sign-symmetric
    responses averages away. With ``enable_frequency_path`` off this is the
    ConvNeXtV2-style baseline.
    """

    def __init__(self, config: ModelConfig, in_channels: int | None = None):
        super().__init__()
        self.config = config
        in_channels = in_channels or config.num_sequences
        self.backbone = _seeded(config.seed, "samnet_classifier", lambda: SAMNet(
            in_channels, StagePlan.from_config(config), config.enable_frequency_path))
        width = sum(config.stage_widths)
        self.norm = nn.LayerNorm(width)
        self.fc = _seeded(config.seed, "samnet_classifier.fc",
                          lambda: nn.Linear(width, config.num_classes))

    def forward(self, volumes, tabular=None) -> ModelOutput:
        stages = self.backbone(volumes)
        pooled = torch.cat([energy_pool(s) for s in stages], dim=-1)
        pooled = self.norm(pooled)
        return ModelOutput(self.fc(pooled), [pooled])

    def loss(self, out: ModelOutput, labels) -> LossBreakdown:
        return total_loss(out.logits, labels, None, None)


def energy_pool(x: torch.Tensor, eps: float = 1e-4) -> torch.Tensor:
    """log(mean(x^2) + eps) over the spatial axes of a (B, C, D, H, W) map."""
    return torch.log(x.pow(2).mean(dim=(2, 3, 4)) + eps)


def build_model(config: ModelConfig, schema: TabularSchema | None = None,
                kind: str = "desamba") -> nn.Module:
    if kind == "desamba":
        return DeSamba(config, schema)
    if kind == "samnet":
        return SAMNetClassifier(config)
    raise ContractError(f"unknown model kind {kind!r}")
