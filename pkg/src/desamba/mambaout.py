"""3D MambaOut branch: stages of gated CNN blocks without a state-space mixer."""
from __future__ import annotations

import torch
import torch.nn as nn

from .errors import ContractError
from .layers import Downsample, init_weights, keep_init
from .samnet import StagePlan, pad_to_stride


class GatedCNNBlock(nn.Module):
    """y = x + proj(gelu(g) * dwconv3d(v)), where [g, v] = fc(norm(x)).

    The projection is zero-initialized, so a fresh block is the identity.
    """

    def __init__(self, dim: int, expansion: int = 2, kernel_size: int = 3):
        super().__init__()
        self.dim = dim
        hidden = expansion * dim
        self.hidden = hidden
        self.norm = nn.LayerNorm(dim, eps=1e-6)
        self.fc1 = nn.Linear(dim, 2 * hidden)
        self.act = nn.GELU()
        self.conv = nn.Conv3d(hidden, hidden, kernel_size, padding=kernel_size // 2, groups=hidden)
        self.proj = keep_init(nn.Linear(hidden, dim))
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, x):
        if x.shape[1] != self.dim:
            raise ContractError(f"block width {self.dim} does not match input channels {x.shape[1]}")
        z = self.fc1(self.norm(x.permute(0, 2, 3, 4, 1)))
        g, v = torch.split(z, self.hidden, dim=-1)
        v = self.conv(v.permute(0, 4, 1, 2, 3)).permute(0, 2, 3, 4, 1)
        delta = self.proj(self.act(g) * v)
        return x + delta.permute(0, 4, 1, 2, 3)


def gated_cnn_block(x, params: GatedCNNBlock):
    return params(x)


class MambaOut3D(nn.Module):
    """Four-stage gated-CNN backbone sharing SAMNet's stride and width plan."""

    def __init__(self, in_channels: int = 1, plan: StagePlan = StagePlan()):
        super().__init__()
        self.plan = plan
        widths = plan.widths
        self.downsample = nn.ModuleList(
            [Downsample(in_channels, widths[0], stem=True)]
            + [Downsample(widths[k - 1], widths[k]) for k in range(1, 4)])
        self.stages = nn.ModuleList(
            nn.Sequential(*[GatedCNNBlock(widths[k]) for _ in range(plan.depths[k])])
            for k in range(4))
        init_weights(self)

    def forward(self, x) -> list[torch.Tensor]:
        if x.dim() != 5:
            raise ContractError(f"expected (B, C, D, H, W), got {tuple(x.shape)}")
        x, _ = pad_to_stride(x)
        outs = []
        for down, stage in zip(self.downsample, self.stages):
            x = stage(down(x))
            outs.append(x)
        return outs


def mambaout_forward(x, plan: StagePlan, seed: int = 0, model: MambaOut3D | None = None):
    if model is None:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(seed)
            model = MambaOut3D(x.shape[1], plan)
    return model(x)
