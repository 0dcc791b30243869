"""Building blocks shared by the 3D backbones."""
from __future__ import annotations

import torch
import torch.nn as nn


class SampleNorm3d(nn.Module):
    """Layer normalization over all of (C, D, H, W) per sample, per-channel affine.

    Unlike a per-voxel channel norm this keeps the relative local energy of the
    feature map, which carries the texture statistics the network has to see.
    """

    def __init__(self, channels: int, eps: float = 1e-6):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(channels))
        self.bias = nn.Parameter(torch.zeros(channels))
        self.eps = eps

    def forward(self, x):
        var, mean = torch.var_mean(x, dim=(1, 2, 3, 4), keepdim=True, unbiased=False)
        x = (x - mean) * torch.rsqrt(var + self.eps)
        return x * self.weight[:, None, None, None] + self.bias[:, None, None, None]


class GRN(nn.Module):
    """Global response normalization (ConvNeXtV2), channels-last input."""

    def __init__(self, dim: int, eps: float = 1e-6):
        super().__init__()
        self.gamma = nn.Parameter(torch.zeros(dim))
        self.beta = nn.Parameter(torch.zeros(dim))
        self.eps = eps

    def forward(self, x):
        gx = torch.sqrt((x * x).sum(dim=(1, 2, 3), keepdim=True) + self.eps)
        nx = gx / (gx.mean(dim=-1, keepdim=True) + self.eps)
        return self.gamma * (x * nx) + self.beta + x


class ConvNeXtTail(nn.Module):
    """Norm -> 4x pointwise expansion -> GELU -> GRN -> projection (channels-first I/O)."""

    def __init__(self, dim: int, expansion: int = 4):
        super().__init__()
        self.norm = nn.LayerNorm(dim, eps=1e-6)
        self.pwconv1 = nn.Linear(dim, expansion * dim)
        self.act = nn.GELU()
        self.grn = GRN(expansion * dim)
        self.pwconv2 = nn.Linear(expansion * dim, dim)

    def forward(self, x):
        x = x.permute(0, 2, 3, 4, 1)
        x = self.pwconv2(self.grn(self.act(self.pwconv1(self.norm(x)))))
        return x.permute(0, 4, 1, 2, 3)


class Downsample(nn.Module):
    """Non-overlapping 2x2x2 strided conv; the stem normalizes after, later stages before."""

    def __init__(self, in_ch: int, out_ch: int, stem: bool = False):
        super().__init__()
        self.stem = stem
        self.norm = SampleNorm3d(out_ch if stem else in_ch)
        self.conv = nn.Conv3d(in_ch, out_ch, kernel_size=2, stride=2)

    def forward(self, x):
        if self.stem:
            return self.norm(self.conv(x))
        return self.conv(self.norm(x))


def init_weights(module: nn.Module) -> None:
    """Truncated-normal init for conv/linear layers that were not explicitly zeroed."""
    for m in module.modules():
        if isinstance(m, (nn.Conv3d, nn.Linear)) and not getattr(m, "_keep_init", False):
            nn.init.trunc_normal_(m.weight, std=0.02)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


def keep_init(m: nn.Module) -> nn.Module:
    """Mark a layer so :func:`init_weights` leaves it alone (e.g. zero-initialized heads)."""
    m._keep_init = True
    return m
