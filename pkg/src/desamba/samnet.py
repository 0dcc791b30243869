"""SAMBlock (gated spatial/frequency branches) and the four-stage SAMNet backbone."""
from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError
from .layers import ConvNeXtTail, Downsample, init_weights, keep_init
from .spectral import SAMB

TOTAL_STRIDE = 16


@dataclass(frozen=True)
class StagePlan:
    depths: tuple[int, ...] = (3, 4, 6, 3)
    widths: tuple[int, ...] = (32, 64, 128, 256)

    def __post_init__(self):
        if len(self.depths) != 4 or len(self.widths) != 4:
            raise ContractError("a stage plan has exactly 4 stages")

    @classmethod
    def from_config(cls, config) -> "StagePlan":
        return cls(tuple(config.stage_depths), tuple(config.stage_widths))

    def stage_shapes(self, spatial_shape) -> list[tuple[int, int, int]]:
        """Spatial shape after each stage (input padded to a multiple of 16)."""
        padded = [s + padding for s, padding in zip(spatial_shape, pad_amounts(spatial_shape))]
        return [tuple(s // 2 ** (k + 1) for s in padded) for k in range(4)]


def pad_amounts(spatial_shape, multiple: int = TOTAL_STRIDE) -> tuple[int, int, int]:
    return tuple((-int(s)) % multiple for s in spatial_shape)


def pad_to_stride(x: torch.Tensor, multiple: int = TOTAL_STRIDE):
    """Right-pad the spatial axes with zeros; returns the padded tensor and the padding."""
    pads = pad_amounts(x.shape[-3:], multiple)
    if any(pads):
        # F.pad takes (W_left, W_right, H_left, H_right, D_left, D_right)
        x = F.pad(x, (0, pads[2], 0, pads[1], 0, pads[0]))
    return x, pads


class SpatialBranch(nn.Module):
    """ConvNeXtV2 branch: 7x7x7 depthwise conv followed by the pointwise tail."""

    def __init__(self, dim: int):
        super().__init__()
        self.dwconv = nn.Conv3d(dim, dim, kernel_size=7, padding=3, groups=dim)
        self.tail = ConvNeXtTail(dim)

    def forward(self, x):
        return self.tail(self.dwconv(x))


class FrequencyBranch(nn.Module):
    """SAMB -> 3x3x3 depthwise conv -> the same pointwise tail as the spatial branch."""

    def __init__(self, dim: int):
        super().__init__()
        self.samb = SAMB(dim)
        self.dwconv = nn.Conv3d(dim, dim, kernel_size=3, padding=1, groups=dim)
        self.tail = ConvNeXtTail(dim)

    def forward(self, x):
        return self.tail(self.dwconv(self.samb(x)))


class DynamicGate(nn.Module):
    """theta = sigmoid(W . avgpool([F1, F2]) + b), one value per channel."""

    def __init__(self, dim: int):
        super().__init__()
        self.proj = keep_init(nn.Linear(2 * dim, dim))
        nn.init.zeros_(self.proj.weight)
        nn.init.zeros_(self.proj.bias)

    def forward(self, f1, f2):
        if f1.shape != f2.shape:
            raise ContractError(f"branch shapes differ: {tuple(f1.shape)} vs {tuple(f2.shape)}")
        pooled = torch.cat([f1, f2], dim=1).mean(dim=(2, 3, 4))
        return torch.sigmoid(self.proj(pooled))[:, :, None, None, None]


def dynamic_gate(f1, f2, gate: DynamicGate):
    return gate(f1, f2)


class SAMBlock(nn.Module):
    """y = 0.5 x + 0.5 theta (alpha F1 + beta F2); with the frequency path off, y = x + F1."""

    residual_weight = 0.5
    feature_weight = 0.5

    def __init__(self, dim: int, frequency_path: bool = True):
        super().__init__()
        self.dim = dim
        self.frequency_path = frequency_path
        self.spatial = SpatialBranch(dim)
        if frequency_path:
            self.frequency = FrequencyBranch(dim)
            self.gate = DynamicGate(dim)
            self.alpha = nn.Parameter(torch.tensor(0.5))
            self.beta = nn.Parameter(torch.tensor(0.5))

    def fuse(self, x, f1, f2, theta):
        return (self.residual_weight * x
                + self.feature_weight * theta * (self.alpha * f1 + self.beta * f2))

    def forward(self, x):
        if x.shape[1] != self.dim:
            raise ContractError(f"block width {self.dim} does not match input channels {x.shape[1]}")
        f1 = self.spatial(x)
        if not self.frequency_path:
            return x + f1
        f2 = self.frequency(x)
        return self.fuse(x, f1, f2, self.gate(f1, f2))


def samblock_forward(x, params: SAMBlock):
    return params(x)


class SAMNet(nn.Module):
    """Four-stage backbone of SAMBlocks; returns the feature map of every stage."""

    def __init__(self, in_channels: int = 1, plan: StagePlan = StagePlan(),
                 frequency_path: bool = True):
        super().__init__()
        self.plan = plan
        self.frequency_path = frequency_path
        widths = plan.widths
        self.downsample = nn.ModuleList(
            [Downsample(in_channels, widths[0], stem=True)]
            + [Downsample(widths[k - 1], widths[k]) for k in range(1, 4)])
        self.stages = nn.ModuleList(
            nn.Sequential(*[SAMBlock(widths[k], frequency_path) for _ in range(plan.depths[k])])
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


def samnet_forward(x, plan: StagePlan, config, model: SAMNet | None = None):
    """Functional form; builds a fresh (config-seeded) SAMNet unless ``model`` is given."""
    if model is None:
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(config.seed)
            model = SAMNet(x.shape[1], plan, config.enable_frequency_path)
    return model(x)
