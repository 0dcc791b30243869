"""Spectral adaptive modulation of 3D feature volumes.

A feature volume ``x`` of shape ``(B, C, D, H, W)`` is moved to the frequency
domain with a real FFT over the three spatial axes (half spectrum along the
last axis, ``W // 2 + 1`` bins), its real and imaginary parts are recalibrated
by a learned per-channel modulation factor and an enhancement field, and the
result is transformed back::

    R' = R * (1 + alpha * (f_m - 1)) + beta * f_e * phi
    I' = I * (1 + alpha * (f_m - 1))

with ``phi = sqrt(R**2 + I**2)`` taken from the unmodulated spectrum.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import ContractError, NumericInputError
from .layers import keep_init

SPATIAL_DIMS = (-3, -2, -1)


@dataclass
class SpectralTensor:
    """Half-spectrum of a real volume split into real and imaginary parts."""

    real: torch.Tensor
    imag: torch.Tensor

    def __post_init__(self):
        if self.real.shape != self.imag.shape:
            raise ContractError(
                f"real {tuple(self.real.shape)} and imag {tuple(self.imag.shape)} differ")

    @property
    def magnitude(self) -> torch.Tensor:
        # zero-safe sqrt: exact 0 (and zero gradient) where R = I = 0
        r2 = self.real * self.real + self.imag * self.imag
        nonzero = r2 > 0
        return torch.where(nonzero, torch.sqrt(torch.where(nonzero, r2, torch.ones_like(r2))),
                           torch.zeros_like(r2))

    @property
    def shape(self) -> torch.Size:
        return self.real.shape

    def complex(self) -> torch.Tensor:
        return torch.complex(self.real, self.imag)


def half_spectrum_width(width: int) -> int:
    return width // 2 + 1


def forward_spectral(x: torch.Tensor) -> SpectralTensor:
    """Real FFT over the last three axes (unnormalized, so DC = spatial sum)."""
    if x.dim() < 3:
        raise ContractError(f"need at least 3 spatial axes, got shape {tuple(x.shape)}")
    if not torch.isfinite(x).all():
        raise NumericInputError("input volume contains NaN or infinite values")
    spec = torch.fft.rfftn(x, dim=SPATIAL_DIMS)
    return SpectralTensor(spec.real, spec.imag)


def inverse_spectral(s: SpectralTensor, spatial_shape) -> torch.Tensor:
    """Inverse of :func:`forward_spectral` for a volume of ``spatial_shape``."""
    spatial_shape = tuple(int(v) for v in spatial_shape)
    if len(spatial_shape) != 3:
        raise ContractError(f"spatial_shape must have 3 entries, got {spatial_shape}")
    d, h, w = spatial_shape
    expected = (d, h, half_spectrum_width(w))
    if tuple(s.shape[-3:]) != expected:
        raise ContractError(
            f"spectrum grid {tuple(s.shape[-3:])} does not match spatial shape "
            f"{spatial_shape} (expected {expected})")
    return torch.fft.irfftn(s.complex(), s=spatial_shape, dim=SPATIAL_DIMS)


def modulate(s: SpectralTensor, f_m: torch.Tensor, f_e: torch.Tensor,
             alpha, beta) -> SpectralTensor:
    """Recalibrate a spectrum with modulation factor ``f_m`` and enhancement ``f_e``."""
    if f_e.shape != s.shape:
        raise ContractError(f"f_e shape {tuple(f_e.shape)} != spectrum shape {tuple(s.shape)}")
    try:
        fits = torch.broadcast_shapes(f_m.shape, s.shape) == s.shape
    except RuntimeError:
        fits = False
    if not fits:
        raise ContractError(f"f_m shape {tuple(f_m.shape)} does not broadcast to {tuple(s.shape)}")
    phi = s.magnitude
    gain = 1 + alpha * (f_m - 1)
    return SpectralTensor(s.real * gain + beta * f_e * phi, s.imag * gain)


def standardize_channels(x: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    """Per-voxel normalization across channels (channels-first layer norm)."""
    mean = x.mean(dim=1, keepdim=True)
    var = x.var(dim=1, keepdim=True, unbiased=False)
    return (x - mean) / torch.sqrt(var + eps)


def _init_head(layer: nn.Module, zero: bool) -> None:
    """Output layer of the enhancement/modulator maps.

    Exactly zero makes f_e = 0 and f_m = 1, but alpha * (f_m - 1) and beta * f_e are
    then products of two zeros whose gradients vanish together, so the block could
    never leave the identity. By default the head gets small random weights; the
    identity at init is still guaranteed by alpha = beta = 0.
    """
    if zero:
        nn.init.zeros_(layer.weight)
    else:
        nn.init.trunc_normal_(layer.weight, std=0.02)
    nn.init.zeros_(layer.bias)


class FrequencyEnhancement(nn.Module):
    """Pointwise map from ``[R, I, phi]`` (3C channels) to an enhancement field f_e."""

    def __init__(self, channels: int, hidden: int | None = None, zero_head: bool = False):
        super().__init__()
        hidden = hidden or channels
        self.fc1 = nn.Conv3d(3 * channels, hidden, kernel_size=1)
        self.act = nn.GELU()
        self.fc2 = keep_init(nn.Conv3d(hidden, channels, kernel_size=1))
        _init_head(self.fc2, zero_head)

    def forward(self, s: SpectralTensor) -> torch.Tensor:
        # orthonormal rescaling keeps the input O(1) regardless of grid size
        scale = 1.0 / math.sqrt(s.shape[-3] * s.shape[-2] * max(2 * (s.shape[-1] - 1), 1))
        z = torch.cat([s.real, s.imag, s.magnitude], dim=1) * scale
        return self.fc2(self.act(self.fc1(z)))


class Modulator(nn.Module):
    """Per-channel modulation factor from the globally pooled, normalized input.

    ``f_m = softplus(z) + 1 - log(2)`` so a zero output head gives ``f_m = 1``
    and ``f_m > 0`` always.
    """

    offset = 1.0 - math.log(2.0)

    def __init__(self, channels: int, hidden: int | None = None, zero_head: bool = False):
        super().__init__()
        hidden = hidden or max(channels // 2, 4)
        self.fc1 = nn.Linear(channels, hidden)
        self.act = nn.GELU()
        self.fc2 = keep_init(nn.Linear(hidden, channels))
        _init_head(self.fc2, zero_head)

    def forward(self, x_norm: torch.Tensor) -> torch.Tensor:
        pooled = x_norm.mean(dim=SPATIAL_DIMS)
        z = self.fc2(self.act(self.fc1(pooled)))
        f_m = F.softplus(z) + self.offset
        return f_m[:, :, None, None, None]


class SAMB(nn.Module):
    """Spectral adaptive modulation block; identity map at initialization."""

    def __init__(self, channels: int, zero_heads: bool = False):
        super().__init__()
        self.channels = channels
        self.alpha = nn.Parameter(torch.zeros(()))
        self.beta = nn.Parameter(torch.zeros(()))
        self.enhance = FrequencyEnhancement(channels, zero_head=zero_heads)
        self.modulator = Modulator(channels, zero_head=zero_heads)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.dim() != 5 or x.shape[1] != self.channels:
            raise ContractError(
                f"expected (B, {self.channels}, D, H, W), got {tuple(x.shape)}")
        s = forward_spectral(x)
        f_e = self.enhance(s)
        f_m = self.modulator(standardize_channels(x))
        return inverse_spectral(modulate(s, f_m, f_e, self.alpha, self.beta), x.shape[-3:])


def samb_forward(x: torch.Tensor, params: SAMB) -> torch.Tensor:
    return params(x)
