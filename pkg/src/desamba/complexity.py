"""Parameter counts and multiply-accumulate (MAC) estimates.

Counted per forward pass at a given input shape:

* Conv3d: ``out_voxels * C_out * (C_in / groups) * k_d * k_h * k_w``
* Linear: ``rows * in_features * out_features``
* Embedding: 0
* each 3D FFT or inverse FFT inside a SAMB: ``5 * N * log2(N)`` per (sample, channel),
  N = voxel count of the transformed grid

Normalizations, activations and elementwise arithmetic are not counted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import torch
import torch.nn as nn

from .spectral import SAMB


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())


def fft_macs(n_voxels: int) -> float:
    return 5.0 * n_voxels * math.log2(n_voxels) if n_voxels > 1 else 0.0


@dataclass
class ComplexityReport:
    params: int
    macs: float
    input_shape: tuple

    @property
    def params_m(self) -> float:
        return self.params / 1e6

    @property
    def macs_g(self) -> float:
        return self.macs / 1e9

    def format(self) -> str:
        shape = "x".join(str(s) for s in self.input_shape)
        return f"Params: {self.params_m:.2f}M  MACs: {self.macs_g:.2f}G  (input {shape})"


def count_macs(model: nn.Module, *inputs) -> float:
    total = [0.0]

    def conv_hook(m: nn.Conv3d, _inp, out):
        k = math.prod(m.kernel_size)
        total[0] += out.numel() * (m.in_channels // m.groups) * k

    def linear_hook(m: nn.Linear, _inp, out):
        total[0] += (out.numel() // m.out_features) * m.in_features * m.out_features

    def samb_hook(m: SAMB, inp, _out):
        x = inp[0]
        n = x.shape[-3] * x.shape[-2] * x.shape[-1]
        total[0] += 2 * x.shape[0] * x.shape[1] * fft_macs(n)

    handles = []
    for m in model.modules():
        if isinstance(m, nn.Conv3d):
            handles.append(m.register_forward_hook(conv_hook))
        elif isinstance(m, nn.Linear):
            handles.append(m.register_forward_hook(linear_hook))
        elif isinstance(m, SAMB):
            handles.append(m.register_forward_hook(samb_hook))
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            model(*inputs)
    finally:
        for h in handles:
            h.remove()
        model.train(was_training)
    return total[0]


def complexity(model: nn.Module, *inputs) -> ComplexityReport:
    shape = tuple(inputs[0].shape) if inputs else ()
    return ComplexityReport(count_parameters(model), count_macs(model, *inputs) if inputs else 0.0,
                            shape)
