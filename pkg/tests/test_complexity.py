import math

import pytest
import torch
import torch.nn as nn

from desamba.complexity import complexity, count_macs, count_parameters, fft_macs
from desamba.config import ModelConfig
from desamba.model import SAMNetClassifier
from desamba.spectral import SAMB


def test_single_conv_hand_arithmetic():
    conv = nn.Conv3d(1, 1, 3, bias=False)
    assert count_parameters(conv) == 27
    rep = complexity(conv, torch.zeros(1, 1, 5, 5, 5))
    assert rep.macs == 27 * 3 ** 3
    biased = nn.Conv3d(2, 4, 3, padding=1)
    assert count_parameters(biased) == 4 * 2 * 27 + 4
    assert count_macs(biased, torch.zeros(1, 2, 4, 4, 4)) == 4 * 64 * 2 * 27


def test_depthwise_and_linear():
    dw = nn.Conv3d(8, 8, 7, padding=3, groups=8)
    assert count_parameters(dw) == 8 * 343 + 8
    assert count_macs(dw, torch.zeros(1, 8, 2, 2, 2)) == 8 * 8 * 343
    lin = nn.Linear(10, 3)
    assert count_parameters(lin) == 33
    assert count_macs(lin, torch.zeros(4, 10)) == 4 * 30


def test_samb_fft_cost():
    block = SAMB(2)
    x = torch.zeros(1, 2, 4, 4, 4)
    n = 64
    linear = (4 * 4 * 3) * (6 * 2 + 2 * 2)  # 1x1 convs on the half spectrum grid
    mlp = 2 * 4 + 4 * 2                          # modulator on pooled channels
    assert count_macs(block, x) == pytest.approx(2 * 2 * 5 * n * math.log2(n) + linear + mlp)
    assert fft_macs(1) == 0


def test_report_formatting_and_width_scaling():
    cfg = ModelConfig(input_shape=(16, 32, 32), stage_depths=(1, 1, 1, 1), stage_widths=(8, 16, 32, 64),
                      enable_mamba_encoder=False, enable_decouple=False, enable_self_loss=False,
                      enable_cross_loss=False, enable_tabular_encoder=False)
    x = torch.zeros(1, 3, 16, 32, 32)
    small = complexity(SAMNetClassifier(cfg), x)
    big = complexity(SAMNetClassifier(cfg.replace(stage_widths=(16, 32, 64, 128))), x)
    assert 3.0 < big.params / small.params < 4.5
    assert 2.5 < big.macs / small.macs < 4.5
    text = small.format()
    assert text.startswith(f"Params: {small.params / 1e6:.2f}M  MACs: {small.macs / 1e9:.2f}G")
    assert small.params_m == small.params / 1e6
