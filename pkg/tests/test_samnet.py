import pytest
import torch
import torch.nn.functional as F

from desamba.config import ModelConfig
from desamba.errors import ContractError
from desamba.samnet import (SAMBlock, SAMNet, StagePlan, dynamic_gate, pad_amounts, pad_to_stride,
                            samblock_forward, samnet_forward)
from conftest import perturb_


def convnext_v2_block(x, blk):
    """Reference ConvNeXtV2 block: dw7 -> LN -> Linear 4x -> GELU -> GRN -> Linear, plus skip."""
    y = F.conv3d(x, blk.dwconv.weight, blk.dwconv.bias, padding=3, groups=x.shape[1])
    y = y.permute(0, 2, 3, 4, 1)
    t = blk.tail
    y = F.layer_norm(y, (y.shape[-1],), t.norm.weight, t.norm.bias, 1e-6)
    y = F.gelu(F.linear(y, t.pwconv1.weight, t.pwconv1.bias))
    gx = torch.sqrt((y * y).sum(dim=(1, 2, 3), keepdim=True) + 1e-6)
    nx = gx / (gx.mean(dim=-1, keepdim=True) + 1e-6)
    y = t.grn.gamma * (y * nx) + t.grn.beta + y
    y = F.linear(y, t.pwconv2.weight, t.pwconv2.bias)
    return x + y.permute(0, 4, 1, 2, 3)


def test_frequency_path_off_is_a_convnext_v2_block():
    torch.manual_seed(0)
    blk = perturb_(SAMBlock(4, frequency_path=False).double(), 0.1)
    x = torch.randn(2, 4, 4, 8, 8, dtype=torch.float64)
    assert torch.allclose(samblock_forward(x, blk), convnext_v2_block(x, blk.spatial), atol=1e-12)
    assert not hasattr(blk, "gate")


def test_gate_fusion_formula():
    torch.manual_seed(1)
    blk = perturb_(SAMBlock(4).double(), 0.1)
    x = torch.randn(1, 4, 4, 8, 8, dtype=torch.float64)
    f1, f2 = blk.spatial(x), blk.frequency(x)
    pooled = torch.cat([f1, f2], 1).mean(dim=(2, 3, 4))
    theta = torch.sigmoid(pooled @ blk.gate.proj.weight.T + blk.gate.proj.bias)[:, :, None, None, None]
    expected = 0.5 * x + 0.5 * theta * (blk.alpha * f1 + blk.beta * f2)
    assert torch.allclose(blk(x), expected, atol=1e-12)
    assert torch.allclose(dynamic_gate(f1, f2, blk.gate), theta, atol=1e-14)


def test_gate_starts_at_one_half_and_stays_in_unit_interval():
    blk = SAMBlock(3)
    f = torch.randn(2, 3, 2, 2, 2)
    assert torch.equal(blk.gate(f, f), torch.full((2, 3, 1, 1, 1), 0.5))
    with torch.no_grad():
        blk.gate.proj.weight.normal_(0, 50)
    th = blk.gate(f, -f)
    assert ((th >= 0) & (th <= 1)).all()
    with pytest.raises(ContractError):
        blk.gate(f, f[:, :, :1])


def test_samblock_frequency_branch_at_init_sees_identity_samb():
    torch.manual_seed(2)
    blk = SAMBlock(4).double()
    x = torch.randn(1, 4, 4, 8, 8, dtype=torch.float64)
    fb = blk.frequency
    assert torch.allclose(fb(x), fb.tail(fb.dwconv(x)), atol=1e-12)


@pytest.mark.parametrize("spatial, expected", [
    ((16, 64, 64), [(8, 32, 32), (4, 16, 16), (2, 8, 8), (1, 4, 4)]),
    ((10, 40, 33), [(8, 24, 24), (4, 12, 12), (2, 6, 6), (1, 3, 3)]),
])
def test_stage_shapes_and_padding(spatial, expected):
    plan = StagePlan((1, 1, 1, 1), (4, 8, 8, 16))
    assert plan.stage_shapes(spatial) == expected
    torch.manual_seed(0)
    outs = SAMNet(2, plan)(torch.randn(1, 2, *spatial))
    assert [tuple(o.shape[2:]) for o in outs] == expected
    assert [o.shape[1] for o in outs] == [4, 8, 8, 16]


def test_pad_to_stride_pads_right_with_zeros():
    x = torch.ones(1, 1, 15, 16, 17)
    y, pads = pad_to_stride(x)
    assert pads == (1, 0, 15) == pad_amounts((15, 16, 17))
    assert y.shape[-3:] == (16, 16, 32)
    assert y[..., :15, :, :17].eq(1).all() and y.sum() == x.sum()


def test_functional_form_is_seeded():
    cfg = ModelConfig(seed=4)
    plan = StagePlan((1, 1, 1, 1), (4, 4, 4, 4))
    x = torch.randn(1, 1, 16, 16, 16)
    a = samnet_forward(x, plan, cfg)
    b = samnet_forward(x, plan, cfg)
    assert all(torch.equal(u, v) for u, v in zip(a, b))


def test_contract_errors():
    with pytest.raises(ContractError):
        SAMBlock(4)(torch.zeros(1, 3, 4, 4, 4))
    with pytest.raises(ContractError):
        SAMNet(1, StagePlan((1, 1, 1, 1), (2, 2, 2, 2)))(torch.zeros(1, 16, 16, 16))
    with pytest.raises(ContractError):
        StagePlan((1, 1, 1), (2, 2, 2))
