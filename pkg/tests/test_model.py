import pytest
import torch

from desamba.config import ABLATION_TABLE, ModelConfig, ablation_config
from desamba.errors import ContractError
from desamba.model import DeSamba, SAMNetClassifier, build_model, energy_pool
from desamba.data.synth import default_schema

MICRO = ModelConfig(input_shape=(16, 16, 16), stage_depths=(1, 1, 1, 1), stage_widths=(2, 2, 4, 4),
                    feature_dim=8, tabular_dim=4, head_hidden=8, dropout=0.0)
SCHEMA = default_schema()


def batch(b=2):
    x = torch.randn(b, 3, 16, 16, 16)
    tab = SCHEMA.collate([SCHEMA.encode({"age": 40 + k, "sex": k % 2}) for k in range(b)])
    return x, tab


@pytest.mark.parametrize("name", list(ABLATION_TABLE))
def test_every_ablation_variant_runs(name):
    cfg = ablation_config(name, MICRO)
    model = build_model(cfg, SCHEMA if cfg.enable_tabular_encoder else None)
    x, tab = batch()
    out = model(x, tab if cfg.enable_tabular_encoder else None)
    assert out.logits.shape == (2, 6)
    assert (out.bundle is not None) == cfg.enable_decouple
    loss = model.loss(out, torch.tensor([0, 5]))
    assert torch.isfinite(loss.total)
    loss.total.backward()


def test_initialization_is_seeded_and_component_isolated():
    a = DeSamba(MICRO, SCHEMA)
    b = DeSamba(MICRO, SCHEMA)
    assert all(torch.equal(p, q) for p, q in zip(a.state_dict().values(), b.state_dict().values()))
    c = DeSamba(MICRO.replace(seed=1), SCHEMA)
    assert not torch.equal(a.head.net[0].weight, c.head.net[0].weight)
    # dropping the tabular branch does not change how the other parts start
    d = DeSamba(MICRO.replace(enable_tabular_encoder=False), None)
    for k, v in d.encoders.state_dict().items():
        assert torch.equal(v, a.encoders.state_dict()[k])
    for k, v in d.drlm.state_dict().items():
        assert torch.equal(v, a.drlm.state_dict()[k])


def test_global_rng_untouched_by_model_construction():
    torch.manual_seed(5)
    expected = torch.rand(3)
    torch.manual_seed(5)
    DeSamba(MICRO, SCHEMA)
    assert torch.equal(torch.rand(3), expected)


def test_representation_layout():
    model = DeSamba(MICRO, SCHEMA)
    x, tab = batch()
    out = model(x, tab)
    assert out.bundle.representation().shape == (2, 3 * 4 + 3 * 4)
    assert len(out.features) == 3 and out.features[0].shape == (2, 8)


def test_contracts():
    model = DeSamba(MICRO, SCHEMA)
    x, tab = batch()
    with pytest.raises(ContractError):
        model(x)
    with pytest.raises(ContractError):
        model(x[:, :2], tab)
    with pytest.raises(ContractError):
        DeSamba(MICRO)
    with pytest.raises(ContractError):
        build_model(MICRO, SCHEMA, "resnet")


def test_samnet_classifier_and_energy_pool():
    cfg = MICRO.replace(enable_tabular_encoder=False, enable_decouple=False,
                        enable_self_loss=False, enable_cross_loss=False, enable_mamba_encoder=False)
    model = SAMNetClassifier(cfg)
    out = model(torch.randn(2, 3, 16, 16, 16))
    assert out.logits.shape == (2, 6) and out.features[0].shape == (2, sum(cfg.stage_widths))
    x = torch.full((1, 2, 2, 2, 2), 3.0)
    assert torch.allclose(energy_pool(x), torch.log(torch.tensor([[9.0001, 9.0001]])))
