import numpy as np
import pytest
import torch

from desamba.config import ModelConfig
from desamba.data.synth import ClassSignature, SynthSpec


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_spec():
    """Two-class synthetic spec small enough to train in seconds."""
    return SynthSpec(
        classes=(ClassSignature((0.06, 0.10), radius=(3, 4)),
                 ClassSignature((0.30, 0.40), radius=(3, 4))),
        volume_shape=(12, 16, 16),
        cases_per_class={"train": 3, "internal_test": 2, "external_test": 1})


@pytest.fixture
def tiny_config():
    return ModelConfig(num_classes=2, input_shape=(8, 16, 16), stage_depths=(1, 1, 1, 1),
                       stage_widths=(4, 4, 8, 8), feature_dim=8, tabular_dim=4,
                       head_hidden=8, dropout=0.0)


def perturb_(module, scale=0.3, seed=0):
    """Move every parameter away from its (often zero) initial value."""
    g = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        for p in module.parameters():
            p.add_(scale * torch.randn(p.shape, generator=g, dtype=p.dtype))
    return module


ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    """Remember a criterion outcome; the summary prints one line per criterion."""
    ACCEPTANCE_LINES[number] = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
