"""Synthetic multi-sequence lesion volumes with class-specific spectral signatures.

Every sequence of a case is

    shared_strength * S + unique_strength * U_seq + lesion_seq + noise * W_seq

where S is a smooth field common to all sequences, U_seq a smooth field of
its own, W_seq white noise, and ``lesion_seq = mask * (contrast_seq + T)``
with T a texture whose spectrum is confined to the class's radial frequency
band (cycles/voxel). Classes differ only through their band and amplitude
unless their shape priors are set differently.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from scipy import ndimage

from ..errors import ValidationError
from ..head import Column, TabularSchema
from .io import COHORTS, DatasetInfo, MultiSequenceCase


@dataclass(frozen=True)
class ClassSignature:
    band: tuple[float, float]
    amplitude: float = 3.0
    blob_count: tuple[int, int] = (1, 1)
    radius: tuple[float, float] = (8.0, 11.0)

    def vector(self) -> np.ndarray:
        return np.array([self.band[0], self.band[1], self.amplitude])


# separated bands; each is wide enough to hold many FFT bins of a 28x80x80 grid
DEFAULT_BANDS = ((0.06, 0.09), (0.11, 0.14), (0.16, 0.20), (0.23, 0.27), (0.30, 0.35), (0.39, 0.45))


def default_schema() -> TabularSchema:
    return TabularSchema((Column("age", "numeric", mean=60.0, std=12.0),
                          Column("pain_score", "numeric", mean=5.0, std=2.0),
                          Column("sex", "categorical", cardinality=2)))


@dataclass(frozen=True)
class SynthSpec:
    classes: tuple[ClassSignature, ...] = tuple(ClassSignature(b) for b in DEFAULT_BANDS)
    volume_shape: tuple[int, int, int] = (28, 80, 80)
    sequences: tuple[str, ...] = ("T1", "T2", "T2FS")
    sequence_contrast: tuple[float, ...] = (1.0, 1.5, 2.0)
    shared_strength: float = 0.5
    unique_strength: float = 0.25
    smooth_sigma: float = 4.0
    noise: float = 0.1
    external_noise_scale: float = 1.5
    missing_rate: float = 0.1
    cases_per_class: dict = field(default_factory=lambda: {"train": 30, "internal_test": 10,
                                                           "external_test": 10})
    signature_floor: float = 0.02

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if len(self.classes) < 2:
            raise ValidationError("classes", "need at least two classes")
        if len(self.sequence_contrast) != len(self.sequences):
            raise ValidationError("sequence_contrast", "one contrast per sequence")
        if len(self.volume_shape) != 3 or min(self.volume_shape) < 4:
            raise ValidationError("volume_shape", "need three sizes >= 4")
        for k, c in enumerate(self.classes):
            lo, hi = c.band
            if not 0 <= lo < hi <= 0.5 * np.sqrt(3):
                raise ValidationError(f"classes[{k}].band", f"invalid band {c.band}")
            if c.blob_count[0] < 1 or c.blob_count[1] < c.blob_count[0]:
                raise ValidationError(f"classes[{k}].blob_count", "need 1 <= min <= max")
            if not 0 < c.radius[0] <= c.radius[1]:
                raise ValidationError(f"classes[{k}].radius", "need 0 < min <= max")
            if 2 * c.radius[1] + 4 > min(self.volume_shape):
                raise ValidationError(f"classes[{k}].radius", "lesion does not fit the volume")
        for a in range(len(self.classes)):
            for b in range(a + 1, len(self.classes)):
                d = np.linalg.norm(self.classes[a].vector() - self.classes[b].vector())
                if d <= self.signature_floor:
                    raise ValidationError(
                        "classes", f"signatures of classes {a} and {b} are {d:.4f} apart "
                                   f"(floor {self.signature_floor})")
        unknown = set(self.cases_per_class) - set(COHORTS)
        if unknown:
            raise ValidationError("cases_per_class", f"unknown cohorts {sorted(unknown)}")
        if any(int(n) < 0 for n in self.cases_per_class.values()):
            raise ValidationError("cases_per_class", "counts must be non-negative")
        if not 0 <= self.missing_rate < 1:
            raise ValidationError("missing_rate", "must lie in [0, 1)")

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        data = dict(data or {})
        try:
            if "classes" in data:
                data["classes"] = tuple(
                    ClassSignature(**{k: tuple(v) if isinstance(v, list) else v
                                      for k, v in c.items()})
                    for c in data["classes"])
            for key in ("volume_shape", "sequences", "sequence_contrast"):
                if key in data:
                    data[key] = tuple(data[key])
            return cls(**data)
        except TypeError as exc:
            raise ValidationError("<spec>", str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "classes": [{"band": list(c.band), "amplitude": c.amplitude,
                         "blob_count": list(c.blob_count), "radius": list(c.radius)}
                        for c in self.classes],
            "volume_shape": list(self.volume_shape), "sequences": list(self.sequences),
            "sequence_contrast": list(self.sequence_contrast),
            "shared_strength": self.shared_strength, "unique_strength": self.unique_strength,
            "smooth_sigma": self.smooth_sigma, "noise": self.noise,
            "external_noise_scale": self.external_noise_scale,
            "missing_rate": self.missing_rate, "cases_per_class": dict(self.cases_per_class),
            "signature_floor": self.signature_floor,
        }

    @classmethod
    def load(cls, path) -> "SynthSpec":
        try:
            data = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ValidationError("<spec>", f"cannot parse {path}: {exc}") from None
        return cls.from_dict(data or {})

    def dataset_info(self) -> DatasetInfo:
        return DatasetInfo(self.sequences, self.num_classes, default_schema(),
                           class_names=tuple(f"class{k}" for k in range(self.num_classes)))


def radial_frequency(shape) -> np.ndarray:
    grids = np.meshgrid(*[np.fft.fftfreq(n) for n in shape], indexing="ij")
    return np.sqrt(sum(g * g for g in grids))


def band_limited_noise(rng, shape, band) -> np.ndarray:
    """White noise filtered to ``band[0] <= |k| < band[1]`` cycles/voxel, unit std."""
    white = rng.standard_normal(shape)
    k = radial_frequency(shape)
    spec = np.fft.fftn(white) * ((k >= band[0]) & (k < band[1]))
    tex = np.real(np.fft.ifftn(spec))
    return tex / max(tex.std(), 1e-12)


def smooth_field(rng, shape, sigma) -> np.ndarray:
    f = ndimage.gaussian_filter(rng.standard_normal(shape), sigma, mode="wrap")
    return f / max(f.std(), 1e-12)


def lesion_mask(rng, shape, sig: ClassSignature) -> np.ndarray:
    n_blobs = int(rng.integers(sig.blob_count[0], sig.blob_count[1] + 1))
    r_max = sig.radius[1]
    margin = int(np.ceil(r_max)) + 2
    center = np.array([rng.integers(margin, n - margin) if n > 2 * margin else n // 2
                       for n in shape], dtype=float)
    grid = np.indices(shape, dtype=float)
    mask = np.zeros(shape, dtype=bool)
    for b in range(n_blobs):
        r = rng.uniform(*sig.radius)
        c = center if b == 0 else center + rng.uniform(-r_max, r_max, size=3)
        d2 = sum((grid[a] - c[a]) ** 2 for a in range(3))
        mask |= d2 <= r * r
    return mask


def _tabular_record(rng, missing_rate) -> dict:
    rec = {"age": round(float(rng.normal(60, 12)), 1),
           "pain_score": round(float(rng.uniform(0, 10)), 1),
           "sex": int(rng.integers(0, 2))}
    return {k: (None if rng.random() < missing_rate else v) for k, v in rec.items()}


def generate_case(spec: SynthSpec, label: int, rng, case_id: str, cohort: str) -> MultiSequenceCase:
    shape = tuple(spec.volume_shape)
    sig = spec.classes[label]
    noise = spec.noise * (spec.external_noise_scale if cohort == "external_test" else 1.0)
    shared = smooth_field(rng, shape, spec.smooth_sigma)
    mask = lesion_mask(rng, shape, sig)
    texture = sig.amplitude * band_limited_noise(rng, shape, sig.band)
    volumes = {}
    for name, contrast in zip(spec.sequences, spec.sequence_contrast):
        unique = smooth_field(rng, shape, spec.smooth_sigma)
        vol = (spec.shared_strength * shared + spec.unique_strength * unique
               + mask * (contrast + texture) + noise * rng.standard_normal(shape))
        volumes[name] = vol.astype(np.float32)
    schema = default_schema()
    record = _tabular_record(rng, spec.missing_rate)
    return MultiSequenceCase(case_id, volumes, mask, label, schema.encode(record), cohort, record)


def synth_generate(spec: SynthSpec, seed: int) -> dict[str, list[MultiSequenceCase]]:
    """Balanced cohorts of synthetic cases; each case draws from its own stream
    seeded by (seed, cohort, index), so the output depends only on (spec, seed)."""
    spec.validate()
    out = {}
    for c_idx, cohort in enumerate(COHORTS):
        per_class = int(spec.cases_per_class.get(cohort, 0))
        cases = []
        for idx in range(per_class * spec.num_classes):
            label = idx % spec.num_classes
            rng = np.random.default_rng([int(seed), c_idx, idx])
            cases.append(generate_case(spec, label, rng, f"{cohort}_{idx:04d}", cohort))
        out[cohort] = cases
    return out
