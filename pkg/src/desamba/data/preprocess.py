"""ROI-centred cropping, z-scoring and light augmentation."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .io import MultiSequenceCase

STD_FLOOR = 1e-6


@dataclass
class Prepared:
    image: np.ndarray  # (N, D, H, W) float32, sequences in declared order
    mask: np.ndarray   # (D, H, W) bool, cropped alongside
    label: int
    case_id: str
    tabular: object = None


def roi_centroid(mask: np.ndarray) -> tuple[int, ...]:
    idx = np.argwhere(mask)
    return tuple(int(v) for v in np.floor(idx.mean(axis=0) + 0.5))


def crop_centered(vol: np.ndarray, center, shape) -> np.ndarray:
    """Crop ``shape`` around ``center`` (start = center - size // 2), zero-padding
    wherever the window leaves the volume."""
    out = np.zeros(shape, dtype=vol.dtype)
    src, dst = [], []
    for c, size, n in zip(center, shape, vol.shape):
        start = c - size // 2
        lo, hi = max(start, 0), min(start + size, n)
        if hi <= lo:
            return out
        src.append(slice(lo, hi))
        dst.append(slice(lo - start, hi - start))
    out[tuple(dst)] = vol[tuple(src)]
    return out


def zscore(vol: np.ndarray) -> np.ndarray:
    vol = vol.astype(np.float64)
    return ((vol - vol.mean()) / max(vol.std(), STD_FLOOR)).astype(np.float32)


def preprocess(case: MultiSequenceCase, config, sequences=None) -> Prepared:
    """Crop every sequence around the ROI centroid to ``config.input_shape`` and
    z-score each crop. ``config`` may also be a bare (D, H, W) tuple."""
    if hasattr(config, "input_shape"):
        input_shape = tuple(config.input_shape)
        sequences = sequences or list(config.sequence_names)
    else:
        input_shape = tuple(config)
    sequences = sequences or list(case.volumes)
    center = roi_centroid(case.mask)
    image = np.stack([zscore(crop_centered(case.volumes[s], center, input_shape))
                      for s in sequences])
    mask = crop_centered(case.mask.astype(bool), center, input_shape)
    return Prepared(image, mask, case.label, case.case_id, case.tabular)


def flip_lr(arr: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(arr[..., ::-1])


def shift_edge(arr: np.ndarray, offsets) -> np.ndarray:
    """Translate the last len(offsets) axes by integer offsets, repeating the edge voxels.

    Zero filling would add a sharp artificial border whose high-frequency energy
    swamps texture cues.
    """
    lead = arr.ndim - len(offsets)
    src = [slice(None)] * lead
    pads = [(0, 0)] * lead
    for off, n in zip(offsets, arr.shape[lead:]):
        off = int(np.clip(off, -(n - 1), n - 1))
        src.append(slice(max(-off, 0), n - max(off, 0)))
        pads.append((max(off, 0), max(-off, 0)))
    return np.pad(arr[tuple(src)], pads, mode="edge")


@dataclass(frozen=True)
class AugmentParams:
    flip: bool
    scale: float
    shift: tuple[int, int, int]


def sample_augment(seed, max_scale: float = 0.1, max_shift: int = 2) -> AugmentParams:
    rng = np.random.default_rng(seed)
    flip = bool(rng.random() < 0.5)
    scale = float(rng.uniform(1.0 - max_scale, 1.0 + max_scale))
    shift = tuple(int(v) for v in rng.integers(-max_shift, max_shift + 1, size=3))
    return AugmentParams(flip, scale, shift)


def augment(image: np.ndarray, seed, mask: np.ndarray | None = None):
    """Random left-right flip, +-10% intensity scaling and <= 2 voxel translation.

    The same geometric transform is applied to ``mask`` when given.
    Returns ``image`` or ``(image, mask)``.
    """
    p = sample_augment(seed)
    out = image * np.float32(p.scale)
    m = mask
    if p.flip:
        out = flip_lr(out)
        m = flip_lr(m) if m is not None else None
    out = shift_edge(out, p.shift)
    if m is not None:
        m = shift_edge(m, p.shift)
        return out, m
    return out
