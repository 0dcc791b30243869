"""3D Grad-CAM and per-slice overlay export."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
import torch.nn.functional as F
from PIL import Image

from .errors import ContractError


@dataclass
class Heatmap3D:
    values: np.ndarray  # (D, H, W) in [0, 1]
    source_layer: str
    target_class: int

    def peak(self) -> tuple[int, int, int]:
        """Voxel of the maximum (first in C order on ties)."""
        return tuple(int(v) for v in np.unravel_index(np.argmax(self.values), self.values.shape))


def _logits(out):
    return out.logits if hasattr(out, "logits") else out


def _find_layer(model, layer_id: str):
    modules = dict(model.named_modules())
    if layer_id not in modules:
        spatial = [n for n, m in modules.items() if n]
        raise ContractError(f"unknown layer {layer_id!r}; e.g. {spatial[:5]}")
    return modules[layer_id]


def gradcam3d(model, inputs, target_class: int, layer_id: str, tabular=None,
              input_shape=None) -> Heatmap3D:
    """Gradient-weighted channel sum of ``layer_id``'s activation for one sample.

    Channel weights are the spatial mean of d(score of ``target_class``)/d(activation);
    the rectified weighted sum is trilinearly upsampled to the input grid and divided
    by its maximum (left at zero when nothing is positive).
    """
    if inputs.dim() != 5 or inputs.shape[0] != 1:
        raise ContractError(f"expected a single (1, C, D, H, W) input, got {tuple(inputs.shape)}")
    layer = _find_layer(model, layer_id)
    store = {}

    def hook(_module, _inp, out):
        if not torch.is_tensor(out) or out.dim() != 5:
            raise ContractError(f"layer {layer_id!r} output has no 3D spatial extent")
        out.retain_grad()
        store["act"] = out

    handle = layer.register_forward_hook(hook)
    was_training = model.training
    model.eval()
    try:
        model.zero_grad(set_to_none=True)
        with torch.enable_grad():
            # a grad-requiring input keeps layers ahead of every parameter in the graph
            logits = _logits(model(inputs.detach().requires_grad_(True), tabular))
            if not 0 <= target_class < logits.shape[-1]:
                raise ContractError(f"target class {target_class} outside [0, {logits.shape[-1]})")
            logits[0, target_class].backward()
    finally:
        handle.remove()
        model.train(was_training)
    act = store["act"]
    grad = act.grad if act.grad is not None else torch.zeros_like(act)
    cam = cam_from(act.detach(), grad.detach(), input_shape or inputs.shape[-3:])
    model.zero_grad(set_to_none=True)
    return Heatmap3D(cam, layer_id, int(target_class))


def cam_from(activation, gradient, out_shape) -> np.ndarray:
    """Grad-CAM map from one activation/gradient pair of shape (1, C, d, h, w)."""
    weights = gradient.mean(dim=(2, 3, 4), keepdim=True)
    cam = F.relu((weights * activation).sum(dim=1, keepdim=True))
    cam = F.interpolate(cam.double(), size=tuple(int(s) for s in out_shape), mode="trilinear",
                        align_corners=False)[0, 0]
    cam = cam.clamp_min(0)
    peak = float(cam.max())
    if peak > 0:
        cam = cam / peak
    return cam.numpy()


def _gray(volume: np.ndarray) -> np.ndarray:
    v = volume.astype(np.float64)
    lo, hi = v.min(), v.max()
    return (v - lo) / (hi - lo) if hi > lo else np.zeros_like(v)


def _colormap(h: np.ndarray) -> np.ndarray:
    """Piecewise-linear blue-cyan-yellow-red ramp for values in [0, 1]."""
    r = np.clip(1.5 - np.abs(4 * h - 3), 0, 1)
    g = np.clip(1.5 - np.abs(4 * h - 2), 0, 1)
    b = np.clip(1.5 - np.abs(4 * h - 1), 0, 1)
    return np.stack([r, g, b], axis=-1)


def _contour(mask2d: np.ndarray) -> np.ndarray:
    m = mask2d.astype(bool)
    inner = m.copy()
    inner[1:, :] &= m[:-1, :]
    inner[:-1, :] &= m[1:, :]
    inner[:, 1:] &= m[:, :-1]
    inner[:, :-1] &= m[:, 1:]
    return m & ~inner


def overlay_slices(volume, heatmap, mask=None, blend: float = 0.5) -> list[np.ndarray]:
    """RGB uint8 composites per depth slice: gray volume, heat where the map is positive,
    ROI contour in green."""
    volume = np.asarray(volume)
    heat = np.asarray(heatmap.values if isinstance(heatmap, Heatmap3D) else heatmap, dtype=np.float64)
    if heat.shape != volume.shape or (mask is not None and np.shape(mask) != volume.shape):
        raise ContractError("volume, heatmap and mask must share one grid")
    gray = _gray(volume)[..., None].repeat(3, axis=-1)
    a = (blend * np.clip(heat, 0, 1))[..., None]
    rgb = (1 - a) * gray + a * _colormap(np.clip(heat, 0, 1))
    if mask is not None:
        rgb[np.stack([_contour(m) for m in np.asarray(mask)])] = (0.0, 1.0, 0.0)
    return [np.round(255 * s).astype(np.uint8) for s in rgb]


def slice_filename(prefix: str, z: int) -> str:
    return f"{prefix}_z{z:03d}.png"


def overlay_export(volume, heatmap, mask, out_dir, prefix: str = "overlay") -> list[Path]:
    """Write one PNG per depth slice, named ``<prefix>_z<NNN>.png``."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    paths = []
    for z, img in enumerate(overlay_slices(volume, heatmap, mask)):
        p = out_dir / slice_filename(prefix, z)
        Image.fromarray(img, mode="RGB").save(p, format="PNG")
        paths.append(p)
    return paths
