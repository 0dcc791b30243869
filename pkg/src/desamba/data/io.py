"""Dataset directory layout, case loading/writing and fingerprints.

Layout::

    <root>/
      dataset.yaml            sequences, num_classes, cohorts, schema file name
      schema.yaml             tabular schema (see TabularSchema)
      <cohort>/<case_id>/
        T1.npy  T2.npy  T2FS.npy   one volume per sequence (.nii / .nii.gz also accepted)
        mask.npy                   binary ROI mask on the same grid
        meta.json                  {"case_id", "label", "cohort", "tabular": {column: value|null}}

Volumes are stored as ``.npy`` files (shape header + little-endian payload).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from ..errors import IngestionError
from ..head import TabularRow, TabularSchema

COHORTS = ("train", "internal_test", "external_test")
VOLUME_SUFFIXES = (".npy", ".nii.gz", ".nii")


@dataclass
class MultiSequenceCase:
    case_id: str
    volumes: dict[str, np.ndarray]
    mask: np.ndarray
    label: int
    tabular: TabularRow | None = None
    cohort: str = "train"
    record: dict = field(default_factory=dict)  # raw tabular values, None = missing

    def validate(self, sequences=None) -> None:
        if sequences is not None and list(self.volumes) != list(sequences):
            missing = [s for s in sequences if s not in self.volumes]
            if missing:
                raise IngestionError(f"case {self.case_id}: sequence {missing[0]} absent")
            raise IngestionError(f"case {self.case_id}: sequences {list(self.volumes)} "
                                 f"do not match {list(sequences)}")
        shapes = {name: v.shape for name, v in self.volumes.items()}
        for name, shape in shapes.items():
            if shape != self.mask.shape:
                raise IngestionError(f"case {self.case_id}: grid mismatch, {name} has shape "
                                     f"{shape} but mask has shape {self.mask.shape}")
        if not np.any(self.mask):
            raise IngestionError(f"case {self.case_id}: ROI mask has no foreground voxel")
        if self.cohort not in COHORTS:
            raise IngestionError(f"case {self.case_id}: unknown cohort {self.cohort!r}")


@dataclass
class DatasetInfo:
    sequences: tuple[str, ...]
    num_classes: int
    schema: TabularSchema
    cohorts: tuple[str, ...] = COHORTS
    class_names: tuple[str, ...] = ()

    def to_dict(self, schema_file="schema.yaml") -> dict:
        return {"sequences": list(self.sequences), "num_classes": self.num_classes,
                "cohorts": list(self.cohorts), "class_names": list(self.class_names),
                "schema": schema_file}


def load_volume(path) -> np.ndarray:
    path = Path(path)
    if path.name.endswith((".nii", ".nii.gz")):
        try:
            import nibabel
        except ImportError:
            raise IngestionError(f"{path}: reading NIfTI files requires nibabel") from None
        return np.asarray(nibabel.load(str(path)).get_fdata(), dtype=np.float32)
    return np.load(path, allow_pickle=False)


def _find_volume(case_dir: Path, name: str) -> Path | None:
    for suffix in VOLUME_SUFFIXES:
        p = case_dir / f"{name}{suffix}"
        if p.is_file():
            return p
    return None


def load_case(case_dir, schema: TabularSchema, sequences) -> MultiSequenceCase:
    case_dir = Path(case_dir)
    meta_path = case_dir / "meta.json"
    if not meta_path.is_file():
        raise IngestionError(f"{case_dir}: meta.json absent")
    meta = json.loads(meta_path.read_text())
    volumes = {}
    for name in sequences:
        p = _find_volume(case_dir, name)
        if p is None:
            raise IngestionError(f"{case_dir}: sequence {name} absent")
        volumes[name] = load_volume(p)
    mask_path = _find_volume(case_dir, "mask")
    if mask_path is None:
        raise IngestionError(f"{case_dir}: mask absent")
    mask = load_volume(mask_path).astype(bool)
    record = meta.get("tabular") or {}
    case = MultiSequenceCase(
        case_id=str(meta.get("case_id", case_dir.name)), volumes=volumes, mask=mask,
        label=int(meta["label"]), tabular=schema.encode(record) if schema.columns else None,
        cohort=str(meta.get("cohort", case_dir.parent.name)), record=record)
    case.validate(sequences)
    return case


def write_case(case: MultiSequenceCase, case_dir) -> None:
    case_dir = Path(case_dir)
    case_dir.mkdir(parents=True, exist_ok=True)
    for name, vol in case.volumes.items():
        np.save(case_dir / f"{name}.npy", vol)
    np.save(case_dir / "mask.npy", case.mask.astype(np.uint8))
    meta = {"case_id": case.case_id, "label": int(case.label), "cohort": case.cohort,
            "tabular": case.record}
    (case_dir / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True))


def write_dataset(cases_by_cohort: dict, info: DatasetInfo, root) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    info.schema.save(root / "schema.yaml")
    (root / "dataset.yaml").write_text(yaml.safe_dump(info.to_dict(), sort_keys=False))
    for cohort, cases in cases_by_cohort.items():
        for case in cases:
            write_case(case, root / cohort / case.case_id)
    return root


def load_dataset_info(root) -> DatasetInfo:
    root = Path(root)
    path = root / "dataset.yaml"
    if not path.is_file():
        raise IngestionError(f"{root}: dataset.yaml absent")
    data = yaml.safe_load(path.read_text()) or {}
    schema_file = data.get("schema")
    schema = TabularSchema.load(root / schema_file) if schema_file else TabularSchema()
    return DatasetInfo(tuple(data["sequences"]), int(data["num_classes"]), schema,
                       tuple(data.get("cohorts", COHORTS)), tuple(data.get("class_names", ())))


def available_cohorts(root) -> list[str]:
    root = Path(root)
    return [c for c in load_dataset_info(root).cohorts if (root / c).is_dir()]


def load_cohort(root, cohort: str, info: DatasetInfo | None = None) -> list[MultiSequenceCase]:
    root = Path(root)
    info = info or load_dataset_info(root)
    cdir = root / cohort
    if not cdir.is_dir():
        raise IngestionError(f"cohort {cohort!r} absent; available: {available_cohorts(root)}")
    return [load_case(d, info.schema, info.sequences)
            for d in sorted(p for p in cdir.iterdir() if p.is_dir())]


def dataset_fingerprint(root) -> str:
    """sha256 over relative paths and bytes of every file under ``root``."""
    root = Path(root)
    h = hashlib.sha256()
    for p in sorted(q for q in root.rglob("*") if q.is_file()):
        h.update(p.relative_to(root).as_posix().encode())
        h.update(b"\0")
        h.update(p.read_bytes())
    return h.hexdigest()
