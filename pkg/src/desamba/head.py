"""Tabular clinical-feature encoder, classification head and the composite loss."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import torch
import torch.nn as nn
import torch.nn.functional as F
import yaml

from .errors import ConfigError, ContractError


@dataclass(frozen=True)
class Column:
    name: str
    kind: str  # "numeric" or "categorical"
    cardinality: int = 0
    mean: float = 0.0
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("numeric", "categorical"):
            raise ConfigError(f"column {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "categorical" and self.cardinality < 1:
            raise ConfigError(f"column {self.name!r}: categorical columns need cardinality >= 1")
        if self.kind == "numeric" and not self.std > 0:
            raise ConfigError(f"column {self.name!r}: std must be positive")


@dataclass
class TabularRow:
    """Standardized numeric values (NaN when missing) and category indices (-1 when missing)."""

    numeric: list[float]
    categorical: list[int]

    @property
    def missing_mask(self) -> list[bool]:
        return [math.isnan(v) for v in self.numeric]


@dataclass(frozen=True)
class TabularSchema:
    """Ordered clinical columns. Files look like::

        columns:
          - {name: age, kind: numeric, mean: 60.0, std: 12.0}
          - {name: sex, kind: categorical, cardinality: 2}
    """

    columns: tuple[Column, ...] = ()

    @property
    def numeric(self) -> list[Column]:
        return [c for c in self.columns if c.kind == "numeric"]

    @property
    def categorical(self) -> list[Column]:
        return [c for c in self.columns if c.kind == "categorical"]

    @classmethod
    def from_dict(cls, data) -> "TabularSchema":
        cols = data.get("columns", []) if isinstance(data, dict) else data
        try:
            return cls(tuple(Column(**c) for c in cols or []))
        except TypeError as exc:
            raise ConfigError(f"bad schema column: {exc}") from None

    def to_dict(self) -> dict:
        return {"columns": [
            {k: v for k, v in vars(c).items()
             if not (c.kind == "numeric" and k == "cardinality")
             and not (c.kind == "categorical" and k in ("mean", "std"))}
            for c in self.columns]}

    @classmethod
    def load(cls, path) -> "TabularSchema":
        path = Path(path)
        text = path.read_text()
        data = json.loads(text) if path.suffix == ".json" else yaml.safe_load(text)
        return cls.from_dict(data or {})

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    def encode(self, record: dict) -> TabularRow:
        """Raw ``{column: value}`` record (None = missing) -> standardized row."""
        unknown = set(record) - {c.name for c in self.columns}
        if unknown:
            raise ContractError(f"record has columns not in schema: {sorted(unknown)}")
        numeric, categorical = [], []
        for c in self.numeric:
            v = record.get(c.name)
            numeric.append(float("nan") if v is None else (float(v) - c.mean) / c.std)
        for c in self.categorical:
            v = record.get(c.name)
            if v is None:
                categorical.append(-1)
                continue
            if not 0 <= int(v) < c.cardinality:
                raise ContractError(f"column {c.name!r}: category {v} outside [0, {c.cardinality})")
            categorical.append(int(v))
        return TabularRow(numeric, categorical)

    def collate(self, rows) -> dict[str, torch.Tensor]:
        """Stack rows into ``values`` (missing imputed with 0, the standardized mean),
        ``missing`` (1.0 where imputed) and ``categories`` (missing -> sentinel index)."""
        n_num, n_cat = len(self.numeric), len(self.categorical)
        for r in rows:
            if len(r.numeric) != n_num or len(r.categorical) != n_cat:
                raise ContractError("tabular row does not match the schema")
        values = torch.tensor([r.numeric for r in rows], dtype=torch.float32).reshape(len(rows), n_num)
        missing = torch.isnan(values)
        values = torch.where(missing, torch.zeros_like(values), values)
        sentinels = torch.tensor([c.cardinality for c in self.categorical], dtype=torch.long)
        cats = torch.tensor([r.categorical for r in rows], dtype=torch.long).reshape(len(rows), n_cat)
        cats = torch.where(cats < 0, sentinels.expand_as(cats), cats)
        return {"values": values, "missing": missing.float(), "categories": cats}


class TabularEncoder(nn.Module):
    """Numeric values and missing flags go through a linear map, categories through
    embeddings (one extra sentinel slot each); everything is concatenated and projected."""

    def __init__(self, schema: TabularSchema, out_dim: int, embed_dim: int = 8, hidden: int = 32):
        super().__init__()
        if not schema.columns:
            raise ConfigError("tabular encoder enabled but the schema declares no columns")
        self.schema = schema
        n_num = len(schema.numeric)
        self.numeric = nn.Linear(2 * n_num, hidden) if n_num else None
        self.embeddings = nn.ModuleList(
            nn.Embedding(c.cardinality + 1, embed_dim) for c in schema.categorical)
        in_dim = (hidden if n_num else 0) + embed_dim * len(self.embeddings)
        self.proj = nn.Sequential(nn.GELU(), nn.Linear(in_dim, out_dim))
        self.out_dim = out_dim

    def forward(self, tab: dict[str, torch.Tensor]) -> torch.Tensor:
        parts = []
        if self.numeric is not None:
            if tab["values"].shape[-1] != len(self.schema.numeric):
                raise ContractError("numeric feature count does not match the schema")
            parts.append(self.numeric(torch.cat([tab["values"], tab["missing"]], dim=-1)))
        cats = tab["categories"]
        if cats.shape[-1] != len(self.embeddings):
            raise ContractError("categorical feature count does not match the schema")
        parts.extend(emb(cats[:, k]) for k, emb in enumerate(self.embeddings))
        return self.proj(torch.cat(parts, dim=-1))


def encode_tabular(tab, encoder: TabularEncoder) -> torch.Tensor:
    return encoder(tab)


class ClassifierHead(nn.Module):
    def __init__(self, in_dim: int, hidden: int, num_classes: int, dropout: float = 0.1):
        super().__init__()
        self.in_dim = in_dim
        self.net = nn.Sequential(nn.Linear(in_dim, hidden), nn.GELU(), nn.Dropout(dropout),
                                 nn.Linear(hidden, num_classes))

    def forward(self, z):
        if z.shape[-1] != self.in_dim:
            raise ContractError(f"head expects {self.in_dim} features, got {z.shape[-1]}")
        return self.net(z)


@dataclass
class LossBreakdown:
    ce: torch.Tensor
    self_loss: torch.Tensor
    cross_loss: torch.Tensor
    alpha: float
    beta: float
    total: torch.Tensor
    active: dict = field(default_factory=dict)

    def as_floats(self) -> dict[str, float]:
        return {"ce": float(self.ce.detach()), "self": float(self.self_loss.detach()),
                "cross": float(self.cross_loss.detach()), "total": float(self.total.detach())}


def total_loss(logits, labels, drlm_losses=None, config=None) -> LossBreakdown:
    """L = CE + alpha * L_self + beta * L_cross; disabled terms never enter the graph."""
    labels = torch.as_tensor(labels, dtype=torch.long)
    num_classes = logits.shape[-1]
    if labels.numel() and (labels.min() < 0 or labels.max() >= num_classes):
        raise ContractError(f"labels must lie in [0, {num_classes})")
    alpha = config.loss_alpha if config is not None else 0.5
    beta = config.loss_beta if config is not None else 0.5
    use_self = bool(config.enable_self_loss) if config is not None else drlm_losses is not None
    use_cross = bool(config.enable_cross_loss) if config is not None else drlm_losses is not None
    ce = F.cross_entropy(logits, labels)
    zero = ce.new_zeros(())
    ls = drlm_losses.self_loss if (use_self and drlm_losses is not None) else zero
    lc = drlm_losses.cross_loss if (use_cross and drlm_losses is not None) else zero
    total = ce
    if use_self and drlm_losses is not None:
        total = total + alpha * ls
    if use_cross and drlm_losses is not None:
        total = total + beta * lc
    return LossBreakdown(ce, ls, lc, alpha, beta, total,
                         {"self": use_self, "cross": use_cross})
