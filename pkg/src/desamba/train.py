"""Training loop, checkpoints, evaluation and run manifests."""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import ExperimentConfig, ModelConfig, TrainConfig, config_from_dict, config_to_dict, derive_seed
from .data import io as dio
from .data.preprocess import Prepared, augment, preprocess
from .errors import ConfigError, ValidationError
from .head import TabularSchema
from .metrics import EvalReport, evaluate
from .model import build_model

log = logging.getLogger(__name__)


def prepare_cases(cases, config: ModelConfig) -> list[Prepared]:
    return [preprocess(c, config) for c in cases]


def collate(items: list[Prepared], schema: TabularSchema | None, aug_seeds=None):
    images = []
    for k, it in enumerate(items):
        img = it.image
        if aug_seeds is not None:
            img = augment(img, aug_seeds[k])
        images.append(img)
    x = torch.from_numpy(np.stack(images).astype(np.float32))
    y = torch.tensor([it.label for it in items], dtype=torch.long)
    tab = None
    if schema is not None and schema.columns:
        tab = schema.collate([it.tabular for it in items])
    return x, tab, y


def stratified_split(items: list[Prepared], fraction: float, seed: int):
    """Deterministic per-class split of ``items`` into (train, val)."""
    if fraction <= 0:
        return list(items), []
    rng = np.random.default_rng(derive_seed(seed, "split"))
    by_class: dict[int, list[int]] = {}
    for i, it in enumerate(items):
        by_class.setdefault(it.label, []).append(i)
    val_idx = set()
    for label in sorted(by_class):
        idx = by_class[label]
        n_val = int(round(fraction * len(idx)))
        if n_val >= len(idx):
            n_val = len(idx) - 1
        val_idx.update(rng.permutation(idx)[:n_val].tolist())
    train = [it for i, it in enumerate(items) if i not in val_idx]
    val = [it for i, it in enumerate(items) if i in val_idx]
    return train, val


@torch.no_grad()
def predict(model, items, schema, batch_size: int = 8):
    """Softmax class probabilities (N, C) and labels (N,)."""
    model.eval()
    probs, labels = [], []
    for s in range(0, len(items), batch_size):
        x, tab, y = collate(items[s:s + batch_size], schema)
        out = model(x, tab)
        probs.append(torch.softmax(out.logits.double(), dim=-1).numpy())
        labels.append(y.numpy())
    return np.concatenate(probs), np.concatenate(labels)


def evaluate_model(model, items, schema, num_classes, ci_samples: int = 0, seed: int = 0) -> EvalReport:
    probs, labels = predict(model, items, schema)
    return evaluate(probs, labels, num_classes, ci_samples=ci_samples, seed=seed)


def _make_optimizer(model, cfg: TrainConfig, steps_per_epoch: int):
    decay, no_decay = [], []
    for name, p in model.named_parameters():
        (no_decay if p.dim() <= 1 else decay).append(p)
    opt = torch.optim.AdamW([{"params": decay, "weight_decay": cfg.weight_decay},
                             {"params": no_decay, "weight_decay": 0.0}], lr=cfg.lr)
    total = max(cfg.epochs * steps_per_epoch, 1)
    warm = cfg.warmup_epochs * steps_per_epoch

    def schedule(step):
        if step < warm:
            return (step + 1) / warm
        t = (step - warm) / max(total - warm, 1)
        return 0.5 * (1 + math.cos(math.pi * min(t, 1.0)))

    return opt, torch.optim.lr_scheduler.LambdaLR(opt, schedule)


@dataclass
class EpochLog:
    epoch: int
    train: dict
    val: dict = field(default_factory=dict)


def fit(model, train_items, val_items, cfg: TrainConfig, seed: int, schema=None,
        checkpoint_dir=None, resume: bool = False, stop_after: int | None = None):
    """Train ``model`` in place; returns the per-epoch log.

    With ``checkpoint_dir`` set, ``last.pt`` (full resumable state) is written after every
    epoch and ``best.pt`` whenever validation accuracy improves (ties: lower val loss).
    ``resume`` continues from ``last.pt``; ``stop_after`` ends early after that many
    epochs in total, which together with ``resume`` lets a run be split in two.
    """
    steps_per_epoch = max(1, math.ceil(len(train_items) / cfg.batch_size))
    opt, sched = _make_optimizer(model, cfg, steps_per_epoch)
    history: list[EpochLog] = []
    start = 0
    best_key = None
    ckpt = Path(checkpoint_dir) if checkpoint_dir else None
    torch.manual_seed(derive_seed(seed, "train"))
    if resume:
        state = torch.load(ckpt / "last.pt", weights_only=False)
        model.load_state_dict(state["model"])
        opt.load_state_dict(state["optimizer"])
        sched.load_state_dict(state["scheduler"])
        torch.set_rng_state(state["torch_rng"])
        history = [EpochLog(**h) for h in state["history"]]
        best_key = tuple(state["best_key"]) if state["best_key"] is not None else None
        start = state["epoch"]
    for epoch in range(start, cfg.epochs):
        if stop_after is not None and epoch >= stop_after:
            break
        model.train()
        order = np.random.default_rng(derive_seed(seed, f"shuffle.{epoch}")).permutation(len(train_items))
        sums: dict[str, float] = {}
        n_seen = 0
        for s in range(0, len(order), cfg.batch_size):
            batch = [train_items[i] for i in order[s:s + cfg.batch_size]]
            aug = ([derive_seed(seed, f"aug.{epoch}.{it.case_id}") for it in batch]
                   if cfg.augment else None)
            x, tab, y = collate(batch, schema, aug)
            out = model(x, tab)
            losses = model.loss(out, y)
            opt.zero_grad(set_to_none=True)
            losses.total.backward()
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            sched.step()
            for k, v in losses.as_floats().items():
                sums[k] = sums.get(k, 0.0) + v * len(batch)
            n_seen += len(batch)
        entry = EpochLog(epoch, {k: v / n_seen for k, v in sums.items()})
        if val_items:
            probs, labels = predict(model, val_items, schema)
            nll = float(-np.mean(np.log(np.clip(probs[np.arange(len(labels)), labels], 1e-12, None))))
            entry.val = {"acc": float(100.0 * np.mean(probs.argmax(1) == labels)), "ce": nll}
        history.append(entry)
        log.info("epoch %d train %s val %s", epoch, entry.train, entry.val)
        if ckpt is not None:
            ckpt.mkdir(parents=True, exist_ok=True)
            key = (entry.val["acc"], -entry.val["ce"]) if entry.val else (epoch, 0.0)
            if best_key is None or key > best_key:
                best_key = key
                torch.save(model.state_dict(), ckpt / "best.pt")
            torch.save({"model": model.state_dict(), "optimizer": opt.state_dict(),
                        "scheduler": sched.state_dict(), "torch_rng": torch.get_rng_state(),
                        "history": [asdict(h) for h in history], "best_key": best_key,
                        "epoch": epoch + 1}, ckpt / "last.pt")
    return history


@dataclass
class RunManifest:
    config: dict
    seed: int
    model_kind: str
    dataset_dir: str
    dataset_fingerprint: str
    checkpoint: str
    epochs: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))

    @classmethod
    def load(cls, path) -> "RunManifest":
        return cls.from_json(Path(path).read_text())

    def experiment(self) -> ExperimentConfig:
        return config_from_dict(self.config)

    def report(self, cohort: str) -> EvalReport:
        return EvalReport.from_dict(self.reports[cohort])


def check_compatible(config: ModelConfig, info: dio.DatasetInfo) -> None:
    """Raise before any training if the config cannot consume the dataset."""
    if tuple(config.sequence_names) != tuple(info.sequences):
        raise ConfigError(f"config sequences {list(config.sequence_names)} do not match "
                          f"dataset sequences {list(info.sequences)}")
    if config.num_classes != info.num_classes:
        raise ConfigError(f"config has {config.num_classes} classes, dataset has {info.num_classes}")
    if config.enable_tabular_encoder and not info.schema.columns:
        raise ConfigError("tabular encoder enabled but the dataset schema has no columns")


def train_run(exp: ExperimentConfig, data_dir, out_dir, kind: str = "desamba",
              eval_cohorts=("internal_test", "external_test"), resume: bool = False,
              stop_after: int | None = None, ci_samples: int = 0) -> RunManifest:
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    info = dio.load_dataset_info(data_dir)
    cfg = exp.model
    check_compatible(cfg, info)
    schema = info.schema if cfg.enable_tabular_encoder else None
    model = build_model(cfg, schema, kind)
    train_cases = dio.load_cohort(data_dir, "train", info)
    items = prepare_cases(train_cases, cfg)
    train_items, val_items = stratified_split(items, exp.train.val_fraction, cfg.seed)
    history = fit(model, train_items, val_items, exp.train, cfg.seed, schema,
                  checkpoint_dir=out_dir, resume=resume, stop_after=stop_after)
    model.load_state_dict(torch.load(out_dir / "best.pt", weights_only=True))
    reports = {}
    for cohort in eval_cohorts:
        if (data_dir / cohort).is_dir():
            eval_items = prepare_cases(dio.load_cohort(data_dir, cohort, info), cfg)
            if eval_items:
                reports[cohort] = evaluate_model(model, eval_items, schema, cfg.num_classes,
                                                 ci_samples, cfg.seed).to_dict()
    manifest = RunManifest(
        config=config_to_dict(exp), seed=cfg.seed, model_kind=kind,
        dataset_dir=str(data_dir.resolve()), dataset_fingerprint=dio.dataset_fingerprint(data_dir),
        checkpoint=str((out_dir / "best.pt").resolve()),
        epochs=[asdict(h) for h in history], reports=reports)
    (out_dir / "manifest.json").write_text(manifest.to_json())
    return manifest


def load_trained(manifest: RunManifest):
    exp = manifest.experiment()
    info = dio.load_dataset_info(manifest.dataset_dir)
    schema = info.schema if exp.model.enable_tabular_encoder else None
    model = build_model(exp.model, schema, manifest.model_kind)
    model.load_state_dict(torch.load(manifest.checkpoint, weights_only=True))
    model.eval()
    return model, exp, info, schema


def eval_run(manifest: RunManifest, cohort: str, ci_samples: int = 0) -> EvalReport:
    model, exp, info, schema = load_trained(manifest)
    available = dio.available_cohorts(manifest.dataset_dir)
    if cohort not in available:
        raise ValidationError("cohort", f"{cohort!r} absent; available cohorts: {available}")
    items = prepare_cases(dio.load_cohort(manifest.dataset_dir, cohort, info), exp.model)
    return evaluate_model(model, items, schema, exp.model.num_classes, ci_samples, exp.model.seed)
