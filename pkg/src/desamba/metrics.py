"""Classification metrics: confusion matrix, per-class/macro rates, Top-k, one-vs-rest AUC,
bootstrap confidence intervals, and the EvalReport container.

All rates are percentages in [0, 100]. Top-k breaks score ties in favour of the
lower class index; AUC counts a tied positive/negative pair as one half.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .errors import ContractError, EvaluationError


def confusion_matrix(preds, labels, num_classes: int) -> np.ndarray:
    preds = np.asarray(preds, dtype=np.int64).ravel()
    labels = np.asarray(labels, dtype=np.int64).ravel()
    if preds.shape != labels.shape:
        raise ContractError(f"{preds.size} predictions for {labels.size} labels")
    for name, arr in (("prediction", preds), ("label", labels)):
        if arr.size and (arr.min() < 0 or arr.max() >= num_classes):
            raise ContractError(f"{name} outside [0, {num_classes})")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def _ratio(num, den):
    return (100.0 * num / den, False) if den > 0 else (0.0, True)


def classification_metrics(cm) -> dict:
    """Per-class sen/spe/prec/f1, their unweighted (macro) means, micro averages and ACC.

    A zero denominator yields 0 and is listed under ``degenerate``.
    """
    cm = np.asarray(cm, dtype=np.float64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise ContractError("confusion matrix must be a non-empty square matrix")
    total = cm.sum()
    if total == 0:
        raise ContractError("confusion matrix is empty")
    per_class, degenerate = {}, []
    tps, fps, fns, tns = [], [], [], []
    for c in range(cm.shape[0]):
        tp = cm[c, c]
        fn = cm[c].sum() - tp
        fp = cm[:, c].sum() - tp
        tn = total - tp - fn - fp
        sen, d1 = _ratio(tp, tp + fn)
        spe, d2 = _ratio(tn, tn + fp)
        prec, d3 = _ratio(tp, tp + fp)
        d4 = prec + sen == 0
        f1 = 0.0 if d4 else 2 * prec * sen / (prec + sen)
        for flag, name in zip((d1, d2, d3, d4), ("sen", "spe", "prec", "f1")):
            if flag:
                degenerate.append(f"{name}[{c}]")
        per_class[c] = {"sen": sen, "spe": spe, "prec": prec, "f1": f1}
        tps.append(tp), fps.append(fp), fns.append(fn), tns.append(tn)
    macro = {k: float(np.mean([per_class[c][k] for c in per_class]))
             for k in ("sen", "spe", "prec", "f1")}
    tp, fp, fn, tn = (float(np.sum(v)) for v in (tps, fps, fns, tns))
    micro_sen = _ratio(tp, tp + fn)[0]
    micro_prec = _ratio(tp, tp + fp)[0]
    micro = {"sen": micro_sen, "spe": _ratio(tn, tn + fp)[0], "prec": micro_prec,
             "f1": 2 * micro_prec * micro_sen / (micro_prec + micro_sen)
             if micro_prec + micro_sen > 0 else 0.0}
    acc = 100.0 * np.trace(cm) / total
    return {"acc": float(acc), "per_class": per_class, "macro": macro, "micro": micro,
            "degenerate": degenerate}


def topk_indices(scores, k: int) -> np.ndarray:
    """Indices of the k highest scores per row; equal scores rank lower indices first."""
    scores = np.asarray(scores, dtype=np.float64)
    order = np.argsort(-scores, axis=1, kind="stable")
    return order[:, :k]


def topk_accuracy(scores, labels, k: int) -> float:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.ndim != 2 or scores.shape[0] != labels.size:
        raise ContractError("scores must be (N, C) with one label per row")
    if not 1 <= k <= scores.shape[1]:
        raise ContractError(f"k must lie in [1, {scores.shape[1]}], got {k}")
    if labels.size == 0:
        raise ContractError("no samples")
    hits = (topk_indices(scores, k) == labels[:, None]).any(axis=1)
    return 100.0 * float(hits.mean())


def binary_auc(scores, positive) -> float:
    """Rank-statistic AUC (percent) of ``scores`` for the boolean ``positive`` mask."""
    scores = np.asarray(scores, dtype=np.float64)
    positive = np.asarray(positive, dtype=bool)
    n_pos, n_neg = int(positive.sum()), int((~positive).sum())
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs at least one positive and one negative sample")
    ranks = rankdata(scores)
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return 100.0 * u / (n_pos * n_neg)


def per_class_auc(scores, labels) -> dict[int, float]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    out = {}
    for c in range(scores.shape[1]):
        pos = labels == c
        if 0 < pos.sum() < labels.size:
            out[c] = binary_auc(scores[:, c], pos)
    return out


def macro_auc(scores, labels, return_skipped: bool = False):
    """Unweighted mean one-vs-rest AUC over classes with both positives and negatives."""
    scores = np.asarray(scores, dtype=np.float64)
    aucs = per_class_auc(scores, labels)
    if not aucs:
        raise EvaluationError("every class lacks positives or negatives; AUC undefined")
    skipped = [c for c in range(scores.shape[1]) if c not in aucs]
    value = float(np.mean(list(aucs.values())))
    return (value, skipped) if return_skipped else value


def bootstrap_ci(scores, labels, metric, B: int = 1000, seed: int = 0,
                 level: float = 95.0) -> tuple[float, float]:
    """Percentile bootstrap over cases; ``metric(scores, labels) -> float``.

    Resamples on which the metric is undefined (EvaluationError) are dropped.
    """
    if B < 100:
        raise ContractError("use at least 100 bootstrap resamples")
    scores = np.asarray(scores)
    labels = np.asarray(labels)
    n = labels.shape[0]
    rng = np.random.default_rng(seed)
    values = []
    for _ in range(B):
        idx = rng.integers(0, n, size=n)
        try:
            values.append(metric(scores[idx], labels[idx]))
        except EvaluationError:
            continue
    if not values:
        raise EvaluationError("metric undefined on every bootstrap resample")
    tail = (100.0 - level) / 2.0
    lo, hi = np.percentile(values, [tail, 100.0 - tail])
    return float(lo), float(hi)


@dataclass
class EvalReport:
    confusion: list
    per_class: dict
    macro: dict
    micro: dict
    topk: dict
    per_class_auc: dict = field(default_factory=dict)
    ci: dict = field(default_factory=dict)
    degenerate: list = field(default_factory=list)
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        d = dict(d)
        d["per_class"] = {int(k): v for k, v in d["per_class"].items()}
        d["per_class_auc"] = {int(k): v for k, v in d.get("per_class_auc", {}).items()}
        d["topk"] = {int(k): v for k, v in d["topk"].items()}
        d["ci"] = {k: tuple(v) for k, v in d.get("ci", {}).items()}
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "EvalReport":
        return cls.from_dict(json.loads(text))


def evaluate(scores, labels, num_classes: int | None = None, ks=(1, 2, 3),
             ci_samples: int = 0, seed: int = 0) -> EvalReport:
    """Full report from class scores (N, C) and integer labels."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    num_classes = num_classes or scores.shape[1]
    preds = topk_indices(scores, 1)[:, 0]
    cm = confusion_matrix(preds, labels, num_classes)
    m = classification_metrics(cm)
    degenerate = list(m["degenerate"])
    try:
        auc, skipped = macro_auc(scores, labels, return_skipped=True)
        degenerate += [f"auc[{c}]" for c in skipped]
    except EvaluationError:
        auc = float("nan")
        degenerate.append("auc")
    macro = {"acc": m["acc"], **m["macro"], "auc": auc}
    topk = {k: topk_accuracy(scores, labels, k) for k in sorted(set(ks) | {num_classes})
            if k <= num_classes}
    ci = {}
    if ci_samples:
        def acc_metric(s, l):
            return topk_accuracy(s, l, 1)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ci["acc"] = bootstrap_ci(scores, labels, acc_metric, ci_samples, seed)
            ci["auc"] = bootstrap_ci(scores, labels, macro_auc, ci_samples, seed)
    return EvalReport(cm.tolist(), m["per_class"], macro, m["micro"], topk,
                      per_class_auc(scores, labels), ci, degenerate, int(labels.size))


def render_report(report: EvalReport, title: str = "") -> str:
    """One markdown row of macro metrics followed by the Top-k accuracies."""
    cols = ("acc", "spe", "sen", "prec", "f1", "auc")
    head = "| " + " | ".join(["Model", "ACC", "Spe", "Sen", "P", "F1", "AUC"]) + " |"
    sep = "|" + "---|" * (len(cols) + 1)
    row = "| " + " | ".join([title or "-"] + [f"{report.macro[c]:.2f}" for c in cols]) + " |"
    topk = "  ".join(f"Top-{k}: {v:.2f}" for k, v in sorted(report.topk.items()))
    return "\n".join([head, sep, row, "", topk])
