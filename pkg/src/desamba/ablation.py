"""Run every ablation variant on one dataset and render the comparison table."""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .config import ABLATION_TABLE, FLAG_NAMES, ExperimentConfig, ablation_config
from .data import io as dio
from .model import build_model
from .train import check_compatible, train_run

COLUMNS = ("ACC", "F1", "Top3Acc", "AUC")
COHORT_TITLES = {"internal_test": "Internal", "external_test": "External"}


def summarize(report: dict) -> dict[str, float]:
    topk = {int(k): v for k, v in report["topk"].items()}
    return {"ACC": report["macro"]["acc"], "F1": report["macro"]["f1"],
            "Top3Acc": topk.get(3, topk[max(topk)]), "AUC": report["macro"]["auc"]}


@dataclass
class AblationTable:
    rows: dict = field(default_factory=dict)   # name -> {"flags": [...], cohort -> metrics}
    seeds: tuple = ()

    def to_json(self) -> str:
        return json.dumps({"rows": self.rows, "seeds": list(self.seeds)}, indent=1)

    @classmethod
    def from_json(cls, text: str) -> "AblationTable":
        d = json.loads(text)
        return cls(d["rows"], tuple(d["seeds"]))

    def render(self) -> str:
        cohorts = [c for c in COHORT_TITLES if any(c in r for r in self.rows.values())]
        head = ["Model", *FLAG_NAMES] + [f"{COHORT_TITLES[c]} {m}" for c in cohorts for m in COLUMNS]
        lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
        for name, row in self.rows.items():
            cells = [name] + ["✓" if f else "×" for f in row["flags"]]
            for c in cohorts:
                cells += [f"{row[c][m]:.2f}" if c in row else "-" for m in COLUMNS]
            lines.append("| " + " | ".join(cells) + " |")
        return "\n".join(lines)


def _run_one(args):
    exp, data_dir, out_dir = args
    return train_run(exp, data_dir, out_dir).reports


def run_ablation(base: ExperimentConfig, data_dir, out_dir, seeds=(0, 1, 2), jobs: int = 1,
                 variants=None) -> AblationTable:
    """Train every registry variant for every seed and average the test metrics.

    All variants are built and checked against the dataset before any training starts.
    """
    data_dir, out_dir = Path(data_dir), Path(out_dir)
    info = dio.load_dataset_info(data_dir)
    variants = list(variants or ABLATION_TABLE)
    configs = {}
    for name in variants:
        cfg = ablation_config(name, base.model)
        check_compatible(cfg, info)
        build_model(cfg, info.schema if cfg.enable_tabular_encoder else None)
        configs[name] = cfg
    tasks, keys = [], []
    for name in variants:
        for seed in seeds:
            exp = ExperimentConfig(model=replace(configs[name], seed=int(seed)), train=base.train)
            run_dir = out_dir / name.replace("/", "_") / f"seed{seed}"
            tasks.append((exp, data_dir, run_dir))
            keys.append((name, seed))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_one, tasks))
    else:
        results = [_run_one(t) for t in tasks]
    table = AblationTable(seeds=tuple(int(s) for s in seeds))
    for name in variants:
        row = {"flags": list(configs[name].flag_vector())}
        per_seed = [r for (n, _), r in zip(keys, results) if n == name]
        for cohort in COHORT_TITLES:
            summaries = [summarize(r[cohort]) for r in per_seed if cohort in r]
            if summaries:
                row[cohort] = {m: float(np.mean([s[m] for s in summaries])) for m in COLUMNS}
        table.rows[name] = row
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "ablation.json").write_text(table.to_json())
    (out_dir / "ablation.md").write_text(table.render() + "\n")
    return table
