"""Command-line entry point: ``desamba <command> ...``.

Commands
--------
synth       generate a synthetic dataset directory from a SynthSpec YAML file
train       train one model and write checkpoints plus ``manifest.json``
eval        evaluate a trained run on one cohort
ablate      train all ten ablation variants and write ``ablation.md``/``ablation.json``
explain     Grad-CAM heatmap for one case, exported as per-slice PNG overlays
complexity  parameter count and MAC estimate for a config

Exit codes: 0 success, 1 usage error, 2 invalid input (config, spec, data),
3 failure while running.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import torch

from . import __version__
from .ablation import run_ablation
from .complexity import complexity
from .config import ExperimentConfig, load_config
from .data import io as dio
from .data.preprocess import preprocess
from .data.synth import SynthSpec, synth_generate
from .errors import ConfigError, DesambaError, IngestionError
from .explain import gradcam3d, overlay_export
from .metrics import EvalReport, render_report
from .model import build_model
from .train import RunManifest, eval_run, load_trained, train_run

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2, 3
log = logging.getLogger("desamba")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def cmd_synth(spec_path, out_dir, seed: int = 0) -> Path:
    spec = SynthSpec.load(spec_path)
    data = synth_generate(spec, seed)
    root = dio.write_dataset(data, spec.dataset_info(), out_dir)
    (Path(root) / "synth_spec.json").write_text(json.dumps({"seed": seed, **spec.to_dict()}, indent=1))
    return root


def cmd_train(config_path, data_dir, out_dir, seed: int | None = None, kind: str = "desamba",
              resume: bool = False, ci_samples: int = 0) -> RunManifest:
    exp = load_config(config_path)
    if seed is not None:
        exp = ExperimentConfig(replace(exp.model, seed=seed), exp.train)
    return train_run(exp, data_dir, out_dir, kind=kind, resume=resume, ci_samples=ci_samples)


def cmd_eval(manifest_path, cohort: str, ci_samples: int = 0) -> EvalReport:
    return eval_run(RunManifest.load(manifest_path), cohort, ci_samples)


def cmd_ablate(base_config, data_dir, out_dir, seeds=(0, 1, 2), jobs: int = 1):
    exp = base_config if isinstance(base_config, ExperimentConfig) else load_config(base_config)
    return run_ablation(exp, data_dir, out_dir, seeds=seeds, jobs=jobs)


def _default_layer(model, sequence: int | None) -> str:
    if hasattr(model, "encoders"):
        enc = model.encoders[sequence or 0]
        branch = "samnet" if enc.samnet is not None else "mambaout"
        return f"encoders.{sequence or 0}.{branch}.stages.1"
    return "backbone.stages.1"


def cmd_explain(manifest_path, case_id: str, out_dir, cohort: str = "internal_test",
                layer: str | None = None, sequence: int | None = None,
                target: int | None = None):
    """Grad-CAM for one case; returns (heatmap, written paths)."""
    model, exp, info, schema = load_trained(RunManifest.load(manifest_path))
    case_dir = Path(RunManifest.load(manifest_path).dataset_dir) / cohort / case_id
    if not case_dir.is_dir():
        raise IngestionError(f"case {case_id!r} not found in cohort {cohort!r}")
    case = dio.load_case(case_dir, info.schema, info.sequences)
    item = preprocess(case, exp.model)
    x = torch.from_numpy(item.image[None].astype(np.float32))
    tab = schema.collate([item.tabular]) if schema is not None else None
    if target is None:
        with torch.no_grad():
            target = int(model(x, tab).logits.argmax(-1))
    layer = layer or _default_layer(model, sequence)
    heat = gradcam3d(model, x, target, layer, tabular=tab)
    shown = sequence or 0
    paths = overlay_export(item.image[shown], heat, item.mask, out_dir, prefix=case_id)
    return heat, paths


def cmd_complexity(config_path, kind: str = "desamba"):
    exp = load_config(config_path)
    cfg = exp.model
    schema = None
    if cfg.enable_tabular_encoder:
        from .data.synth import default_schema
        schema = default_schema()
    model = build_model(cfg, schema, kind)
    x = torch.zeros((1, cfg.num_sequences, *cfg.input_shape))
    tab = schema.collate([schema.encode({})]) if schema is not None else None
    return complexity(model, x, tab)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="desamba", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log every epoch")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset")
    s.add_argument("spec", help="SynthSpec YAML file")
    s.add_argument("out_dir")
    s.add_argument("--seed", type=int, default=0)

    t = sub.add_parser("train", help="train one model")
    t.add_argument("config")
    t.add_argument("data_dir")
    t.add_argument("out_dir")
    t.add_argument("--seed", type=int, help="override the config seed")
    t.add_argument("--kind", choices=("desamba", "samnet"), default="desamba")
    t.add_argument("--resume", action="store_true", help="continue from out_dir/last.pt")
    t.add_argument("--ci", type=int, default=0, metavar="B", help="bootstrap resamples")

    e = sub.add_parser("eval", help="evaluate a trained run")
    e.add_argument("manifest")
    e.add_argument("--cohort", default="internal_test")
    e.add_argument("--ci", type=int, default=0, metavar="B")
    e.add_argument("--json", action="store_true", help="print the report as JSON")

    a = sub.add_parser("ablate", help="run all ten ablation variants")
    a.add_argument("config")
    a.add_argument("data_dir")
    a.add_argument("out_dir")
    a.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    a.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    x = sub.add_parser("explain", help="Grad-CAM overlays for one case")
    x.add_argument("manifest")
    x.add_argument("case_id")
    x.add_argument("out_dir")
    x.add_argument("--cohort", default="internal_test")
    x.add_argument("--layer", help="module name, e.g. encoders.0.samnet.stages.1")
    x.add_argument("--sequence", type=int, help="sequence index (encoder and displayed volume)")
    x.add_argument("--target", type=int, help="class to explain (default: predicted)")

    c = sub.add_parser("complexity", help="parameter and MAC counts")
    c.add_argument("config")
    c.add_argument("--kind", choices=("desamba", "samnet"), default="desamba")
    return p


def _run(args) -> None:
    if args.command == "synth":
        root = cmd_synth(args.spec, args.out_dir, args.seed)
        print(f"wrote {root} (fingerprint {dio.dataset_fingerprint(root)[:12]})")
    elif args.command == "train":
        m = cmd_train(args.config, args.data_dir, args.out_dir, args.seed, args.kind,
                      args.resume, args.ci)
        for cohort in m.reports:
            print(render_report(m.report(cohort), cohort))
            print()
        print(f"manifest: {Path(args.out_dir) / 'manifest.json'}")
    elif args.command == "eval":
        rep = cmd_eval(args.manifest, args.cohort, args.ci)
        print(rep.to_json() if args.json else render_report(rep, args.cohort))
    elif args.command == "ablate":
        table = cmd_ablate(args.config, args.data_dir, args.out_dir, tuple(args.seeds), args.jobs)
        print(table.render())
    elif args.command == "explain":
        heat, paths = cmd_explain(args.manifest, args.case_id, args.out_dir, args.cohort,
                                  args.layer, args.sequence, args.target)
        print(f"class {heat.target_class} from {heat.source_layer}: peak at {heat.peak()}, "
              f"{len(paths)} slices written to {args.out_dir}")
    elif args.command == "complexity":
        print(cmd_complexity(args.config, args.kind).format())


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _run(args)
    except (ConfigError, IngestionError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DesambaError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
