"""Batch command line: generate, train, predict, evaluate, diagnose.

Every command echoes its effective configuration into a manifest so a run
can be reproduced from its outputs alone.  Errors print one
``category: message`` line on stderr and map to distinct exit codes:
0 success, 2 usage, 3 validation, 4 constraint-data, 5 persistence.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import (
    ConstraintDataError,
    PersistenceError,
    TriboostError,
    UsageError,
    ValidationError,
)
from .gbdt import GbdtModel, load_model, save_model
from .metrics import category_adherence, product_metrics
from .objectives import pred_ratio, stage3_target
from .panel import GroupLayout, load_panel_csv
from .pipeline import (
    PipelineConfig,
    StageOutputs,
    diagnose,
    run_pipeline,
    stage3_features,
)
from .scenario import generate, write_scenario

MODEL_FILES = {
    "stage1": "model_stage1.json",
    "stage2": "model_stage2.json",
    "stage3": "model_stage3.json",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # one-line errors, no usage dump
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="triboost", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True

    p = sub.add_parser("generate", help="synthesize a scenario into CSV files")
    p.add_argument("--config", help="scenario key-value config file")
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one scenario config key (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_generate)

    p = sub.add_parser("train", help="run the three-pass fit and save models")
    _add_data_args(p)
    p.add_argument("--config", help="training key-value config file")
    p.add_argument("--seed", type=int, help="override the seed for all stages")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one training config key (repeatable)")
    p.add_argument("--out", required=True, help="output directory")
    _add_threads_arg(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="apply saved models to a dataset")
    _add_data_args(p)
    p.add_argument("--models", required=True, help="directory holding the three model files")
    p.add_argument("--out", required=True, help="predictions CSV path")
    _add_threads_arg(p)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("evaluate", help="score predictions against true sales")
    p.add_argument("--pred", required=True, help="predictions CSV from `predict`")
    p.add_argument("--truth", required=True, help="truth CSV (product_id, week, true_sales)")
    p.add_argument("--out", required=True, help="metrics JSON path")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("diagnose", help="failure-mode report for saved models")
    _add_data_args(p)
    p.add_argument("--models", required=True, help="directory holding the three model files")
    p.add_argument("--config", help="training key-value config file (for the refit probe)")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one training config key (repeatable)")
    p.add_argument("--out", required=True, help="report JSON path")
    _add_threads_arg(p)
    p.set_defaults(func=_cmd_diagnose)

    return parser


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--data", required=True, nargs="+", metavar="CSV",
                   help="panel CSV file(s); multiple files are concatenated")


def _add_threads_arg(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="split-search threads (results identical for any value)")


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        return args.func(args)
    except SystemExit as exc:  # argparse --help
        code = exc.code
        return int(code) if isinstance(code, int) else 0
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except ConstraintDataError as exc:
        return _fail("constraint-data", exc, 4)
    except PersistenceError as exc:
        return _fail("persistence", exc, 5)
    except ValidationError as exc:
        return _fail("validation", exc, 3)
    except TriboostError as exc:
        return _fail("validation", exc, 3)


def _fail(category: str, exc: Exception, code: int) -> int:
    message = str(exc).replace("\n", "; ")
    print(f"{category}: {message}", file=sys.stderr)
    return code


def _mapping_from(args: argparse.Namespace) -> dict[str, str]:
    mapping = cfgmod.read_kv_file(args.config) if args.config else {}
    return cfgmod.apply_overrides(mapping, args.set)


def _pipeline_config(args: argparse.Namespace) -> PipelineConfig:
    cfg = cfgmod.pipeline_config_from_mapping(_mapping_from(args))
    seed = getattr(args, "seed", None)
    if seed is not None:
        cfg = PipelineConfig(
            stage1=dataclasses.replace(cfg.stage1, seed=seed),
            stage2=dataclasses.replace(cfg.stage2, seed=seed) if cfg.stage2 else None,
            stage3=dataclasses.replace(cfg.stage3, seed=seed) if cfg.stage3 else None,
        )
    return cfg


def _write_json(path: Path, payload: dict) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
        )
    except OSError as exc:
        raise PersistenceError(f"cannot write {path}: {exc}") from exc


def _cmd_generate(args: argparse.Namespace) -> int:
    mapping = _mapping_from(args)
    if args.seed is not None:
        mapping["seed"] = str(args.seed)
    config = cfgmod.scenario_config_from_mapping(mapping)
    dataset, truth = generate(config)
    out = Path(args.out)
    paths = write_scenario(dataset, truth, out)
    _write_json(out / "manifest.json", {
        "command": "generate",
        "config": cfgmod.scenario_config_echo(config),
        "files": {k: p.name for k, p in paths.items()},
        "rows": {"historical": dataset.m, "future": dataset.n - dataset.m},
    })
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    dataset = load_panel_csv(args.data)
    config = _pipeline_config(args)
    result = run_pipeline(dataset, config, n_threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, stage_fit in (
        ("stage1", result.stage1),
        ("stage2", result.stage2),
        ("stage3", result.stage3),
    ):
        save_model(stage_fit.model, out / MODEL_FILES[name])
    cfg1, cfg2, cfg3 = config.resolved()
    _write_json(out / "manifest.json", {
        "command": "train",
        "data": list(args.data),
        "config": {
            "stage1": cfgmod.train_config_echo(cfg1),
            "stage2": cfgmod.train_config_echo(cfg2),
            "stage3": cfgmod.train_config_echo(cfg3),
        },
        "seed": cfg1.seed,
        "models": dict(MODEL_FILES),
        "loss_curves": {
            "stage1": list(result.stage1.loss_curve),
            "stage2": list(result.stage2.loss_curve),
            "stage3": list(result.stage3.loss_curve),
        },
        "diagnostics": result.diagnostics.to_dict(),
    })
    return 0


def _load_models(models_dir: str) -> dict[str, GbdtModel]:
    root = Path(models_dir)
    return {name: load_model(root / fname) for name, fname in MODEL_FILES.items()}


def _predict_stages(dataset, models: dict[str, GbdtModel]) -> StageOutputs:
    X = dataset.features
    s1 = models["stage1"].predict(X)
    s2 = models["stage2"].predict(X)
    s3 = models["stage3"].predict(stage3_features(X, s2))
    ratios = pred_ratio(s1, dataset.layout)
    return StageOutputs(
        stage1=s1,
        stage2=s2,
        stage3=s3,
        ratios=ratios,
        stage3_targets=stage3_target(ratios, dataset.layout),
    )


def _cmd_predict(args: argparse.Namespace) -> int:
    dataset = load_panel_csv(args.data)
    outputs = _predict_stages(dataset, _load_models(args.models))
    out = Path(args.out)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        with out.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["product_id", "week", "stage1", "stage2", "stage3"])
            for i, record in enumerate(dataset.records):
                writer.writerow([
                    record.product_id,
                    str(record.week_index),
                    repr(float(outputs.stage1[i])),
                    repr(float(outputs.stage2[i])),
                    repr(float(outputs.stage3[i])),
                ])
    except OSError as exc:
        raise PersistenceError(f"cannot write {out}: {exc}") from exc
    _write_json(Path(str(out) + ".manifest.json"), {
        "command": "predict",
        "data": list(args.data),
        "models": args.models,
        "rows": dataset.n,
    })
    return 0


def _read_csv(path: str, required: list[str]) -> list[dict[str, str]]:
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for name in required:
                if name not in header:
                    raise ValidationError(f"{path}: missing required column '{name}'")
            return list(reader)
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc


def _cmd_evaluate(args: argparse.Namespace) -> int:
    pred_rows = _read_csv(args.pred, ["product_id", "week", "stage1", "stage2", "stage3"])
    truth_rows = _read_csv(args.truth, ["product_id", "week", "true_sales"])
    if not truth_rows:
        raise ValidationError("truth file has no rows")

    def key(row: dict[str, str]) -> tuple[int, str]:
        return int(row["week"]), row["product_id"]

    pred_by_key = {key(r): r for r in pred_rows}
    truth_sorted = sorted(truth_rows, key=key)
    missing = [k for k in map(key, truth_sorted) if k not in pred_by_key]
    if missing:
        raise ValidationError(
            f"prediction rows missing for (week, product) {missing[:3]}"
        )

    truth = np.array([float(r["true_sales"]) for r in truth_sorted])
    stages = {
        stage: np.array(
            [float(pred_by_key[key(r)][stage]) for r in truth_sorted]
        )
        for stage in ("stage1", "stage2", "stage3")
    }

    weeks = np.array([key(r)[0] for r in truth_sorted], dtype=np.intp)
    boundaries = np.nonzero(np.diff(weeks))[0] + 1
    starts = np.concatenate([[0], boundaries]).astype(np.intp)
    counts = np.diff(np.concatenate([starts, [len(weeks)]])).astype(np.intp)
    totals = np.add.reduceat(truth, starts)
    layout = GroupLayout(
        starts=starts,
        counts=counts,
        totals=totals,
        weeks=weeks[starts],
        is_future=np.ones(len(starts), dtype=bool),
        n=len(weeks),
    )

    report = {"rows": len(truth_sorted)}
    for stage, preds in stages.items():
        report[stage] = {
            **product_metrics(preds, truth),
            "adherence": category_adherence(preds, layout).to_dict(),
        }
    report["manifest"] = {
        "command": "evaluate", "pred": args.pred, "truth": args.truth,
    }
    _write_json(Path(args.out), report)
    return 0


def _cmd_diagnose(args: argparse.Namespace) -> int:
    dataset = load_panel_csv(args.data)
    outputs = _predict_stages(dataset, _load_models(args.models))
    config = _pipeline_config(args)
    report = diagnose(dataset, outputs, config, n_threads=args.threads)
    cfg1, _, _ = config.resolved()
    _write_json(Path(args.out), {
        **report.to_dict(),
        "manifest": {
            "command": "diagnose",
            "data": list(args.data),
            "models": args.models,
            "config": cfgmod.train_config_echo(cfg1),
        },
    })
    return 0


if __name__ == "__main__":
    sys.exit(main())
