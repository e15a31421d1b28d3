"""Config-driven experiment runner: run, sweep, validate, export-traces."""

from __future__ import annotations

import argparse
import dataclasses
import json
import re
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from itertools import product
from pathlib import Path

from .embedstore import CameraView, load_manifest, read_embedding_bank
from .errors import ConfigError, DataError, DrivemonError
from .evalharness import (
    ExperimentConfig,
    ExperimentReport,
    parse_experiment_config,
    run_experiment,
)
from .metrics import write_confusion_csv
from .sampling import segment_events
from .temporal import write_trace_csv

REPORT_SCHEMA_VERSION = "1.0"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

# sweep axes, in the order cells are enumerated
SWEEP_AXES = ("model", "bank", "fps", "camera_view")


def _safe_name(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9._-]+", "_", text)


def _fmt(value: float) -> str:
    return format(value, ".10g")


def _report_dict(report: ExperimentReport, wall_clock: float, trace_files: list[str]) -> dict:
    folds = []
    for fold in report.folds:
        folds.append(
            {
                "fold_index": fold.fold_index,
                "test_drivers": list(fold.test_drivers),
                "train_drivers": list(fold.train_drivers),
                "n_train_frames": fold.n_train_frames,
                "n_test_frames": fold.n_test_frames,
                "n_test_events": fold.n_test_events,
                "metric_level": fold.metric_level,
                "top1": fold.metrics.top1,
                "macro_f1": fold.metrics.macro_f1,
                "per_class_f1": {
                    name: float(v)
                    for name, v in zip(report.class_table, fold.metrics.per_class_f1)
                },
                "confusion_csv": f"confusion_fold{fold.fold_index:02d}.csv",
                "class_counts": fold.class_counts,
                "event_predictions": [
                    {
                        "event_id": o.event_id,
                        "driver_id": o.driver_id,
                        "true_label": o.true_label,
                        "predicted_label": o.predicted_label,
                        "vote_counts": list(o.vote_counts),
                    }
                    for o in fold.event_outcomes
                ],
            }
        )
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "model": report.model,
        "seed": report.seed,
        "config": report.config_echo,
        "class_table": list(report.class_table),
        "folds": folds,
        "aggregate": {
            "mean_top1": report.mean_top1,
            "var_top1": report.var_top1,
            "mean_macro_f1": report.mean_macro_f1,
        },
        "trace_files": trace_files,
        "wall_clock_sec": wall_clock,
    }


def _results_row(cfg: ExperimentConfig, report: ExperimentReport) -> list[str]:
    return [
        report.model,
        str(cfg.target_fps) if cfg.target_fps is not None else "native",
        cfg.camera_view.value if cfg.camera_view is not None else "all",
        str(len(report.folds)),
        _fmt(report.mean_top1),
        _fmt(report.var_top1),
        _fmt(report.mean_macro_f1),
    ]


RESULTS_HEADER = ["model", "target_fps", "camera_view", "n_folds", "mean_top1", "var_top1", "mean_macro_f1"]


def write_run_outputs(
    cfg: ExperimentConfig, report: ExperimentReport, out_dir: Path, wall_clock: float
) -> Path:
    """Write report.json, results.csv, confusion CSVs, and trace CSVs."""
    out_dir.mkdir(parents=True, exist_ok=True)
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(exist_ok=True)

    trace_files = []
    for fold in report.folds:
        for trace in fold.traces:
            name = f"fold{fold.fold_index:02d}_{_safe_name(trace.event_id)}.csv"
            write_trace_csv(trace, traces_dir / name)
            trace_files.append(f"traces/{name}")
        write_confusion_csv(
            fold.metrics.confusion, out_dir / f"confusion_fold{fold.fold_index:02d}.csv"
        )

    with open(out_dir / "results.csv", "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(RESULTS_HEADER) + "\n")
        fh.write(",".join(_results_row(cfg, report)) + "\n")

    report_path = out_dir / "report.json"
    doc = _report_dict(report, wall_clock, trace_files)
    report_path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return report_path


def cmd_run(args: argparse.Namespace) -> int:
    cfg = parse_experiment_config(args.config, seed_override=args.seed)
    start = time.perf_counter()
    report = run_experiment(cfg)
    wall = time.perf_counter() - start
    path = write_run_outputs(cfg, report, Path(args.out), wall)
    print(
        f"{report.model}: mean top1 {report.mean_top1:.4f} "
        f"(var {report.var_top1:.6f}, macro F1 {report.mean_macro_f1:.4f}) "
        f"over {len(report.folds)} fold(s) -> {path}"
    )
    return EXIT_OK


def _sweep_cells(cfg: ExperimentConfig) -> list[dict[str, str]]:
    sweep = cfg.echo.get("sweep")
    if not sweep:
        raise ConfigError("sweep config needs a [sweep] section with at least one axis")
    axes: list[tuple[str, list[str]]] = []
    for axis in SWEEP_AXES:
        if axis in sweep:
            values = [v.strip() for v in sweep[axis].split(",") if v.strip()]
            if not values:
                raise ConfigError(f"sweep axis {axis!r} has no values")
            axes.append((axis, values))
    unknown = set(sweep) - set(SWEEP_AXES)
    if unknown:
        raise ConfigError(f"unknown sweep axes {sorted(unknown)}; supported: {SWEEP_AXES}")
    if not axes:
        raise ConfigError("sweep section defines no axes")
    names = [a for a, _ in axes]
    return [dict(zip(names, combo)) for combo in product(*(vals for _, vals in axes))]


def _apply_cell(cfg: ExperimentConfig, cell: dict[str, str]) -> ExperimentConfig:
    changes: dict = {}
    echo = {section: dict(items) for section, items in cfg.echo.items()}
    echo.pop("sweep", None)
    echo.setdefault("transforms", {})
    if "model" in cell:
        changes["model"] = cell["model"]
        echo.setdefault("run", {})["model"] = cell["model"]
    if "bank" in cell:
        changes["bank_path"] = cfg.bank_path.parent / cell["bank"]
        echo.setdefault("data", {})["bank"] = cell["bank"]
    if "fps" in cell:
        try:
            changes["target_fps"] = Fraction(cell["fps"])
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"bad sweep fps {cell['fps']!r}") from exc
        echo["transforms"]["target_fps"] = cell["fps"]
    if "camera_view" in cell:
        try:
            changes["camera_view"] = CameraView(cell["camera_view"])
        except ValueError as exc:
            raise ConfigError(f"bad sweep camera_view {cell['camera_view']!r}") from exc
        echo["transforms"]["camera_view"] = cell["camera_view"]
    changes["echo"] = echo
    return dataclasses.replace(cfg, **changes)


def cmd_sweep(args: argparse.Namespace) -> int:
    base = parse_experiment_config(args.config, seed_override=args.seed)
    cells = _sweep_cells(base)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run_cell(index: int, cell: dict[str, str]):
        cell_dir = out_dir / f"cell_{index:03d}"
        try:
            cfg = _apply_cell(base, cell)
            start = time.perf_counter()
            report = run_experiment(cfg)
            wall = time.perf_counter() - start
            write_run_outputs(cfg, report, cell_dir, wall)
            return {"cell": cell, "cfg": cfg, "report": report, "error": None}
        except DrivemonError as exc:
            return {"cell": cell, "cfg": None, "report": None, "error": str(exc)}

    jobs = max(1, args.jobs)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(lambda ic: run_cell(*ic), enumerate(cells)))
    else:
        outcomes = [run_cell(i, cell) for i, cell in enumerate(cells)]

    best_index = None
    best_top1 = None
    for i, outcome in enumerate(outcomes):
        if outcome["report"] is not None:
            top1 = outcome["report"].mean_top1
            if best_top1 is None or top1 > best_top1:
                best_index, best_top1 = i, top1

    header = ["cell_index"] + list(SWEEP_AXES) + [
        "status", "n_folds", "mean_top1", "var_top1", "mean_macro_f1", "best", "error",
    ]
    lines = [",".join(header)]
    for i, outcome in enumerate(outcomes):
        cell = outcome["cell"]
        row = [str(i)] + [cell.get(axis, "") for axis in SWEEP_AXES]
        if outcome["report"] is not None:
            rep = outcome["report"]
            row += [
                "ok",
                str(len(rep.folds)),
                _fmt(rep.mean_top1),
                _fmt(rep.var_top1),
                _fmt(rep.mean_macro_f1),
                "1" if i == best_index else "0",
                "",
            ]
        else:
            row += ["error", "", "", "", "", "0", outcome["error"].replace(",", ";")]
        lines.append(",".join(row))
    (out_dir / "sweep_results.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

    n_ok = sum(1 for o in outcomes if o["report"] is not None)
    print(f"sweep: {n_ok}/{len(cells)} cells ok", end="")
    if best_index is not None:
        print(f"; best cell {best_index} (mean top1 {best_top1:.4f})")
    else:
        print()
    return EXIT_OK


def cmd_validate(args: argparse.Namespace) -> int:
    """Emit diagnostics for a manifest and its banks; never fails."""
    diagnostics: dict = {"issues": 0}
    if args.config:
        try:
            cfg = parse_experiment_config(args.config)
            manifest_path = cfg.manifest_path
            bank_paths = [cfg.bank_path]
            if cfg.prompt_bank_path is not None:
                bank_paths.append(cfg.prompt_bank_path)
        except DrivemonError as exc:
            diagnostics["config_error"] = str(exc)
            diagnostics["issues"] += 1
            print(json.dumps(diagnostics, indent=2, sort_keys=True))
            return EXIT_OK
    else:
        manifest_path = Path(args.manifest)
        bank_paths = [Path(b) for b in args.bank or []]

    rows = []
    try:
        rows = load_manifest(manifest_path)
        per_driver: dict[str, int] = {}
        per_class: dict[str, int] = {}
        for row in rows:
            per_driver[row.driver_id] = per_driver.get(row.driver_id, 0) + 1
            per_class[row.label] = per_class.get(row.label, 0) + 1
        events = segment_events(rows)
        durations = [e.duration_seconds for e in events]
        diagnostics.update(
            {
                "n_rows": len(rows),
                "n_events": len(events),
                "per_driver_rows": dict(sorted(per_driver.items())),
                "per_class_rows": dict(sorted(per_class.items())),
                "event_length": {
                    "mean_frames": sum(e.n_frames for e in events) / len(events) if events else 0.0,
                    "mean_seconds": sum(durations) / len(durations) if durations else 0.0,
                    "min_seconds": min(durations) if durations else 0.0,
                    "max_seconds": max(durations) if durations else 0.0,
                },
            }
        )
    except DrivemonError as exc:
        diagnostics["manifest_error"] = str(exc)
        diagnostics["issues"] += 1

    bank_reports = []
    for bank_path in bank_paths:
        entry: dict = {"path": str(bank_path)}
        try:
            bank = read_embedding_bank(bank_path)
            entry["count"] = bank.count
            entry["dim"] = bank.dim
            unresolved = sorted({r.record_id for r in rows if r.record_id not in bank})
            entry["n_unresolved"] = len(unresolved)
            entry["unresolved_record_ids"] = unresolved[:50]
            diagnostics["issues"] += len(unresolved)
        except DrivemonError as exc:
            entry["error"] = str(exc)
            diagnostics["issues"] += 1
        bank_reports.append(entry)
    diagnostics["banks"] = bank_reports

    text = json.dumps(diagnostics, indent=2, sort_keys=True)
    print(text)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "validate.json").write_text(text + "\n", encoding="utf-8")
    return EXIT_OK


def cmd_export_traces(args: argparse.Namespace) -> int:
    cfg = parse_experiment_config(args.config, seed_override=args.seed)
    report = run_experiment(cfg)
    out_dir = Path(args.out)
    traces_dir = out_dir / "traces"
    traces_dir.mkdir(parents=True, exist_ok=True)
    index_lines = ["fold_index,event_id,file"]
    for fold in report.folds:
        for trace in fold.traces:
            name = f"fold{fold.fold_index:02d}_{_safe_name(trace.event_id)}.csv"
            write_trace_csv(trace, traces_dir / name)
            index_lines.append(f"{fold.fold_index},{trace.event_id},traces/{name}")
    (out_dir / "traces_index.csv").write_text("\n".join(index_lines) + "\n", encoding="utf-8")
    print(f"wrote {len(index_lines) - 1} trace files under {traces_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drivemon",
        description="Distracted-driving recognition experiments over embedding banks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_out=True):
        p.add_argument("--config", required=True, help="experiment config file")
        if needs_out:
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers (sweep cells)")

    p_run = sub.add_parser("run", help="execute one experiment")
    add_common(p_run)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="execute a hyperparameter grid")
    add_common(p_sweep)
    p_sweep.set_defaults(func=cmd_sweep)

    p_val = sub.add_parser("validate", help="diagnose a manifest and its banks")
    p_val.add_argument("--config", default=None, help="experiment config file")
    p_val.add_argument("--manifest", default=None, help="manifest CSV path")
    p_val.add_argument("--bank", action="append", default=None, help="bank path (repeatable)")
    p_val.add_argument("--out", default=None, help="directory for validate.json")
    p_val.set_defaults(func=cmd_validate)

    p_tr = sub.add_parser("export-traces", help="write per-event probability traces only")
    add_common(p_tr)
    p_tr.set_defaults(func=cmd_export_traces)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate" and not args.config and not args.manifest:
        parser.error("validate needs --config or --manifest")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DrivemonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
