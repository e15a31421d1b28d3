"""Driver-disjoint evaluation: k-fold plans, holdouts, class remaps, experiment runs.

Every split keeps train and test driver sets disjoint, and all transforms
(camera filter, class remap, FPS subsampling) are applied after splitting
but identically to both sides, so no transform can leak information.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .classify import (
    DEFAULT_LOGIT_SCALE,
    ProbeParams,
    pool_clip,
    probe_predict,
    zero_shot_predict,
)
from .embedstore import (
    CameraView,
    DatasetView,
    EmbeddingBank,
    PromptSet,
    build_dataset_view,
    filter_view,
    load_manifest,
    load_prompt_set,
    read_embedding_bank,
)
from .errors import ConfigError, DataError, DrivemonError
from .metrics import FoldMetrics, aggregate_folds, compute_fold_metrics
from .sampling import ClipWindow, EventSeq, clip_stream, segment_events, subsample_fps
from .temporal import ProbTrace, predict_event
from .train import TrainConfig, fit_clip_head, fit_probe

MODELS = ("zero_shot", "single_frame", "multi_frame", "video_clip")
SPLIT_MODES = ("none", "kfold", "holdout", "holdout_kfold")
TRAINABLE = ("single_frame", "multi_frame", "video_clip")


@dataclass(frozen=True)
class FoldPlan:
    k: int
    folds: tuple[tuple[str, ...], ...]
    seed: int


@dataclass(frozen=True)
class ClassRemap:
    drops: frozenset[str] = frozenset()
    merges: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        overlap = self.drops & set(self.merges)
        if overlap:
            raise DataError(f"classes both dropped and merged: {sorted(overlap)}")
        for src, dst in self.merges.items():
            if not dst:
                raise DataError(f"empty merge target for class {src!r}")
            if dst in self.drops:
                raise DataError(f"merge target {dst!r} is a dropped class")

    @property
    def is_identity(self) -> bool:
        return not self.drops and not self.merges


def split_drivers_kfold(driver_ids: Sequence[str], k: int, seed: int) -> FoldPlan:
    """Shuffle drivers with the seed, then deal them round-robin into k folds."""
    ids = list(driver_ids)
    if len(set(ids)) != len(ids):
        raise DataError("driver ids must be unique")
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k > len(ids):
        raise DataError(f"k={k} exceeds driver count {len(ids)}")
    rng = np.random.default_rng(seed)
    order = sorted(ids)
    perm = rng.permutation(len(order))
    folds: list[list[str]] = [[] for _ in range(k)]
    for pos, idx in enumerate(perm):
        folds[pos % k].append(order[idx])
    return FoldPlan(k=k, folds=tuple(tuple(sorted(f)) for f in folds), seed=seed)


def leave_drivers_out(view: DatasetView, holdout: set[str] | Sequence[str]) -> tuple[DatasetView, DatasetView]:
    """Split a view into (train, test) with the holdout drivers entirely in test."""
    holdout_set = set(holdout)
    if not holdout_set:
        raise DataError("empty holdout set makes a meaningless split")
    present = {r.driver_id for r in view.rows}
    absent = sorted(holdout_set - present)
    if absent:
        raise DataError(f"holdout drivers absent from view: {absent}")
    test = filter_view(view, driver_id=holdout_set)
    train = filter_view(view, lambda r: r.driver_id not in holdout_set)
    return train, test


def reduce_training_by_drivers(
    train: DatasetView,
    keep: float | Sequence[str],
    seed: int = 0,
) -> DatasetView:
    """Shrink a training view by whole drivers, never splitting a driver's rows.

    A float keeps ceil(fraction * n_drivers) seed-shuffled drivers; an
    explicit list keeps exactly those drivers.
    """
    drivers = train.drivers()
    if isinstance(keep, (int, float)) and not isinstance(keep, bool):
        fraction = float(keep)
        if fraction <= 0:
            raise DataError(f"fraction must be in (0, 1], got {fraction}")
        if fraction > 1:
            raise DataError(f"fraction must be in (0, 1], got {fraction}")
        target = math.ceil(fraction * len(drivers))
        rng = np.random.default_rng(seed)
        perm = rng.permutation(len(drivers))
        kept = {drivers[i] for i in perm[:target]}
    else:
        kept = set(keep)
        unknown = sorted(kept - set(drivers))
        if unknown:
            raise DataError(f"keep list names drivers absent from training view: {unknown}")
    return filter_view(train, driver_id=kept)


def remap_classes(view: DatasetView, remap: ClassRemap) -> DatasetView:
    """Drop and merge classes; the class table is rebuilt sorted over survivors."""
    known = set(view.class_table)
    unknown = sorted((remap.drops | set(remap.merges)) - known)
    if unknown:
        raise DataError(f"unknown class names: {unknown}")
    new_table = tuple(sorted({remap.merges.get(c, c) for c in view.class_table if c not in remap.drops}))
    new_rows = []
    for row in view.rows:
        if row.label in remap.drops:
            continue
        target = remap.merges.get(row.label, row.label)
        if target == row.label:
            new_rows.append(row)
        else:
            new_rows.append(
                type(row)(
                    record_id=row.record_id,
                    dataset=row.dataset,
                    driver_id=row.driver_id,
                    video_id=row.video_id,
                    event_id=row.event_id,
                    frame_index=row.frame_index,
                    source_fps=row.source_fps,
                    camera_view=row.camera_view,
                    label=target,
                )
            )
    return DatasetView(rows=tuple(new_rows), class_table=new_table, bank=view.bank)


@dataclass(frozen=True)
class ExperimentConfig:
    model: str
    seed: int
    manifest_path: Path
    bank_path: Path
    prompt_bank_path: Path | None = None
    prompt_sidecar_path: Path | None = None
    logit_scale: float = DEFAULT_LOGIT_SCALE
    split_mode: str = "kfold"
    k: int | None = None
    holdout_drivers: tuple[str, ...] = ()
    target_fps: Fraction | None = None
    camera_view: CameraView | None = None
    class_remap: ClassRemap = field(default_factory=ClassRemap)
    reduce_fraction: float | None = None
    reduce_keep_drivers: tuple[str, ...] | None = None
    train: TrainConfig = field(default_factory=TrainConfig)
    trace_window: int = 5
    echo: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.model not in MODELS:
            raise ConfigError(f"unknown model {self.model!r}; expected one of {MODELS}")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"unknown split mode {self.split_mode!r}; expected one of {SPLIT_MODES}")
        if self.model == "zero_shot":
            if self.prompt_bank_path is None or self.prompt_sidecar_path is None:
                raise ConfigError("zero_shot model requires prompt_bank and prompt_sidecar")
        if self.model in TRAINABLE:
            if self.split_mode == "none":
                raise ConfigError(f"model {self.model!r} requires a fold plan (split mode != none)")
        if self.split_mode in ("kfold", "holdout_kfold") and (self.k is None or self.k < 1):
            raise ConfigError(f"split mode {self.split_mode!r} requires k >= 1")
        if self.split_mode in ("holdout", "holdout_kfold") and not self.holdout_drivers:
            raise ConfigError(f"split mode {self.split_mode!r} requires holdout_drivers")
        if self.reduce_fraction is not None and self.reduce_keep_drivers is not None:
            raise ConfigError("reduce_fraction and reduce_keep_drivers are mutually exclusive")


def _csv_list(text: str) -> tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _parse_merges(text: str) -> dict[str, str]:
    merges = {}
    for item in _csv_list(text):
        if ">" not in item:
            raise ConfigError(f"merge entry {item!r} must be 'source>target'")
        src, dst = item.split(">", 1)
        merges[src.strip()] = dst.strip()
    return merges


def parse_experiment_config(path: str | Path, seed_override: int | None = None) -> ExperimentConfig:
    """Parse the key = value experiment file (schema in docs/config.md)."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config {path}: {exc}") from exc

    def get(section: str, key: str, fallback: str | None = None) -> str | None:
        return parser.get(section, key, fallback=fallback)

    try:
        model = parser.get("run", "model")
        seed_text = parser.get("run", "seed")
    except (configparser.NoSectionError, configparser.NoOptionError) as exc:
        raise ConfigError(f"{path}: missing mandatory [run] model/seed: {exc}") from exc
    try:
        seed = int(seed_text)
    except ValueError as exc:
        raise ConfigError(f"{path}: seed must be an integer, got {seed_text!r}") from exc
    if seed < 0:
        raise ConfigError(f"{path}: seed must be unsigned, got {seed}")
    if seed_override is not None:
        seed = seed_override

    if not parser.has_section("data") or not parser.has_option("data", "manifest") or not parser.has_option("data", "bank"):
        raise ConfigError(f"{path}: [data] section must define manifest and bank")
    root = Path(get("data", "root", ".") or ".")
    if not root.is_absolute():
        root = path.parent / root

    def data_path(key: str) -> Path | None:
        value = get("data", key)
        return root / value if value else None

    try:
        target_fps_text = get("transforms", "target_fps")
        target_fps = Fraction(target_fps_text) if target_fps_text else None
    except (ValueError, ZeroDivisionError) as exc:
        raise ConfigError(f"{path}: bad target_fps: {exc}") from exc
    camera_text = get("transforms", "camera_view")
    try:
        camera = CameraView(camera_text) if camera_text else None
    except ValueError as exc:
        raise ConfigError(f"{path}: bad camera_view {camera_text!r}") from exc

    def parse_float(section: str, key: str, default: float) -> float:
        text = get(section, key)
        if text is None:
            return default
        try:
            return float(text)
        except ValueError as exc:
            raise ConfigError(f"{path}: [{section}] {key} must be a number, got {text!r}") from exc

    def parse_int(section: str, key: str, default: int | None) -> int | None:
        text = get(section, key)
        if text is None:
            return default
        try:
            return int(text)
        except ValueError as exc:
            raise ConfigError(f"{path}: [{section}] {key} must be an integer, got {text!r}") from exc

    reduce_text = get("transforms", "reduce_fraction")
    reduce_keep_text = get("transforms", "reduce_keep_drivers")

    try:
        train_cfg = TrainConfig(
            l2_lambda=parse_float("train", "l2_lambda", 1e-3),
            lbfgs_history=parse_int("train", "lbfgs_history", 10),
            max_iters=parse_int("train", "max_iters", 500),
            grad_tol=parse_float("train", "grad_tol", 1e-6),
            line_search=get("train", "line_search", "armijo_backtracking"),
        )
        remap = ClassRemap(
            drops=frozenset(_csv_list(get("transforms", "drop_classes", "") or "")),
            merges=_parse_merges(get("transforms", "merge_classes", "") or ""),
        )
    except ConfigError:
        raise
    except DrivemonError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    echo = {section: dict(parser.items(section)) for section in parser.sections()}
    echo.setdefault("run", {})["seed"] = str(seed)

    return ExperimentConfig(
        model=model,
        seed=seed,
        manifest_path=root / parser.get("data", "manifest"),
        bank_path=root / parser.get("data", "bank"),
        prompt_bank_path=data_path("prompt_bank"),
        prompt_sidecar_path=data_path("prompt_sidecar"),
        logit_scale=parse_float("run", "logit_scale", DEFAULT_LOGIT_SCALE),
        split_mode=get("split", "mode", "none" if model == "zero_shot" else "kfold"),
        k=parse_int("split", "k", None),
        holdout_drivers=_csv_list(get("split", "holdout_drivers", "") or ""),
        target_fps=target_fps,
        camera_view=camera,
        class_remap=remap,
        reduce_fraction=float(reduce_text) if reduce_text else None,
        reduce_keep_drivers=_csv_list(reduce_keep_text) if reduce_keep_text else None,
        train=train_cfg,
        trace_window=parse_int("output", "trace_window", 5),
        echo=echo,
    )


@dataclass(frozen=True)
class EventOutcome:
    event_id: str
    driver_id: str
    true_label: str
    predicted_label: str
    vote_counts: tuple[int, ...]


@dataclass
class FoldResult:
    fold_index: int
    test_drivers: tuple[str, ...]
    train_drivers: tuple[str, ...]
    n_train_frames: int
    n_test_frames: int
    n_test_events: int
    metric_level: str
    metrics: FoldMetrics
    class_counts: dict[str, dict[str, int]]
    event_outcomes: list[EventOutcome]
    traces: list[ProbTrace]


@dataclass
class ExperimentReport:
    model: str
    seed: int
    class_table: tuple[str, ...]
    folds: list[FoldResult]
    mean_top1: float
    var_top1: float
    mean_macro_f1: float
    config_echo: dict


@dataclass(frozen=True)
class _FoldSpec:
    index: int
    test_drivers: tuple[str, ...] | None  # None = score everything (zero-shot pass)
    excluded_drivers: tuple[str, ...] = ()


def _plan_folds(cfg: ExperimentConfig, all_drivers: tuple[str, ...]) -> list[_FoldSpec]:
    if cfg.split_mode == "none":
        return [_FoldSpec(index=0, test_drivers=None)]
    if cfg.split_mode == "holdout":
        return [_FoldSpec(index=0, test_drivers=tuple(sorted(cfg.holdout_drivers)))]
    if cfg.split_mode == "kfold":
        plan = split_drivers_kfold(all_drivers, cfg.k, cfg.seed)
        return [_FoldSpec(index=i, test_drivers=fold) for i, fold in enumerate(plan.folds)]
    # holdout_kfold: the holdout is always the test set; the k folds rotate
    # which chunk of the remaining drivers is withheld from training
    holdout = tuple(sorted(cfg.holdout_drivers))
    rest = tuple(d for d in all_drivers if d not in set(holdout))
    if not rest:
        raise DataError("holdout_kfold leaves no drivers to train on")
    plan = split_drivers_kfold(rest, cfg.k, cfg.seed)
    return [
        _FoldSpec(index=i, test_drivers=holdout, excluded_drivers=fold)
        for i, fold in enumerate(plan.folds)
    ]


def _prepare_events(view: DatasetView, target_fps: Fraction | None) -> list[EventSeq]:
    events = segment_events(list(view.rows))
    if target_fps is not None:
        events = [subsample_fps(e, target_fps) for e in events]
    return events


def _window_matrix(window: ClipWindow, bank: EmbeddingBank) -> np.ndarray:
    return np.stack([bank.get(r.record_id) for r in window.members])


def _fit_fold_probe(
    cfg: ExperimentConfig,
    train_events: list[EventSeq],
    class_table: tuple[str, ...],
    bank: EmbeddingBank,
) -> ProbeParams:
    if cfg.model == "video_clip":
        clips = [
            (_window_matrix(w, bank), event.label)
            for event in train_events
            for w in clip_stream(event)
        ]
        return fit_clip_head(clips, cfg.train, class_table)
    train_rows = [r for e in train_events for r in e.frames]
    if not train_rows:
        raise DataError("no training frames after transforms")
    train_view = build_dataset_view(train_rows, bank, class_table)
    return fit_probe(train_view, cfg.train)


def _run_fold(
    cfg: ExperimentConfig,
    fold: _FoldSpec,
    base_view: DatasetView,
    prompt_set: PromptSet | None,
) -> FoldResult:
    bank = base_view.bank
    if fold.test_drivers is None:
        train_view, test_view = None, base_view
    else:
        train_view, test_view = leave_drivers_out(base_view, set(fold.test_drivers))
        if fold.excluded_drivers:
            excluded = set(fold.excluded_drivers)
            train_view = filter_view(train_view, lambda r: r.driver_id not in excluded)

    def transform(view: DatasetView) -> DatasetView:
        if cfg.camera_view is not None:
            view = filter_view(view, camera_view=cfg.camera_view)
        return remap_classes(view, cfg.class_remap)

    test_view = transform(test_view)
    class_table = test_view.class_table
    if train_view is not None:
        train_view = transform(train_view)
        if cfg.reduce_fraction is not None:
            train_view = reduce_training_by_drivers(train_view, cfg.reduce_fraction, cfg.seed)
        elif cfg.reduce_keep_drivers is not None:
            train_view = reduce_training_by_drivers(train_view, cfg.reduce_keep_drivers, cfg.seed)
        overlap = set(train_view.drivers()) & set(test_view.drivers())
        if overlap:
            raise DataError(f"train/test driver overlap {sorted(overlap)}")

    train_events = _prepare_events(train_view, cfg.target_fps) if train_view is not None else []
    test_events = _prepare_events(test_view, cfg.target_fps)
    if not test_events:
        raise DataError("no test events after transforms")

    if cfg.model == "zero_shot":
        prompts = prompt_set.reordered(class_table)

        def frame_scorer(row):
            return zero_shot_predict(bank.get(row.record_id), prompts, cfg.logit_scale)

        clip_scorer = None
        metric_level = "frame"
    else:
        params = _fit_fold_probe(cfg, train_events, class_table, bank)
        if cfg.model == "video_clip":
            def clip_scorer(window):
                return probe_predict(pool_clip(_window_matrix(window, bank)), params)

            frame_scorer = None
            metric_level = "event"
        else:
            def frame_scorer(row):
                return probe_predict(bank.get(row.record_id), params)

            clip_scorer = None
            metric_level = "event" if cfg.model == "multi_frame" else "frame"

    label_index = {name: i for i, name in enumerate(class_table)}
    outcomes: list[EventOutcome] = []
    traces: list[ProbTrace] = []
    frame_preds: list[int] = []
    frame_labels: list[int] = []
    event_preds: list[int] = []
    event_labels: list[int] = []

    for event in test_events:
        if frame_scorer is not None:
            ep, trace = predict_event(event, frame_scorer=frame_scorer, window=cfg.trace_window)
        else:
            ep, trace = predict_event(event, clip_scorer=clip_scorer, window=cfg.trace_window)
        truth = label_index[event.label]
        outcomes.append(
            EventOutcome(
                event_id=event.event_id,
                driver_id=event.driver_id,
                true_label=event.label,
                predicted_label=class_table[ep.class_index],
                vote_counts=tuple(int(v) for v in ep.vote_counts),
            )
        )
        traces.append(trace)
        event_preds.append(ep.class_index)
        event_labels.append(truth)
        frame_preds.extend(int(i) for i in trace.raw.argmax(axis=1))
        frame_labels.extend([truth] * trace.raw.shape[0])

    if metric_level == "frame":
        fold_metrics = compute_fold_metrics(frame_preds, frame_labels, class_table)
    else:
        fold_metrics = compute_fold_metrics(event_preds, event_labels, class_table)

    counts: dict[str, dict[str, int]] = {
        name: {"train_frames": 0, "test_frames": 0, "test_events": 0} for name in class_table
    }
    for event in train_events:
        counts[event.label]["train_frames"] += event.n_frames
    for event in test_events:
        counts[event.label]["test_frames"] += event.n_frames
        counts[event.label]["test_events"] += 1

    return FoldResult(
        fold_index=fold.index,
        test_drivers=tuple(sorted({e.driver_id for e in test_events}))
        if fold.test_drivers is None
        else fold.test_drivers,
        train_drivers=tuple(sorted({e.driver_id for e in train_events})),
        n_train_frames=sum(e.n_frames for e in train_events),
        n_test_frames=sum(e.n_frames for e in test_events),
        n_test_events=len(test_events),
        metric_level=metric_level,
        metrics=fold_metrics,
        class_counts=counts,
        event_outcomes=outcomes,
        traces=traces,
    )


def run_experiment(cfg: ExperimentConfig) -> ExperimentReport:
    """Execute every fold of a configured experiment, deterministically."""
    rows = load_manifest(cfg.manifest_path)
    bank = read_embedding_bank(cfg.bank_path)
    base_view = build_dataset_view(rows, bank)
    prompt_set = None
    if cfg.model == "zero_shot":
        prompt_set = load_prompt_set(cfg.prompt_bank_path, cfg.prompt_sidecar_path)

    folds = _plan_folds(cfg, base_view.drivers())
    results: list[FoldResult] = []
    for fold in folds:
        try:
            results.append(_run_fold(cfg, fold, base_view, prompt_set))
        except DataError as exc:
            raise DataError(f"fold {fold.index}: {exc}") from exc

    mean_top1, var_top1, mean_macro = aggregate_folds([r.metrics for r in results])
    class_table = results[0].metrics.confusion.class_table
    return ExperimentReport(
        model=cfg.model,
        seed=cfg.seed,
        class_table=class_table,
        folds=results,
        mean_top1=mean_top1,
        var_top1=var_top1,
        mean_macro_f1=mean_macro,
        config_echo=cfg.echo,
    )
