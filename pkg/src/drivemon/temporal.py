"""Event-level aggregation: majority vote and moving-average probability traces."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .classify import Prediction
from .errors import DataError
from .sampling import ClipWindow, EventSeq, clip_stream


@dataclass(frozen=True)
class EventPrediction:
    event_id: str
    class_index: int
    vote_counts: np.ndarray  # (C,) int
    mean_probs: np.ndarray  # (C,)


@dataclass(frozen=True)
class ProbTrace:
    event_id: str
    raw: np.ndarray  # (N, C), each row sums to 1
    smoothed: np.ndarray  # (N, C), each row sums to 1
    window: int


def majority_vote(preds: Sequence[Prediction], event_id: str = "") -> EventPrediction:
    """Most frequent class; ties fall to larger summed probability, then lower index."""
    if not preds:
        raise DataError("empty prediction list")
    n_classes = preds[0].n_classes
    if any(p.n_classes != n_classes for p in preds):
        raise DataError("predictions disagree on class count")
    counts = np.bincount([p.class_index for p in preds], minlength=n_classes)
    prob_matrix = np.stack([p.probs for p in preds])
    summed = prob_matrix.sum(axis=0)
    best = counts.max()
    candidates = np.flatnonzero(counts == best)
    if len(candidates) > 1:
        candidates = candidates[summed[candidates] == summed[candidates].max()]
    winner = int(candidates[0])
    return EventPrediction(
        event_id=event_id,
        class_index=winner,
        vote_counts=counts,
        mean_probs=prob_matrix.mean(axis=0),
    )


def moving_average(trace: np.ndarray, window: int) -> np.ndarray:
    """Centered clamped-window mean per frame, rows renormalized to sum 1."""
    arr = np.asarray(trace, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"trace must be 2-D, got shape {arr.shape}")
    n = arr.shape[0]
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    if window % 2 == 0:
        raise DataError(f"window must be odd, got {window}")
    if window > 2 * n - 1:
        raise DataError(f"window {window} exceeds limit {2 * n - 1} for {n} frames")
    half = window // 2
    out = np.empty_like(arr)
    for i in range(n):
        lo = max(0, i - half)
        hi = min(n - 1, i + half)
        out[i] = arr[lo : hi + 1].mean(axis=0)
    sums = out.sum(axis=1, keepdims=True)
    return out / sums


def _clamped_window(requested: int, n: int) -> int:
    w = min(requested, 2 * n - 1)
    return w if w % 2 == 1 else w - 1


def predict_event(
    event: EventSeq,
    frame_scorer: Callable[..., Prediction] | None = None,
    clip_scorer: Callable[[ClipWindow], Prediction] | None = None,
    window: int = 5,
) -> tuple[EventPrediction, ProbTrace]:
    """Score every (subsampled) frame or clip window and vote over the results.

    Exactly one scorer must be given: ``frame_scorer`` receives each
    ManifestRow, ``clip_scorer`` each ClipWindow. The trace window shrinks
    for short events so smoothing stays well-defined.
    """
    if (frame_scorer is None) == (clip_scorer is None):
        raise DataError("provide exactly one of frame_scorer / clip_scorer")
    if frame_scorer is not None:
        preds = [frame_scorer(row) for row in event.frames]
    else:
        preds = [clip_scorer(w) for w in clip_stream(event)]
    raw = np.stack([p.probs for p in preds])
    w_eff = _clamped_window(window, len(preds))
    smoothed = moving_average(raw, w_eff)
    event_pred = majority_vote(preds, event_id=event.event_id)
    return event_pred, ProbTrace(event_id=event.event_id, raw=raw, smoothed=smoothed, window=w_eff)


def write_trace_csv(trace: ProbTrace, path: str | Path) -> Path:
    """CSV with columns frame_ordinal, class_0.., smoothed_0.. per frame."""
    path = Path(path)
    n, c = trace.raw.shape
    header = ["frame_ordinal"] + [f"class_{j}" for j in range(c)] + [f"smoothed_{j}" for j in range(c)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i in range(n):
            row = [str(i + 1)]
            row += [format(v, ".10g") for v in trace.raw[i]]
            row += [format(v, ".10g") for v in trace.smoothed[i]]
            writer.writerow(row)
    return path
