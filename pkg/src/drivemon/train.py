"""Multinomial logistic objective and an L-BFGS minimizer for the probe.

The probe is fitted full-batch: L-BFGS is a deterministic quasi-Newton
method, the objective is convex, and theta0 = 0, so identical inputs give
identical parameters.
"""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .classify import ProbeParams, pool_clip
from .embedstore import DatasetView
from .errors import DataError, LineSearchError, NonFiniteError, TrainError

logger = logging.getLogger(__name__)

ARMIJO_C1 = 1e-4
ARMIJO_SHRINK = 0.5
MAX_BACKTRACKS = 30


@dataclass(frozen=True)
class TrainConfig:
    l2_lambda: float = 1e-3
    lbfgs_history: int = 10
    max_iters: int = 500
    grad_tol: float = 1e-6
    line_search: str = "armijo_backtracking"

    def __post_init__(self):
        if self.l2_lambda < 0:
            raise TrainError(f"l2_lambda must be non-negative, got {self.l2_lambda}")
        if self.lbfgs_history < 1:
            raise TrainError(f"lbfgs_history must be >= 1, got {self.lbfgs_history}")
        if self.max_iters < 1:
            raise TrainError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.grad_tol <= 0:
            raise TrainError(f"grad_tol must be positive, got {self.grad_tol}")
        if self.line_search != "armijo_backtracking":
            raise TrainError(f"unknown line_search {self.line_search!r}")


@dataclass(frozen=True)
class Objective:
    """Differentiable scalar objective over a flat parameter vector."""

    eval: Callable[[np.ndarray], tuple[float, np.ndarray]]


def _log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def objective_from_arrays(x: np.ndarray, y: np.ndarray, n_classes: int, l2_lambda: float) -> Objective:
    """Mean cross-entropy of softmax(W x + b) plus (l2/2)*||W||_F^2.

    The bias is unregularized. Parameters are packed row-major W then b.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    n, d = x.shape
    if n == 0:
        raise DataError("objective needs at least one sample")
    if y.shape != (n,):
        raise DataError(f"label vector shape {y.shape} does not match {n} samples")
    if y.min() < 0 or y.max() >= n_classes:
        raise DataError("label index out of range")
    c = n_classes

    def eval_fn(theta: np.ndarray) -> tuple[float, np.ndarray]:
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (c * d + c,):
            raise TrainError(f"parameter vector has length {theta.size}, expected {c * d + c}")
        w = theta[: c * d].reshape(c, d)
        b = theta[c * d :]
        logits = x @ w.T + b
        logp = _log_softmax(logits)
        loss = -logp[np.arange(n), y].mean() + 0.5 * l2_lambda * float((w * w).sum())
        g = np.exp(logp)
        g[np.arange(n), y] -= 1.0
        g /= n
        grad_w = g.T @ x + l2_lambda * w
        grad_b = g.sum(axis=0)
        return float(loss), np.concatenate([grad_w.ravel(), grad_b])

    return Objective(eval=eval_fn)


def probe_objective(view: DatasetView, l2_lambda: float) -> Objective:
    if view.n_rows == 0:
        raise DataError("empty view")
    x = view.embedding_matrix().astype(np.float64)
    y = view.label_indices()
    return objective_from_arrays(x, y, len(view.class_table), l2_lambda)


def _two_loop_direction(
    grad: np.ndarray,
    s_hist: Sequence[np.ndarray],
    y_hist: Sequence[np.ndarray],
    rho_hist: Sequence[float],
) -> np.ndarray:
    q = grad.copy()
    alphas = []
    for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
        a = rho * (s @ q)
        q -= a * y
        alphas.append(a)
    s_last, y_last = s_hist[-1], y_hist[-1]
    gamma = (s_last @ y_last) / (y_last @ y_last)
    r = gamma * q
    for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
        beta = rho * (y @ r)
        r += (a - beta) * s
    return -r


def lbfgs_minimize(
    obj: Objective, x0: np.ndarray, cfg: TrainConfig
) -> tuple[np.ndarray, list[float]]:
    """Minimize with L-BFGS two-loop recursion and Armijo backtracking.

    Returns the final iterate and the per-iterate loss trace (starting at
    f(x0)); stops when the gradient infinity-norm drops below grad_tol or
    max_iters is reached. The trace is non-increasing.
    """
    x = np.asarray(x0, dtype=np.float64).copy()
    f, g = obj.eval(x)
    if not (np.isfinite(f) and np.isfinite(g).all()):
        raise NonFiniteError("non-finite loss or gradient at initial point", iteration=0)
    trace = [f]

    m = cfg.lbfgs_history
    s_hist: deque[np.ndarray] = deque(maxlen=m)
    y_hist: deque[np.ndarray] = deque(maxlen=m)
    rho_hist: deque[float] = deque(maxlen=m)

    for iteration in range(1, cfg.max_iters + 1):
        if np.abs(g).max() < cfg.grad_tol:
            break

        if s_hist:
            d = _two_loop_direction(g, s_hist, y_hist, rho_hist)
            alpha0 = 1.0
        else:
            d = -g
            # first step: temper the raw gradient so steep objectives stay stable
            alpha0 = min(1.0, 1.0 / np.abs(g).sum())

        gtd = float(g @ d)
        if gtd >= 0.0:
            d = -g
            gtd = -float(g @ g)

        alpha = alpha0
        accepted = False
        for _ in range(MAX_BACKTRACKS):
            x_new = x + alpha * d
            f_new, g_new = obj.eval(x_new)
            if np.isfinite(f_new) and f_new <= f + ARMIJO_C1 * alpha * gtd:
                accepted = True
                break
            alpha *= ARMIJO_SHRINK
        if not accepted:
            raise LineSearchError(
                f"no Armijo step after {MAX_BACKTRACKS} backtracks", iteration=iteration
            )
        if not np.isfinite(g_new).all():
            raise NonFiniteError("non-finite gradient at accepted step", iteration=iteration)

        s = x_new - x
        y_vec = g_new - g
        sy = float(s @ y_vec)
        # skip pairs that would break positive definiteness (Armijo gives no
        # curvature guarantee)
        if sy > 1e-10 * np.linalg.norm(s) * np.linalg.norm(y_vec):
            s_hist.append(s)
            y_hist.append(y_vec)
            rho_hist.append(1.0 / sy)

        x, f, g = x_new, f_new, g_new
        trace.append(f)

    return x, trace


def _fit_core(x: np.ndarray, y: np.ndarray, class_table: tuple[str, ...], cfg: TrainConfig) -> ProbeParams:
    c, d = len(class_table), x.shape[1]
    counts = np.bincount(y, minlength=c)
    for idx in np.flatnonzero(counts == 0):
        logger.warning("class %r has zero training samples", class_table[idx])
    obj = objective_from_arrays(x, y, c, cfg.l2_lambda)
    theta, _ = lbfgs_minimize(obj, np.zeros(c * d + c), cfg)
    return ProbeParams(
        weights=theta[: c * d].reshape(c, d),
        bias=theta[c * d :],
        class_table=class_table,
    )


def fit_probe(train_view: DatasetView, cfg: TrainConfig) -> ProbeParams:
    """Fit the classifier layer on a view's frozen frame embeddings."""
    if train_view.n_rows == 0:
        raise DataError("empty training view")
    x = train_view.embedding_matrix().astype(np.float64)
    y = train_view.label_indices()
    return _fit_core(x, y, train_view.class_table, cfg)


def fit_clip_head(
    train_clips: Sequence[tuple[np.ndarray, str]],
    cfg: TrainConfig,
    class_table: Sequence[str] | None = None,
) -> ProbeParams:
    """Fit the classifier on mean-pooled clip-window embeddings.

    ``train_clips`` holds (S x D member-embedding matrix, label) pairs.
    """
    if not train_clips:
        raise DataError("empty clip list")
    pooled = np.stack([pool_clip(embs) for embs, _ in train_clips])
    labels = [label for _, label in train_clips]
    table = tuple(class_table) if class_table is not None else tuple(sorted(set(labels)))
    index = {name: i for i, name in enumerate(table)}
    missing = sorted(set(labels) - set(table))
    if missing:
        raise DataError(f"clip labels absent from class_table: {missing}")
    y = np.array([index[label] for label in labels], dtype=np.int64)
    return _fit_core(pooled, y, table, cfg)
