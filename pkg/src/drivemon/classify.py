"""Inference: zero-shot prompt matching, linear-probe scoring, clip pooling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .embedstore import PromptSet, read_embedding_bank, write_embedding_bank
from .errors import DataError
from .sampling import CLIP_LEN

DEFAULT_LOGIT_SCALE = 100.0


@dataclass(frozen=True)
class ProbeParams:
    """Trainable classifier layer: logits = weights @ x + bias."""

    weights: np.ndarray  # (C, D)
    bias: np.ndarray  # (C,)
    class_table: tuple[str, ...]

    def __post_init__(self):
        c, _ = self.weights.shape
        if c != len(self.class_table) or self.bias.shape != (c,):
            raise DataError("probe parameter shapes do not match class table")
        if not (np.isfinite(self.weights).all() and np.isfinite(self.bias).all()):
            raise DataError("non-finite probe parameters")

    @property
    def n_classes(self) -> int:
        return len(self.class_table)

    @property
    def dim(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Prediction:
    class_index: int
    probs: np.ndarray  # (C,), sums to 1

    @property
    def n_classes(self) -> int:
        return self.probs.shape[0]


def softmax(logits: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis (max-subtraction; no overflow)."""
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _prediction_from_logits(logits: np.ndarray) -> Prediction:
    probs = softmax(logits)
    # np.argmax picks the first maximum, which is the lowest-index tie-break.
    return Prediction(class_index=int(np.argmax(probs)), probs=probs)


def zero_shot_predict(
    frame_emb: np.ndarray,
    prompts: PromptSet,
    logit_scale: float = DEFAULT_LOGIT_SCALE,
) -> Prediction:
    """Classify by scaled cosine similarity against the prompt embeddings."""
    if logit_scale <= 0:
        raise DataError(f"logit_scale must be positive, got {logit_scale}")
    x = np.asarray(frame_emb, dtype=np.float64).ravel()
    if x.shape[0] != prompts.embeddings.shape[1]:
        raise DataError(
            f"dim mismatch: embedding has {x.shape[0]}, prompts have {prompts.embeddings.shape[1]}"
        )
    norm = np.linalg.norm(x)
    if norm == 0.0:
        raise DataError("zero-norm embedding")
    p = prompts.embeddings.astype(np.float64)
    p_norms = np.linalg.norm(p, axis=1)
    if np.any(p_norms == 0.0):
        raise DataError("zero-norm prompt embedding")
    cos = (p @ x) / (p_norms * norm)
    return _prediction_from_logits(logit_scale * cos)


def probe_predict(emb: np.ndarray, params: ProbeParams) -> Prediction:
    """softmax(W x + b) with lowest-index argmax tie-break."""
    x = np.asarray(emb, dtype=np.float64).ravel()
    if x.shape[0] != params.dim:
        raise DataError(f"dim mismatch: embedding has {x.shape[0]}, probe expects {params.dim}")
    return _prediction_from_logits(params.weights @ x + params.bias)


def pool_clip(window_embs: np.ndarray, mode: str = "mean") -> np.ndarray:
    """Pool a clip window's member embeddings into one vector."""
    if mode != "mean":
        raise DataError(f"unknown pooling mode {mode!r}")
    arr = np.asarray(window_embs, dtype=np.float64)
    if arr.ndim != 2:
        raise DataError(f"window embeddings must be 2-D, got shape {arr.shape}")
    if arr.shape[0] != CLIP_LEN:
        raise DataError(f"clip window must have {CLIP_LEN} members, got {arr.shape[0]}")
    return arr.mean(axis=0)


def save_probe_params(params: ProbeParams, path: str | Path) -> Path:
    """Serialize probe params in the bank format.

    Ids are ``W.row.<i>`` for each weight row plus ``b`` for the bias,
    zero-padded to the weight dimension (requires C <= D; see docs/formats.md).
    Payload is quantized to the format's float32.
    """
    c, d = params.weights.shape
    if c > d:
        raise DataError(f"cannot serialize probe with {c} classes > dim {d}")
    ids = [f"W.row.{i}" for i in range(c)] + ["b"]
    bias_row = np.zeros(d, dtype=np.float32)
    bias_row[:c] = params.bias.astype(np.float32)
    vectors = np.vstack([params.weights.astype(np.float32), bias_row[None, :]])
    return write_embedding_bank(ids, vectors, d, path)


def load_probe_params(path: str | Path, class_table: tuple[str, ...] | list[str]) -> ProbeParams:
    bank = read_embedding_bank(path)
    c = len(class_table)
    expected = [f"W.row.{i}" for i in range(c)] + ["b"]
    if list(bank.ids) != expected:
        raise DataError(f"probe file {path} does not contain rows for {c} classes plus bias")
    weights = bank.vectors[:c].astype(np.float64)
    bias = bank.vectors[c][:c].astype(np.float64)
    return ProbeParams(weights=weights, bias=bias, class_table=tuple(class_table))
