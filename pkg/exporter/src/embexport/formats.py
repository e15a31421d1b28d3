"""Producer-side writers for the embedding-bank interchange formats.

The consumer pipeline documents the byte layout (bank: DCEB magic, u32
version 1, u32 dim, u64 count, length-prefixed UTF-8 ids, float32 LE
row-major payload; manifest: fixed 9-column CSV; prompt sidecar: one
class<TAB>sentence line per class). This module writes those formats
independently so the exporter stays decoupled from the consumer's code.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

BANK_MAGIC = b"DCEB"
BANK_VERSION = 1

MANIFEST_COLUMNS = (
    "record_id",
    "dataset",
    "driver_id",
    "video_id",
    "event_id",
    "frame_index",
    "source_fps",
    "camera_view",
    "label",
)


class ExportError(Exception):
    """Any exporter failure: bad inputs, undecodable media, missing checkpoints."""


def write_bank(ids: Sequence[str], vectors: np.ndarray, path: str | Path) -> Path:
    """Write vectors as a bank file; repeated calls emit identical bytes."""
    path = Path(path)
    arr = np.ascontiguousarray(vectors, dtype="<f4")
    if arr.ndim != 2:
        raise ExportError(f"vectors must be 2-D, got shape {arr.shape}")
    count, dim = arr.shape
    if dim < 1:
        raise ExportError("vectors must have at least one dimension")
    if len(ids) != count:
        raise ExportError(f"{len(ids)} ids but {count} vectors")
    if len(set(ids)) != len(ids):
        raise ExportError("duplicate record ids")
    if count and not np.isfinite(arr).all():
        raise ExportError("non-finite embedding component")

    with open(path, "wb") as fh:
        fh.write(BANK_MAGIC)
        fh.write(struct.pack("<IIQ", BANK_VERSION, dim, count))
        for rid in ids:
            raw = rid.encode("utf-8")
            if len(raw) > 0xFFFF:
                raise ExportError(f"record id too long: {rid[:32]!r}...")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
        fh.write(arr.tobytes(order="C"))
    return path


def write_manifest_fragment(rows: Sequence[Mapping[str, object]], path: str | Path) -> Path:
    """Write manifest rows (dicts keyed by the manifest columns) as CSV."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for row in rows:
            missing = [c for c in MANIFEST_COLUMNS if c not in row]
            if missing:
                raise ExportError(f"manifest row missing fields {missing}")
            writer.writerow([str(row[c]) for c in MANIFEST_COLUMNS])
    return path


def write_prompt_sidecar(entries: Sequence[tuple[str, str]], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for cls, sentence in entries:
            if "\t" in cls or "\n" in cls or "\n" in sentence:
                raise ExportError(f"class/prompt may not contain tabs or newlines: {cls!r}")
            fh.write(f"{cls}\t{sentence}\n")
    return path
