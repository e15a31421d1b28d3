"""Embedding interchange format and the manifest / dataset-view model.

The on-disk bank layout is fixed and byte-exact:

    magic   4 bytes  b"DCEB"
    version u32 LE   == 1
    dim     u32 LE
    count   u64 LE
    ids     count * (u16 LE length, UTF-8 bytes)
    payload count*dim float32 LE, row-major

Everything downstream operates on immutable views over one bank.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import BankFormatError, DataError, ManifestError

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


class CameraView(str, Enum):
    DASHBOARD = "dashboard"
    SIDE = "side"
    REAR = "rear"
    OTHER = "other"


@dataclass(frozen=True)
class EmbeddingBank:
    """Dense float32 vectors keyed by unique record id."""

    dim: int
    ids: tuple[str, ...]
    vectors: np.ndarray  # (count, dim) float32
    _index: dict[str, int] = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        if self.dim <= 0:
            raise BankFormatError(f"dim must be positive, got {self.dim}")
        if self.vectors.shape != (len(self.ids), self.dim):
            raise BankFormatError(
                f"vector array shape {self.vectors.shape} does not match "
                f"{len(self.ids)} ids of dim {self.dim}"
            )
        index = {rid: i for i, rid in enumerate(self.ids)}
        if len(index) != len(self.ids):
            raise BankFormatError("duplicate id in bank")
        if self.vectors.size and not np.isfinite(self.vectors).all():
            raise BankFormatError("non-finite component in bank vectors")
        object.__setattr__(self, "_index", index)

    @property
    def count(self) -> int:
        return len(self.ids)

    def __contains__(self, record_id: str) -> bool:
        return record_id in self._index

    def get(self, record_id: str) -> np.ndarray:
        """Vector for ``record_id``; raises DataError if absent."""
        try:
            return self.vectors[self._index[record_id]]
        except KeyError:
            raise DataError(f"record_id {record_id!r} not present in bank") from None


@dataclass(frozen=True)
class ManifestRow:
    record_id: str
    dataset: str
    driver_id: str
    video_id: str
    event_id: str
    frame_index: int
    source_fps: Fraction
    camera_view: CameraView
    label: str


@dataclass(frozen=True)
class DatasetView:
    """Immutable, ordered subset of manifest rows joined to one bank."""

    rows: tuple[ManifestRow, ...]
    class_table: tuple[str, ...]
    bank: EmbeddingBank

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def class_index(self, label: str) -> int:
        try:
            return self.class_table.index(label)
        except ValueError:
            raise DataError(f"label {label!r} not in class table") from None

    def drivers(self) -> tuple[str, ...]:
        return tuple(sorted({r.driver_id for r in self.rows}))

    def label_indices(self) -> np.ndarray:
        table = {name: i for i, name in enumerate(self.class_table)}
        return np.array([table[r.label] for r in self.rows], dtype=np.int64)

    def embedding_matrix(self) -> np.ndarray:
        """(n_rows, dim) float32 matrix of the rows' bank vectors."""
        if not self.rows:
            return np.zeros((0, self.bank.dim), dtype=np.float32)
        return np.stack([self.bank.get(r.record_id) for r in self.rows])


@dataclass(frozen=True)
class PromptSet:
    """One sentence prompt and one embedding per class."""

    class_table: tuple[str, ...]
    prompts: tuple[str, ...]
    embeddings: np.ndarray  # (C, D) float32

    def __post_init__(self):
        if not (len(self.class_table) == len(self.prompts) == self.embeddings.shape[0]):
            raise DataError("prompt set class/prompt/embedding counts differ")

    def reordered(self, class_table: Sequence[str]) -> "PromptSet":
        """Prompt set with rows permuted to match ``class_table``."""
        missing = [c for c in class_table if c not in self.class_table]
        if missing:
            raise DataError(f"prompt set lacks classes: {missing}")
        order = [self.class_table.index(c) for c in class_table]
        return PromptSet(
            class_table=tuple(class_table),
            prompts=tuple(self.prompts[i] for i in order),
            embeddings=self.embeddings[order],
        )


def write_embedding_bank(
    ids: Sequence[str],
    vectors: Iterable[Sequence[float]] | np.ndarray,
    dim: int,
    path: str | Path,
) -> Path:
    """Write a bank file; read-back is bit-exact including float payload."""
    path = Path(path)
    if dim <= 0:
        raise BankFormatError(f"dim must be positive, got {dim}")
    ids = [str(i) for i in ids]
    if len(set(ids)) != len(ids):
        raise BankFormatError("duplicate id")

    if isinstance(vectors, np.ndarray):
        if vectors.ndim != 2 or (vectors.shape[0] and vectors.shape[1] != dim):
            raise BankFormatError(
                f"ragged vector: array shape {vectors.shape}, expected (*, {dim})"
            )
        arr = np.ascontiguousarray(vectors, dtype="<f4")
        if vectors.shape[0] == 0:
            arr = arr.reshape(0, dim)
    else:
        rows = []
        for i, vec in enumerate(vectors):
            row = np.asarray(vec, dtype="<f4")
            if row.shape != (dim,):
                raise BankFormatError(f"ragged vector at position {i}: length {row.size}, expected {dim}")
            rows.append(row)
        arr = np.stack(rows) if rows else np.zeros((0, dim), dtype="<f4")

    if len(ids) != arr.shape[0]:
        raise BankFormatError(f"{len(ids)} ids but {arr.shape[0]} vectors")
    if arr.size and not np.isfinite(arr).all():
        raise BankFormatError("non-finite component")

    encoded = []
    for rid in ids:
        raw = rid.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise BankFormatError(f"id too long: {rid[:32]!r}...")
        encoded.append(struct.pack("<H", len(raw)) + raw)

    try:
        with open(path, "wb") as fh:
            fh.write(BANK_MAGIC)
            fh.write(struct.pack("<IIQ", BANK_VERSION, dim, len(ids)))
            fh.write(b"".join(encoded))
            fh.write(arr.tobytes(order="C"))
    except OSError as exc:
        raise BankFormatError(f"I/O failure writing {path}: {exc}") from exc
    return path


def read_embedding_bank(path: str | Path) -> EmbeddingBank:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise BankFormatError(f"I/O failure reading {path}: {exc}") from exc

    if blob[:4] != BANK_MAGIC:
        raise BankFormatError(f"bad magic in {path}")
    if len(blob) < 20:
        raise BankFormatError(f"truncated header in {path}")
    version, dim, count = struct.unpack_from("<IIQ", blob, 4)
    if version != BANK_VERSION:
        raise BankFormatError(f"version mismatch: file has {version}, expected {BANK_VERSION}")
    if dim == 0:
        raise BankFormatError(f"dim must be positive in {path}")

    offset = 20
    ids = []
    for _ in range(count):
        if offset + 2 > len(blob):
            raise BankFormatError(f"truncated id section in {path}")
        (length,) = struct.unpack_from("<H", blob, offset)
        offset += 2
        if offset + length > len(blob):
            raise BankFormatError(f"truncated id section in {path}")
        ids.append(blob[offset : offset + length].decode("utf-8"))
        offset += length

    payload = blob[offset:]
    expected = count * dim * 4
    if len(payload) < expected:
        raise BankFormatError(f"truncated payload in {path}: {len(payload)} bytes, expected {expected}")
    if len(payload) > expected:
        raise BankFormatError(f"trailing bytes after payload in {path}")
    vectors = np.frombuffer(payload, dtype="<f4").reshape(count, dim).astype(np.float32, copy=True)
    return EmbeddingBank(dim=dim, ids=tuple(ids), vectors=vectors)


def _parse_fps(text: str) -> Fraction:
    try:
        fps = Fraction(text)
    except (ValueError, ZeroDivisionError) as exc:
        raise ManifestError(f"unparsable fps {text!r}") from exc
    if fps <= 0:
        raise ManifestError(f"source_fps must be positive, got {text!r}")
    return fps


def load_manifest(path: str | Path) -> list[ManifestRow]:
    """Parse a manifest CSV, enforcing the exact header and row uniqueness."""
    path = Path(path)
    rows: list[ManifestRow] = []
    seen: set[tuple[str, int]] = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ManifestError(f"empty manifest {path}") from None
        if tuple(header) != MANIFEST_COLUMNS:
            missing = set(MANIFEST_COLUMNS) - set(header)
            raise ManifestError(
                f"bad manifest header {header!r}; missing columns {sorted(missing)}"
                if missing
                else f"bad manifest header {header!r}"
            )
        for lineno, rec in enumerate(reader, start=2):
            if len(rec) != len(MANIFEST_COLUMNS):
                raise ManifestError(f"{path}:{lineno}: expected {len(MANIFEST_COLUMNS)} fields, got {len(rec)}")
            (record_id, dataset, driver_id, video_id, event_id,
             frame_index, source_fps, camera_view, label) = rec
            try:
                idx = int(frame_index)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: bad frame_index {frame_index!r}") from exc
            if idx < 0:
                raise ManifestError(f"{path}:{lineno}: negative frame_index {idx}")
            try:
                view = CameraView(camera_view)
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: unknown camera_view {camera_view!r}") from exc
            key = (video_id, idx)
            if key in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate (video_id, frame_index) {key}")
            seen.add(key)
            rows.append(
                ManifestRow(
                    record_id=record_id,
                    dataset=dataset,
                    driver_id=driver_id,
                    video_id=video_id,
                    event_id=event_id,
                    frame_index=idx,
                    source_fps=_parse_fps(source_fps),
                    camera_view=view,
                    label=label,
                )
            )
    return rows


def build_dataset_view(
    rows: Sequence[ManifestRow],
    bank: EmbeddingBank,
    class_table: Sequence[str] | None = None,
) -> DatasetView:
    """Join rows to the bank; row order is (video_id, frame_index)."""
    if not rows:
        raise DataError("cannot build a view from zero rows")
    unresolved = sorted({r.record_id for r in rows if r.record_id not in bank})
    if unresolved:
        raise DataError(f"record_ids not in bank: {unresolved[:10]}" + (" ..." if len(unresolved) > 10 else ""))
    if class_table is None:
        table = tuple(sorted({r.label for r in rows}))
    else:
        table = tuple(class_table)
        if len(set(table)) != len(table):
            raise DataError("class_table contains duplicates")
        absent = sorted({r.label for r in rows} - set(table))
        if absent:
            raise DataError(f"labels absent from class_table: {absent}")
    ordered = tuple(sorted(rows, key=lambda r: (r.video_id, r.frame_index)))
    return DatasetView(rows=ordered, class_table=table, bank=bank)


def filter_view(
    view: DatasetView,
    predicate: Callable[[ManifestRow], bool] | None = None,
    *,
    driver_id: str | Iterable[str] | None = None,
    camera_view: CameraView | str | Iterable[CameraView | str] | None = None,
    label: str | Iterable[str] | None = None,
    event_id: str | Iterable[str] | None = None,
) -> DatasetView:
    """Rows satisfying the predicate and all given field filters.

    Field filters accept a single value or an iterable of allowed values.
    The class table is preserved; an empty result is legal.
    """

    def as_set(value, coerce=lambda v: v):
        if value is None:
            return None
        if isinstance(value, (str, CameraView)):
            return {coerce(value)}
        return {coerce(v) for v in value}

    drivers = as_set(driver_id)
    views = as_set(camera_view, lambda v: CameraView(v))
    labels = as_set(label)
    events = as_set(event_id)

    def keep(row: ManifestRow) -> bool:
        if drivers is not None and row.driver_id not in drivers:
            return False
        if views is not None and row.camera_view not in views:
            return False
        if labels is not None and row.label not in labels:
            return False
        if events is not None and row.event_id not in events:
            return False
        return predicate(row) if predicate is not None else True

    kept = tuple(r for r in view.rows if keep(r))
    return DatasetView(rows=kept, class_table=view.class_table, bank=view.bank)


def write_manifest(rows: Sequence[ManifestRow], path: str | Path) -> Path:
    """Inverse of load_manifest; used by fixtures and tooling."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for r in rows:
            writer.writerow(
                [
                    r.record_id,
                    r.dataset,
                    r.driver_id,
                    r.video_id,
                    r.event_id,
                    r.frame_index,
                    str(r.source_fps),
                    r.camera_view.value,
                    r.label,
                ]
            )
    return path


def load_prompt_set(bank_path: str | Path, sidecar_path: str | Path) -> PromptSet:
    """Load a prompt bank plus its class->sentence sidecar.

    The sidecar is one ``class<TAB>sentence`` line per class; its order
    defines the prompt set's class table. Every sidecar class must resolve
    in the bank.
    """
    bank = read_embedding_bank(bank_path)
    classes: list[str] = []
    sentences: list[str] = []
    with open(sidecar_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t", 1)
            if len(parts) != 2:
                raise DataError(f"{sidecar_path}:{lineno}: expected 'class<TAB>prompt'")
            classes.append(parts[0])
            sentences.append(parts[1])
    if not classes:
        raise DataError(f"empty prompt sidecar {sidecar_path}")
    if len(set(classes)) != len(classes):
        raise DataError(f"duplicate class in prompt sidecar {sidecar_path}")
    vectors = np.stack([bank.get(c) for c in classes])
    return PromptSet(class_table=tuple(classes), prompts=tuple(sentences), embeddings=vectors)


def save_prompt_set(prompt_set: PromptSet, bank_path: str | Path, sidecar_path: str | Path) -> None:
    write_embedding_bank(
        prompt_set.class_table, prompt_set.embeddings, prompt_set.embeddings.shape[1], bank_path
    )
    with open(sidecar_path, "w", encoding="utf-8") as fh:
        for cls, sentence in zip(prompt_set.class_table, prompt_set.prompts):
            fh.write(f"{cls}\t{sentence}\n")
