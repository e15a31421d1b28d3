"""Temporal selection: FPS subsampling, event grouping, 30-frame clip windows."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .embedstore import ManifestRow
from .errors import DataError

CLIP_LEN = 30
# Window around ordinal t spans [t - LEFT_SPAN, t + RIGHT_SPAN], clamped to the event.
LEFT_SPAN = 15
RIGHT_SPAN = 14


@dataclass(frozen=True)
class EventSeq:
    """One distracted-action event: frames of a single (video, driver, label)."""

    event_id: str
    driver_id: str
    label: str
    frames: tuple[ManifestRow, ...]
    source_fps: Fraction

    def __post_init__(self):
        if not self.frames:
            raise DataError(f"event {self.event_id!r} has no frames")
        indices = [f.frame_index for f in self.frames]
        if any(b <= a for a, b in zip(indices, indices[1:])):
            raise DataError(f"event {self.event_id!r}: frame_index not strictly increasing")

    @property
    def video_id(self) -> str:
        return self.frames[0].video_id

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def duration_seconds(self) -> float:
        return float(Fraction(self.n_frames) / self.source_fps)


@dataclass(frozen=True)
class ClipWindow:
    """Exactly CLIP_LEN member frames centered (with clamping) on one ordinal."""

    center_ordinal: int  # 1-based position within the event
    members: tuple[ManifestRow, ...]

    def __post_init__(self):
        if len(self.members) != CLIP_LEN:
            raise DataError(f"clip window must have {CLIP_LEN} members, got {len(self.members)}")


def segment_events(rows: list[ManifestRow]) -> list[EventSeq]:
    """Group rows into per-event sequences, sorted by (video_id, first frame)."""
    groups: dict[str, list[ManifestRow]] = {}
    for row in rows:
        groups.setdefault(row.event_id, []).append(row)

    events = []
    for event_id, members in groups.items():
        members.sort(key=lambda r: r.frame_index)
        first = members[0]
        for attr in ("label", "driver_id", "video_id", "source_fps"):
            values = {getattr(r, attr) for r in members}
            if len(values) > 1:
                raise DataError(f"event {event_id!r}: conflicting {attr} values {sorted(map(str, values))}")
        events.append(
            EventSeq(
                event_id=event_id,
                driver_id=first.driver_id,
                label=first.label,
                frames=tuple(members),
                source_fps=first.source_fps,
            )
        )
    events.sort(key=lambda e: (e.video_id, e.frames[0].frame_index))
    return events


def subsample_fps(event: EventSeq, target_fps: Fraction | int | float | str) -> EventSeq:
    """Keep frames at ordinals 0, stride, 2*stride, ... from the first frame.

    stride = round(source_fps / target_fps), half-up. The result's fps field
    becomes target_fps.
    """
    target = Fraction(target_fps)
    if target <= 0:
        raise DataError(f"target_fps must be positive, got {target_fps}")
    if target > event.source_fps:
        raise DataError(f"target_fps {target} exceeds source_fps {event.source_fps}")
    stride = int(event.source_fps / target + Fraction(1, 2))
    kept = event.frames[::stride]
    return EventSeq(
        event_id=event.event_id,
        driver_id=event.driver_id,
        label=event.label,
        frames=kept,
        source_fps=target,
    )


def assemble_clip(event: EventSeq, t: int) -> ClipWindow:
    """Window of frames at clamped positions t-LEFT_SPAN .. t+RIGHT_SPAN.

    At t=1 this yields the first frame 16 times followed by frames 2..15
    (for events of at least 15 frames); edges clamp symmetrically.
    """
    n = event.n_frames
    if not 1 <= t <= n:
        raise DataError(f"clip ordinal {t} out of range [1, {n}]")
    members = tuple(
        event.frames[min(max(p, 1), n) - 1] for p in range(t - LEFT_SPAN, t + RIGHT_SPAN + 1)
    )
    return ClipWindow(center_ordinal=t, members=members)


def clip_stream(event: EventSeq) -> list[ClipWindow]:
    """One window per ordinal 1..N, in order."""
    return [assemble_clip(event, t) for t in range(1, event.n_frames + 1)]


def event_frame_matrix(event: EventSeq, bank) -> np.ndarray:
    """(n_frames, dim) embedding matrix for an event's frames."""
    return np.stack([bank.get(f.record_id) for f in event.frames])
