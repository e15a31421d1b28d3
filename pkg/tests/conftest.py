from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from drivemon.embedstore import (
    CameraView,
    EmbeddingBank,
    ManifestRow,
    build_dataset_view,
)
from drivemon.sampling import EventSeq


def make_row(
    record_id: str,
    driver: str = "d1",
    video: str = "v1",
    event: str = "e1",
    idx: int = 0,
    fps: int | str | Fraction = 30,
    view: str = "dashboard",
    label: str = "a",
    dataset: str = "test",
) -> ManifestRow:
    return ManifestRow(
        record_id=record_id,
        dataset=dataset,
        driver_id=driver,
        video_id=video,
        event_id=event,
        frame_index=idx,
        source_fps=Fraction(fps),
        camera_view=CameraView(view),
        label=label,
    )


def make_bank(ids: list[str], dim: int = 4, seed: int = 0) -> EmbeddingBank:
    rng = np.random.default_rng(seed)
    vectors = rng.normal(size=(len(ids), dim)).astype(np.float32)
    return EmbeddingBank(dim=dim, ids=tuple(ids), vectors=vectors)


def make_event(n: int, fps: int | Fraction = 30, label: str = "a", event: str = "e1",
               driver: str = "d1", video: str = "v1") -> EventSeq:
    frames = tuple(
        make_row(f"{video}_f{i}", driver=driver, video=video, event=event, idx=i,
                 fps=fps, label=label)
        for i in range(n)
    )
    return EventSeq(event_id=event, driver_id=driver, label=label, frames=frames,
                    source_fps=Fraction(fps))


@pytest.fixture
def tiny_view():
    rows = [
        make_row("r0", driver="dA", video="v1", event="e1", idx=0, label="b"),
        make_row("r1", driver="dA", video="v1", event="e1", idx=1, label="b"),
        make_row("r2", driver="dB", video="v2", event="e2", idx=0, label="a"),
        make_row("r3", driver="dB", video="v2", event="e2", idx=1, label="a", view="side"),
    ]
    bank = make_bank(["r0", "r1", "r2", "r3"])
    return build_dataset_view(rows, bank)
