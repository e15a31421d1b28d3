"""Deterministic synthetic fixture: manifest, banks, prompts, and run configs.

The embeddings are class-separable with mild driver offsets, so trained
probes and zero-shot matching both succeed regardless of the driver split.
Intended for tests, demos, and the README walkthrough; not a benchmark.
"""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path

import numpy as np

from .embedstore import (
    CameraView,
    ManifestRow,
    PromptSet,
    save_prompt_set,
    write_embedding_bank,
    write_manifest,
)

FIXTURE_CLASSES = ("drinking", "safe_driving", "texting")
FIXTURE_DRIVERS = ("d01", "d02", "d03", "d04")
FIXTURE_DIM = 8
FRAMES_PER_EVENT = 60
SOURCE_FPS = Fraction(30)
EVENTS_PER_CLASS = 2


def build_fixture(out_dir: str | Path, seed: int = 7) -> Path:
    """Write the full fixture into ``out_dir`` and return that path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)

    class_dirs = rng.normal(size=(len(FIXTURE_CLASSES), FIXTURE_DIM))
    class_dirs /= np.linalg.norm(class_dirs, axis=1, keepdims=True)
    driver_offsets = 0.25 * rng.normal(size=(len(FIXTURE_DRIVERS), FIXTURE_DIM))

    rows: list[ManifestRow] = []
    ids: list[str] = []
    vectors: list[np.ndarray] = []
    views = (CameraView.DASHBOARD, CameraView.SIDE)

    for d_idx, driver in enumerate(FIXTURE_DRIVERS):
        video_no = 0
        for c_idx, label in enumerate(FIXTURE_CLASSES):
            for rep in range(EVENTS_PER_CLASS):
                video_id = f"{driver}_v{video_no:02d}"
                event_id = f"{driver}_e{video_no:02d}"
                camera = views[rep % len(views)]
                video_no += 1
                for frame in range(FRAMES_PER_EVENT):
                    record_id = f"{video_id}_f{frame:04d}"
                    vec = (
                        4.0 * class_dirs[c_idx]
                        + driver_offsets[d_idx]
                        + 0.2 * rng.normal(size=FIXTURE_DIM)
                    )
                    ids.append(record_id)
                    vectors.append(vec.astype(np.float32))
                    rows.append(
                        ManifestRow(
                            record_id=record_id,
                            dataset="fixture",
                            driver_id=driver,
                            video_id=video_id,
                            event_id=event_id,
                            frame_index=frame,
                            source_fps=SOURCE_FPS,
                            camera_view=camera,
                            label=label,
                        )
                    )

    write_manifest(rows, out / "manifest.csv")
    write_embedding_bank(ids, np.stack(vectors), FIXTURE_DIM, out / "frames.bank")

    prompt_vectors = (
        4.0 * class_dirs + 0.05 * rng.normal(size=class_dirs.shape)
    ).astype(np.float32)
    prompts = PromptSet(
        class_table=FIXTURE_CLASSES,
        prompts=tuple(f"a photo of a driver {c.replace('_', ' ')}" for c in FIXTURE_CLASSES),
        embeddings=prompt_vectors,
    )
    save_prompt_set(prompts, out / "prompts.bank", out / "prompts.tsv")

    _write_configs(out)
    return out


def _write_configs(out: Path) -> None:
    base_data = (
        "[data]\n"
        "root = .\n"
        "manifest = manifest.csv\n"
        "bank = frames.bank\n"
        "prompt_bank = prompts.bank\n"
        "prompt_sidecar = prompts.tsv\n"
    )
    train = "[train]\nl2_lambda = 0.001\nmax_iters = 200\n"
    (out / "zero_shot.ini").write_text(
        "[run]\nmodel = zero_shot\nseed = 11\nlogit_scale = 100.0\n\n"
        + base_data
        + "\n[split]\nmode = none\n",
        encoding="utf-8",
    )
    (out / "single_frame.ini").write_text(
        "[run]\nmodel = single_frame\nseed = 11\n\n"
        + base_data
        + "\n[split]\nmode = kfold\nk = 2\n\n[transforms]\ntarget_fps = 2\n\n"
        + train,
        encoding="utf-8",
    )
    (out / "video_clip.ini").write_text(
        "[run]\nmodel = video_clip\nseed = 11\n\n"
        + base_data
        + "\n[split]\nmode = kfold\nk = 2\n\n[transforms]\ntarget_fps = 5\n\n"
        + train,
        encoding="utf-8",
    )
    (out / "sweep.ini").write_text(
        "[run]\nmodel = single_frame\nseed = 11\n\n"
        + base_data
        + "\n[split]\nmode = kfold\nk = 2\n\n[transforms]\ntarget_fps = 2\n\n"
        + train
        + "\n[sweep]\nfps = 1, 2\ncamera_view = dashboard, side\n",
        encoding="utf-8",
    )


if __name__ == "__main__":
    import sys

    target = sys.argv[1] if len(sys.argv) > 1 else "fixture"
    print(build_fixture(target))
