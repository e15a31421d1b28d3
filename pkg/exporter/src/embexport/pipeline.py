"""Export operations: frame extraction, image embedding, prompt embedding."""

from __future__ import annotations

from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import cv2
import numpy as np

from .encoders import EncoderSpec, resolve_encoder
from .formats import ExportError, write_bank, write_manifest_fragment, write_prompt_sidecar


def frame_filename(video_id: str, frame_index: int) -> str:
    """Filenames encode (video_id, frame_index) so manifests are reconstructible."""
    return f"{video_id}_f{frame_index:06d}.jpg"


def extract_frames(
    video_path: str | Path,
    out_dir: str | Path,
    fps: float | str | Fraction,
    *,
    video_id: str,
    driver_id: str,
    event_id: str,
    label: str,
    dataset: str = "export",
    camera_view: str = "dashboard",
    manifest_out: str | Path | None = None,
) -> tuple[list[Path], Path]:
    """Decode a video, keep frames at the target rate, write a manifest fragment.

    frame_index keeps the original source frame number; source_fps records
    the effective (extraction) rate. The fragment is only written after the
    whole video decodes, so a corrupt input leaves no partial manifest.
    """
    video_path = Path(video_path)
    out_dir = Path(out_dir)
    target = Fraction(fps)
    if target <= 0:
        raise ExportError(f"fps must be positive, got {fps}")

    capture = cv2.VideoCapture(str(video_path))
    if not capture.isOpened():
        raise ExportError(f"undecodable video {video_path}")
    try:
        source_fps = Fraction(capture.get(cv2.CAP_PROP_FPS)).limit_denominator(100_000)
        if source_fps <= 0:
            raise ExportError(f"video {video_path} reports no frame rate")
        if target > source_fps:
            raise ExportError(f"target fps {target} exceeds source rate {source_fps}")
        stride = int(source_fps / target + Fraction(1, 2))

        out_dir.mkdir(parents=True, exist_ok=True)
        written: list[Path] = []
        rows: list[dict] = []
        frame_no = 0
        while True:
            ok, frame = capture.read()
            if not ok:
                break
            if frame_no % stride == 0:
                name = frame_filename(video_id, frame_no)
                path = out_dir / name
                if not cv2.imwrite(str(path), frame):
                    raise ExportError(f"cannot write frame {path}")
                written.append(path)
                rows.append(
                    {
                        "record_id": path.stem,
                        "dataset": dataset,
                        "driver_id": driver_id,
                        "video_id": video_id,
                        "event_id": event_id,
                        "frame_index": frame_no,
                        "source_fps": str(target),
                        "camera_view": camera_view,
                        "label": label,
                    }
                )
            frame_no += 1
    finally:
        capture.release()

    if not written:
        raise ExportError(f"video {video_path} contained no decodable frames")
    manifest_path = Path(manifest_out) if manifest_out else out_dir / f"{video_id}_manifest.csv"
    write_manifest_fragment(rows, manifest_path)
    return written, manifest_path


def embed_images(
    spec: EncoderSpec,
    images: Sequence[str | Path],
    out_bank: str | Path,
    ids: Sequence[str] | None = None,
) -> Path:
    """One vector per image, in input order; ids default to the file stems."""
    if not images:
        raise ExportError("no images to embed")
    paths = [Path(p) for p in images]
    if ids is None:
        ids = [p.stem for p in paths]
    encoder = resolve_encoder(spec)
    vectors = encoder.embed_images(paths)
    return write_bank(list(ids), vectors, out_bank)


def embed_prompts(
    spec: EncoderSpec,
    prompts: Mapping[str, str],
    out_bank: str | Path,
    out_sidecar: str | Path,
) -> tuple[Path, Path]:
    """One vector per class in sorted class order, plus the class->sentence sidecar."""
    if not prompts:
        raise ExportError("no prompts to embed")
    classes = sorted(prompts)
    sentences = []
    for cls in classes:
        sentence = prompts[cls].strip()
        if not sentence:
            raise ExportError(f"empty sentence for class {cls!r}")
        sentences.append(sentence)
    encoder = resolve_encoder(spec)
    vectors = encoder.embed_texts(sentences)
    bank_path = write_bank(classes, np.asarray(vectors), out_bank)
    sidecar_path = write_prompt_sidecar(list(zip(classes, sentences)), out_sidecar)
    return bank_path, sidecar_path
