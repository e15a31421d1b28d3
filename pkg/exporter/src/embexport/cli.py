"""Job-file driven CLI: export-frames, embed-images, embed-prompts."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .encoders import EncoderSpec
from .formats import ExportError
from .pipeline import embed_images, embed_prompts, extract_frames


def load_job(path: str | Path) -> dict[str, str]:
    """Parse a plain-text job file of key = value lines (# comments allowed)."""
    job: dict[str, str] = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ExportError(f"cannot read job file {path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ExportError(f"{path}:{lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        job[key.strip()] = value.strip()
    return job


def _require(job: dict[str, str], *keys: str) -> list[str]:
    missing = [k for k in keys if k not in job]
    if missing:
        raise ExportError(f"job file missing keys: {missing}")
    return [job[k] for k in keys]


def _spec_from_job(job: dict[str, str]) -> EncoderSpec:
    (backbone,) = _require(job, "backbone")
    resolution = job.get("resolution", "224x224")
    try:
        h, w = (int(v) for v in resolution.lower().split("x"))
    except ValueError as exc:
        raise ExportError(f"bad resolution {resolution!r}, expected HxW") from exc
    return EncoderSpec(backbone=backbone, resolution=(h, w), device=job.get("device", "cpu"))


def cmd_export_frames(job: dict[str, str]) -> int:
    video, out_dir, fps, video_id, driver_id, event_id, label = _require(
        job, "video", "out_dir", "fps", "video_id", "driver_id", "event_id", "label"
    )
    frames, manifest = extract_frames(
        video,
        out_dir,
        fps,
        video_id=video_id,
        driver_id=driver_id,
        event_id=event_id,
        label=label,
        dataset=job.get("dataset", "export"),
        camera_view=job.get("camera_view", "dashboard"),
        manifest_out=job.get("manifest_out"),
    )
    print(f"wrote {len(frames)} frames and {manifest}")
    return 0


def cmd_embed_images(job: dict[str, str]) -> int:
    (out_bank,) = _require(job, "out_bank")
    spec = _spec_from_job(job)
    if "images_dir" in job:
        pattern = job.get("pattern", "*.jpg")
        images = sorted(Path(job["images_dir"]).glob(pattern))
    else:
        (image_list,) = _require(job, "images")
        images = [Path(p.strip()) for p in image_list.split(",") if p.strip()]
    path = embed_images(spec, images, out_bank)
    print(f"embedded {len(images)} images -> {path}")
    return 0


def cmd_embed_prompts(job: dict[str, str]) -> int:
    out_bank, out_sidecar = _require(job, "out_bank", "out_sidecar")
    spec = _spec_from_job(job)
    prompts = {
        key[len("prompt.") :]: value for key, value in job.items() if key.startswith("prompt.")
    }
    bank, sidecar = embed_prompts(spec, prompts, out_bank, out_sidecar)
    print(f"embedded {len(prompts)} prompts -> {bank}, {sidecar}")
    return 0


COMMANDS = {
    "export-frames": cmd_export_frames,
    "embed-images": cmd_embed_images,
    "embed-prompts": cmd_embed_prompts,
}


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export frames and embeddings into the bank interchange format",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("job", help="plain-text job file (key = value lines)")
    args = parser.parse_args(argv)
    try:
        job = load_job(args.job)
        return COMMANDS[args.command](job)
    except ExportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
