from __future__ import annotations

from pathlib import Path

import cv2
import numpy as np
import pytest


def write_test_video(
    path: Path, n_frames: int, fps: float = 30.0, size: int = 64, pattern: str = "top"
) -> Path:
    """MJPG/AVI clip: a bright band (top or bottom half) over a varying ramp."""
    writer = cv2.VideoWriter(str(path), cv2.VideoWriter_fourcc(*"MJPG"), fps, (size, size))
    assert writer.isOpened(), "cv2 cannot open a VideoWriter in this environment"
    half = size // 2
    for i in range(n_frames):
        frame = np.zeros((size, size, 3), dtype=np.uint8)
        frame[:, :, 0] = (i * 7) % 256
        if pattern == "top":
            frame[:half, :, :] = 220
        else:
            frame[half:, :, :] = 220
        writer.write(frame)
    writer.release()
    return path


def write_test_image(path: Path, seed: int, size: int = 64) -> Path:
    rng = np.random.default_rng(seed)
    img = rng.integers(0, 256, size=(size, size, 3), dtype=np.uint8)
    assert cv2.imwrite(str(path), img)
    return path


@pytest.fixture
def image_pair(tmp_path):
    a = write_test_image(tmp_path / "img_a.png", seed=1)
    b = write_test_image(tmp_path / "img_b.png", seed=2)
    return a, b
