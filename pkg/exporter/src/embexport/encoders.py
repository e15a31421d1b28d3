"""Encoder registry: pretrained CLIP checkpoints plus an offline test encoder.

Embeddings are exported raw (never normalized); the consumer's classifier
owns normalization.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import cv2
import numpy as np

from .formats import ExportError

# the CLIP visual backbones exposed by transformers checkpoints
CLIP_CHECKPOINTS = {
    "ViT-B/32": "openai/clip-vit-base-patch32",
    "ViT-B/16": "openai/clip-vit-base-patch16",
    "ViT-L/14": "openai/clip-vit-large-patch14",
    "ViT-L/14@336px": "openai/clip-vit-large-patch14-336",
}


@dataclass(frozen=True)
class EncoderSpec:
    backbone: str
    resolution: tuple[int, int] = (224, 224)
    device: str = "cpu"


class DctEncoder:
    """Deterministic offline encoder for tests and plumbing checks.

    Images embed as the top-left block of their grayscale 2-D DCT (low
    frequencies carry the coarse content); texts embed as summed Gaussian
    projections seeded by a stable hash of each token. No learned weights,
    no network, bit-identical across runs.
    """

    def __init__(self, spec: EncoderSpec, dim: int):
        if dim < 1:
            raise ExportError(f"encoder dim must be positive, got {dim}")
        self.spec = spec
        self.dim = dim
        side = int(np.ceil(np.sqrt(dim)))
        if side > min(spec.resolution):
            raise ExportError(
                f"dim {dim} needs a {side}x{side} DCT block but resolution is {spec.resolution}"
            )
        self._block = side

    def embed_images(self, paths: Sequence[str | Path]) -> np.ndarray:
        out = np.empty((len(paths), self.dim), dtype=np.float32)
        h, w = self.spec.resolution
        for i, path in enumerate(paths):
            img = cv2.imread(str(path), cv2.IMREAD_GRAYSCALE)
            if img is None:
                raise ExportError(f"unreadable image {path}")
            resized = cv2.resize(img, (w, h), interpolation=cv2.INTER_AREA)
            coeffs = cv2.dct(resized.astype(np.float32) / 255.0)
            block = coeffs[: self._block, : self._block].ravel()
            out[i] = block[: self.dim]
        return out

    def embed_texts(self, sentences: Sequence[str]) -> np.ndarray:
        out = np.zeros((len(sentences), self.dim), dtype=np.float32)
        for i, sentence in enumerate(sentences):
            tokens = sentence.lower().split()
            if not tokens:
                raise ExportError("empty sentence")
            acc = np.zeros(self.dim, dtype=np.float64)
            for token in tokens:
                digest = hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest()
                seed = int.from_bytes(digest, "little")
                acc += np.random.default_rng(seed).standard_normal(self.dim)
            out[i] = (acc / len(tokens)).astype(np.float32)
        return out


class ClipEncoder:
    """transformers CLIP checkpoint wrapper (lazy torch import, eval mode)."""

    def __init__(self, spec: EncoderSpec, checkpoint: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise ExportError(
                f"backbone {spec.backbone!r} needs the optional clip extra (torch, transformers): {exc}"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(checkpoint)
            self._processor = CLIPProcessor.from_pretrained(checkpoint)
        except Exception as exc:
            raise ExportError(f"cannot load checkpoint {checkpoint!r}: {exc}") from exc
        self._torch = torch
        self._model.eval()
        self._model.to(spec.device)
        self.spec = spec
        self.dim = int(self._model.config.projection_dim)

    def embed_images(self, paths: Sequence[str | Path]) -> np.ndarray:
        from PIL import Image

        images = []
        for path in paths:
            try:
                images.append(Image.open(path).convert("RGB"))
            except OSError as exc:
                raise ExportError(f"unreadable image {path}: {exc}") from exc
        inputs = self._processor(images=images, return_tensors="pt").to(self.spec.device)
        with self._torch.no_grad():
            feats = self._model.get_image_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)

    def embed_texts(self, sentences: Sequence[str]) -> np.ndarray:
        if any(not s.strip() for s in sentences):
            raise ExportError("empty sentence")
        inputs = self._processor(
            text=list(sentences), return_tensors="pt", padding=True, truncation=True
        ).to(self.spec.device)
        with self._torch.no_grad():
            feats = self._model.get_text_features(**inputs)
        return feats.cpu().numpy().astype(np.float32)


def resolve_encoder(spec: EncoderSpec):
    """Map a backbone name to a loadable encoder.

    ``dct:<dim>`` selects the offline encoder; the ViT CLIP names load
    transformers checkpoints.
    """
    name = spec.backbone
    if name.startswith("dct:"):
        try:
            dim = int(name.split(":", 1)[1])
        except ValueError as exc:
            raise ExportError(f"bad offline backbone spec {name!r}") from exc
        return DctEncoder(spec, dim)
    if name in CLIP_CHECKPOINTS:
        return ClipEncoder(spec, CLIP_CHECKPOINTS[name])
    if name == "RN101":
        raise ExportError("RN101 has no transformers CLIP checkpoint; use a ViT backbone")
    raise ExportError(
        f"unknown backbone {name!r}; expected dct:<dim> or one of {sorted(CLIP_CHECKPOINTS)}"
    )
