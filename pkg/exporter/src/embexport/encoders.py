"""Encoder backends, selected by an opaque tag.

    hash:<dim>        deterministic feature-hashing encoder (default hash:256).
                      Text goes through a word 1-2 gram HashingVectorizer;
                      images are resized to a fixed grid and passed through a
                      seeded random projection to the same dimension.  Fast,
                      dependency-light, and byte-stable across runs, which
                      makes it the right backend for pipeline tests and
                      format validation.  It is not a semantic encoder.

    clip:<model-id>   a CLIP checkpoint through transformers (optional extra),
                      e.g. clip:openai/clip-vit-base-patch32.  Requires the
                      weights to be available locally.

The tag is recorded verbatim in the output manifest so downstream tooling can
tell which encoder produced a file without this package mandating any
particular model family.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .writer import ExportError

DEFAULT_ENCODER = "hash:256"
_IMAGE_GRID = 16  # images are resized to _IMAGE_GRID x _IMAGE_GRID RGB before projection


class EncoderError(RuntimeError):
    """Backend unavailable or failed to load."""


class HashEncoder:
    """Feature-hashing text tower plus a random-projection image tower."""

    def __init__(self, dim: int):
        if dim < 1:
            raise EncoderError(f"hash encoder dimension must be >= 1, got {dim}")
        self.dim = dim
        from sklearn.feature_extraction.text import HashingVectorizer

        self._vectorizer = HashingVectorizer(
            n_features=dim, analyzer="word", ngram_range=(1, 2),
            alternate_sign=True, norm=None,
        )
        raw = 3 * _IMAGE_GRID * _IMAGE_GRID
        rng = np.random.default_rng(0xE5C0DE + dim)
        self._image_projection = rng.standard_normal((raw, dim)) / np.sqrt(raw)

    def encode_text(self, texts: list[str]) -> np.ndarray:
        return np.asarray(self._vectorizer.transform(texts).todense(), dtype=np.float64)

    def encode_image(self, path: str | Path) -> np.ndarray:
        with Image.open(path) as img:
            pixels = np.asarray(
                img.convert("RGB").resize((_IMAGE_GRID, _IMAGE_GRID)), dtype=np.float64
            )
        features = pixels.reshape(-1) / 255.0
        return features @ self._image_projection


class ClipEncoder:
    """Text and image towers of a CLIP checkpoint via transformers."""

    def __init__(self, model_id: str):
        try:
            import torch
            from transformers import CLIPModel, CLIPProcessor
        except ImportError as exc:
            raise EncoderError(
                f"encoder load failure: transformers/torch not installed ({exc})"
            ) from exc
        try:
            self._model = CLIPModel.from_pretrained(model_id)
            self._processor = CLIPProcessor.from_pretrained(model_id)
        except Exception as exc:
            raise EncoderError(f"encoder load failure for {model_id!r}: {exc}") from exc
        self._model.eval()
        self._torch = torch

    def encode_text(self, texts: list[str]) -> np.ndarray:
        torch = self._torch
        outputs = []
        with torch.no_grad():
            for start in range(0, len(texts), 64):
                batch = self._processor(
                    text=texts[start : start + 64], return_tensors="pt",
                    padding=True, truncation=True,
                )
                outputs.append(self._model.get_text_features(**batch).cpu().numpy())
        return np.concatenate(outputs, axis=0).astype(np.float64)

    def encode_image(self, path: str | Path) -> np.ndarray:
        torch = self._torch
        with Image.open(path) as img:
            batch = self._processor(images=img.convert("RGB"), return_tensors="pt")
        with torch.no_grad():
            feats = self._model.get_image_features(**batch).cpu().numpy()
        return feats[0].astype(np.float64)


def get_encoder(tag: str):
    kind, _, arg = tag.partition(":")
    if kind == "hash":
        try:
            dim = int(arg or "256")
        except ValueError as exc:
            raise EncoderError(f"bad hash encoder tag {tag!r}") from exc
        return HashEncoder(dim)
    if kind == "clip":
        if not arg:
            raise EncoderError("clip encoder tag needs a model id, e.g. clip:openai/clip-vit-base-patch32")
        return ClipEncoder(arg)
    raise EncoderError(f"unknown encoder tag {tag!r} (expected hash:<dim> or clip:<model-id>)")
