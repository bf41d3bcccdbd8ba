"""Export jobs: encode manifest texts or an image directory into interchange files.

The exporter owns nothing mathematical.  It encodes, optionally L2-normalizes
(the flag, nothing more), and writes files; all projection and metric logic
lives in the consumer package.
"""

from __future__ import annotations

import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .encoders import DEFAULT_ENCODER, get_encoder
from .writer import ExportError, read_manifest_entries, write_dataset, write_labels

IMAGE_SUFFIXES = {".png", ".jpg", ".jpeg", ".bmp", ".gif", ".tiff", ".webp"}


@dataclass(frozen=True)
class ExportJob:
    out_prefix: str
    manifest_path: str | None = None
    image_dir: str | None = None
    labels_csv: str | None = None
    encoder_tag: str = DEFAULT_ENCODER
    normalize: bool = False


def _normalize_rows(rows: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(rows, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise ExportError("cannot normalize a zero embedding")
    return rows / norms


def export_text(job: ExportJob) -> str:
    """One embedding per manifest entry, order-preserving; returns the out prefix."""
    if job.manifest_path is None:
        raise ExportError("export_text needs a manifest path")
    entries = read_manifest_entries(job.manifest_path)
    for entry in entries:
        if not str(entry["text"]).strip():
            raise ExportError(f"entry {entry['id']!r} has empty text")
    encoder = get_encoder(job.encoder_tag)
    if entries:
        rows = encoder.encode_text([str(e["text"]) for e in entries])
        if job.normalize:
            rows = _normalize_rows(rows)
    else:
        rows = np.empty((0, getattr(encoder, "dim", 1)))
    write_dataset(job.out_prefix, entries, rows, job.encoder_tag)
    return job.out_prefix


def _read_labels_csv(path: str) -> dict[str, tuple[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        required = {"filename", "class", "attribute"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise ExportError(
                f"labels CSV needs columns filename,class,attribute, got {reader.fieldnames}"
            )
        rows = {}
        for record in reader:
            name = record["filename"]
            if name in rows:
                raise ExportError(f"duplicate labels row for {name!r}")
            rows[name] = (record["class"], record["attribute"])
    return rows


def export_images(job: ExportJob) -> str:
    """Directory-sorted image embeddings, with a labels sidecar when a CSV is given.

    Unreadable images are skipped with a warning and excluded everywhere;
    a labels CSV must then cover exactly the readable images.
    """
    if job.image_dir is None:
        raise ExportError("export_images needs an image directory")
    root = Path(job.image_dir)
    if not root.is_dir():
        raise ExportError(f"not a directory: {root}")
    files = sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    encoder = get_encoder(job.encoder_tag)

    kept, rows, skipped = [], [], []
    for path in files:
        try:
            rows.append(encoder.encode_image(path))
        except Exception as exc:
            skipped.append(path.name)
            print(f"warning: skipping unreadable image {path.name}: {exc}", file=sys.stderr)
            continue
        kept.append(path.name)
    if skipped:
        print(f"warning: excluded {len(skipped)} of {len(files)} images", file=sys.stderr)

    matrix = np.stack(rows, axis=0) if rows else np.empty((0, getattr(encoder, "dim", 1)))
    if job.normalize and len(rows):
        matrix = _normalize_rows(matrix)
    entries = [{"id": name, "text": name, "role": "image"} for name in kept]
    write_dataset(job.out_prefix, entries, matrix, job.encoder_tag)

    if job.labels_csv is not None:
        labels = _read_labels_csv(job.labels_csv)
        missing = [n for n in kept if n not in labels]
        extra = sorted(set(labels) - set(kept) - set(skipped))
        if missing or extra:
            raise ExportError(
                f"labels/image mismatch: {len(missing)} unlabeled images "
                f"(first: {missing[:3]}), {len(extra)} labels without a file "
                f"(first: {extra[:3]})"
            )
        class_names = sorted({labels[n][0] for n in kept})
        attribute_names = sorted({labels[n][1] for n in kept})
        y = [class_names.index(labels[n][0]) for n in kept]
        a = [attribute_names.index(labels[n][1]) for n in kept]
        write_labels(job.out_prefix, y, a, class_names, attribute_names)
    return job.out_prefix
