"""Writer for the embedding interchange format.

The format is deliberately writable without any shared library code:
`<prefix>.manifest.json` (UTF-8 JSON with encoder_tag, dim, and an ordered
entries list) next to `<prefix>.f32` (little-endian float32, one entry's dim
values after another).  Grouped sets add `<prefix>.labels.json`.  This module
re-states that contract rather than importing the consumer package, so the
exporter stays a standalone producer.
"""

from __future__ import annotations

import json
import os
import tempfile
from pathlib import Path

import numpy as np


class ExportError(ValueError):
    """Invalid manifest content, labels, or encoder output."""


def _atomic_write(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def read_manifest_entries(manifest_path: str | Path) -> list[dict]:
    """Ordered entry dicts from a manifest file, with basic schema checks."""
    try:
        doc = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ExportError(f"malformed manifest JSON: {exc}") from exc
    entries = doc.get("entries")
    if not isinstance(entries, list):
        raise ExportError("manifest must contain an 'entries' list")
    seen = set()
    for i, entry in enumerate(entries):
        for key in ("id", "text", "role"):
            if key not in entry:
                raise ExportError(f"entry {i} missing field {key!r}")
        if entry["id"] in seen:
            raise ExportError(f"duplicate entry id {entry['id']!r}")
        seen.add(entry["id"])
    return entries


def write_dataset(
    out_prefix: str | Path,
    entries: list[dict],
    embeddings: np.ndarray,
    encoder_tag: str,
) -> None:
    """Write <prefix>.manifest.json and <prefix>.f32 for row-per-entry embeddings."""
    embeddings = np.asarray(embeddings, dtype=np.float32)
    if embeddings.ndim != 2 or embeddings.shape[0] != len(entries):
        raise ExportError(
            f"embeddings shape {embeddings.shape} does not match {len(entries)} entries"
        )
    if embeddings.size and not np.all(np.isfinite(embeddings)):
        raise ExportError("encoder produced non-finite values")
    dim = int(embeddings.shape[1])
    if dim < 1:
        raise ExportError("embedding dimension must be >= 1")
    doc = {"encoder_tag": encoder_tag, "dim": dim, "entries": entries}
    payload = (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    _atomic_write(Path(str(out_prefix) + ".manifest.json"), payload)
    _atomic_write(
        Path(str(out_prefix) + ".f32"),
        np.ascontiguousarray(embeddings).astype("<f4").tobytes(),
    )


def write_labels(
    out_prefix: str | Path,
    y: list[int],
    a: list[int],
    class_names: list[str],
    attribute_names: list[str],
) -> None:
    doc = {"y": y, "a": a, "class_names": class_names, "attribute_names": attribute_names}
    payload = (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    _atomic_write(Path(str(out_prefix) + ".labels.json"), payload)
