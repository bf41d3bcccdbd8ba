"""Embedding interchange format: prompt manifests, f32 binaries, label sidecars.

A dataset is a pair of files sharing a prefix:

    <prefix>.manifest.json   UTF-8 JSON: {"encoder_tag": str, "dim": int?, "entries": [...]}
    <prefix>.f32             little-endian IEEE-754 binary32, entry 0's dim floats,
                             then entry 1's, and so on (one column per entry)

Each manifest entry is {"id", "text", "role"} plus optional "class_label",
"attribute_label", "pair_id".  "dim" is required whenever the manifest is paired
with a binary (it is the only way to validate byte length, and the only way to
know the dimension of an empty dataset); prompt-only manifests written before
any encoder has run may omit it.

Grouped evaluation sets add a third file:

    <prefix>.labels.json     {"y": [int,...], "a": [int,...],
                              "class_names": [...], "attribute_names": [...]}

Values are float32 on disk and widened to float64 in memory; downstream solves
amplify rounding too much to work at 32 bits.  All loaders reject non-finite
values and any size mismatch.  Functions here are pure; writes go through a
temp file and an atomic rename.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .projection import PositivePairSet

ROLES = frozenset(
    {"class", "spurious", "pair_left", "pair_right", "query", "attribute", "image"}
)

# Roles whose entries must carry a label naming what they describe.
_REQUIRED_LABEL = {"class": "class_label", "spurious": "attribute_label", "attribute": "attribute_label"}


class InterchangeError(ValueError):
    """Malformed manifest, binary, or sidecar content."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """d x n column stack of embedding vectors, float64 in memory.

    data[:, i] is the embedding of manifest entry i.  Treated as immutable
    once constructed; all values must be finite and dim must be >= 1.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.data, dtype=np.float64))
        if arr.ndim != 2:
            raise InterchangeError(f"embedding matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1:
            raise InterchangeError("embedding dimension must be >= 1")
        if arr.size and not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr).all(axis=0))[0])
            raise InterchangeError(f"non-finite value in embedding column {bad}")
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    @property
    def count(self) -> int:
        return self.data.shape[1]

    def column(self, i: int) -> np.ndarray:
        return self.data[:, i]

    def as_f32_bytes(self) -> bytes:
        """Disk payload: one entry's dim floats after another, little-endian."""
        return np.ascontiguousarray(self.data.T).astype("<f4").tobytes()


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    text: str
    role: str
    class_label: str | None = None
    attribute_label: str | None = None
    pair_id: str | None = None

    def to_json_dict(self) -> dict:
        out = {"id": self.id, "text": self.text, "role": self.role}
        for key in ("class_label", "attribute_label", "pair_id"):
            val = getattr(self, key)
            if val is not None:
                out[key] = val
        return out


@dataclass(frozen=True)
class PromptManifest:
    """Ordered prompt list; entry i owns column i of the matching binary."""

    entries: tuple[ManifestEntry, ...]
    encoder_tag: str = "unspecified"
    dim: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        self.validate()

    def validate(self) -> None:
        seen: set[str] = set()
        pair_sides: dict[str, dict[str, str]] = {}
        for entry in self.entries:
            if entry.role not in ROLES:
                raise InterchangeError(f"entry {entry.id!r}: unknown role {entry.role!r}")
            if entry.id in seen:
                raise InterchangeError(f"duplicate entry id {entry.id!r}")
            seen.add(entry.id)
            label_field = _REQUIRED_LABEL.get(entry.role)
            if label_field and getattr(entry, label_field) is None:
                raise InterchangeError(
                    f"entry {entry.id!r}: role {entry.role!r} requires {label_field}"
                )
            if entry.role in ("pair_left", "pair_right"):
                if entry.pair_id is None:
                    raise InterchangeError(f"entry {entry.id!r}: pair role without pair_id")
                sides = pair_sides.setdefault(entry.pair_id, {})
                if entry.role in sides:
                    raise InterchangeError(
                        f"pair_id {entry.pair_id!r} has more than one {entry.role}"
                    )
                sides[entry.role] = entry.id
            elif entry.pair_id is not None:
                raise InterchangeError(
                    f"entry {entry.id!r}: pair_id on non-pair role {entry.role!r}"
                )
        for pair_id, sides in pair_sides.items():
            if len(sides) != 2:
                missing = {"pair_left", "pair_right"} - set(sides)
                raise InterchangeError(
                    f"dangling pair_id {pair_id!r}: missing {sorted(missing)[0]}"
                )
        if self.dim is not None and self.dim < 1:
            raise InterchangeError("manifest dim must be >= 1 when present")

    @property
    def count(self) -> int:
        return len(self.entries)

    def indices_with_role(self, role: str) -> list[int]:
        return [i for i, e in enumerate(self.entries) if e.role == role]

    def labels_for_role(self, role: str) -> list[str]:
        field_name = _REQUIRED_LABEL[role]
        return [getattr(self.entries[i], field_name) for i in self.indices_with_role(role)]

    def with_dim(self, dim: int) -> "PromptManifest":
        return PromptManifest(entries=self.entries, encoder_tag=self.encoder_tag, dim=dim)

    def to_json_dict(self) -> dict:
        out: dict = {"encoder_tag": self.encoder_tag}
        if self.dim is not None:
            out["dim"] = self.dim
        out["entries"] = [e.to_json_dict() for e in self.entries]
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "PromptManifest":
        if not isinstance(doc, dict) or "entries" not in doc:
            raise InterchangeError("manifest JSON must be an object with an 'entries' list")
        entries = []
        for i, raw in enumerate(doc["entries"]):
            try:
                entries.append(
                    ManifestEntry(
                        id=str(raw["id"]),
                        text=str(raw["text"]),
                        role=str(raw["role"]),
                        class_label=raw.get("class_label"),
                        attribute_label=raw.get("attribute_label"),
                        pair_id=raw.get("pair_id"),
                    )
                )
            except KeyError as exc:
                raise InterchangeError(f"entry {i}: missing field {exc}") from exc
        dim = doc.get("dim")
        return cls(
            entries=tuple(entries),
            encoder_tag=str(doc.get("encoder_tag", "unspecified")),
            dim=None if dim is None else int(dim),
        )


@dataclass(frozen=True)
class GroupedEvalSet:
    """Image embeddings with per-item class y, attribute a, and derived group.

    Group index is g = y * |A| + a, so groups enumerate the (label, attribute)
    grid row by row.
    """

    embeddings: EmbeddingMatrix
    y: np.ndarray
    a: np.ndarray
    class_names: tuple[str, ...]
    attribute_names: tuple[str, ...]

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.int64)
        a = np.asarray(self.a, dtype=np.int64)
        n = self.embeddings.count
        if y.shape != (n,) or a.shape != (n,):
            raise InterchangeError(
                f"labels length mismatch: {y.shape[0] if y.ndim else '?'} labels, "
                f"{a.shape[0] if a.ndim else '?'} attributes, {n} embeddings"
            )
        if n and (y.min() < 0 or y.max() >= len(self.class_names)):
            raise InterchangeError("class label out of range")
        if n and (a.min() < 0 or a.max() >= len(self.attribute_names)):
            raise InterchangeError("attribute label out of range")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "class_names", tuple(self.class_names))
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def num_attributes(self) -> int:
        return len(self.attribute_names)

    @property
    def groups(self) -> np.ndarray:
        return self.y * self.num_attributes + self.a

    def group_name(self, y: int, a: int) -> str:
        return f"{self.class_names[y]}/{self.attribute_names[a]}"


def _atomic_write_bytes(path: Path, payload: bytes) -> None:
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


def write_json(path: str | Path, doc: dict) -> None:
    payload = (json.dumps(doc, indent=2, ensure_ascii=False) + "\n").encode("utf-8")
    _atomic_write_bytes(Path(path), payload)


def read_json(path: str | Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InterchangeError(f"malformed JSON in {path}: {exc}") from exc


def manifest_path(prefix: str | Path) -> Path:
    return Path(str(prefix) + ".manifest.json")


def binary_path(prefix: str | Path) -> Path:
    return Path(str(prefix) + ".f32")


def labels_path(prefix: str | Path) -> Path:
    return Path(str(prefix) + ".labels.json")


def load_manifest(path: str | Path) -> PromptManifest:
    return PromptManifest.from_json_dict(read_json(path))


def load_embeddings(
    manifest_file: str | Path, binary_file: str | Path
) -> tuple[PromptManifest, EmbeddingMatrix]:
    """Load a manifest/binary pair, validating sizes and finiteness.

    The returned matrix holds float64 copies; column i matches entry i.
    Any length mismatch is an error, never a truncation.
    """
    manifest = load_manifest(manifest_file)
    raw = Path(binary_file).read_bytes()
    count = manifest.count

    if manifest.dim is not None:
        dim = manifest.dim
    elif count > 0:
        if len(raw) % (4 * count) != 0:
            raise InterchangeError(
                f"binary length {len(raw)} is not a multiple of 4*count={4 * count}"
            )
        dim = len(raw) // (4 * count)
        if dim < 1:
            raise InterchangeError("binary too short: derived dim is 0")
    else:
        raise InterchangeError(
            "empty manifest without a 'dim' field: dimension is unrecoverable"
        )

    expected = dim * count * 4
    if len(raw) != expected:
        raise InterchangeError(
            f"binary length {len(raw)} != dim*count*4 = {dim}*{count}*4 = {expected}"
        )

    flat = np.frombuffer(raw, dtype="<f4")
    cols = flat.reshape(count, dim).T if count else np.empty((dim, 0), dtype="<f4")
    finite = np.isfinite(cols).all(axis=0)
    if count and not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise InterchangeError(
            f"non-finite value in column {bad} (entry {manifest.entries[bad].id!r})"
        )
    return manifest, EmbeddingMatrix(cols.astype(np.float64))


def save_embeddings(
    matrix: EmbeddingMatrix, manifest: PromptManifest, out_prefix: str | Path
) -> None:
    """Write <prefix>.manifest.json and <prefix>.f32; round-trips bit-exactly at f32."""
    if matrix.count != manifest.count:
        raise InterchangeError(
            f"count mismatch: matrix has {matrix.count} columns, manifest {manifest.count} entries"
        )
    if manifest.dim is not None and manifest.dim != matrix.dim:
        raise InterchangeError(
            f"dim mismatch: matrix dim {matrix.dim}, manifest dim {manifest.dim}"
        )
    write_json(manifest_path(out_prefix), manifest.with_dim(matrix.dim).to_json_dict())
    _atomic_write_bytes(binary_path(out_prefix), matrix.as_f32_bytes())


def load_dataset(prefix: str | Path) -> tuple[PromptManifest, EmbeddingMatrix]:
    return load_embeddings(manifest_path(prefix), binary_path(prefix))


def extract_pairs(manifest: PromptManifest, matrix: EmbeddingMatrix) -> PositivePairSet:
    """Collect (left, right) embedding pairs in lexicographic pair_id order.

    Ordering is a pure function of the pair_ids so the difference-matrix
    column order, and everything downstream of it, is reproducible.
    """
    if manifest.count != matrix.count:
        raise InterchangeError(
            f"count mismatch: manifest {manifest.count} entries, matrix {matrix.count} columns"
        )
    left: dict[str, int] = {}
    right: dict[str, int] = {}
    for i, entry in enumerate(manifest.entries):
        if entry.role == "pair_left":
            left[entry.pair_id] = i
        elif entry.role == "pair_right":
            right[entry.pair_id] = i
    for pair_id in left.keys() | right.keys():
        if pair_id not in left or pair_id not in right:
            raise InterchangeError(f"dangling pair_id {pair_id!r}")
    order = sorted(left)
    li = [left[p] for p in order]
    ri = [right[p] for p in order]
    return PositivePairSet(
        left=matrix.data[:, li] if order else np.empty((matrix.dim, 0)),
        right=matrix.data[:, ri] if order else np.empty((matrix.dim, 0)),
        pair_ids=tuple(order),
    )


def save_labels(
    prefix: str | Path,
    y: Sequence[int],
    a: Sequence[int],
    class_names: Sequence[str],
    attribute_names: Sequence[str],
) -> None:
    write_json(
        labels_path(prefix),
        {
            "y": [int(v) for v in y],
            "a": [int(v) for v in a],
            "class_names": list(class_names),
            "attribute_names": list(attribute_names),
        },
    )


def load_grouped_eval_set(prefix: str | Path) -> tuple[PromptManifest, GroupedEvalSet]:
    """Load <prefix>.{manifest.json,f32,labels.json} into a GroupedEvalSet."""
    manifest, matrix = load_dataset(prefix)
    doc = read_json(labels_path(prefix))
    for key in ("y", "a", "class_names", "attribute_names"):
        if key not in doc:
            raise InterchangeError(f"labels sidecar missing key {key!r}")
    eval_set = GroupedEvalSet(
        embeddings=matrix,
        y=np.asarray(doc["y"], dtype=np.int64),
        a=np.asarray(doc["a"], dtype=np.int64),
        class_names=tuple(str(s) for s in doc["class_names"]),
        attribute_names=tuple(str(s) for s in doc["attribute_names"]),
    )
    return manifest, eval_set
