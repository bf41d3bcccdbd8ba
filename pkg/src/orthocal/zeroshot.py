"""Zero-shot classifiers from class-prompt embeddings, and group-robustness reports.

A classifier is just the class-prompt embeddings stacked as rows (optionally
debiased by a projection first); prediction is the cosine-similarity argmax.
The report splits 0/1 accuracy by (label, attribute) group and summarizes the
spread as gap = average - worst_group, the quantity debiasing tries to close.
Average accuracy is item-weighted, not group-balanced, so the gap is always
non-negative.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .interchange import EmbeddingMatrix, GroupedEvalSet

# Below this fraction of the input norm a projected class embedding counts as
# destroyed; cosine similarity against it would be noise.
ANNIHILATED_RTOL = 1e-10


@dataclass(frozen=True)
class ClassifierWeights:
    """One row of beta per class, plus how the rows were produced."""

    beta: np.ndarray
    class_names: tuple[str, ...]
    provenance: dict

    @property
    def num_classes(self) -> int:
        return self.beta.shape[0]

    @property
    def dim(self) -> int:
        return self.beta.shape[1]


@dataclass(frozen=True)
class GroupReport:
    per_group: dict
    average: float
    worst_group: float
    gap: float
    excluded_count: int

    def to_json_dict(self) -> dict:
        return {
            "per_group": dict(self.per_group),
            "average": self.average,
            "worst_group": self.worst_group,
            "gap": self.gap,
            "excluded_count": self.excluded_count,
        }

    def to_text_table(self) -> str:
        width = max([len(k) for k in self.per_group] + [12])
        lines = [f"{'group':<{width}}  accuracy"]
        for name, acc in self.per_group.items():
            lines.append(f"{name:<{width}}  {acc:8.4f}")
        lines.append(f"{'average':<{width}}  {self.average:8.4f}")
        lines.append(f"{'worst group':<{width}}  {self.worst_group:8.4f}")
        lines.append(f"{'gap':<{width}}  {self.gap:8.4f}")
        if self.excluded_count:
            lines.append(f"excluded items: {self.excluded_count}")
        return "\n".join(lines)


def build_classifier(
    class_embeddings: EmbeddingMatrix,
    class_names=None,
    proj: np.ndarray | None = None,
    renormalize: bool = True,
    lam: float | None = None,
) -> ClassifierWeights:
    """Stack class-prompt embeddings (projected if proj is given) as beta rows.

    Raises if any projected row is numerically annihilated; a zero weight row
    cannot score anything.
    """
    k = class_embeddings.count
    if k < 2:
        raise ValueError(f"need at least 2 class embeddings, got {k}")
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(k))
    elif len(class_names) != k:
        raise ValueError(f"{len(class_names)} names for {k} classes")

    cols = class_embeddings.data
    if proj is not None:
        proj = np.asarray(proj, dtype=np.float64)
        if proj.shape != (class_embeddings.dim, class_embeddings.dim):
            raise ValueError(
                f"projection shape {proj.shape} does not match dim {class_embeddings.dim}"
            )
        out = proj @ cols
    else:
        out = cols.copy()

    in_norms = np.linalg.norm(cols, axis=0)
    out_norms = np.linalg.norm(out, axis=0)
    dead = out_norms <= ANNIHILATED_RTOL * np.maximum(in_norms, 1e-300)
    if np.any(dead):
        name = class_names[int(np.flatnonzero(dead)[0])]
        raise ValueError(f"class embedding annihilated by projection: {name!r}")
    if renormalize:
        out = out / out_norms

    return ClassifierWeights(
        beta=out.T,
        class_names=tuple(class_names),
        provenance={
            "projection_applied": proj is not None,
            "lambda": lam,
            "renormalized": bool(renormalize),
        },
    )


def predict(weights: ClassifierWeights, images: EmbeddingMatrix) -> np.ndarray:
    """Cosine-argmax class index per image; -1 marks zero-norm (invalid) items.

    Ties break toward the smallest class index, and predictions are invariant
    to positive rescaling of any image or weight row.
    """
    if images.dim != weights.dim:
        raise ValueError(f"image dim {images.dim} != classifier dim {weights.dim}")
    row_norms = np.linalg.norm(weights.beta, axis=1)
    if np.any(row_norms == 0):
        raise ValueError("classifier has a zero-norm weight row")
    bn = weights.beta / row_norms[:, None]
    col_norms = np.linalg.norm(images.data, axis=0)
    valid = col_norms > 0
    sims = bn @ images.data
    sims[:, valid] /= col_norms[valid]
    preds = np.argmax(sims, axis=0).astype(np.int64)
    preds[~valid] = -1
    return preds


def group_report(weights: ClassifierWeights, eval_set: GroupedEvalSet) -> GroupReport:
    """Per-group / average / worst-group accuracy under 0/1 loss.

    Every (y, a) combination must be populated; zero-norm items are excluded
    from all accuracies and counted.  Accuracy sums are exact integer counts,
    so the report is independent of item order.
    """
    n = eval_set.embeddings.count
    if n == 0:
        raise ValueError("empty evaluation set")
    k, na = eval_set.num_classes, eval_set.num_attributes

    present = set(zip(eval_set.y.tolist(), eval_set.a.tolist()))
    missing = [(y, a) for y in range(k) for a in range(na) if (y, a) not in present]
    if missing:
        named = ", ".join(f"(y={y}, a={a})" for y, a in missing)
        raise ValueError(f"empty groups: {named}")

    preds = predict(weights, eval_set.embeddings)
    valid = preds >= 0
    excluded = int(np.sum(~valid))
    if not np.any(valid):
        raise ValueError("all items excluded (zero-norm embeddings)")
    correct = (preds == eval_set.y) & valid

    per_group: dict[str, float] = {}
    accs = []
    for y in range(k):
        for a in range(na):
            mask = (eval_set.y == y) & (eval_set.a == a) & valid
            total = int(np.sum(mask))
            if total == 0:
                raise ValueError(
                    f"group (y={y}, a={a}) has no valid items after exclusions"
                )
            acc = float(np.sum(correct[mask])) / total
            per_group[eval_set.group_name(y, a)] = acc
            accs.append(acc)

    average = float(np.sum(correct)) / int(np.sum(valid))
    worst = min(accs)
    return GroupReport(
        per_group=per_group,
        average=average,
        worst_group=worst,
        gap=average - worst,
        excluded_count=excluded,
    )


def bias_probe(
    weights: ClassifierWeights, spurious_embeddings: EmbeddingMatrix
) -> np.ndarray:
    """K x m table of cosine similarities between weight rows and spurious columns."""
    if spurious_embeddings.dim != weights.dim:
        raise ValueError(
            f"spurious dim {spurious_embeddings.dim} != classifier dim {weights.dim}"
        )
    row_norms = np.linalg.norm(weights.beta, axis=1)
    col_norms = np.linalg.norm(spurious_embeddings.data, axis=0)
    if np.any(row_norms == 0):
        raise ValueError("zero-norm classifier row in bias probe")
    if np.any(col_norms == 0):
        raise ValueError("zero-norm spurious embedding in bias probe")
    return (weights.beta / row_norms[:, None]) @ (spurious_embeddings.data / col_norms)


def bias_probe_csv(
    table: np.ndarray, class_names, spurious_labels
) -> str:
    """Labeled CSV rendering of the probe table."""
    header = "class," + ",".join(str(s) for s in spurious_labels)
    lines = [header]
    for name, row in zip(class_names, table):
        lines.append(str(name) + "," + ",".join(f"{v:.6f}" for v in row))
    return "\n".join(lines) + "\n"
