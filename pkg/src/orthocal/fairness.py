"""Ranked-retrieval skew, attribute-distribution discrepancy, and pair gaps.

MaxSkew@k measures how far the top-k retrieved items drift from attribute
parity: max over attributes of ln(r_a * |A|) with r_a the attribute's top-k
frequency.  Natural log throughout; attributes absent from the top-k would
contribute -inf and are skipped, which never changes the max because some
frequency always reaches 1/|A|.

Discrepancy is the L2 distance between an empirical attribute distribution
and uniform, ranging from 0 (parity) to sqrt((|A|-1)/|A|) (all mass on one
attribute).  The attribute classifier assigns each image the argmax-cosine
attribute prompt; zero-norm images are excluded from the counts and reported,
not silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .interchange import EmbeddingMatrix
from .projection import PositivePairSet


@dataclass(frozen=True)
class RankedList:
    """Retrieval result: item indices best-first, each with an attribute."""

    item_ids: tuple[int, ...]
    attribute_of: dict

    def __post_init__(self):
        if len(set(self.item_ids)) != len(self.item_ids):
            raise ValueError("ranked list contains duplicate item ids")
        for item in self.item_ids:
            if item not in self.attribute_of:
                raise ValueError(f"ranked item {item} has no attribute")

    def __len__(self) -> int:
        return len(self.item_ids)


@dataclass(frozen=True)
class AttributeDistribution:
    counts: np.ndarray
    attribute_names: tuple[str, ...]

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.shape[0] != len(self.attribute_names):
            raise ValueError("counts and attribute_names must align")
        if counts.shape[0] < 2:
            raise ValueError("need at least 2 attributes")
        if np.any(counts < 0):
            raise ValueError("negative count")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "attribute_names", tuple(self.attribute_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def rank_by_query(
    query: np.ndarray, images: EmbeddingMatrix, k: int, attributes
) -> RankedList:
    """Top-k image indices by cosine similarity, descending; ties favor low index."""
    query = np.asarray(query, dtype=np.float64)
    qn = float(np.linalg.norm(query))
    if qn == 0:
        raise ValueError("zero query embedding")
    if query.shape != (images.dim,):
        raise ValueError(f"query shape {query.shape} does not match dim {images.dim}")
    if not 1 <= k <= images.count:
        raise ValueError(f"k={k} out of range for {images.count} images")
    attributes = np.asarray(attributes, dtype=np.int64)
    if attributes.shape != (images.count,):
        raise ValueError("attributes length does not match image count")

    col_norms = np.linalg.norm(images.data, axis=0)
    sims = (query @ images.data) / qn
    nonzero = col_norms > 0
    sims[nonzero] /= col_norms[nonzero]
    sims[~nonzero] = 0.0
    order = np.argsort(-sims, kind="stable")[:k]
    ids = tuple(int(i) for i in order)
    return RankedList(item_ids=ids, attribute_of={i: int(attributes[i]) for i in ids})


def max_skew(ranked: RankedList, num_attributes: int, k: int) -> float:
    """max_a ln(r_{a,k} * |A|) over the top-k of the ranked list."""
    if num_attributes < 2:
        raise ValueError("need at least 2 attributes")
    if k < 1:
        raise ValueError("k must be positive")
    if k > len(ranked):
        raise ValueError(f"k={k} exceeds ranked list length {len(ranked)}")
    counts = np.zeros(num_attributes, dtype=np.int64)
    for item in ranked.item_ids[:k]:
        a = ranked.attribute_of[item]
        if not 0 <= a < num_attributes:
            raise ValueError(f"attribute index {a} out of range")
        counts[a] += 1
    # r * |A| computed with an integer numerator so a balanced top-k gives ln(1) = 0 exactly
    return max(math.log(c * num_attributes / k) for c in counts if c > 0)


def discrepancy(dist: AttributeDistribution) -> float:
    """L2 distance between the empirical attribute frequencies and uniform."""
    total = dist.total
    if total < 1:
        raise ValueError("empty attribute distribution")
    p = dist.counts / total
    u = 1.0 / len(dist.attribute_names)
    return float(np.sqrt(np.sum((p - u) ** 2)))


def classify_attributes(
    images: EmbeddingMatrix,
    attribute_prompts: EmbeddingMatrix,
    attribute_names=None,
) -> tuple[AttributeDistribution, np.ndarray]:
    """Assign each image its argmax-cosine attribute prompt.

    Returns the aggregated distribution over valid items plus the per-item
    assignment, with -1 marking excluded (zero-norm) images.
    """
    na = attribute_prompts.count
    if na < 2:
        raise ValueError(f"need at least 2 attribute prompts, got {na}")
    if images.count and images.dim != attribute_prompts.dim:
        raise ValueError(
            f"image dim {images.dim} != attribute prompt dim {attribute_prompts.dim}"
        )
    if attribute_names is None:
        attribute_names = tuple(f"attribute_{i}" for i in range(na))

    if images.count == 0:
        return (
            AttributeDistribution(np.zeros(na, dtype=np.int64), tuple(attribute_names)),
            np.empty(0, dtype=np.int64),
        )

    pn = np.linalg.norm(attribute_prompts.data, axis=0)
    if np.any(pn == 0):
        raise ValueError("zero-norm attribute prompt")
    sims = (attribute_prompts.data / pn).T @ images.data
    assignment = np.argmax(sims, axis=0).astype(np.int64)
    col_norms = np.linalg.norm(images.data, axis=0)
    assignment[col_norms == 0] = -1
    counts = np.bincount(assignment[assignment >= 0], minlength=na).astype(np.int64)
    return AttributeDistribution(counts, tuple(attribute_names)), assignment


def pair_gap(proj: np.ndarray, pairs: PositivePairSet) -> float:
    """Mean L2 distance between projected pair members: sum ||P z_i - P z_j|| / |S|."""
    if pairs.count < 1:
        raise ValueError("pair_gap needs at least one pair")
    proj = np.asarray(proj, dtype=np.float64)
    if proj.shape != (pairs.dim, pairs.dim):
        raise ValueError(f"projection shape {proj.shape} does not match dim {pairs.dim}")
    diffs = proj @ (pairs.left - pairs.right)
    return float(np.mean(np.linalg.norm(diffs, axis=0)))


def mean_max_skew(skews) -> float:
    """Arithmetic mean of per-query MaxSkew values."""
    skews = list(skews)
    if not skews:
        raise ValueError("no per-query skew values to average")
    return float(np.mean(skews))
