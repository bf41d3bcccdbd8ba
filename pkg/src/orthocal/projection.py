"""Orthogonal and calibrated projection construction.

Given a d x m matrix A of spurious-prompt embeddings, the orthogonal
projector onto the complement of span(A) is

    P0 = I - A (A^T A)^{-1} A^T,

computed here through a rank-revealing SVD so nearly collinear prompt
embeddings (the usual case for paraphrases) cannot blow up the inverse.

Given positive pairs S = {(z_i, z_j)} whose members should coincide after
debiasing, the calibrated projector minimizes

    ||P - P0||_F^2 + (lambda/|S|) sum_S ||P z_i - P z_j||^2

whose closed form is P* = P0 (I + lambda' Zd Zd^T)^{-1}, with lambda' =
lambda/|S| and Zd the d x |S| matrix of pair differences.  The inverse factor
is the calibration matrix; it shrinks directions of spurious variation by
1/(1 + lambda' sigma^2) while leaving their complement alone.  The same
matrix solves the per-vector equalization problem

    min_z ||z - z0||^2 + (lambda/|S|) sum_S (z^T z_i - z^T z_j)^2

and the two are linked by the identity P0 z* = P* z0, which the test suite
and the verify command both exercise.

The calibration matrix is produced two independent ways: a symmetric
positive-definite solve (the default) and an SVD reconstruction
U (I + lambda' Sigma^2)^{-1} U^T.  Keeping both routes makes the pair a
cross-check rather than a single point of failure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
from scipy.linalg import cho_factor, cho_solve


def _require_finite(name: str, arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr, dtype=np.float64)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class PositivePairSet:
    """Ordered set of embedding pairs (z_i, z_j) that should coincide after debiasing."""

    left: np.ndarray
    right: np.ndarray
    pair_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        left = _require_finite("left", self.left)
        right = _require_finite("right", self.right)
        if left.ndim != 2 or right.ndim != 2 or left.shape != right.shape:
            raise ValueError(
                f"pair sides must be matching d x n arrays, got {left.shape} and {right.shape}"
            )
        if self.pair_ids is not None and len(self.pair_ids) != left.shape[1]:
            raise ValueError("pair_ids length does not match pair count")
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)

    @property
    def dim(self) -> int:
        return self.left.shape[0]

    @property
    def count(self) -> int:
        return self.left.shape[1]

    def __len__(self) -> int:
        return self.count

    def pairs(self) -> Iterator[tuple[np.ndarray, np.ndarray]]:
        for k in range(self.count):
            yield self.left[:, k], self.right[:, k]

    @classmethod
    def empty(cls, dim: int) -> "PositivePairSet":
        return cls(left=np.empty((dim, 0)), right=np.empty((dim, 0)), pair_ids=())


def pair_difference_matrix(pairs: PositivePairSet) -> np.ndarray:
    """Column k is z_i - z_j for the k-th stored pair; zero columns are kept."""
    return pairs.left - pairs.right


def lambda_prime(lam: float, pair_count: int) -> float:
    """lambda / |S|, degrading to 0 for an empty pair set."""
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    return lam / pair_count if pair_count else 0.0


@dataclass(frozen=True)
class SpuriousBasis:
    """Spurious-prompt embeddings stacked as columns, with their numerical rank.

    Singular values below max(d, m) * eps * sigma_max count as zero; prompt
    embeddings of near-synonyms are close to collinear and must not inflate
    the rank.
    """

    columns: np.ndarray
    effective_rank: int

    def __post_init__(self):
        cols = _require_finite("spurious basis", self.columns)
        if cols.ndim != 2:
            raise ValueError(f"basis must be a d x m array, got shape {cols.shape}")
        object.__setattr__(self, "columns", cols)

    @property
    def dim(self) -> int:
        return self.columns.shape[0]

    @property
    def count(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def from_columns(cls, columns: np.ndarray) -> "SpuriousBasis":
        cols = _require_finite("spurious basis", columns)
        if cols.ndim != 2:
            raise ValueError(f"basis must be a d x m array, got shape {cols.shape}")
        return cls(columns=cols, effective_rank=_effective_rank(cols))


def _rank_tolerance(singular_values: np.ndarray, shape: tuple[int, int]) -> float:
    if singular_values.size == 0:
        return 0.0
    return max(shape) * np.finfo(np.float64).eps * float(singular_values[0])


def _effective_rank(columns: np.ndarray) -> int:
    if columns.shape[1] == 0:
        return 0
    s = np.linalg.svd(columns, compute_uv=False)
    return int(np.sum(s > _rank_tolerance(s, columns.shape)))


def orthogonal_projection(basis: SpuriousBasis) -> np.ndarray:
    """Projector onto the orthogonal complement of span(basis.columns).

    Rank-deficient bases (duplicated or nearly collinear prompts) project
    onto the complement of the true span.  An empty basis gives the identity.
    """
    d = basis.dim
    if basis.count == 0:
        return np.eye(d)
    u, s, _ = np.linalg.svd(basis.columns, full_matrices=False)
    r = int(np.sum(s > _rank_tolerance(s, basis.columns.shape)))
    if r == 0:
        return np.eye(d)
    if r == d:  # basis spans everything; the complement is {0}
        return np.zeros((d, d))
    ur = u[:, :r]
    p0 = np.eye(d) - ur @ ur.T
    return (p0 + p0.T) / 2.0


@dataclass(frozen=True)
class ProjectionResult:
    """P0, the calibration matrix, and their product P*, with provenance."""

    p0: np.ndarray
    calibration: np.ndarray
    p_star: np.ndarray
    lam: float
    pair_count: int
    skip_p0: bool = False
    renormalize: bool = True

    @property
    def dim(self) -> int:
        return self.p0.shape[0]

    @property
    def lambda_prime(self) -> float:
        return lambda_prime(self.lam, self.pair_count)

    def metadata(self) -> dict:
        return {
            "dim": self.dim,
            "lambda": self.lam,
            "pair_count": self.pair_count,
            "skip_p0": self.skip_p0,
            "renormalize": self.renormalize,
        }


def _spd_inverse(m: np.ndarray) -> np.ndarray:
    """Inverse of a symmetric positive-definite matrix via Cholesky solve."""
    c, low = cho_factor((m + m.T) / 2.0, lower=True)
    inv = cho_solve((c, low), np.eye(m.shape[0]))
    return (inv + inv.T) / 2.0


def calibration_matrix(pairs: PositivePairSet, lam: float) -> np.ndarray:
    """(I + lambda' Zd Zd^T)^{-1} through the SPD-solve route."""
    lam_p = lambda_prime(lam, pairs.count)
    d = pairs.dim
    if lam_p == 0.0:
        return np.eye(d)
    zd = pair_difference_matrix(pairs)
    return _spd_inverse(np.eye(d) + lam_p * (zd @ zd.T))


def calibrated_projection(
    p0: np.ndarray, pairs: PositivePairSet, lam: float
) -> ProjectionResult:
    """Closed-form minimizer of the calibration loss: P* = P0 (I + lambda' Zd Zd^T)^{-1}.

    lambda=0 or an empty pair set returns P* = P0 exactly (calibration = I).
    """
    p0 = _require_finite("p0", p0)
    if p0.ndim != 2 or p0.shape[0] != p0.shape[1]:
        raise ValueError(f"p0 must be square, got shape {p0.shape}")
    if pairs.count and pairs.dim != p0.shape[0]:
        raise ValueError(f"dimension mismatch: p0 is {p0.shape[0]}-D, pairs are {pairs.dim}-D")
    if lam < 0:
        raise ValueError(f"lambda must be non-negative, got {lam}")
    lam_p = lambda_prime(lam, pairs.count)
    if lam_p == 0.0:
        cal = np.eye(p0.shape[0])
        p_star = p0.copy()
    else:
        cal = calibration_matrix(pairs, lam)
        p_star = p0 @ cal
    return ProjectionResult(
        p0=p0, calibration=cal, p_star=p_star, lam=float(lam), pair_count=pairs.count
    )


def calibration_matrix_svd(pairs: PositivePairSet, lam: float) -> np.ndarray:
    """Same calibration matrix through the SVD of Zd: U (I + lambda' Sigma^2)^{-1} U^T.

    Exists as an independent cross-check of the SPD-solve route; the two must
    agree to 1e-8 relative Frobenius.
    """
    lam_p = lambda_prime(lam, pairs.count)
    d = pairs.dim
    if lam_p == 0.0:
        return np.eye(d)
    zd = pair_difference_matrix(pairs)
    u, s, _ = np.linalg.svd(zd, full_matrices=True)
    s2 = np.zeros(d)
    s2[: s.shape[0]] = s**2
    cal = (u / (1.0 + lam_p * s2)) @ u.T
    return (cal + cal.T) / 2.0


def equalize_embedding(z0: np.ndarray, pairs: PositivePairSet, lam: float) -> np.ndarray:
    """Minimizer z* = (I + lambda' Zd Zd^T)^{-1} z0 of the equalization loss."""
    z0 = _require_finite("z0", z0)
    if z0.ndim != 1:
        raise ValueError(f"z0 must be a vector, got shape {z0.shape}")
    if pairs.count and pairs.dim != z0.shape[0]:
        raise ValueError(f"dimension mismatch: z0 is {z0.shape[0]}-D, pairs are {pairs.dim}-D")
    lam_p = lambda_prime(lam, pairs.count)
    if lam_p == 0.0:
        return z0.copy()
    zd = pair_difference_matrix(pairs)
    m = np.eye(z0.shape[0]) + lam_p * (zd @ zd.T)
    c, low = cho_factor((m + m.T) / 2.0, lower=True)
    return cho_solve((c, low), z0)


def calibration_loss(
    p: np.ndarray, p0: np.ndarray, pairs: PositivePairSet, lam: float
) -> float:
    """||P - P0||_F^2 + (lambda/|S|) sum_S ||P z_i - P z_j||^2, evaluated exactly."""
    p = np.asarray(p, dtype=np.float64)
    p0 = np.asarray(p0, dtype=np.float64)
    if p.shape != p0.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {p0.shape}")
    total = float(np.sum((p - p0) ** 2))
    if pairs.count:
        if pairs.dim != p.shape[1]:
            raise ValueError(f"shape mismatch: P is {p.shape}, pairs are {pairs.dim}-D")
        zd = pair_difference_matrix(pairs)
        total += lambda_prime(lam, pairs.count) * float(np.sum((p @ zd) ** 2))
    return total


def equalization_loss(
    z: np.ndarray, z0: np.ndarray, pairs: PositivePairSet, lam: float
) -> float:
    """||z - z0||^2 + (lambda/|S|) sum_S (z^T z_i - z^T z_j)^2, evaluated exactly."""
    z = np.asarray(z, dtype=np.float64)
    z0 = np.asarray(z0, dtype=np.float64)
    if z.shape != z0.shape:
        raise ValueError(f"shape mismatch: {z.shape} vs {z0.shape}")
    total = float(np.sum((z - z0) ** 2))
    if pairs.count:
        if pairs.dim != z.shape[0]:
            raise ValueError(f"shape mismatch: z is {z.shape}, pairs are {pairs.dim}-D")
        zd = pair_difference_matrix(pairs)
        total += lambda_prime(lam, pairs.count) * float(np.sum((z @ zd) ** 2))
    return total


# Projected columns whose norm drops below this fraction of the input norm are
# treated as annihilated: set to exact zero and flagged instead of renormalized.
ANNIHILATION_RTOL = 1e-10


@dataclass(frozen=True)
class AppliedProjection:
    """Projected embedding matrix plus the columns the projector annihilated."""

    matrix: "object"
    zeroed_columns: tuple[int, ...]


def apply_projection(matrix, proj: np.ndarray, renormalize: bool) -> AppliedProjection:
    """Replace every column c with proj @ c, optionally rescaling to unit norm.

    Columns the projector sends (numerically) to zero stay zero and are
    reported in zeroed_columns rather than being renormalized into noise.
    """
    from .interchange import EmbeddingMatrix

    proj = _require_finite("projection", proj)
    if proj.ndim != 2 or proj.shape != (matrix.dim, matrix.dim):
        raise ValueError(
            f"projection shape {proj.shape} does not match embedding dim {matrix.dim}"
        )
    out = proj @ matrix.data
    in_norms = np.linalg.norm(matrix.data, axis=0)
    out_norms = np.linalg.norm(out, axis=0)
    zeroed = out_norms <= ANNIHILATION_RTOL * np.maximum(in_norms, 1e-300)
    out[:, zeroed] = 0.0
    if renormalize:
        keep = ~zeroed
        out[:, keep] = out[:, keep] / out_norms[keep]
    return AppliedProjection(
        matrix=EmbeddingMatrix(out),
        zeroed_columns=tuple(int(i) for i in np.flatnonzero(zeroed)),
    )


def projection_f32_path(prefix: str | Path) -> Path:
    return Path(str(prefix) + ".proj.f32")


def projection_json_path(prefix: str | Path) -> Path:
    return Path(str(prefix) + ".proj.json")


def save_projection(result: ProjectionResult, out_prefix: str | Path) -> None:
    """Write <prefix>.proj.f32 (p0, calibration, p_star blocks) and <prefix>.proj.json."""
    from .interchange import write_json, _atomic_write_bytes

    blocks = np.concatenate([result.p0, result.calibration, result.p_star], axis=0)
    payload = np.ascontiguousarray(blocks).astype("<f4").tobytes()
    _atomic_write_bytes(projection_f32_path(out_prefix), payload)
    write_json(projection_json_path(out_prefix), result.metadata())


def load_projection(prefix: str | Path) -> ProjectionResult:
    from .interchange import read_json, InterchangeError

    meta = read_json(projection_json_path(prefix))
    for key in ("dim", "lambda", "pair_count"):
        if key not in meta:
            raise InterchangeError(f"projection metadata missing key {key!r}")
    d = int(meta["dim"])
    raw = projection_f32_path(prefix).read_bytes()
    expected = 3 * d * d * 4
    if len(raw) != expected:
        raise InterchangeError(
            f"projection binary length {len(raw)} != 3*dim*dim*4 = {expected}"
        )
    flat = np.frombuffer(raw, dtype="<f4").astype(np.float64)
    blocks = flat.reshape(3 * d, d)
    if not np.all(np.isfinite(blocks)):
        raise InterchangeError("non-finite value in projection file")
    return ProjectionResult(
        p0=blocks[:d],
        calibration=blocks[d : 2 * d],
        p_star=blocks[2 * d :],
        lam=float(meta["lambda"]),
        pair_count=int(meta["pair_count"]),
        skip_p0=bool(meta.get("skip_p0", False)),
        renormalize=bool(meta.get("renormalize", True)),
    )
