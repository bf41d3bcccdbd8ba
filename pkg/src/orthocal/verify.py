"""Self-verification: seeded random instances exercising every mathematical law.

Run through the CLI as `orthocal verify`.  Each check generates its own
instances from one seeded generator, compares two independent computation
routes (closed form vs gradient descent, SPD solve vs SVD, projector algebra
vs definitions), and reports the worst observed deviation against a fixed
threshold.  A failing check is report content, not an exception; the CLI
turns any failure into exit code 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .descent import descend_calibration, descend_equalization
from .projection import (
    PositivePairSet,
    SpuriousBasis,
    calibrated_projection,
    calibration_matrix,
    calibration_matrix_svd,
    equalize_embedding,
    load_projection,
    orthogonal_projection,
    pair_difference_matrix,
)

LAMBDA_ORACLE_GRID = (0.1, 1.0, 10.0, 1000.0)
SHRINKAGE_GRID = (0.0, 1.0, 10.0, 100.0, 1000.0, 10000.0)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    max_deviation: float
    threshold: float
    detail: str = ""

    def __post_init__(self):  # numpy scalars leak in from comparisons
        object.__setattr__(self, "passed", bool(self.passed))
        object.__setattr__(self, "max_deviation", float(self.max_deviation))

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f"  ({self.detail})" if self.detail else ""
        return (
            f"{status}  {self.name}: max deviation {self.max_deviation:.3e}"
            f" (threshold {self.threshold:.1e}){extra}"
        )


def _unit_columns(rng: np.random.Generator, d: int, n: int) -> np.ndarray:
    cols = rng.normal(size=(d, n))
    return cols / np.linalg.norm(cols, axis=0)


def _random_pairs(rng: np.random.Generator, d: int, count: int) -> PositivePairSet:
    return PositivePairSet(
        left=_unit_columns(rng, d, count), right=_unit_columns(rng, d, count)
    )


def _random_p0(rng: np.random.Generator, d: int) -> np.ndarray:
    m = int(rng.integers(0, max(1, d // 4) + 1))
    if m == 0:
        return np.eye(d)
    return orthogonal_projection(SpuriousBasis.from_columns(_unit_columns(rng, d, m)))


def _rel(dev: np.ndarray, ref: np.ndarray) -> float:
    return float(np.linalg.norm(dev) / max(np.linalg.norm(ref), 1e-300))


def check_closed_form_vs_descent(rng: np.random.Generator, instances: int = 24) -> CheckResult:
    """The closed-form calibration minimizer must match plain gradient descent."""
    worst = 0.0
    for i in range(instances):
        lam = LAMBDA_ORACLE_GRID[i % len(LAMBDA_ORACLE_GRID)]
        d = int(rng.integers(2, 33))
        s = int(rng.integers(1, 9))
        pairs = _random_pairs(rng, d, s)
        p0 = _random_p0(rng, d)
        closed = calibrated_projection(p0, pairs, lam).p_star
        descended = descend_calibration(p0, pairs, lam)
        worst = max(worst, _rel(closed - descended, closed))
    return CheckResult("closed_form_vs_descent", worst <= 1e-6, worst, 1e-6,
                       f"{instances} instances, lambda in {LAMBDA_ORACLE_GRID}")


def check_equalization_identity(rng: np.random.Generator, instances: int = 100) -> CheckResult:
    """p0 @ z* must equal p_star @ z0 for the equalization minimizer z*."""
    worst = 0.0
    for _ in range(instances):
        lam = float(rng.choice(LAMBDA_ORACLE_GRID))
        d = int(rng.integers(2, 33))
        s = int(rng.integers(0, 9))
        pairs = _random_pairs(rng, d, s) if s else PositivePairSet.empty(d)
        p0 = _random_p0(rng, d)
        z0 = _unit_columns(rng, d, 1)[:, 0]
        z_star = equalize_embedding(z0, pairs, lam)
        p_star = calibrated_projection(p0, pairs, lam).p_star
        lhs = p0 @ z_star
        rhs = p_star @ z0
        worst = max(worst, _rel(lhs - rhs, rhs if np.linalg.norm(rhs) > 0 else z0))
    return CheckResult("equalization_identity", worst <= 1e-8, worst, 1e-8,
                       f"{instances} instances")


def check_equalization_vs_descent(rng: np.random.Generator, instances: int = 10) -> CheckResult:
    """The closed-form z* matches gradient descent on the equalization loss."""
    worst = 0.0
    for i in range(instances):
        lam = LAMBDA_ORACLE_GRID[i % len(LAMBDA_ORACLE_GRID)]
        d = int(rng.integers(2, 33))
        pairs = _random_pairs(rng, d, int(rng.integers(1, 9)))
        z0 = _unit_columns(rng, d, 1)[:, 0]
        closed = equalize_embedding(z0, pairs, lam)
        descended = descend_equalization(z0, pairs, lam)
        worst = max(worst, _rel(closed - descended, closed))
    return CheckResult("equalization_vs_descent", worst <= 1e-6, worst, 1e-6,
                       f"{instances} instances")


def check_svd_route(rng: np.random.Generator) -> CheckResult:
    """SPD-solve and SVD constructions of the calibration matrix must agree."""
    worst = 0.0
    for d, s in ((8, 3), (32, 8), (128, 40), (512, 200)):
        for lam in (1.0, 1000.0):
            pairs = _random_pairs(rng, d, s)
            a = calibration_matrix(pairs, lam)
            b = calibration_matrix_svd(pairs, lam)
            worst = max(worst, _rel(a - b, a))
    return CheckResult("svd_route_equivalence", worst <= 1e-8, worst, 1e-8,
                       "d up to 512, |S| up to 200")


def _basis_cases(rng: np.random.Generator):
    for d, m in ((3, 1), (8, 4), (64, 16), (512, 16)):
        yield _unit_columns(rng, d, m)
    # Rank-deficient: duplicated, zero, and nearly collinear columns.
    base = _unit_columns(rng, 16, 3)
    yield np.concatenate([base, base[:, :1]], axis=1)
    yield np.concatenate([base, np.zeros((16, 1))], axis=1)
    wobble = base[:, :1] + 1e-13 * _unit_columns(rng, 16, 1)
    yield np.concatenate([base, wobble], axis=1)


def check_projector_laws(rng: np.random.Generator) -> CheckResult:
    """P0 must be symmetric, idempotent, and annihilate its basis, even rank-deficient."""
    worst = 0.0
    for cols in _basis_cases(rng):
        basis = SpuriousBasis.from_columns(cols)
        p0 = orthogonal_projection(basis)
        scale = max(np.linalg.norm(p0), 1.0)  # zero projector is legitimate at full rank
        worst = max(worst, float(np.linalg.norm(p0 - p0.T)) / scale)
        worst = max(worst, float(np.linalg.norm(p0 @ p0 - p0)) / scale)
        a_norm = max(np.linalg.norm(cols), 1e-300)
        worst = max(worst, float(np.linalg.norm(p0 @ cols)) / a_norm)
    return CheckResult("projector_laws", worst <= 1e-10, worst, 1e-10,
                       "symmetry, idempotence, annihilation")


def check_monotone_shrinkage(rng: np.random.Generator, instances: int = 5) -> CheckResult:
    """||(I + lambda' D)^{-1} v|| must not increase with lambda for columns v of Zd."""
    worst = 0.0
    for _ in range(instances):
        d = int(rng.integers(4, 33))
        pairs = _random_pairs(rng, d, int(rng.integers(1, 9)))
        zd = pair_difference_matrix(pairs)
        norms = []
        for lam in SHRINKAGE_GRID:
            cal = calibration_matrix(pairs, lam)
            norms.append(np.linalg.norm(cal @ zd, axis=0))
        norms = np.stack(norms)
        base = np.maximum(norms[0], 1e-300)
        increase = np.diff(norms, axis=0) / base
        worst = max(worst, float(increase.max(initial=0.0)))
    return CheckResult("monotone_shrinkage", worst <= 1e-12, worst, 1e-12,
                       f"lambda grid {SHRINKAGE_GRID}")


def check_scalar_dimension() -> CheckResult:
    """Everything must degrade gracefully at d = 1."""
    pairs = PositivePairSet(left=np.array([[1.5]]), right=np.array([[0.5]]))
    p0 = orthogonal_projection(SpuriousBasis.from_columns(np.array([[2.0]])))
    worst = float(abs(p0[0, 0]))  # complement of span{e1} in R^1 is {0}
    res = calibrated_projection(np.eye(1), pairs, 10.0)
    worst = max(worst, abs(res.calibration[0, 0] - 1.0 / 11.0))
    z = equalize_embedding(np.array([3.0]), pairs, 10.0)
    worst = max(worst, float(abs(z[0] - 3.0 / 11.0)))
    gd = descend_calibration(np.eye(1), pairs, 10.0)
    worst = max(worst, float(abs(gd[0, 0] - res.p_star[0, 0])))
    return CheckResult("scalar_dimension", worst <= 1e-8, worst, 1e-8)


def check_projection_file(prefix: str) -> CheckResult:
    """Internal consistency of a saved projection at f32 resolution."""
    try:
        result = load_projection(prefix)
    except Exception as exc:
        return CheckResult("projection_file_consistency", False, float("inf"), 1e-5,
                           f"unreadable: {exc}")
    p0, cal, p_star = result.p0, result.calibration, result.p_star
    scale = max(np.linalg.norm(p0), 1e-300)
    worst = float(np.linalg.norm(p0 - p0.T)) / scale
    worst = max(worst, float(np.linalg.norm(p0 @ p0 - p0)) / scale)
    worst = max(worst, _rel(cal - cal.T, cal))
    eigs = np.linalg.eigvalsh((cal + cal.T) / 2.0)
    if eigs.min() <= 0:
        worst = max(worst, 1.0)
    worst = max(worst, _rel(p0 @ cal - p_star, p_star))
    return CheckResult("projection_file_consistency", worst <= 1e-5, worst, 1e-5,
                       f"dim {result.dim}, lambda {result.lam}")


def run_all_checks(seed: int = 0, proj_prefix: str | None = None) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    results = [
        check_closed_form_vs_descent(rng),
        check_equalization_vs_descent(rng),
        check_equalization_identity(rng),
        check_svd_route(rng),
        check_projector_laws(rng),
        check_monotone_shrinkage(rng),
        check_scalar_dimension(),
    ]
    if proj_prefix is not None:
        results.append(check_projection_file(proj_prefix))
    return results
