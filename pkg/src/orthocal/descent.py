"""Plain gradient-descent minimizers for the calibration and equalization losses.

These exist only as independent cross-checks of the closed-form solutions: no
matrix inverse, no factorization of (I + lambda' Zd Zd^T) anywhere.  Both
losses are strictly convex quadratics, so descent with a stable step size
converges to the unique global minimizer that the closed form must match.

The step size is capped at 1e-3 and reduced to 1/(2 + lambda' sigma_max^2)
whenever the curvature makes 1e-3 unstable (the Hessian is 2(I + lambda' D),
so any fixed step must stay below 1/(1 + lambda' sigma_max^2)).  Iteration
stops when the gradient norm falls below gtol, which bounds the distance to
the optimum by gtol/2; a loss-change test alone cannot certify the 1e-6
agreement the acceptance checks demand.
"""

from __future__ import annotations

import numpy as np

from .projection import (
    PositivePairSet,
    calibration_loss,
    equalization_loss,
    lambda_prime,
    pair_difference_matrix,
)

MAX_ITERS = 200_000


def _descent_plan(pairs: PositivePairSet, lam: float) -> tuple[np.ndarray | None, float, float]:
    """Shared setup: difference Gram matrix, lambda', and a stable step size."""
    lam_p = lambda_prime(lam, pairs.count)
    if lam_p == 0.0:
        return None, 0.0, 1e-3
    zd = pair_difference_matrix(pairs)
    gram = zd @ zd.T
    # sigma_max^2 from the small |S| x |S| Gram; used only to keep the step stable.
    smax2 = float(np.linalg.eigvalsh(zd.T @ zd)[-1]) if pairs.count else 0.0
    step = min(1e-3, 1.0 / (2.0 + lam_p * smax2))
    return gram, lam_p, step


def descend_calibration(
    p0: np.ndarray,
    pairs: PositivePairSet,
    lam: float,
    gtol: float = 1e-8,
    max_iters: int = MAX_ITERS,
) -> np.ndarray:
    """Minimize ||P - P0||_F^2 + lambda' ||P Zd||_F^2 by gradient descent."""
    p0 = np.asarray(p0, dtype=np.float64)
    gram, lam_p, step = _descent_plan(pairs, lam)
    p = p0.copy()
    if gram is None:
        return p
    stop = gtol * max(1.0, float(np.linalg.norm(p0)))
    for _ in range(max_iters):
        grad = 2.0 * (p - p0) + 2.0 * lam_p * (p @ gram)
        if float(np.linalg.norm(grad)) <= stop:
            break
        p -= step * grad
    return p


def descend_equalization(
    z0: np.ndarray,
    pairs: PositivePairSet,
    lam: float,
    gtol: float = 1e-10,
    max_iters: int = MAX_ITERS,
) -> np.ndarray:
    """Minimize ||z - z0||^2 + lambda' ||Zd^T z||^2 by gradient descent."""
    z0 = np.asarray(z0, dtype=np.float64)
    gram, lam_p, step = _descent_plan(pairs, lam)
    z = z0.copy()
    if gram is None:
        return z
    stop = gtol * max(1.0, float(np.linalg.norm(z0)))
    for _ in range(max_iters):
        grad = 2.0 * (z - z0) + 2.0 * lam_p * (gram @ z)
        if float(np.linalg.norm(grad)) <= stop:
            break
        z -= step * grad
    return z


def descent_report(p0: np.ndarray, pairs: PositivePairSet, lam: float) -> dict:
    """Loss at start and at the descent minimizer, for diagnostics."""
    p = descend_calibration(p0, pairs, lam)
    return {
        "loss_at_p0": calibration_loss(p0, p0, pairs, lam),
        "loss_at_minimizer": calibration_loss(p, p0, pairs, lam),
    }
