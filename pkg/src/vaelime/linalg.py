"""Dense kernels and the weighted ridge least-squares solver behind the surrogate fit."""

from dataclasses import dataclass

import numpy as np

from vaelime.errors import DegenerateSystem, DimensionMismatch, NotPositiveDefinite

PIVOT_TOL = 1e-12
SYMMETRY_TOL = 1e-9


@dataclass(frozen=True)
class WlsSolution:
    """Coefficients of a weighted least-squares fit, intercept first.

    ``condition_hint`` is the smallest diagonal entry of the Cholesky factor
    of the normal matrix; values close to zero flag near-collinear designs.
    """

    beta: np.ndarray
    condition_hint: float
    ridge: float


def cholesky(a):
    """Lower-triangular factor L with L @ L.T == a.

    Raises NotPositiveDefinite when a pivot (the value under the square root)
    is <= 1e-12.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] == 0:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    if np.max(np.abs(a - a.T)) > SYMMETRY_TOL:
        raise ValueError("matrix is not symmetric")
    n = a.shape[0]
    low = np.zeros_like(a)
    for j in range(n):
        pivot = a[j, j] - low[j, :j] @ low[j, :j]
        if pivot <= PIVOT_TOL:
            raise NotPositiveDefinite(f"pivot {pivot:.3e} at index {j}")
        low[j, j] = np.sqrt(pivot)
        if j + 1 < n:
            low[j + 1:, j] = (a[j + 1:, j] - low[j + 1:, :j] @ low[j, :j]) / low[j, j]
    return low


def _forward_sub(low, b):
    x = np.empty_like(b)
    for i in range(len(b)):
        x[i] = (b[i] - low[i, :i] @ x[:i]) / low[i, i]
    return x


def _back_sub(upp, b):
    n = len(b)
    x = np.empty_like(b)
    for i in range(n - 1, -1, -1):
        x[i] = (b[i] - upp[i, i + 1:] @ x[i + 1:]) / upp[i, i]
    return x


def cho_solve_factor(low, b):
    """Solve (L L^T) x = b given the lower factor."""
    return _back_sub(low.T, _forward_sub(low, np.asarray(b, dtype=float)))


def cholesky_solve(a, b):
    """Solve a symmetric positive-definite system ``a @ x = b``."""
    b = np.asarray(b, dtype=float)
    a = np.asarray(a, dtype=float)
    if b.ndim != 1 or a.ndim != 2 or a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"A has shape {a.shape}, b has shape {b.shape}")
    return cho_solve_factor(cholesky(a), b)


def _penalty(p, lam):
    j = np.full(p, lam, dtype=float)
    j[0] = 0.0
    return np.diag(j)


def solve_wls(x, y, w, lam=1e-6, lambda_floor=1e-8, refine_steps=3):
    """Weighted ridge least squares with an unpenalized intercept.

    Minimizes ``sum_i w_i (y_i - x_i . beta)^2 + lam * ||beta[1:]||^2`` through
    the normal equations ``(X^T W X + lam J) beta = X^T W y`` and a Cholesky
    factorization. The first column of ``x`` must be the all-ones intercept
    column.

    A few steps of iterative refinement follow the direct solve. The residual
    is recomputed from ``x`` itself rather than from the normal matrix, which
    recovers accuracy lost to squaring the condition number when the design is
    near-collinear (decoded VAE samples often are).

    If the factorization fails and ``lam`` is below ``lambda_floor``, the solve
    is retried once at the floor before giving up with DegenerateSystem.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    if x.ndim != 2 or y.ndim != 1 or w.ndim != 1 or not (x.shape[0] == len(y) == len(w)):
        raise DimensionMismatch(f"design {x.shape}, targets {y.shape}, weights {w.shape}")
    if x.shape[0] < 2:
        raise DegenerateSystem("need at least two samples")
    if np.any(w < 0) or not np.any(w > 0):
        raise DegenerateSystem("weights must be nonnegative with at least one positive entry")
    if lam < 0:
        raise ValueError("ridge lambda must be nonnegative")

    p = x.shape[1]
    xw = x * w[:, None]
    gram = xw.T @ x
    gram = 0.5 * (gram + gram.T)
    rhs = xw.T @ y

    attempts = [lam] if lam >= lambda_floor else [lam, lambda_floor]
    for ridge in attempts:
        penalty = _penalty(p, ridge)
        try:
            low = cholesky(gram + penalty)
        except NotPositiveDefinite:
            continue
        beta = cho_solve_factor(low, rhs)
        for _ in range(refine_steps):
            resid = xw.T @ (y - x @ beta) - penalty @ beta
            beta = beta + cho_solve_factor(low, resid)
        if not np.all(np.isfinite(beta)):
            raise DegenerateSystem("solution has non-finite entries")
        return WlsSolution(beta=beta, condition_hint=float(np.min(np.diag(low))), ridge=ridge)
    raise DegenerateSystem(
        f"normal equations not positive definite at ridge {attempts[-1]:g}; "
        "check for all-zero weights or constant columns"
    )
