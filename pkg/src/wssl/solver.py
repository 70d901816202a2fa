"""
Alternating L1 label denoising over a truncated Laplacian eigenbasis.

The problem solved is

    min_{Yhat >= 0, U}  1/2 ||Yhat - V U||_F^2
                        + lam * sum_ij sqrt(sigma_i) |u_ij|
                        + gamma * ||Yhat - Ybar||_1

by alternating an exact weighted-shrinkage step in ``U`` and an exact
elementwise soft-threshold step in ``Yhat``.
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg

from .errors import InvalidInputError, NumericalError

log = logging.getLogger(__name__)


@dataclass
class SolverParams:
    lam: float = 0.01
    gamma: float = 0.01
    tol: float = 1e-4
    max_iter: int = 10

    def __post_init__(self):
        if self.lam < 0 or self.gamma < 0:
            raise InvalidInputError("lambda and gamma must be nonnegative")
        if self.tol <= 0:
            raise InvalidInputError("tol must be positive")
        if self.max_iter < 1:
            raise InvalidInputError("max_iter must be >= 1")


@dataclass
class SolveReport:
    iterations: int = 0
    objectives: list = field(default_factory=list)
    changes: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_change(self):
        return self.changes[-1] if self.changes else float("nan")

    def as_dict(self):
        return {
            "iterations": self.iterations,
            "converged": self.converged,
            "final_relative_change": self.final_change,
            "objectives": list(self.objectives),
            "relative_changes": list(self.changes),
        }


def soft_threshold_element(x, y, gamma):
    """Minimizer over ``z >= 0`` of ``(z - x)^2 + 2 gamma |z - y|`` for ``y >= 0``."""
    z1 = max(x - gamma, y)
    z2 = max(0.0, min(x + gamma, y))
    f1 = (z1 - x) ** 2 + 2.0 * gamma * abs(z1 - y)
    f2 = (z2 - x) ** 2 + 2.0 * gamma * abs(z2 - y)
    return z1 if f1 <= f2 else z2


def update_labels(F, Ybar, gamma):
    """Vectorized :func:`soft_threshold_element` over matching arrays."""
    F = np.asarray(F, dtype=np.float64)
    Ybar = np.asarray(Ybar, dtype=np.float64)
    if F.shape != Ybar.shape:
        raise InvalidInputError(f"shape mismatch {F.shape} vs {Ybar.shape}")
    z1 = np.maximum(F - gamma, Ybar)
    z2 = np.maximum(0.0, np.minimum(F + gamma, Ybar))
    f1 = (z1 - F) ** 2 + 2.0 * gamma * np.abs(z1 - Ybar)
    f2 = (z2 - F) ** 2 + 2.0 * gamma * np.abs(z2 - Ybar)
    return np.where(f1 <= f2, z1, z2)


def shrink(c, t):
    return np.sign(c) * np.maximum(np.abs(c) - t, 0.0)


def penalty_weights(basis, lam):
    # sigma_1 may come back as -1e-16
    return lam * np.sqrt(np.maximum(basis.values, 0.0))


def solve_sparse_coding_column(basis, yhat_col, lam):
    """Exact weighted-lasso solution on the orthonormal eigenbasis.

    With orthonormal columns the least-squares term separates, so each
    coefficient is the projection ``v_i . y`` shrunk by ``lam sqrt(sigma_i)``.
    """
    c = basis.vectors.T @ np.asarray(yhat_col, dtype=np.float64)
    return shrink(c, penalty_weights(basis, lam))


def solve_sparse_coding_iterative(basis, yhat_col, lam, max_iter=5000, tol=1e-14, u0=None):
    """FISTA on the same weighted lasso, without using orthonormality.

    Kept as an independent check on the closed form.
    """
    V = basis.vectors
    y = np.asarray(yhat_col, dtype=np.float64)
    w = penalty_weights(basis, lam)
    step = 1.0 / max(np.linalg.norm(V, 2) ** 2, 1e-300)
    u = np.zeros(V.shape[1]) if u0 is None else np.array(u0, dtype=np.float64)
    z = u.copy()
    t = 1.0
    for _ in range(max_iter):
        grad = V.T @ (V @ z - y)
        u_new = shrink(z - step * grad, step * w)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        z = u_new + ((t - 1.0) / t_new) * (u_new - u)
        delta = np.linalg.norm(u_new - u)
        u, t = u_new, t_new
        if delta <= tol * max(1.0, np.linalg.norm(u)):
            break
    return u


def sparse_coding_objective(basis, yhat_col, u, lam):
    r = basis.vectors @ u - yhat_col
    return 0.5 * float(r @ r) + float(np.sum(penalty_weights(basis, lam) * np.abs(u)))


def solve_coefficients(basis, Yhat, lam, workers=1, order=None):
    """Solve the C independent column problems; returns the m x C matrix U.

    Columns are computed one at a time so the result for a column never
    depends on which other columns are solved, in what order, or on how
    many threads are used.
    """
    Yhat = np.asarray(Yhat, dtype=np.float64)
    C = Yhat.shape[1]
    cols = list(range(C)) if order is None else list(order)
    U = np.zeros((basis.m, C))

    def one(j):
        U[:, j] = solve_sparse_coding_column(basis, np.ascontiguousarray(Yhat[:, j]), lam)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, cols))
    else:
        for j in cols:
            one(j)
    return U


def reconstruct(basis, U):
    """``F = V U``, column by column for reproducibility."""
    F = np.empty((basis.n, U.shape[1]))
    for j in range(U.shape[1]):
        F[:, j] = basis.vectors @ U[:, j]
    return F


def restricted_objective(Yhat, U, basis, Ybar, lam, gamma):
    F = reconstruct(basis, U)
    w = penalty_weights(basis, lam)
    return (0.5 * float(np.sum((Yhat - F) ** 2))
            + float(np.sum(w[:, None] * np.abs(U)))
            + gamma * float(np.sum(np.abs(Yhat - Ybar))))


def wssl_solve(basis, Ybar, params=None, workers=1):
    """Alternate the coefficient and label steps from ``Yhat = Ybar``.

    Returns
    -------
    Yhat : (N, C) array, nonnegative
    report : SolveReport
        ``objectives`` holds the restricted objective after every half-step
        (U-step, then Yhat-step, per iteration).
    """
    params = params or SolverParams()
    Ybar = np.asarray(Ybar, dtype=np.float64)
    if Ybar.shape[0] != basis.n:
        raise InvalidInputError(
            f"label matrix has {Ybar.shape[0]} rows, basis has {basis.n}")
    if np.any(Ybar < 0):
        raise InvalidInputError("smoothed labels must be nonnegative")

    Yhat = Ybar.copy()
    report = SolveReport()
    for it in range(1, params.max_iter + 1):
        U = solve_coefficients(basis, Yhat, params.lam, workers=workers)
        report.objectives.append(
            restricted_objective(Yhat, U, basis, Ybar, params.lam, params.gamma))
        F = reconstruct(basis, U)
        Ynew = update_labels(F, Ybar, params.gamma)
        if not (np.all(np.isfinite(U)) and np.all(np.isfinite(Ynew))):
            raise NumericalError(f"non-finite values at iteration {it}", iteration=it)
        report.objectives.append(
            restricted_objective(Ynew, U, basis, Ybar, params.lam, params.gamma))
        prev = np.linalg.norm(Yhat)
        change = np.linalg.norm(Ynew - Yhat) / (prev if prev > 0 else 1.0)
        report.changes.append(float(change))
        report.iterations = it
        Yhat = Ynew
        log.debug("iteration %d: objective %.6g, change %.3e", it, report.objectives[-1], change)
        if change < params.tol:
            report.converged = True
            break
    return Yhat, report


def lgc_baseline(graph, Ybar, alpha=0.99):
    """Local-and-global-consistency propagation ``(1-a)(I - a S)^{-1} Ybar``."""
    if not 0.0 < alpha < 1.0:
        raise InvalidInputError(f"alpha must lie in (0, 1), got {alpha}")
    W = graph.W if hasattr(graph, "W") else sp.csr_matrix(graph)
    d = np.asarray(W.sum(axis=1)).ravel()
    if np.any(d <= 0):
        raise InvalidInputError("graph has isolated vertices")
    s = 1.0 / np.sqrt(d)
    S = sp.diags(s) @ W @ sp.diags(s)
    n = W.shape[0]
    system = (sp.identity(n, format="csc") - alpha * S).tocsc()
    Ybar = np.asarray(Ybar, dtype=np.float64)
    try:
        lu = sp.linalg.splu(system)
        F = lu.solve(np.asfortranarray(Ybar))
    except RuntimeError as exc:
        raise NumericalError(f"label propagation solve failed: {exc}") from exc
    if not np.all(np.isfinite(F)):
        raise NumericalError("label propagation produced non-finite values")
    return (1.0 - alpha) * F
