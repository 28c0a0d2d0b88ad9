"""Principal eigenpair of the mixed-boundary Laplacian and the decay rate chi."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .errors import ConvergenceError
from .mesh import Grid, laplacian_operator


@dataclass(frozen=True)
class EigenResult:
    lambda1: float
    eigenfield: np.ndarray
    residual: float
    iterations: int


def smallest_eigenvalue(grid: Grid, tol: float = 1e-10, max_iter: int = 10000) -> EigenResult:
    """Smallest eigenvalue of ``-Lap`` with the grid's boundary conditions.

    Inverse power iteration on the generalized problem ``A v = lam M v``
    (``A`` with ``D = 1``, ``M`` the lumped mass), which is the ghost-point
    eigenproblem written symmetrically. One sparse LU of ``A`` is reused for
    every iteration. Stops when successive Rayleigh quotients differ by less
    than ``tol``.

    The eigenfield has unit discrete L2 norm and a positive largest entry.
    ``residual`` is ``||A v - lam M v|| / ||M v||`` in the Euclidean norm.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    A = laplacian_operator(grid, 1.0).tocsc()
    m = grid.mass
    lu = spla.splu(A)

    v = np.ones(grid.ndof)
    lam_old = np.inf
    for it in range(1, max_iter + 1):
        y = lu.solve(m * v)
        Ay = A @ y
        lam = float(y @ Ay) / float(y @ (m * y))
        v = y / np.sqrt(grid.cell_volume * float(y @ (m * y)))
        if abs(lam - lam_old) < tol:
            break
        lam_old = lam
    else:
        raise ConvergenceError(
            f"inverse iteration did not converge in {max_iter} iterations "
            f"(last Rayleigh change {abs(lam - lam_old):.3e})")

    if v[np.argmax(np.abs(v))] < 0:
        v = -v
    Mv = m * v
    residual = float(np.linalg.norm(A @ v - lam * Mv) / np.linalg.norm(Mv))
    return EigenResult(lam, v, residual, it)


def compute_chi(D: float, lambda1: float, delta: float, epsilon: float) -> float:
    """Exponential decay rate of the Lyapunov functional.

    ``min(D*lambda1, D*lambda1*(delta+epsilon) / (2*(D*lambda1+2)) + epsilon/2)``
    """
    for name, val in (("D", D), ("lambda1", lambda1), ("delta", delta), ("epsilon", epsilon)):
        if not (np.isfinite(val) and val > 0):
            raise ValueError(f"{name} must be positive, got {val}")
    dl = D * lambda1
    return min(dl, dl * (delta + epsilon) / (2.0 * (dl + 2.0)) + epsilon / 2.0)
