"""Nonnegative steady state by Picard iteration on the linearised solution map."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConvergenceError, NumericalFailure
from .mesh import Grid, laplacian_operator, neumann_source

# Tolerated negative excursion of a linear solve before it counts as a
# maximum-principle violation.
NEGATIVITY_TOL = 1e-12


@dataclass(frozen=True)
class SteadyState:
    l_inf: np.ndarray
    s_inf: np.ndarray
    picard_iterations: int
    final_update_norm: float


def f_reaction(x, delta: float, epsilon: float):
    """Effective absorption ``epsilon / (delta + epsilon + x)`` for ``x >= 0``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0):
        raise ValueError("f_reaction is defined for x >= 0 only")
    out = epsilon / (delta + epsilon + x)
    return float(out) if out.ndim == 0 else out


def occupancy(l_inf, delta: float, epsilon: float) -> np.ndarray:
    """Receptor occupancy in equilibrium with ``l_inf``."""
    return l_inf / (epsilon + delta + l_inf)


def apply_T(grid: Grid, u, nu, D: float, delta: float, epsilon: float,
            *, A=None, b=None) -> np.ndarray:
    """Solve ``-D Lap w + f(u) w = 0`` with the influx ``nu`` and ``w = 0`` on Dirichlet faces.

    Discretely ``(A + M diag(f(u))) w = b``. The result must be nonnegative by
    the discrete maximum principle; a violation raises instead of being
    clipped. ``A`` and ``b`` may be passed in to avoid reassembly.
    """
    u = grid.check_field(u, "u")
    if np.any(u < 0):
        raise ValueError("apply_T needs a nonnegative iterate")
    if A is None:
        A = laplacian_operator(grid, D)
    if b is None:
        b = neumann_source(grid, nu, D)
    K = (A + sp.diags(grid.mass * f_reaction(u, delta, epsilon))).tocsc()
    try:
        w = spla.splu(K).solve(b)
    except RuntimeError as exc:  # singular factor
        raise NumericalFailure(f"linear solve in apply_T failed: {exc}") from exc
    if not np.all(np.isfinite(w)):
        raise NumericalFailure("linear solve in apply_T returned non-finite values")
    if w.min() < -NEGATIVITY_TOL:
        raise NumericalFailure(f"maximum principle violated: min w = {w.min():.3e}")
    return w


def picard_steady(grid: Grid, nu, D: float, delta: float, epsilon: float,
                  tol: float = 1e-10, max_iter: int = 500, damping: float = 1.0,
                  u0=None) -> SteadyState:
    """Iterate ``u <- (1-theta) u + theta T(u)`` from ``u0`` (zero by default).

    Converged when the sup-norm update drops below ``tol``. From zero the
    iterates increase monotonically towards the unique fixed point.
    """
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if not 0 < damping <= 1:
        raise ValueError(f"damping must be in (0, 1], got {damping}")
    A = laplacian_operator(grid, D)
    b = neumann_source(grid, nu, D)
    u = np.zeros(grid.ndof) if u0 is None else grid.check_field(u0, "u0").copy()

    update = np.inf
    for it in range(1, max_iter + 1):
        w = apply_T(grid, u, nu, D, delta, epsilon, A=A, b=b)
        new = w if damping == 1.0 else (1.0 - damping) * u + damping * w
        update = float(np.max(np.abs(new - u))) if u.size else 0.0
        u = new
        if update < tol:
            break
    else:
        raise ConvergenceError(
            f"Picard iteration did not converge in {max_iter} iterations "
            f"(last update {update:.3e})")
    return SteadyState(u, occupancy(u, delta, epsilon), it, update)
