"""Time integration of the coupled morphogen / receptor system.

One step of size ``dt`` from ``(l, s)``:

1. ``s_half``: exact receptor update over ``dt/2`` with ``l`` frozen;
2. ``(M + dt A) l_new = M (l + dt (delta s_half - l (1 - s_half))) + dt b``;
3. ``s_new``: exact receptor update over ``dt`` from ``s`` with ``l_new`` frozen.

Diffusion is backward Euler, so it is unconditionally stable and ``M + dt A``
is an M-matrix. The right-hand side of step 2 is nonnegative for
``dt <= 1``, which gives ``l_new >= 0``. Steps 1 and 3 keep ``s`` in
``[0, 1)`` for any ``l >= 0``. The steady state is an exact fixed point. The
scheme is first order in ``dt``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import StepRejected
from .mesh import Grid, dirichlet_outflow, integrate_boundary, integrate_volume, \
    laplacian_operator, neumann_source
from .steady import SteadyState


@dataclass(frozen=True)
class ModelParams:
    D: float
    delta: float
    epsilon: float
    nu: np.ndarray | float
    p: float = 4.0

    def validate(self, grid: Grid) -> "ModelParams":
        """Check rates and exponent against ``grid``; returns params with ``nu`` as an array."""
        for name in ("D", "delta", "epsilon"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise ValueError(f"{name} must be positive, got {val}")
        if not self.p > grid.dimension:
            raise ValueError(f"p must exceed the dimension {grid.dimension}, got {self.p}")
        nu = grid.check_boundary(self.nu)
        return ModelParams(float(self.D), float(self.delta), float(self.epsilon), nu, float(self.p))

    @property
    def rate(self) -> float:
        """Total receptor off-rate ``delta + epsilon``."""
        return self.delta + self.epsilon


@dataclass(frozen=True)
class Snapshot:
    t: float
    l: np.ndarray
    s: np.ndarray
    output: bool = True     # False for internal steps between output times


@dataclass
class Trajectory:
    grid: Grid
    params: ModelParams
    snapshots: list[Snapshot] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([snap.t for snap in self.snapshots])

    @property
    def l(self) -> np.ndarray:
        return np.stack([snap.l for snap in self.snapshots])

    @property
    def s(self) -> np.ndarray:
        return np.stack([snap.s for snap in self.snapshots])

    @property
    def initial(self) -> Snapshot:
        return self.snapshots[0]

    def __len__(self) -> int:
        return len(self.snapshots)

    def __iter__(self) -> Iterator[Snapshot]:
        return iter(self.snapshots)


class DiffusionSolver:
    """Caches ``M + dt A`` factorizations per step size for one grid and parameter set."""

    max_cached = 32

    def __init__(self, grid: Grid, params: ModelParams):
        self.grid = grid
        self.params = params.validate(grid)
        self.A = laplacian_operator(grid, self.params.D)
        self.b = neumann_source(grid, self.params.nu, self.params.D)
        self._M = sp.diags(grid.mass)
        self._lu = {}

    def snap(self, dt: float) -> float:
        """Return an already factorized step within ``1e-9`` relative of ``dt``, else ``dt``."""
        for h in self._lu:
            if abs(h - dt) <= 1e-9 * h:
                return h
        return dt

    def solve(self, rhs: np.ndarray, dt: float) -> np.ndarray:
        lu = self._lu.get(dt)
        if lu is None:
            if len(self._lu) >= self.max_cached:
                del self._lu[next(iter(self._lu))]
            lu = spla.splu((self._M + dt * self.A).tocsc())
            self._lu[dt] = lu
        return lu.solve(rhs)


def check_admissible(grid: Grid, l, s, tol: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Validate sign bounds ``l >= -tol`` and ``0 <= s < 1`` on initial or intermediate data."""
    l = grid.check_field(l, "l")
    s = grid.check_field(s, "s")
    if l.size and l.min() < -tol:
        raise ValueError(f"l must be nonnegative, min is {l.min():.3e}")
    if s.size and (s.min() < 0 or s.max() >= 1):
        raise ValueError(f"s must lie in [0, 1), range is [{s.min():.3e}, {s.max():.3e}]")
    return l, s


def step(state: Snapshot, dt: float, params: ModelParams, grid: Grid, *,
         solver: DiffusionSolver | None = None, positivity_tol: float = 1e-10) -> Snapshot:
    """Advance ``state`` by one step of size ``dt`` (see module docstring)."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if solver is None:
        solver = DiffusionSolver(grid, params)
    p = solver.params
    dt = solver.snap(dt)
    l, s = state.l, state.s
    s_half = kernels.receptor_update(s, l, p.rate, 0.5 * dt)
    rhs = grid.mass * kernels.morphogen_reaction(l, s_half, p.delta, dt) + dt * solver.b
    l_new = solver.solve(rhs, dt)
    if l_new.size and l_new.min() < -positivity_tol:
        raise StepRejected(
            f"step dt={dt:.3e} at t={state.t:.6g} gives min l = {l_new.min():.3e}")
    s_new = kernels.receptor_update(s, l_new, p.rate, dt)
    return Snapshot(state.t + dt, l_new, s_new)


def _advance(state, h, params, grid, solver, positivity_tol, depth, max_halvings):
    try:
        return step(state, h, params, grid, solver=solver, positivity_tol=positivity_tol)
    except StepRejected:
        if depth >= max_halvings:
            raise
        half = 0.5 * h
        mid = _advance(state, half, params, grid, solver, positivity_tol, depth + 1, max_halvings)
        return _advance(mid, half, params, grid, solver, positivity_tol, depth + 1, max_halvings)


def output_schedule(t_end: float, dt: float, stride: int) -> np.ndarray:
    """Output times every ``stride`` steps of ``dt`` on ``[0, t_end]``, ``t_end`` included."""
    if stride < 1:
        raise ValueError(f"output stride must be >= 1, got {stride}")
    every = stride * dt
    n = int(np.floor(t_end / every + 1e-9))
    times = every * np.arange(n + 1)
    times[-1] = min(times[-1], t_end)
    if t_end - times[-1] > 1e-9 * every:
        times = np.append(times, t_end)
    return times


def ramp_step(t: float, dt: float, ramp_time: float, levels: int) -> float:
    """Largest ``dt * 2**-k`` (``k <= levels``) not exceeding ``dt * t / ramp_time``.

    Grades the step size near ``t = 0``, where incompatible initial data
    create a boundary layer. Steps come from a dyadic ladder so only
    ``levels + 1`` factorizations are ever needed.
    """
    if ramp_time <= 0 or t >= ramp_time:
        return dt
    if t <= 0:
        return dt * 2.0**-levels
    k = min(levels, max(0, int(np.ceil(np.log2(ramp_time / t) - 1e-12))))
    return dt * 2.0**-k


def iter_integrate(grid: Grid, params: ModelParams, l0, s0, t_end: float, dt: float,
                   output_times: Sequence[float] | None = None, *,
                   positivity_tol: float = 1e-10, max_halvings: int = 20,
                   ramp_time: float = 0.0, ramp_levels: int = 10,
                   every_step: bool = False) -> Iterator[Snapshot]:
    """Yield snapshots at ``output_times`` (default: every step) starting with ``t = 0``.

    Steps of ``dt`` are shortened to land exactly on each output time. With
    ``ramp_time > 0`` steps before ``ramp_time`` follow :func:`ramp_step`. A
    rejected step is retried as two half steps, at most ``max_halvings``
    levels deep. With ``every_step`` the states between output times are
    yielded too, flagged ``output=False``.
    """
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not t_end >= 0:
        raise ValueError(f"t_end must be nonnegative, got {t_end}")
    if ramp_time < 0 or ramp_levels < 0:
        raise ValueError("ramp_time and ramp_levels must be nonnegative")
    l0, s0 = check_admissible(grid, l0, s0)
    if output_times is None:
        output_times = output_schedule(t_end, dt, 1)
    times = np.asarray(output_times, dtype=float)
    if times.size == 0 or times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    if np.any(np.diff(times) <= 0):
        raise ValueError("output times must be strictly increasing")
    if times[-1] > t_end * (1 + 1e-12) + 1e-300:
        raise ValueError(f"output time {times[-1]} exceeds t_end = {t_end}")

    solver = DiffusionSolver(grid, params)
    state = Snapshot(0.0, l0.copy(), s0.copy())
    yield state
    for target in times[1:]:
        while True:
            remaining = target - state.t
            cap = ramp_step(state.t, dt, ramp_time, ramp_levels)
            if remaining <= 1e-9 * cap:
                break
            h = cap if remaining >= cap * (1 - 1e-9) else remaining
            state = _advance(state, h, params, grid, solver, positivity_tol, 0, max_halvings)
            if every_step and target - state.t > 1e-9 * cap:
                yield Snapshot(state.t, state.l, state.s, output=False)
        state = Snapshot(float(target), state.l, state.s)
        yield state


def integrate(grid: Grid, params: ModelParams, l0, s0, t_end: float, dt: float,
              output_times: Sequence[float] | None = None, **kwargs) -> Trajectory:
    """Run :func:`iter_integrate` and collect every snapshot into a :class:`Trajectory`."""
    params = params.validate(grid)
    snaps = list(iter_integrate(grid, params, l0, s0, t_end, dt, output_times, **kwargs))
    return Trajectory(grid, params, snaps)


def s_explicit_solution(grid: Grid, times, l_path, s0, steady: SteadyState,
                        params: ModelParams, return_factor: bool = False):
    """Reconstruct ``s`` along a sampled morphogen path by the integrating factor.

    With ``z1 = l - l_inf``, ``z2 = s - s_inf`` and ``c = delta + eps + l``,
    nodewise ``dz2/dt + c z2 = (1 - s_inf) z1`` so::

        z2(t) = A(t) z2(0) + (1 - s_inf) int_0^t exp(-int_tau^t c) z1(tau) dtau,
        A(t) = exp(-int_0^t c)

    Time integrals use the trapezoid rule on the samples. Returns the
    ``(K, ndof)`` array of ``s``; with ``return_factor`` also ``A(t)``.
    """
    times = np.asarray(times, dtype=float)
    l_path = np.asarray(l_path, dtype=float)
    if times.ndim != 1 or l_path.ndim != 2 or l_path.shape[0] != times.size:
        raise ValueError(f"time samples ({times.shape}) do not match path ({l_path.shape})")
    if l_path.shape[1] != grid.ndof:
        raise ValueError("path fields do not match the grid")
    if times.size < 2 or np.any(np.diff(times) <= 0):
        raise ValueError("need at least two strictly increasing sample times")
    s0 = grid.check_field(s0, "s0")

    c = params.delta + params.epsilon + l_path
    dts = np.diff(times)[:, None]
    dC = 0.5 * dts * (c[1:] + c[:-1])          # int over each sample interval
    z1 = l_path - steady.l_inf
    z20 = s0 - steady.s_inf

    K = times.size
    z2 = np.empty_like(l_path)
    factor = np.empty_like(l_path)
    z2[0] = z20
    factor[0] = 1.0
    conv = np.zeros(grid.ndof)                  # int_0^t exp(-int_tau^t c) z1 dtau
    for k in range(1, K):
        decay = np.exp(-dC[k - 1])
        conv = decay * conv + 0.5 * dts[k - 1] * (decay * z1[k - 1] + z1[k])
        factor[k] = factor[k - 1] * decay
        z2[k] = factor[k] * z20 + (1.0 - steady.s_inf) * conv
    s = z2 + steady.s_inf
    return (s, factor) if return_factor else s


def balance_terms(grid: Grid, params: ModelParams, snap: Snapshot, A=None) -> tuple[float, float]:
    """``(int (l + s), int nu - Dirichlet outflow - eps int s)`` at one snapshot."""
    total = integrate_volume(grid, snap.l + snap.s)
    rhs = (integrate_boundary(grid, params.nu)
           - dirichlet_outflow(grid, snap.l, params.D, A)
           - params.epsilon * integrate_volume(grid, snap.s))
    return total, rhs


def mass_balance_residual(trajectory: Trajectory | Iterable[Snapshot], grid: Grid,
                          params: ModelParams) -> np.ndarray:
    """Residual of ``d/dt int (l+s) = int nu - outflow - eps int s`` at interior output times.

    The time derivative is a centered difference over neighbouring snapshots,
    which must be uniformly spaced.
    """
    snaps = list(trajectory)
    if len(snaps) < 3:
        raise ValueError("mass balance needs at least 3 snapshots")
    params = params.validate(grid)
    t = np.array([snap.t for snap in snaps])
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("mass balance needs uniformly spaced snapshots")
    A = laplacian_operator(grid, params.D)
    terms = np.array([balance_terms(grid, params, snap, A) for snap in snaps])
    total, rhs = terms[:, 0], terms[:, 1]
    return (total[2:] - total[:-2]) / (t[2:] - t[:-2]) - rhs[1:-1]


class MassBalanceTracker:
    """Streams the integrated balance ``int(l+s)(t) - int(l+s)(0) - int_0^t rhs``.

    Feed every state (internal steps included) to :meth:`update`; the time
    integral of the right-hand side of :func:`balance_terms` is the
    trapezoid rule over all of them and a row is recorded at each output.
    """

    def __init__(self, grid: Grid, params: ModelParams):
        self.grid = grid
        self.params = params.validate(grid)
        self.A = laplacian_operator(grid, self.params.D)
        self.rows: list[tuple[float, float, float, float]] = []
        self._prev = None
        self._total0 = 0.0
        self._flux = 0.0

    def update(self, snap: Snapshot) -> None:
        total, rhs = balance_terms(self.grid, self.params, snap, self.A)
        if self._prev is None:
            self._total0 = total
        else:
            self._flux += 0.5 * (snap.t - self._prev[0]) * (rhs + self._prev[1])
        self._prev = (snap.t, rhs)
        if snap.output:
            self.rows.append((snap.t, total, rhs, total - self._total0 - self._flux))

    def table(self) -> dict[str, np.ndarray]:
        """Columns ``t, total, rhs, integrated_defect, centered_residual`` at output times.

        The centered residual is ``nan`` at the ends.
        """
        t, total, rhs, defect = (np.asarray(c) for c in zip(*self.rows))
        centered = np.full(t.size, np.nan)
        if t.size >= 3:
            centered[1:-1] = (total[2:] - total[:-2]) / (t[2:] - t[:-2]) - rhs[1:-1]
        return {"t": t, "total": total, "rhs": rhs, "integrated_defect": defect,
                "centered_residual": centered}

    def relative_defect(self) -> float:
        """Largest ``|integrated defect|`` relative to the largest total mass."""
        _, total, _, defect = (np.asarray(c) for c in zip(*self.rows))
        scale = max(float(np.max(np.abs(total))), float(np.max(np.abs(defect))), 1e-300)
        return float(np.max(np.abs(defect))) / scale

