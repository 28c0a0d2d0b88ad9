"""Lyapunov functional, dissipation, discrete Sobolev norms and decay-rate fits.

For a state ``(u, v)`` and the steady state ``(l_inf, s_inf)``::

    Lambda0(v) = int (1-s_inf)(l_inf+delta+2 eps) [Sig(v) - Sig(s_inf) - (v-s_inf)/(1-s_inf)]
    Lambda(u, v) = 1/2 ||u - l_inf||^2 + Lambda0(v)
    D_Lambda(u, v) = D ||grad(u - l_inf)||^2
                     + int ([u(1-v) - (delta+eps) v]^2 + eps (l_inf+delta+eps)(v-s_inf)^2) / (1-v)

with ``Sig(x) = -log(1-x)``. Along solutions ``Lambda(t) + int_0^t D_Lambda = Lambda(0)``
and ``chi Lambda <= D_Lambda``. All volume integrals use the grid's trapezoid
weights and the gradient term is ``|cell| z^T A z`` (``A`` at ``D = 1``), which
equals the forward-difference quadrature of :func:`mesh.gradient_norm_sq`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernels
from .evolution import ModelParams, Snapshot, Trajectory
from .mesh import Grid, forward_differences, laplacian_operator
from .steady import SteadyState

GUARD = 1e-14
FLOOR = 1e-13

NORM_KINDS = ("L2", "Lp", "W1p", "W2p")
SERIES_NAMES = ("l2_z1", "l2_z2", "lp_z1", "lp_z2", "w1p_z1", "w1p_z2", "w2p_z1")


def sigma_I(x, guard: float = GUARD):
    """``-log(1 - x)`` on ``[0, 1 - guard)``."""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(x >= 1.0 - guard):
        raise ValueError(f"sigma_I needs 0 <= x < 1 - {guard:g}")
    out = -np.log1p(-x)
    return float(out) if out.ndim == 0 else out


def _check_occupancy(v, guard):
    if v.size and (v.min() < 0 or v.max() >= 1.0 - guard):
        raise ValueError(
            f"receptor occupancy outside [0, 1 - {guard:g}): range [{v.min():.3e}, {v.max():.17g}]")


def lambda0(grid: Grid, s, steady: SteadyState, delta: float, epsilon: float,
            guard: float = GUARD) -> float:
    s = grid.check_field(s, "s")
    _check_occupancy(s, guard)
    coef = (1.0 - steady.s_inf) * (steady.l_inf + delta + 2.0 * epsilon)
    return float(grid.weights @ (coef * kernels.bregman(s, steady.s_inf)))


def lyapunov(grid: Grid, l, s, steady: SteadyState, delta: float, epsilon: float,
             guard: float = GUARD) -> float:
    z1 = grid.check_field(l, "l") - steady.l_inf
    return 0.5 * float(grid.weights @ (z1 * z1)) + lambda0(grid, s, steady, delta, epsilon, guard)


def dissipation(grid: Grid, l, s, steady: SteadyState, D: float, delta: float,
                epsilon: float, guard: float = GUARD, A1=None) -> float:
    l = grid.check_field(l, "l")
    s = grid.check_field(s, "s")
    _check_occupancy(s, guard)
    if A1 is None:
        A1 = laplacian_operator(grid, 1.0)
    z1 = l - steady.l_inf
    grad = grid.cell_volume * float(z1 @ (A1 @ z1))
    react = kernels.dissipation_density(l, s, steady.l_inf, steady.s_inf, delta, epsilon)
    return D * grad + float(grid.weights @ react)


# --- norms -----------------------------------------------------------------

def _second_differences(grid: Grid, f) -> list[tuple[np.ndarray, np.ndarray, float]]:
    """``(values, weights, multiplicity)`` for every second derivative component."""
    F = grid.to_full(f)
    h = grid.spacing
    mfull = []
    for a in range(grid.dimension):
        m = np.ones(grid.nodes[a])
        m[0] = m[-1] = 0.5
        mfull.append(m)
    out = []
    for a in range(grid.dimension):
        lo = [slice(None)] * grid.dimension
        mid = [slice(None)] * grid.dimension
        hi = [slice(None)] * grid.dimension
        lo[a], mid[a], hi[a] = slice(0, -2), slice(1, -1), slice(2, None)
        d2 = (F[tuple(hi)] - 2.0 * F[tuple(mid)] + F[tuple(lo)]) / h[a] ** 2
        w = np.full(d2.shape, grid.cell_volume)
        for b in range(grid.dimension):
            if b != a:
                shape = [1] * grid.dimension
                shape[b] = -1
                w = w * mfull[b].reshape(shape)
        out.append((d2.ravel(), w.ravel(), 1.0))
    if grid.dimension == 2:
        dxy = (F[2:, 2:] - F[2:, :-2] - F[:-2, 2:] + F[:-2, :-2]) / (4.0 * h[0] * h[1])
        out.append((dxy.ravel(), np.full(dxy.size, grid.cell_volume), 2.0))
    return out


def discrete_norm(grid: Grid, f, kind: str, p: float = 2.0) -> float:
    """Discrete ``L2``, ``Lp``, ``W1p`` or ``W2p`` norm of a field.

    The Sobolev kinds sum the p-th powers of the field and of each partial
    derivative (forward differences for first, centered second differences
    at nodes with both neighbours for second) and take the p-th root.
    """
    f = grid.check_field(f)
    if kind == "L2":
        return float(np.sqrt(grid.weights @ (f * f)))
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}, expected one of {NORM_KINDS}")
    if not p >= 1:
        raise ValueError(f"p must be >= 1, got {p}")
    if kind in ("W1p", "W2p") and not p > grid.dimension:
        raise ValueError(f"Sobolev norms need p > dimension, got p={p}")
    total = float(grid.weights @ np.abs(f) ** p)
    if kind in ("W1p", "W2p"):
        for g, w in forward_differences(grid, f):
            total += float(w @ np.abs(g) ** p)
    if kind == "W2p":
        if min(grid.nodes) < 4:
            raise ValueError("W2p needs at least two interior node layers per axis")
        for d2, w, mult in _second_differences(grid, f):
            total += mult * float(w @ np.abs(d2) ** p)
    return total ** (1.0 / p)


# --- series along a trajectory ---------------------------------------------

@dataclass
class LyapunovSeries:
    t: np.ndarray
    Lambda: np.ndarray
    D_Lambda: np.ndarray
    int_D_Lambda: np.ndarray
    norms: dict[str, np.ndarray]
    envelope_lhs: np.ndarray
    chi: float
    p: float
    meta: dict = field(default_factory=dict)

    @property
    def envelope(self) -> np.ndarray:
        """``2 Lambda(0) exp(-chi t)``."""
        return 2.0 * self.Lambda[0] * np.exp(-self.chi * self.t)

    def energy_residual(self) -> np.ndarray:
        return _energy_residual(self.Lambda, self.int_D_Lambda)

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.t, "Lambda": self.Lambda, "D_Lambda": self.D_Lambda,
                "int_D_Lambda": self.int_D_Lambda}
        cols.update({name: self.norms[name] for name in SERIES_NAMES})
        cols["envelope_KLW"] = self.envelope
        return cols


class LyapunovEvaluator:
    """Evaluates every per-snapshot diagnostic against a fixed steady state."""

    def __init__(self, grid: Grid, steady: SteadyState, params: ModelParams,
                 guard: float = GUARD):
        self.grid = grid
        self.steady = steady
        self.params = params.validate(grid)
        self.guard = guard
        self.A1 = laplacian_operator(grid, 1.0)
        self.with_w2p = min(grid.nodes) >= 4

    def lyapunov(self, l, s) -> float:
        p = self.params
        return lyapunov(self.grid, l, s, self.steady, p.delta, p.epsilon, self.guard)

    def dissipation(self, l, s) -> float:
        p = self.params
        return dissipation(self.grid, l, s, self.steady, p.D, p.delta, p.epsilon,
                           self.guard, self.A1)

    def norms(self, l, s) -> dict[str, float]:
        g, q = self.grid, self.params.p
        z1 = l - self.steady.l_inf
        z2 = s - self.steady.s_inf
        out = {
            "l2_z1": discrete_norm(g, z1, "L2"),
            "l2_z2": discrete_norm(g, z2, "L2"),
            "lp_z1": discrete_norm(g, z1, "Lp", q),
            "lp_z2": discrete_norm(g, z2, "Lp", q),
            "w1p_z1": discrete_norm(g, z1, "W1p", q),
            "w1p_z2": discrete_norm(g, z2, "W1p", q),
            "w2p_z1": discrete_norm(g, z1, "W2p", q) if self.with_w2p else float("nan"),
        }
        return out


def lyapunov_series(grid: Grid, steady: SteadyState, params: ModelParams,
                    snapshots: Iterable[Snapshot], chi: float) -> LyapunovSeries:
    """Evaluate Lambda, D_Lambda, its running integral and all norms per output snapshot.

    ``snapshots`` may be a generator, so long runs never need to be held in
    memory. The running integral is the trapezoid rule over every snapshot
    received, including internal steps flagged ``output=False``; everything
    else is recorded at output snapshots only.
    """
    ev = LyapunovEvaluator(grid, steady, params)
    rate = ev.params.rate
    t, lam, dis, env_lhs, integral = [], [], [], [], []
    norms = {name: [] for name in SERIES_NAMES}
    running, prev = 0.0, None
    for snap in snapshots:
        d = ev.dissipation(snap.l, snap.s)
        if prev is not None:
            running += 0.5 * (snap.t - prev[0]) * (d + prev[1])
        prev = (snap.t, d)
        if not snap.output:
            continue
        t.append(snap.t)
        lam.append(ev.lyapunov(snap.l, snap.s))
        dis.append(d)
        integral.append(running)
        for name, val in ev.norms(snap.l, snap.s).items():
            norms[name].append(val)
        env_lhs.append(norms["l2_z1"][-1] ** 2 + rate * norms["l2_z2"][-1] ** 2)
    return LyapunovSeries(np.asarray(t), np.asarray(lam), np.asarray(dis),
                          np.asarray(integral), {k: np.asarray(v) for k, v in norms.items()},
                          np.asarray(env_lhs), float(chi), ev.params.p)


def _energy_residual(lam, integral):
    return np.abs(lam + integral - lam[0]) / max(lam[0], 1e-300)


def energy_identity_residual(trajectory: Trajectory | Iterable[Snapshot], grid: Grid,
                             steady: SteadyState, params: ModelParams) -> np.ndarray:
    """Relative defect ``|Lambda(t) + int_0^t D_Lambda - Lambda(0)| / Lambda(0)`` per output time.

    The time integral is the trapezoid rule over the snapshots, which must be
    uniformly spaced.
    """
    snaps = list(trajectory)
    if len(snaps) < 3:
        raise ValueError("energy identity needs at least 3 snapshots")
    t = np.array([snap.t for snap in snaps])
    dt = np.diff(t)
    if not np.allclose(dt, dt[0], rtol=1e-9, atol=0):
        raise ValueError("energy identity needs uniformly spaced snapshots")
    ev = LyapunovEvaluator(grid, steady, params)
    lam = np.array([ev.lyapunov(snap.l, snap.s) for snap in snaps])
    dis = np.array([ev.dissipation(snap.l, snap.s) for snap in snaps])
    integral = np.concatenate([[0.0], np.cumsum(0.5 * dt * (dis[1:] + dis[:-1]))])
    return _energy_residual(lam, integral)


def spectral_gap_ratio(series: LyapunovSeries) -> np.ndarray:
    """``chi Lambda / D_Lambda`` per snapshot (0 where both vanish)."""
    num = series.chi * series.Lambda
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(num > 0, num / series.D_Lambda, 0.0)
    return ratio


def envelope_allowance(grid: Grid, params: ModelParams, floor: float = FLOOR) -> float:
    """Absolute slack for the L2 envelope once both sides reach the double-precision floor."""
    volume = float(np.sum(grid.weights))
    return floor**2 * (1.0 + params.delta + params.epsilon) * volume


# --- rate fitting ----------------------------------------------------------

@dataclass(frozen=True)
class NormFit:
    name: str
    rate: float
    fit_residual: float
    n_points: int
    window: tuple[float, float]
    status: str          # "PASS", "FAIL" or "FLAGGED"
    note: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "PASS"


@dataclass(frozen=True)
class RateReport:
    chi: float
    margin: float
    fits: tuple[NormFit, ...]
    envelope_ok: bool
    envelope_max_excess: float

    @property
    def threshold(self) -> float:
        return (1.0 - self.margin) * self.chi / 2.0

    @property
    def passed(self) -> bool:
        return self.envelope_ok and all(f.passed for f in self.fits)

    def by_name(self) -> dict[str, NormFit]:
        return {f.name: f for f in self.fits}

    def by_kind(self) -> dict[str, tuple[NormFit, ...]]:
        """Fits grouped as L2, Lp, W1p, W2p, in that order."""
        prefix = {"L2": "l2_", "Lp": "lp_", "W1p": "w1p_", "W2p": "w2p_"}
        return {k: tuple(f for f in self.fits if f.name.startswith(prefix[k])) for k in NORM_KINDS}


def fit_exponential_rate(t, y) -> tuple[float, float]:
    """Least-squares decay rate ``r`` of ``y ~ a exp(-r t)`` and the RMS log residual."""
    t = np.asarray(t, dtype=float)
    logy = np.log(np.asarray(y, dtype=float))
    slope, intercept = np.polyfit(t, logy, 1)
    resid = logy - (slope * t + intercept)
    return float(-slope), float(np.sqrt(np.mean(resid**2)))


def usable_extent(t, y, chi: float, floor: float = FLOOR) -> int:
    """Number of leading samples above the numerical floor.

    The floor is ``floor`` or, when the series has dropped more than eight
    decades and its last quarter no longer decays (rate below 5% of
    ``chi/2``), ten times the plateau level.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    level = floor
    q = max(3, t.size // 4)
    tail_t, tail_y = t[-q:], y[-q:]
    if t.size >= 6 and np.all(tail_y > 0) and np.all(np.isfinite(tail_y)):
        rate, _ = fit_exponential_rate(tail_t, tail_y)
        dropped = tail_y.max() < 1e-8 * np.nanmax(y)
        if dropped and rate < 0.05 * chi / 2.0:
            level = max(level, 10.0 * tail_y.max())
    bad = ~(np.isfinite(y) & (y > level))
    return int(np.argmax(bad)) if bad.any() else int(y.size)


def fit_rates(series: LyapunovSeries, chi: float | None = None,
              window: tuple[float, float] | None = None, margin: float = 0.05,
              floor: float = FLOOR, w2p_start: float = 1.0,
              envelope_atol: float = 0.0) -> RateReport:
    """Fit tail decay rates of every norm series and check the L2 envelope.

    Default window is ``[T/2, T]`` with ``T`` the last sample above the
    numerical floor (``t_end`` if the floor is never reached). The W2p
    series is only fitted on ``t >= w2p_start``. A fit passes when its rate
    is at least ``(1 - margin) chi / 2``. Series without three usable points
    in the window are flagged rather than failed.
    """
    chi = series.chi if chi is None else float(chi)
    threshold = (1.0 - margin) * chi / 2.0
    fits = []
    for name in SERIES_NAMES:
        y = series.norms[name]
        t = series.t
        n_ok = usable_extent(t, y, chi, floor)
        if n_ok < 3:
            fits.append(NormFit(name, float("nan"), float("nan"), 0, (float("nan"),) * 2,
                                "FLAGGED", "series at numerical floor"))
            continue
        t_last = t[n_ok - 1]
        lo, hi = (0.5 * t_last, t_last) if window is None else window
        if name.startswith("w2p"):
            lo = max(lo, w2p_start)
        sel = (t >= lo) & (t <= hi) & (np.arange(t.size) < n_ok)
        if sel.sum() < 3:
            fits.append(NormFit(name, float("nan"), float("nan"), int(sel.sum()), (lo, hi),
                                "FLAGGED", "fewer than 3 usable samples in window"))
            continue
        rate, resid = fit_exponential_rate(t[sel], y[sel])
        status = "PASS" if rate >= threshold else "FAIL"
        fits.append(NormFit(name, rate, resid, int(sel.sum()), (float(lo), float(hi)), status))

    envelope = 2.0 * series.Lambda[0] * np.exp(-chi * series.t)
    excess = series.envelope_lhs - envelope * (1.0 + 1e-12) - envelope_atol
    return RateReport(chi, margin, tuple(fits), bool(np.all(excess <= 0)),
                      float(np.max(excess)))
