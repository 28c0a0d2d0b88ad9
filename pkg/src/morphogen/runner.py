"""Scenario orchestration: eigenvalue, steady state, evolution, verification.

Every output file is first written with a ``.partial`` suffix and renamed only
when the whole run finishes, so an aborted run leaves ``.partial`` files
behind. ``manifest.json`` is written on every run.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from ._accel import USE_NUMBA
from .config import ScenarioConfig
from .errors import ConfigError, NumericalFailure
from .evolution import MassBalanceTracker, iter_integrate, output_schedule
from .io import read_field_csv, write_field_csv, write_series_csv, write_table_csv
from .lyapunov import fit_rates, envelope_allowance, lyapunov_series, spectral_gap_ratio
from .spectral import compute_chi, smallest_eigenvalue
from .steady import picard_steady

log = logging.getLogger(__name__)

MODES = ("eig", "steady", "evolve", "verify")
EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


@dataclass
class Check:
    name: str
    passed: bool
    value: float
    limit: float
    detail: str = ""


@dataclass
class RunManifest:
    mode: str
    config: dict
    config_text: str
    version: str
    numba: bool
    tolerances: dict
    phases: dict = field(default_factory=dict)
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    outputs: list = field(default_factory=list)
    status: str = "running"
    error: str | None = None
    exit_code: int = EXIT_OK

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def to_json(self) -> str:
        data = asdict(self)
        return json.dumps(data, indent=2, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not serialisable: {type(obj)}")


class _Outputs:
    """Writes files as ``name.partial`` and promotes them on success."""

    def __init__(self, out_dir: Path):
        self.dir = out_dir
        self.dir.mkdir(parents=True, exist_ok=True)
        self.pending: list[Path] = []

    def path(self, name: str) -> Path:
        final = self.dir / name
        if final.exists():
            final.unlink()
        p = self.dir / (name + ".partial")
        self.pending.append(p)
        return p

    def commit(self) -> list[str]:
        done = []
        for p in self.pending:
            final = p.with_name(p.name[: -len(".partial")])
            os.replace(p, final)
            done.append(final.name)
        self.pending = []
        return done


def _initial_field(cfg: ScenarioConfig, key: str, grid, steady) -> np.ndarray:
    spec = cfg.values[key]
    if spec == "zero":
        return np.zeros(grid.ndof)
    if spec == "steady":
        return (steady.l_inf if key == "l0" else steady.s_inf).copy()
    if spec.startswith("file:"):
        return read_field_csv(cfg.base_dir / spec[5:].strip(), grid)[1]
    return np.full(grid.ndof, float(spec))


def _tolerances(cfg: ScenarioConfig) -> dict:
    keys = ("picard_tol", "picard_max_iter", "picard_damping", "eig_tol", "eig_max_iter",
            "positivity_tol", "max_halvings", "s_margin", "rate_margin", "energy_tol",
            "gap_slack", "mass_tol", "w2p_start", "window_start", "window_end",
            "ramp_time", "ramp_levels")
    return {k: cfg.values[k] for k in keys}


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None,
                 mode: str = "verify") -> RunManifest:
    """Run ``mode`` on a validated config and write results to ``out_dir``.

    ``eig`` computes the principal eigenpair and chi; ``steady`` the steady
    state; ``evolve`` both plus the trajectory diagnostics; ``verify`` adds
    every pass/fail check. With ``t_end = 0`` no trajectory files are written.
    """
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    out = _Outputs(Path(out_dir if out_dir is not None else cfg.dir))
    manifest = RunManifest(mode, cfg.echo(), cfg.text, __version__, USE_NUMBA, _tolerances(cfg))
    phase = "setup"
    try:
        grid = cfg.grid()
        params = cfg.params(grid).validate(grid)

        if mode in ("eig", "evolve", "verify"):
            phase = "eigenvalue"
            t0 = time.perf_counter()
            eig = smallest_eigenvalue(grid, cfg.eig_tol, cfg.eig_max_iter)
            chi = compute_chi(params.D, eig.lambda1, params.delta, params.epsilon)
            manifest.phases[phase] = time.perf_counter() - t0
            manifest.results.update(lambda1=eig.lambda1, eig_residual=eig.residual,
                                    eig_iterations=eig.iterations, chi=chi)
            write_field_csv(out.path("eigenfield.csv"), grid, eig.eigenfield)

        if mode in ("steady", "evolve", "verify"):
            phase = "steady_state"
            t0 = time.perf_counter()
            steady = picard_steady(grid, params.nu, params.D, params.delta, params.epsilon,
                                   cfg.picard_tol, cfg.picard_max_iter, cfg.picard_damping)
            manifest.phases[phase] = time.perf_counter() - t0
            manifest.results.update(picard_iterations=steady.picard_iterations,
                                    picard_update=steady.final_update_norm,
                                    l_inf_max=float(steady.l_inf.max(initial=0.0)),
                                    l_inf_min=float(steady.l_inf.min(initial=0.0)))
            write_field_csv(out.path("l_inf.csv"), grid, steady.l_inf)
            write_field_csv(out.path("s_inf.csv"), grid, steady.s_inf)
            if mode == "verify":
                manifest.checks.append(Check(
                    "steady_nonnegative", steady.l_inf.min(initial=0.0) >= -1e-12,
                    float(steady.l_inf.min(initial=0.0)), -1e-12))

        if mode in ("evolve", "verify") and cfg.t_end > 0:
            _evolve(cfg, grid, params, steady, chi, out, manifest, mode == "verify")

        manifest.outputs = out.commit()
        manifest.status = "ok" if manifest.passed else "check_failed"
        manifest.exit_code = EXIT_OK if manifest.passed else EXIT_CHECK
    except ConfigError as exc:
        manifest.status, manifest.error, manifest.exit_code = "config_error", str(exc), EXIT_CONFIG
    except (NumericalFailure, ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
        manifest.status = "numerical_failure"
        manifest.error = f"{phase}: {exc}"
        manifest.exit_code = EXIT_NUMERIC
        log.error("phase %s failed: %s", phase, exc)
    finally:
        (out.dir / "manifest.json").write_text(manifest.to_json() + "\n", encoding="utf-8")
    return manifest


def _evolve(cfg, grid, params, steady, chi, out, manifest, verify):
    times = (np.asarray(cfg.output_times) if cfg.output_times is not None
             else output_schedule(cfg.t_end, cfg.dt, cfg.output_stride))
    if times[-1] < cfg.t_end:
        times = np.append(times, cfg.t_end)
    l0 = _initial_field(cfg, "l0", grid, steady)
    s0 = _initial_field(cfg, "s0", grid, steady)

    tracker = MassBalanceTracker(grid, params)
    bounds = {"l_min": np.inf, "s_min": np.inf, "s_max": -np.inf}
    last = {}

    def tap(snaps):
        for snap in snaps:
            if snap.l.size:
                bounds["l_min"] = min(bounds["l_min"], float(snap.l.min()))
                bounds["s_min"] = min(bounds["s_min"], float(snap.s.min()))
                bounds["s_max"] = max(bounds["s_max"], float(snap.s.max()))
            tracker.update(snap)
            if snap.output:
                last["snap"] = snap
            yield snap

    t0 = time.perf_counter()
    snaps = iter_integrate(grid, params, l0, s0, cfg.t_end, cfg.dt, times,
                           positivity_tol=cfg.positivity_tol, max_halvings=cfg.max_halvings,
                           ramp_time=cfg.ramp_time, ramp_levels=cfg.ramp_levels, every_step=True)
    series = lyapunov_series(grid, steady, params, tap(snaps), chi)
    manifest.phases["integrate_and_diagnostics"] = time.perf_counter() - t0

    write_series_csv(out.path("series.csv"), series)
    write_field_csv(out.path("l_final.csv"), grid, last["snap"].l)
    write_field_csv(out.path("s_final.csv"), grid, last["snap"].s)

    write_table_csv(out.path("mass_balance.csv"), tracker.table())
    mass_rel = tracker.relative_defect()

    energy = series.energy_residual()
    gap = spectral_gap_ratio(series)
    manifest.results.update(
        snapshots=int(series.t.size), l_min=bounds["l_min"], s_min=bounds["s_min"],
        s_max=bounds["s_max"], energy_residual_max=float(energy.max()),
        mass_defect_rel=mass_rel,
        gap_ratio_max=float(gap.max()), Lambda0=float(series.Lambda[0]))
    if not verify:
        return

    t0 = time.perf_counter()
    report = fit_rates(series, chi, cfg.fit_window, cfg.rate_margin,
                       w2p_start=cfg.w2p_start, envelope_atol=envelope_allowance(grid, params))
    manifest.phases["fit_rates"] = time.perf_counter() - t0
    write_table_csv(out.path("rates.csv"), {
        "series": [f.name for f in report.fits],
        "rate": [float(f.rate) for f in report.fits],
        "threshold": [float(report.threshold)] * len(report.fits),
        "fit_residual": [float(f.fit_residual) for f in report.fits],
        "n_points": [f.n_points for f in report.fits],
        "window_start": [float(f.window[0]) for f in report.fits],
        "window_end": [float(f.window[1]) for f in report.fits],
        "status": [f.status for f in report.fits],
    })

    checks = manifest.checks
    checks.append(Check("l_nonnegative", bounds["l_min"] >= -cfg.positivity_tol,
                        bounds["l_min"], -cfg.positivity_tol))
    checks.append(Check("s_nonnegative", bounds["s_min"] >= 0.0, bounds["s_min"], 0.0))
    checks.append(Check("s_below_one", bounds["s_max"] <= 1.0 - cfg.s_margin,
                        bounds["s_max"], 1.0 - cfg.s_margin))
    checks.append(Check("energy_identity", float(energy.max()) <= cfg.energy_tol,
                        float(energy.max()), cfg.energy_tol))
    checks.append(Check("mass_balance", mass_rel <= cfg.mass_tol, mass_rel, cfg.mass_tol))
    checks.append(Check("spectral_gap", float(gap.max()) <= 1.0 + cfg.gap_slack,
                        float(gap.max()), 1.0 + cfg.gap_slack))
    checks.append(Check("l2_envelope", report.envelope_ok, report.envelope_max_excess, 0.0))
    for f in report.fits:
        checks.append(Check(f"rate_{f.name}", f.passed, float(f.rate), report.threshold,
                            f.note or f"window [{f.window[0]:.4g}, {f.window[1]:.4g}]"))
