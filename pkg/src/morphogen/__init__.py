"""Morphogen transport with receptor binding: steady states, evolution and decay checks."""

__version__ = "0.1.0"

from .errors import ConfigError, ConvergenceError, MorphogenError, NumericalFailure, StepRejected
from .mesh import Grid, build_grid, laplacian_operator, neumann_source
from .spectral import EigenResult, compute_chi, smallest_eigenvalue
from .steady import SteadyState, apply_T, f_reaction, occupancy, picard_steady
from .evolution import (ModelParams, Snapshot, Trajectory, integrate, iter_integrate,
                        mass_balance_residual, s_explicit_solution, step)
from .lyapunov import (LyapunovSeries, dissipation, energy_identity_residual, fit_rates,
                       lyapunov, lyapunov_series, spectral_gap_ratio)
from .config import ScenarioConfig, load_config, parse_config
from .io import read_field_csv, write_field_csv, write_series_csv

__all__ = [
    "ConfigError", "ConvergenceError", "MorphogenError", "NumericalFailure", "StepRejected",
    "Grid", "build_grid", "laplacian_operator", "neumann_source",
    "EigenResult", "compute_chi", "smallest_eigenvalue",
    "SteadyState", "apply_T", "f_reaction", "occupancy", "picard_steady",
    "ModelParams", "Snapshot", "Trajectory", "integrate", "iter_integrate",
    "mass_balance_residual", "s_explicit_solution", "step",
    "LyapunovSeries", "dissipation", "energy_identity_residual", "fit_rates", "lyapunov",
    "lyapunov_series", "spectral_gap_ratio",
    "ScenarioConfig", "load_config", "parse_config",
    "read_field_csv", "write_field_csv", "write_series_csv",
]
