"""Flat ``key = value`` scenario files with ``[section]`` headers.

Example (the default 1D scenario)::

    [grid]
    dimension = 1
    extents = 1.0
    nodes = 256
    left = neumann
    right = dirichlet

    [params]
    D = 1.0
    delta = 1.0
    epsilon = 1.0

    [nu]
    value = 1.0

    [time]
    t_end = 40
    dt = 1e-3

Comments start with ``#``. Lists are comma separated. Unknown sections or keys,
duplicates, missing required keys, bad types and constraint violations raise
:class:`~morphogen.errors.ConfigError` naming the key and line.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .evolution import ModelParams
from .io import read_field_csv
from .mesh import Grid, build_grid, face_names

REQUIRED = object()


def _float(text):
    return float(text)


def _int(text):
    val = float(text)
    if val != int(val):
        raise ValueError("not an integer")
    return int(val)


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _ints(text):
    return tuple(_int(x) for x in text.split(",") if x.strip())


def _str(text):
    return text.strip()


def _opt_float(text):
    return None if text.strip().lower() in ("", "none") else float(text)


# section -> key -> (parser, default)
SCHEMA: dict[str, dict[str, tuple]] = {
    "grid": {
        "dimension": (_int, REQUIRED),
        "extents": (_floats, REQUIRED),
        "nodes": (_ints, REQUIRED),
        **{face: (_str, None) for face in ("left", "right", "west", "east", "south", "north")},
    },
    "params": {
        "D": (_float, REQUIRED),
        "delta": (_float, REQUIRED),
        "epsilon": (_float, REQUIRED),
        "p": (_float, 4.0),
    },
    "nu": {
        "value": (_float, None),
        "table": (_floats, None),
    },
    "initial": {
        "l0": (_str, "zero"),
        "s0": (_str, "zero"),
    },
    "time": {
        "t_end": (_float, REQUIRED),
        "dt": (_float, REQUIRED),
        "output_stride": (_int, 1),
        "output_times": (_floats, None),
        "ramp_time": (_float, 0.0),
        "ramp_levels": (_int, 10),
    },
    "tolerances": {
        "picard_tol": (_float, 1e-10),
        "picard_max_iter": (_int, 500),
        "picard_damping": (_float, 1.0),
        "eig_tol": (_float, 1e-10),
        "eig_max_iter": (_int, 10000),
        "positivity_tol": (_float, 1e-10),
        "max_halvings": (_int, 20),
        "s_margin": (_float, 1e-8),
        "rate_margin": (_float, 0.05),
        "energy_tol": (_float, 1e-3),
        "gap_slack": (_float, 0.01),
        "mass_tol": (_float, 5e-3),
    },
    "fit": {
        "window_start": (_opt_float, None),
        "window_end": (_opt_float, None),
        "w2p_start": (_float, 1.0),
    },
    "output": {
        "dir": (_str, "out"),
    },
}

POSITIVE = ("D", "delta", "epsilon", "dt", "picard_tol", "eig_tol", "positivity_tol",
            "picard_max_iter", "eig_max_iter", "output_stride", "s_margin",
            "energy_tol", "mass_tol")


@dataclass(frozen=True)
class ScenarioConfig:
    values: dict
    lines: dict = field(default_factory=dict)
    text: str = ""
    base_dir: Path = Path(".")

    def __getattr__(self, name):
        try:
            return self.values[name]
        except KeyError:
            raise AttributeError(name) from None

    def grid(self) -> Grid:
        faces = {f: self.values[f] for f in face_names(self.dimension)}
        return build_grid(self.dimension, self.extents, self.nodes, faces)

    def nu_array(self, grid: Grid) -> np.ndarray:
        if self.values["nu_table"] is not None:
            return np.asarray(self.values["nu_table"], dtype=float)
        return np.full(grid.neumann_nodes.size, self.values["nu_value"])

    def params(self, grid: Grid) -> ModelParams:
        return ModelParams(self.D, self.delta, self.epsilon, self.nu_array(grid), self.p)

    @property
    def fit_window(self):
        lo, hi = self.window_start, self.window_end
        if lo is None and hi is None:
            return None
        return (0.0 if lo is None else lo, np.inf if hi is None else hi)

    def echo(self) -> dict:
        """JSON-friendly copy of every resolved setting."""
        out = {}
        for k, v in self.values.items():
            out[k] = list(v) if isinstance(v, tuple) else v
        return out


def _tokenize(text: str):
    section = None
    seen = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"malformed section header {raw.strip()!r}", line=lineno)
            section = line[1:-1].strip()
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", key=section, line=lineno)
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", line=lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if section is None:
            raise ConfigError("key outside of any [section]", key=key, line=lineno)
        if key not in SCHEMA[section]:
            raise ConfigError(f"unknown key in [{section}]", key=key, line=lineno)
        if (section, key) in seen:
            raise ConfigError(f"duplicate key (first on line {seen[(section, key)]})",
                              key=key, line=lineno)
        seen[(section, key)] = lineno
        yield section, key, value, lineno


def parse_config(text: str, base_dir: str | Path = ".") -> ScenarioConfig:
    """Parse and fully validate scenario text."""
    values, lines = {}, {}
    for section, key, raw, lineno in _tokenize(text):
        parser, _ = SCHEMA[section][key]
        try:
            values[key] = parser(raw)
        except ValueError:
            raise ConfigError(f"cannot parse {raw!r} as {parser.__name__.strip('_')}",
                              key=key, line=lineno) from None
        lines[key] = lineno
    for section, keys in SCHEMA.items():
        for key, (_, default) in keys.items():
            if key in values:
                continue
            if default is REQUIRED:
                raise ConfigError(f"missing required key in [{section}]", key=key)
            values[key] = default

    # nu: value xor table
    if values["value"] is None and values["table"] is None:
        raise ConfigError("[nu] needs 'value' or 'table'", key="value")
    if values["value"] is not None and values["table"] is not None:
        raise ConfigError("[nu] takes either 'value' or 'table', not both",
                          key="table", line=lines.get("table"))
    values["nu_value"] = values.pop("value")
    values["nu_table"] = values.pop("table")

    cfg = ScenarioConfig(values, lines, text, Path(base_dir))
    _validate(cfg)
    return cfg


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


def _validate(cfg: ScenarioConfig) -> None:
    v, line = cfg.values, cfg.lines.get

    def fail(key, msg):
        raise ConfigError(msg, key=key, line=line(key))

    for key in POSITIVE:
        if not (np.isfinite(v[key]) and v[key] > 0):
            fail(key, f"must be positive, got {v[key]}")

    dim = v["dimension"]
    if dim not in (1, 2):
        fail("dimension", f"must be 1 or 2, got {dim}")
    for key in ("extents", "nodes"):
        if len(v[key]) != dim:
            fail(key, f"needs {dim} entries, got {len(v[key])}")
    names = face_names(dim)
    for face in ("left", "right", "west", "east", "south", "north"):
        if face in names and v[face] is None:
            fail(face, f"missing boundary condition for face '{face}'")
        if face not in names and v[face] is not None:
            fail(face, f"face '{face}' does not exist in dimension {dim}")
    try:
        grid = cfg.grid()
    except ValueError as exc:
        fail("nodes" if "nodes" in str(exc) else names[0], str(exc))

    if not v["p"] > dim:
        fail("p", f"must exceed the dimension {dim}, got {v['p']}")
    if v["nu_value"] is not None and not (np.isfinite(v["nu_value"]) and v["nu_value"] >= 0):
        fail("value", f"influx nu must be nonnegative, got {v['nu_value']}")
    if v["nu_table"] is not None:
        table = np.asarray(v["nu_table"])
        if table.size != grid.neumann_nodes.size:
            fail("table", f"needs {grid.neumann_nodes.size} entries (one per Neumann node), "
                          f"got {table.size}")
        if np.any(~np.isfinite(table)) or np.any(table < 0):
            fail("table", "influx nu must be nonnegative")

    if not (np.isfinite(v["t_end"]) and v["t_end"] >= 0):
        fail("t_end", f"must be nonnegative, got {v['t_end']}")
    if v["output_times"] is not None:
        times = np.asarray(v["output_times"])
        if np.any(times < 0) or np.any(times > v["t_end"]) or np.any(np.diff(times) <= 0):
            fail("output_times", "must be strictly increasing within [0, t_end]")
    if not (np.isfinite(v["ramp_time"]) and v["ramp_time"] >= 0):
        fail("ramp_time", f"must be nonnegative, got {v['ramp_time']}")
    if not 0 <= v["ramp_levels"] <= 40:
        fail("ramp_levels", f"must be in [0, 40], got {v['ramp_levels']}")
    if not 0 < v["picard_damping"] <= 1:
        fail("picard_damping", f"must be in (0, 1], got {v['picard_damping']}")
    if v["max_halvings"] < 0:
        fail("max_halvings", "must be nonnegative")
    if not 0 <= v["rate_margin"] < 1:
        fail("rate_margin", f"must be in [0, 1), got {v['rate_margin']}")
    if not v["gap_slack"] >= 0:
        fail("gap_slack", f"must be nonnegative, got {v['gap_slack']}")
    lo, hi = v["window_start"], v["window_end"]
    if lo is not None and hi is not None and not lo < hi:
        fail("window_end", "must exceed window_start")

    for key in ("l0", "s0"):
        spec = v[key]
        if spec in ("zero", "steady"):
            continue
        if spec.startswith("file:"):
            path = cfg.base_dir / spec[5:].strip()
            try:
                _, values = read_field_csv(path, grid)
            except (OSError, ValueError) as exc:
                fail(key, f"cannot use initial data {path}: {exc}")
            if key == "l0" and not np.all(values >= 0):
                fail(key, "initial morphogen must be nonnegative")
            if key == "s0" and not np.all((values >= 0) & (values < 1)):
                fail(key, "initial occupancy must lie in [0, 1)")
            continue
        try:
            c = float(spec)
        except ValueError:
            fail(key, f"expected zero, steady, a number or file:<path>, got {spec!r}")
        if key == "l0" and not c >= 0:
            fail(key, f"initial morphogen must be nonnegative, got {c}")
        if key == "s0" and not 0 <= c < 1:
            fail(key, f"initial occupancy must lie in [0, 1), got {c}")
