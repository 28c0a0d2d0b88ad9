from pathlib import Path

import pytest

from morphogen import build_grid

ROOT = Path(__file__).resolve().parent.parent
CONFIGS = ROOT / "configs"

# Lines collected by the acceptance module; printed after the run so they
# appear even with output capture on.
ACCEPTANCE_LINES: list[str] = []


def grid_1d(n=256, left="neumann", right="dirichlet", length=1.0):
    return build_grid(1, length, n, {"left": left, "right": right})


def grid_2d(n=(33, 33), **faces):
    spec = {"west": "neumann", "east": "dirichlet", "south": "dirichlet", "north": "dirichlet"}
    spec.update(faces)
    return build_grid(2, (1.0, 1.0), n, spec)


@pytest.fixture
def default_config_path():
    return CONFIGS / "default_1d.cfg"


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
