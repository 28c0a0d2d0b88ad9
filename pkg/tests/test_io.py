import numpy as np
import pytest

from morphogen import read_field_csv, write_field_csv, write_series_csv
from morphogen.io import SERIES_COLUMNS, read_table_csv, write_table_csv
from morphogen.lyapunov import SERIES_NAMES, LyapunovSeries

from conftest import grid_1d, grid_2d

GOLDEN_HEADER = ("t,Lambda,D_Lambda,int_D_Lambda,l2_z1,l2_z2,lp_z1,lp_z2,w1p_z1,w1p_z2,"
                 "w2p_z1,envelope_KLW")


def zero_series(n=4):
    t = np.linspace(0, 1, n)
    z = np.zeros(n)
    return LyapunovSeries(t, z, z, z, {k: z for k in SERIES_NAMES}, z, 1.0, 4.0)


def test_series_header_is_frozen(tmp_path):
    path = write_series_csv(tmp_path / "s.csv", zero_series())
    assert path.read_text().splitlines()[0] == GOLDEN_HEADER
    assert ",".join(SERIES_COLUMNS) == GOLDEN_HEADER


def test_zero_trajectory_gives_zero_columns(tmp_path):
    path = write_series_csv(tmp_path / "s.csv", zero_series())
    data = read_table_csv(path)
    for name in SERIES_COLUMNS[1:]:
        assert np.all(data[name] == 0)
    np.testing.assert_array_equal(data["t"], np.linspace(0, 1, 4))


def test_newlines_and_digits(tmp_path):
    path = write_series_csv(tmp_path / "s.csv", zero_series())
    raw = path.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    g = grid_1d(4)
    text = write_field_csv(tmp_path / "f.csv", g, [1 / 3, 0, 0]).read_text()
    assert "0.33333333333333331" in text


@pytest.mark.parametrize("g", [grid_1d(33), grid_2d((7, 9), north="neumann")])
def test_field_round_trip_is_bit_exact(tmp_path, g):
    f = np.random.default_rng(1).normal(size=g.ndof) * 10.0 ** np.arange(g.ndof) % 7
    write_field_csv(tmp_path / "f.csv", g, f)
    coords, values = read_field_csv(tmp_path / "f.csv", g)
    assert np.array_equal(values, f)
    assert np.array_equal(coords, g.coordinates)
    header = (tmp_path / "f.csv").read_text().splitlines()[0]
    assert header == ("x,value" if g.dimension == 1 else "x,y,value")


def test_field_grid_mismatch(tmp_path):
    write_field_csv(tmp_path / "f.csv", grid_1d(9), np.zeros(8))
    with pytest.raises(ValueError, match="do not match"):
        read_field_csv(tmp_path / "f.csv", grid_1d(17))


def test_write_errors_name_the_path(tmp_path):
    target = tmp_path / "missing" / "f.csv"
    with pytest.raises(OSError, match="missing"):
        write_table_csv(target, {"a": [1.0]})


def test_table_mixed_columns(tmp_path):
    write_table_csv(tmp_path / "t.csv", {"name": ["a", "b"], "x": [1.5, 2.0], "n": [3, 4]})
    data = read_table_csv(tmp_path / "t.csv")
    assert list(data["name"]) == ["a", "b"]
    np.testing.assert_array_equal(data["x"], [1.5, 2.0])
    with pytest.raises(ValueError, match="lengths"):
        write_table_csv(tmp_path / "u.csv", {"a": [1.0], "b": [1.0, 2.0]})
