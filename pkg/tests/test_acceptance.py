"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one ``[PASS]``/``[FAIL]`` line; the lines are printed in
the terminal summary (see ``conftest.py``). Run on its own with
``python tests/test_acceptance.py``.
"""

import sys
import time

import numpy as np
import pytest

from morphogen import (ModelParams, apply_T, build_grid, compute_chi, integrate, load_config,
                       picard_steady, s_explicit_solution, smallest_eigenvalue)
from morphogen.evolution import output_schedule
from morphogen.io import read_table_csv
from morphogen.lyapunov import lyapunov_series
from morphogen.runner import run_scenario

from conftest import ACCEPTANCE_LINES, CONFIGS, grid_1d

LAMBDA_1D = (np.pi / 2) ** 2
LAMBDA_2D = (np.pi / 2) ** 2 + np.pi**2


def record(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def run_config(name, tmp_path_factory):
    cfg = load_config(CONFIGS / name)
    out = tmp_path_factory.mktemp(name.split(".")[0])
    t0 = time.perf_counter()
    manifest = run_scenario(cfg, out, "verify")
    elapsed = time.perf_counter() - t0
    return cfg, manifest, out, elapsed


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    return run_config("default_1d.cfg", tmp_path_factory)


@pytest.fixture(scope="module")
def smoke_run(tmp_path_factory):
    return run_config("smoke_2d.cfg", tmp_path_factory)


def check(manifest, name):
    (c,) = [c for c in manifest.checks if c.name == name]
    return c


def test_criterion_1_eigenvalue_oracle():
    t0 = time.perf_counter()
    lams = {n: smallest_eigenvalue(grid_1d(n)).lambda1 for n in (128, 256, 512)}
    elapsed = time.perf_counter() - t0
    errs = np.array([abs(lams[n] - LAMBDA_1D) for n in (128, 256, 512)])
    orders = np.log2(errs[:-1] / errs[1:])
    ok = errs[-1] < 1e-3 and np.all((orders >= 1.9) & (orders <= 2.1)) and elapsed < 5.0
    record(1, "eigenvalue oracle", ok,
           f"|err| at N=512 {errs[-1]:.2e}, orders {orders.round(3).tolist()}, {elapsed:.2f}s")


def test_criterion_2_steady_uniqueness():
    g = grid_1d(256)
    t0 = time.perf_counter()
    a = picard_steady(g, 1.0, 1.0, 1.0, 1.0)
    b = picard_steady(g, 1.0, 1.0, 1.0, 1.0, u0=np.full(g.ndof, 100.0))
    elapsed = time.perf_counter() - t0
    gap = np.max(np.abs(a.l_inf - b.l_inf))
    resid = np.max(np.abs(apply_T(g, a.l_inf, 1.0, 1.0, 1.0, 1.0) - a.l_inf))
    ok = gap < 1e-8 and resid < 1e-10 and a.l_inf.min() >= -1e-12 and elapsed < 10.0
    record(2, "steady-state uniqueness", ok,
           f"sup gap {gap:.1e}, residual {resid:.1e}, min {a.l_inf.min():.1e}, {elapsed:.2f}s")


def test_criterion_3_sign_bounds(default_run):
    cfg, m, _, elapsed = default_run
    r = m.results
    ok = (r["l_min"] >= -1e-10 and r["s_min"] >= 0 and r["s_max"] <= 1 - 1e-8
          and elapsed < 60.0 and (cfg.t_end, cfg.dt, cfg.nodes) == (40, 1e-3, (256,)))
    record(3, "sign bounds", ok,
           f"min l {r['l_min']:.2e}, s in [{r['s_min']:.2e}, {r['s_max']:.4f}], {elapsed:.1f}s")


def _energy_residual_max(dt):
    g = grid_1d(256)
    p = ModelParams(1.0, 1.0, 1.0, 1.0)
    st_ = picard_steady(g, 1.0, 1.0, 1.0, 1.0)
    traj = integrate(g, p, np.zeros(g.ndof), np.zeros(g.ndof), 2.0, dt,
                     output_schedule(2.0, dt, 1))
    return lyapunov_series(g, st_, p, traj, 1.0).energy_residual().max()


def test_criterion_4_energy_identity(default_run):
    _, _, out, _ = default_run
    series = read_table_csv(out / "series.csv")
    lam, integral = series["Lambda"], series["int_D_Lambda"]
    resid = np.abs(lam + integral - lam[0]) / lam[0]
    halving = [_energy_residual_max(dt) for dt in (2e-3, 1e-3, 5e-4)]
    ratios = np.array(halving[:-1]) / np.array(halving[1:])
    ok = resid.max() <= 1e-3 and np.all((ratios > 1.7) & (ratios < 2.3))
    record(4, "energy identity", ok,
           f"max residual {resid.max():.2e}, dt-halving ratios {ratios.round(3).tolist()}")


def test_criterion_5_spectral_gap(default_run):
    _, m, out, _ = default_run
    series = read_table_csv(out / "series.csv")
    chi_ref = compute_chi(1.0, LAMBDA_1D, 1.0, 1.0)
    chi = m.results["chi"]
    num = chi * series["Lambda"]
    ratio = np.where(num > 0, num / np.where(num > 0, series["D_Lambda"], 1.0), 0.0)
    ok = (abs(chi_ref - 1.0523) < 5e-5 and abs(chi - chi_ref) < 1e-4
          and ratio.max() <= 1.01)
    record(5, "spectral-gap inequality", ok,
           f"chi {chi:.5f} (closed form {chi_ref:.5f}), max chi*Lambda/D_Lambda "
           f"{ratio.max():.4f}")


def test_criterion_6_l2_envelope(default_run):
    _, m, out, _ = default_run
    series = read_table_csv(out / "series.csv")
    lhs = series["l2_z1"] ** 2 + 2.0 * series["l2_z2"] ** 2
    env = series["envelope_KLW"]
    above_floor = env > 1e-24
    ok = check(m, "l2_envelope").passed and np.all(lhs[above_floor] <= env[above_floor])
    record(6, "L2 decay envelope", ok,
           f"max lhs/envelope {np.max(lhs[above_floor] / env[above_floor]):.4f}, "
           f"{(~above_floor).sum()} samples at the floor checked with the absolute allowance")


def test_criterion_7_rates(default_run):
    _, m, out, _ = default_run
    rates = read_table_csv(out / "rates.csv")
    by = {n: i for i, n in enumerate(rates["series"])}
    chi = m.results["chi"]
    threshold = 0.95 * chi / 2
    picked = ("w1p_z1", "w1p_z2", "w2p_z1")
    got = {n: rates["rate"][by[n]] for n in picked}
    ok = (all(rates["status"][by[n]] == "PASS" and got[n] >= threshold for n in picked)
          and rates["window_start"][by["w2p_z1"]] >= 1.0 and m.exit_code == 0)
    record(7, "rate verification", ok,
           ", ".join(f"{n} {v:.3f}" for n, v in got.items()) + f" vs threshold {threshold:.3f}")


def test_criterion_8_s_oracle():
    g = grid_1d(256)
    p = ModelParams(1.0, 1.0, 1.0, 1.0)
    st_ = picard_steady(g, 1.0, 1.0, 1.0, 1.0)
    traj = integrate(g, p, np.zeros(g.ndof), np.zeros(g.ndof), 1.0, 1e-3,
                     output_schedule(1.0, 1e-3, 1))
    s, factor = s_explicit_solution(g, traj.times, traj.l, traj.initial.s, st_, p,
                                    return_factor=True)
    diff = np.max(np.abs(s[-1] - traj.s[-1]))
    bound = np.exp(-(p.delta + p.epsilon) * traj.times)
    ok = diff < 1e-4 and np.all(factor.max(axis=1) <= bound * (1 + 1e-12))
    record(8, "s-oracle agreement", ok,
           f"sup |s - s_oracle| at T=1 {diff:.2e}, max ||A(t)|| e^((delta+eps)t) "
           f"{np.max(factor.max(axis=1) / bound):.6f}")


@pytest.mark.slow
def test_criterion_9_smoke_2d(smoke_run):
    cfg, m, _, elapsed = smoke_run
    g = cfg.grid()
    lam = m.results["lambda1"]
    a = picard_steady(g, 1.0, 1.0, 1.0, 1.0)
    b = picard_steady(g, 1.0, 1.0, 1.0, 1.0, u0=np.full(g.ndof, 100.0))
    resid = np.max(np.abs(apply_T(g, a.l_inf, 1.0, 1.0, 1.0, 1.0) - a.l_inf))
    uniq = (np.max(np.abs(a.l_inf - b.l_inf)) < 1e-8 and resid < 1e-10
            and a.l_inf.min() >= -1e-12)
    r = m.results
    signs = r["l_min"] >= -1e-10 and r["s_min"] >= 0 and r["s_max"] <= 1 - 1e-8
    energy = r["energy_residual_max"] <= 1e-3
    gap = r["gap_ratio_max"] <= 1.01
    envelope_ok = check(m, "l2_envelope").passed
    ok = (abs(lam - LAMBDA_2D) < 1e-2 and g.nodes == (128, 128) and uniq and signs
          and energy and gap and envelope_ok and elapsed < 300)
    record(9, "2D smoke", ok,
           f"lambda1 err {abs(lam - LAMBDA_2D):.2e}, uniqueness {uniq}, signs {signs}, "
           f"energy {r['energy_residual_max']:.2e}, gap {r['gap_ratio_max']:.3f}, "
           f"envelope {envelope_ok}, {elapsed:.0f}s")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
