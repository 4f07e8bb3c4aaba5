import math

import numpy as np
import pytest

from zrplab.pde import (CFLViolation, GridSolution, PhibarTable, initial_grid, self_convergence, solve,
                        step_once, weak_error)
from zrplab.schema import check_csv
from zrplab.thermo import JumpRateSpec, ThermoProfile

P0 = ThermoProfile(JumpRateSpec.evans(0.0))
P4 = ThermoProfile(JumpRateSpec.evans(4.0))


def sine(u):
    return 0.5 + 0.3 * np.sin(2 * np.pi * u)


def test_phibar_table_close_to_exact():
    tab = PhibarTable(P0, 2.0)
    r = np.linspace(0, 2, 333)
    assert np.max(np.abs(tab(r) - r / (1 + r))) < 1e-7
    tab4 = PhibarTable(P4, 3.0)
    assert np.all(tab4(np.array([0.6, 0.8, 3.0])) == 1.0)


def test_mass_conservation_and_positivity():
    sol = solve(initial_grid(sine, 128), P0, 0.01, 128)
    assert sol.max_mass_drift <= 1e-12
    assert abs(sol.masses[-1] - 0.5) <= 1e-12
    assert sol.rho.min() > 0
    assert sol.cfl <= 0.5 + 1e-12


def test_constant_is_steady():
    rho0 = np.full(64, 0.7)
    sol = solve(rho0, P0, 0.01, 64)
    assert np.array_equal(sol.rho, rho0)


def test_linear_regime_decay_rate():
    # small perturbation of b=0 at rho=1: Phi'(1) = 1/4, so the mode decays like exp(-4 pi^2 t / 4)
    G = 256
    amp = 1e-4
    rho0 = initial_grid(lambda u: 1.0 + amp * np.cos(2 * np.pi * u), G)
    T = 0.02
    sol = solve(rho0, P0, T, G)
    u = np.arange(G) / G
    got = 2 * np.mean((sol.rho - 1.0) * np.cos(2 * np.pi * u))
    assert got == pytest.approx(amp * math.exp(-math.pi ** 2 * T), rel=2e-3)


def test_self_convergence_order():
    res = self_convergence(sine, P0, 0.01, grids=(64, 128, 256))
    assert res["order"] >= 1.8
    assert res["max_mass_drift"] <= 1e-12


def test_plateau_invariance_one_step():
    G = 64
    u = np.arange(G) / G
    rho = np.where((u > 0.25) & (u < 0.75), 2.0, 0.2)
    new = step_once(rho, P4, G)
    interior = (u > 0.25 + 1.5 / G) & (u < 0.75 - 1.5 / G)
    assert np.array_equal(new[interior], rho[interior])
    changed = np.flatnonzero(new != rho)
    assert set(changed) <= {16, 17, 47, 48, 15, 49}


def test_condensate_initial_grid():
    r = initial_grid(lambda u: 0.2 + 0 * u, 100, condensate=(0.5, 0.3))
    assert r[50] == pytest.approx(0.2 + 30.0)
    assert math.fsum(r) / 100 == pytest.approx(0.5)


def test_two_dimensional_solve():
    G = 32
    rho0 = initial_grid(lambda u, v: 0.4 + 0.2 * np.cos(2 * np.pi * u) * np.cos(2 * np.pi * v), G, d=2)
    sol = solve(rho0, P4, 0.002, G, d=2)
    assert sol.max_mass_drift <= 1e-12
    r = sol.rho.reshape(G, G)
    assert np.allclose(r, r.T, atol=1e-13)


def test_cfl_violation():
    with pytest.raises(CFLViolation):
        solve(np.full(8, 0.1), P0, 0.01, 8, safety=1.5)


def test_energy_is_finite_and_grid_stable():
    e = [solve(initial_grid(sine, G), P0, 0.01, G).energy for G in (64, 128)]
    assert all(np.isfinite(e)) and e[1] == pytest.approx(e[0], rel=0.02)


def test_weak_error_of_pde_against_itself():
    sol = solve(initial_grid(sine, 64), P0, 0.005, 64)
    pos = sol.positions()
    tests = [lambda u: np.ones_like(u), lambda u: np.cos(2 * np.pi * u)]
    assert weak_error(pos, sol.rho / 64, sol.rho, pos, tests) <= 1e-15


def test_write_outputs(tmp_path):
    sol = solve(initial_grid(sine, 16), P0, 0.01, 16, snapshot_times=[0.005])
    sol.write(tmp_path / "p.csv", tmp_path / "p.json")
    assert check_csv(tmp_path / "p.csv", "pde") == 3 * 16
    assert sol.times == [0.0, 0.005, 0.01]
