import math

import numpy as np
import pytest
from scipy import stats

from zrplab import rng as rngmod
from zrplab.ensembles import InitialCondition, build_canonical_table, sample_canonical, sample_initial
from zrplab.lattice import Lattice
from zrplab.sim import (EventBudgetExceeded, ZeroRangeProcess, block_average, double_block_average)
from zrplab.empirical import consecutive_average_bound
from zrplab.thermo import CapacityError, JumpRateSpec, ThermoProfile

B0 = JumpRateSpec.evans(0.0)
B4 = JumpRateSpec.evans(4.0)


def test_lattice_neighbors_symmetric():
    for d, N in ((1, 7), (2, 5)):
        lat = Lattice(N, d)
        nb = lat.neighbors
        assert nb.shape == (N ** d, 2 * d)
        for x in range(lat.n_sites):
            for y in nb[x]:
                assert x in nb[y]


def test_total_rate_example():
    proc = ZeroRangeProcess(B0, Lattice(4), [1, 0, 2, 0])
    assert proc.total_rate == 64.0


def test_frozen_lattice():
    proc = ZeroRangeProcess(B0, Lattice(8), np.zeros(8, dtype=int))
    ev = proc.step()
    assert ev.dt == math.inf and ev.x == -1
    assert proc.run_until(1.0) == 0 and proc.t == 1.0


def test_run_until_now_does_nothing():
    proc = ZeroRangeProcess(B0, Lattice(8), np.ones(8, dtype=int), t=0.3)
    assert proc.run_until(0.3) == 0
    with pytest.raises(ValueError):
        proc.run_until(0.1)


def test_step_moves_one_particle_to_a_neighbor():
    lat = Lattice(6, 2)
    occ = np.arange(36) % 3
    proc = ZeroRangeProcess(B4, lat, occ, seed=4)
    for _ in range(200):
        before = proc.occ.copy()
        ev = proc.step()
        assert ev.dt > 0
        assert before[ev.x] - 1 == proc.occ[ev.x]
        assert lat.neighbors[ev.x, ev.direction] == ev.y
        assert proc.occ.sum() == occ.sum()


def test_waiting_time_is_exponential():
    proc = ZeroRangeProcess(B0, Lattice(4), [1, 0, 0, 0], seed=1)
    dts = np.array([proc.step().dt for _ in range(4000)])
    # one particle: rate N^2 * 2d * g(1) = 32
    assert stats.kstest(dts, "expon", args=(0, 1 / 32)).pvalue > 0.01


def test_single_particle_uniform():
    N = 8
    proc = ZeroRangeProcess(B0, Lattice(N), np.eye(1, N, 0, dtype=int)[0], seed=0, record=True)
    proc.run_until(400.0)
    traj = proc.trajectory()
    snaps = traj.snapshots(np.arange(1, 4001) * 0.1)
    pos = snaps.argmax(axis=1)
    counts = np.bincount(pos, minlength=N)
    assert stats.chisquare(counts).pvalue > 0.01


def test_conservation_audit_mode():
    prof = ThermoProfile(B4)
    lat = Lattice(32)
    occ = sample_initial(InitialCondition.with_condensate(0.3, 0.5, 1.0), lat, prof, rngmod.stream(0))
    proc = ZeroRangeProcess(B4, lat, occ, seed=0, audit=True)
    proc.run_until(0.02)
    assert proc.occ.sum() == occ.sum()


def test_canonical_law_is_stationary():
    lat = Lattice(8)
    table = build_canonical_table(B4, 8, 4)
    occ = sample_canonical(table, rngmod.stream(3, 0, rngmod.INITIAL))
    proc = ZeroRangeProcess(B4, lat, occ, seed=3)
    vals = np.empty(10_000, dtype=int)
    for i in range(vals.size):
        proc.run_until((i + 1) * 0.5)
        vals[i] = proc.occ[0]
    p = table.marginal()
    expected = p * vals.size
    keep = expected >= 5
    obs = np.bincount(vals, minlength=5)
    o = np.append(obs[keep], obs[~keep].sum())
    e = np.append(expected[keep], expected[~keep].sum())
    if e[-1] == 0:
        o, e = o[:-1], e[:-1]
    assert stats.chisquare(o, e).pvalue > 0.01


def test_stationary_mean_jump_rate():
    prof = ThermoProfile(B0)
    lat = Lattice(64)
    ic = InitialCondition.grand_canonical(0.5)
    T = 0.1
    vals = []
    for r in range(20):
        occ = sample_initial(ic, lat, prof, rngmod.stream(8, r, rngmod.INITIAL))
        proc = ZeroRangeProcess(B0, lat, occ, seed=8, replica=r, record=True)
        proc.run_until(T)
        I = proc.trajectory().integrate([T], psi=B0.table[: occ.sum() + 2])[0]
        vals.append(I.sum() / lat.n_sites / T)
    vals = np.array(vals)
    se = vals.std(ddof=1) / math.sqrt(vals.size)
    assert abs(vals.mean() - 1 / 3) <= 3 * se


def test_event_integrals_match_riemann_sums():
    lat = Lattice(16)
    occ = np.array([3, 0, 1, 2, 0, 0, 4, 1, 0, 2, 1, 0, 0, 3, 1, 0])
    proc = ZeroRangeProcess(B4, lat, occ, seed=6, record=True)
    T = 0.01
    proc.run_until(T)
    traj = proc.trajectory()
    assert traj.n_events > 10
    g = B4.table[: occ.sum() + 2]
    exact = traj.integrate([T], psi=g)[0].sum()
    h = 1e-6
    grid = (np.arange(int(round(T / h))) + 0.5) * h
    riemann = g[traj.snapshots(grid)].sum() * h
    assert abs(riemann - exact) / exact < 1e-3


def test_time_dependent_weight_uses_midpoints():
    lat = Lattice(4)
    proc = ZeroRangeProcess(B0, lat, np.zeros(4, dtype=int), record=True)
    proc.occ[:] = 0
    traj = proc.trajectory()
    traj.occ0 = np.array([2, 0, 0, 1])
    traj.t_end = 1.0
    I = traj.integrate([1.0], psi=np.arange(5.0), a=lambda t: 2 * t)[0]
    assert np.allclose(I, [2.0, 0, 0, 1.0])


def test_checkpoint_resume_is_bit_exact(tmp_path):
    prof = ThermoProfile(B4)
    lat = Lattice(32)
    occ = sample_initial(InitialCondition.grand_canonical(0.4), lat, prof, rngmod.stream(5))
    full = ZeroRangeProcess(B4, lat, occ, seed=5)
    full.run_until(0.05)
    part = ZeroRangeProcess(B4, lat, occ, seed=5)
    part.run_until(0.0213)
    part.save(tmp_path / "ck.json")
    resumed = ZeroRangeProcess.load(tmp_path / "ck.json", B4)
    resumed.run_until(0.05)
    assert np.array_equal(full.occ, resumed.occ)
    assert full.event_count == resumed.event_count
    assert full.checkpoint() == resumed.checkpoint()


def test_split_runs_match_single_run():
    lat = Lattice(16)
    occ = np.full(16, 2)
    a = ZeroRangeProcess(B0, lat, occ, seed=9)
    a.run_until(0.1)
    b = ZeroRangeProcess(B0, lat, occ, seed=9)
    for t in np.linspace(0.01, 0.1, 10):
        b.run_until(t)
    assert np.array_equal(a.occ, b.occ) and a.event_count == b.event_count


def test_rate_tree_consistency_after_many_events(monkeypatch):
    # no periodic rebuild, so the check sees the incrementally maintained tree
    monkeypatch.setattr("zrplab.sim.REBUILD_EVERY", 10 ** 12)
    lat = Lattice(256)
    occ = np.full(256, 2)
    proc = ZeroRangeProcess(B4, lat, occ, seed=1)
    while proc.event_count < 1_000_000:
        proc.run_until(proc.t + 0.05)
    assert proc.check_rates(rtol=1e-9) <= 1e-9


def test_event_budget():
    proc = ZeroRangeProcess(B0, Lattice(16), np.full(16, 1), event_budget=100)
    with pytest.raises(EventBudgetExceeded):
        proc.run_until(10.0)
    assert proc.event_count == 100
    assert proc.occ.sum() == 16


def test_capacity_error():
    spec = JumpRateSpec.evans(0.0, k_max=5)
    with pytest.raises(CapacityError):
        ZeroRangeProcess(spec, Lattice(4), [6, 0, 0, 0])
    proc = ZeroRangeProcess(spec, Lattice(4), [5, 1, 0, 0], seed=0)
    with pytest.raises(CapacityError):
        proc.run_until(100.0)


def test_block_average_examples():
    lat = Lattice(4)
    eta = np.array([3, 0, 0, 3])
    assert block_average(eta, lat, 1, 0) == 2.0
    assert np.array_equal(block_average(eta, lat, 0), eta)
    assert np.allclose(block_average(np.full(16, 2.5), Lattice(4, 2), 1), 2.5)
    assert np.array_equal(double_block_average(eta, lat, 0, 0), eta)


def test_block_average_2d_against_loop():
    lat = Lattice(6, 2)
    eta = np.random.default_rng(0).integers(0, 5, 36)
    got = block_average(eta, lat, 1)
    win = lat.window(1)
    assert np.allclose(got, eta[win].mean(axis=1))


def test_consecutive_average_inequality():
    rng = np.random.default_rng(1)
    for _ in range(1000):
        d = int(rng.integers(1, 3))
        N = int(rng.integers(9, 16)) if d == 1 else int(rng.integers(9, 12))
        lat = Lattice(N, d)
        eta = rng.integers(0, 6, lat.n_sites) * (rng.random(lat.n_sites) < 0.5)
        L = int(rng.integers(1, (N - 1) // 2 // 2 + 1))
        ell = int(rng.integers(0, L + 1))
        if 2 * (L + ell) >= N:
            continue
        lhs = np.abs(double_block_average(eta, lat, ell, L) - block_average(eta, lat, L))
        assert np.all(lhs <= consecutive_average_bound(eta, lat, ell, L) + 1e-12)
