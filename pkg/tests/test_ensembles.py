import itertools
import math

import numpy as np
import pytest
from scipy import stats

from zrplab import rng as rngmod
from zrplab.ensembles import (InitialCondition, SupercriticalProfile, build_canonical_table,
                              canonical_expectation_g, sample_canonical, sample_initial)
from zrplab.lattice import Lattice
from zrplab.thermo import JumpRateSpec, ThermoProfile


def gfact(b, k):
    return math.prod(1 + b / i for i in range(1, k + 1))


def brute_Z(b, n, K):
    tot = 0.0
    for eta in itertools.product(range(K + 1), repeat=n):
        if sum(eta) == K:
            tot += math.prod(1 / gfact(b, e) for e in eta)
    return tot


@pytest.mark.parametrize("b", [0.0, 4.0])
def test_dp_matches_enumeration(b):
    spec = JumpRateSpec.evans(b)
    table = build_canonical_table(spec, 3, 6)
    for n in range(1, 4):
        for K in range(0, 7):
            assert table.Z(n, K) == pytest.approx(brute_Z(b, n, K), rel=1e-12, abs=1e-12)


def test_spec_examples():
    t0 = build_canonical_table(JumpRateSpec.evans(0.0), 2, 3)
    assert t0.Z(2, 3) == pytest.approx(4.0, rel=1e-14)
    assert canonical_expectation_g(t0) == pytest.approx(0.75, rel=1e-14)
    t4 = build_canonical_table(JumpRateSpec.evans(4.0), 2, 2)
    assert t4.Z(2, 2) == pytest.approx(2 / 15 + 1 / 25, rel=1e-13)


def test_marginal_is_normalized():
    table = build_canonical_table(JumpRateSpec.evans(4.0), 10, 30)
    m = table.marginal()
    assert m.sum() == pytest.approx(1.0, abs=1e-12)
    # mean occupancy is K/n by exchangeability
    assert np.arange(31) @ m == pytest.approx(3.0, rel=1e-12)


def test_sampler_chi_square():
    spec = JumpRateSpec.evans(4.0)
    table = build_canonical_table(spec, 4, 8)
    draws = sample_canonical(table, rngmod.stream(11, 0, rngmod.AUX), size=100_000)
    assert np.all(draws.sum(axis=1) == 8)
    p = table.marginal()
    for site in range(4):
        counts = np.bincount(draws[:, site], minlength=9)
        expected = p * draws.shape[0]
        keep = expected >= 5
        obs = np.append(counts[keep], counts[~keep].sum())
        exp = np.append(expected[keep], expected[~keep].sum())
        if exp[-1] == 0:
            obs, exp = obs[:-1], exp[:-1]
        assert stats.chisquare(obs, exp).pvalue > 0.01


def test_supercritical_equivalence_of_ensembles():
    spec = JumpRateSpec.evans(4.0)
    devs = []
    for n in (50, 100, 200, 400):
        table = build_canonical_table(spec, n, n)
        devs.append(abs(canonical_expectation_g(table) - 1.0))
    assert all(a > b for a, b in zip(devs[:-1], devs[1:]))
    assert devs[-1] < 0.05


def test_subcritical_equivalence_b0():
    table = build_canonical_table(JumpRateSpec.evans(0.0), 200, 100)
    assert abs(canonical_expectation_g(table) - 1 / 3) < 0.01


def test_sample_canonical_single_draw_shape():
    table = build_canonical_table(JumpRateSpec.evans(0.0), 5, 7)
    eta = sample_canonical(table, rngmod.stream(0))
    assert eta.shape == (5,) and eta.sum() == 7


def test_product_initial_condition_mean():
    spec = JumpRateSpec.evans(4.0)
    prof = ThermoProfile(spec)
    lat = Lattice(4096)
    ic = InitialCondition.grand_canonical(0.3)
    eta = sample_initial(ic, lat, prof, rngmod.stream(5, 0, rngmod.INITIAL))
    p = prof.pmf(float(prof.Phi(0.3)))
    var = float(np.arange(p.size) ** 2 @ p) - 0.09
    assert abs(eta.mean() - 0.3) < 4 * math.sqrt(var / lat.n_sites)


def test_supercritical_product_profile_rejected():
    prof = ThermoProfile(JumpRateSpec.evans(4.0))
    ic = InitialCondition.product(lambda u: 0.3 + 0.5 * u)
    with pytest.raises(SupercriticalProfile):
        sample_initial(ic, Lattice(32), prof, rngmod.stream(0))


def test_condensate_initial_condition():
    prof = ThermoProfile(JumpRateSpec.evans(4.0))
    lat = Lattice(100)
    ic = InitialCondition.with_condensate(0.2, 0.5, 0.3)
    eta = sample_initial(ic, lat, prof, rngmod.stream(1, 0, rngmod.INITIAL))
    assert ic.condensate_site(lat) == 50
    assert eta[50] == 30


def test_canonical_initial_and_2d():
    prof = ThermoProfile(JumpRateSpec.evans(0.0))
    lat = Lattice(8, 2)
    eta = sample_initial(InitialCondition.canonical(40), lat, prof, rngmod.stream(2))
    assert eta.shape == (64,) and eta.sum() == 40


def test_initial_is_reproducible():
    prof = ThermoProfile(JumpRateSpec.evans(0.0))
    lat = Lattice(64)
    ic = InitialCondition.product(lambda u: 0.5 + 0.3 * np.sin(2 * np.pi * u))
    a = sample_initial(ic, lat, prof, rngmod.stream(9, 3, rngmod.INITIAL))
    b = sample_initial(ic, lat, prof, rngmod.stream(9, 3, rngmod.INITIAL))
    c = sample_initial(ic, lat, prof, rngmod.stream(9, 4, rngmod.INITIAL))
    assert np.array_equal(a, b) and not np.array_equal(a, c)
