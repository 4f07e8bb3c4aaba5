import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zrplab.thermo import (CapacityError, CylinderObservable, JumpRateSpec, SeriesDivergence, ThermoProfile,
                           critical_fugacity, entropy_density, extended_homologue, mean_jump_rate,
                           partition_Z, rate_function)

PROFILES = {b: ThermoProfile(JumpRateSpec.evans(b)) for b in (0.0, 3.0, 4.0, 6.0)}


def hyp_Z(b, phi):
    return float(mpmath.hyp2f1(1, 1, 1 + b, phi))


def hyp_Zp(b, phi):
    return float(mpmath.hyp2f1(2, 2, 2 + b, phi) / (1 + b))


@pytest.mark.parametrize("b", [0.0, 3.0, 4.0, 6.0])
@pytest.mark.parametrize("phi", [0.0, 0.1, 0.5, 0.9, 0.99])
def test_partition_function_matches_hypergeometric(b, phi):
    prof = PROFILES[b]
    assert prof.Z(phi) == pytest.approx(hyp_Z(b, phi), rel=1e-12)
    assert prof.Zprime(phi) == pytest.approx(hyp_Zp(b, phi), rel=1e-10)


@pytest.mark.parametrize("b", [3.0, 4.0, 6.0])
def test_partition_function_at_critical_fugacity(b):
    # Gauss: 2F1(1,1;1+b;1) = b/(b-1)
    assert PROFILES[b].Z(1.0) == pytest.approx(b / (b - 1), rel=1e-6)


def test_b0_closed_forms():
    prof = PROFILES[0.0]
    rho = np.arange(1, 101) / 10
    assert np.max(np.abs(prof.Phi(rho) - rho / (1 + rho))) <= 1e-8
    assert abs(prof.Z(0.5) - 2.0) <= 1e-10
    assert prof.R(0.5) == pytest.approx(1.0, rel=1e-12)
    assert math.isinf(prof.rho_c)
    assert prof.phi_c == 1.0


@pytest.mark.parametrize("b,tol", [(4.0, 1e-4), (6.0, 1e-4), (3.0, 1e-2)])
def test_critical_density(b, tol):
    assert abs(PROFILES[b].rho_c - 1 / (b - 2)) <= tol


def test_subcritical_b_has_infinite_rho_c():
    prof = ThermoProfile(JumpRateSpec.evans(1.5))
    assert math.isinf(prof.rho_c)
    with pytest.raises(SeriesDivergence):
        prof.R(1.0)


def test_phibar_saturates_above_rho_c():
    prof = PROFILES[4.0]
    assert prof.Phi(0.75) == 1.0
    assert prof.Phi(10.0) == 1.0
    assert prof.Phi(0.0) == 0.0
    assert prof.Phi(0.25) < 1.0


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 0.98))
def test_phi_inverts_R(phi):
    for b in (0.0, 4.0):
        prof = PROFILES[b]
        assert float(prof.Phi(prof.R(phi))) == pytest.approx(phi, rel=1e-8, abs=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 0.95), st.floats(0.001, 0.04))
def test_R_increasing(phi, step):
    prof = PROFILES[6.0]
    assert prof.R(phi + step) > prof.R(phi)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_phibar_monotone_and_bounded(r1, r2):
    prof = PROFILES[4.0]
    lo, hi = sorted((r1, r2))
    assert prof.Phi(lo) <= prof.Phi(hi) <= prof.phi_c


def test_mean_of_site_law_is_density():
    prof = PROFILES[4.0]
    phi = 0.7
    p = prof.pmf(phi)
    assert p.sum() == pytest.approx(1.0, abs=1e-12)
    mean = float(np.arange(p.size) @ p)
    assert mean == pytest.approx(prof.R(phi), rel=1e-6)


def test_mean_jump_rate_equals_fugacity():
    spec = JumpRateSpec.evans(4.0)
    prof = PROFILES[4.0]
    for rho in (0.1, 0.3):
        phi = float(prof.Phi(rho))
        assert prof.expectation(lambda k: spec.table[k], phi) == pytest.approx(phi, rel=1e-8)
        assert mean_jump_rate(spec, rho) == pytest.approx(phi, rel=1e-12)
    assert partition_Z(spec, 0.5) == pytest.approx(hyp_Z(4, 0.5), rel=1e-12)


def test_rate_table_and_capacity():
    spec = JumpRateSpec.evans(2.0, k_max=50)
    assert spec.rate(0) == 0.0
    assert spec.rate(4) == pytest.approx(1.5)
    assert spec.grad_sup == pytest.approx(3.0)  # g(1) - g(0)
    with pytest.raises(CapacityError):
        spec.rate(51)


def test_custom_table_critical_fugacity():
    spec = JumpRateSpec.from_function(lambda k: np.where(k > 0, 2.0, 0.0), k_max=5000)
    assert critical_fugacity(spec) == pytest.approx(2.0, rel=1e-3)
    prof = ThermoProfile(spec)
    # constant rate 2: geometric site law, R = phi/(2 - phi)
    assert prof.R(1.0) == pytest.approx(1.0, rel=1e-10)


def test_extended_homologue():
    prof = PROFILES[4.0]
    eta = CylinderObservable.occupation()
    g = CylinderObservable.jump_rate(JumpRateSpec.evans(4.0))
    assert extended_homologue(eta, prof, 2.0) == 2.0
    assert extended_homologue(g, prof, 2.0) == 1.0
    ind = CylinderObservable.indicator(1)
    # P(eta >= 1) = 1 - 1/Z
    phi = float(prof.Phi(0.3))
    assert extended_homologue(ind, prof, 0.3) == pytest.approx(1 - 1 / prof.Z(phi), rel=1e-8)
    assert extended_homologue(ind, prof, 3.0) == pytest.approx(1 - 1 / prof.Z(1.0), rel=1e-6)


def test_rate_function():
    prof = PROFILES[4.0]
    assert rate_function(prof, 0.2, 0.2) == 0.0
    assert rate_function(prof, 0.2, -0.1) == math.inf
    vals = [rate_function(prof, 0.2, r) for r in (0.0, 0.1, 0.3, 0.5, 1.0)]
    assert all(v > 0 for v in vals)
    # linear growth beyond rho_c with slope log(phi_c / phi*)
    slope = rate_function(prof, 0.2, 2.0) - rate_function(prof, 0.2, 1.0)
    assert slope == pytest.approx(math.log(1.0 / float(prof.Phi(0.2))), rel=1e-6)


def test_entropy_density_zero_at_reference():
    prof = PROFILES[4.0]
    assert entropy_density(prof, np.full(32, 0.2), 0.2) == pytest.approx(0.0, abs=1e-14)
