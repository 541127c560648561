import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gllab.thermo import (SeriesWarning, SuiteConfig, ThermoSeries, bulk_trial_energy,
                          cutoff_chi, default_eta, estimate_e2_gl, estimate_e2_lattice,
                          estimate_g, fit_inverse, g_shape_checks, gl_sides, h_eta,
                          property_suite, smooth_step)


def test_inverse_fit_is_exact_on_model_data():
    R = np.array([6.0, 8.0, 12.0, 16.0])
    g, C, se, rms = fit_inverse(R, -0.3 + 0.8 / R)
    assert math.isclose(g, -0.3, abs_tol=1e-12)
    assert math.isclose(C, 0.8, rel_tol=1e-10)
    assert rms < 1e-14 and se < 1e-12


def test_inverse_fit_propagates_point_errors():
    R = [8.0, 12.0, 16.0]
    vals = [-0.3 + 0.8 / r for r in R]
    _, _, se0, _ = fit_inverse(R, vals)
    _, _, se1, _ = fit_inverse(R, vals, [1e-3] * 3)
    assert se1 > se0 + 5e-4


@given(st.floats(-3.0, 4.0))
def test_smooth_step_range_and_ends(t):
    s = float(smooth_step(t))
    assert 0.0 <= s <= 1.0
    if t <= 0:
        assert s == 0.0
    if t >= 1:
        assert s == 1.0


def test_cutoff_profile_is_monotone_and_vanishes_on_the_layer():
    eta = 0.1
    d = np.linspace(0.0, 0.5, 2001)
    h = h_eta(d, eta)
    assert np.all(h[d <= eta] == 0.0)
    assert np.all(h[d >= 2 * eta] == 1.0)
    assert np.all(np.diff(h) >= 0.0)
    assert math.isclose(float(cutoff_chi(1.5)), 0.5, abs_tol=1e-12)


def test_default_eta_stays_between_one_over_kappa_and_one():
    for k in (40, 80, 160, 640):
        assert 1.0 / k < default_eta(k) < 1.0
    assert default_eta(80) < default_eta(40)


def test_g_vanishes_in_the_normal_phase():
    s = estimate_g(1.2, (4.0, 6.0, 8.0), 0.5)
    assert s.limit == 0.0 and not s.flagged


def test_g_at_zero_field_is_minus_one_half():
    s = estimate_g(0.0, (4.0, 6.0, 8.0), 0.5)
    assert math.isclose(s.limit, -0.5, abs_tol=5e-3)


def test_g_series_is_monotone_and_fitted():
    s = estimate_g(0.5, (6.0, 8.0, 10.0), 0.5)
    vals = [v for _, v in s.points]
    assert all(v1 <= v0 + 1e-6 for v0, v1 in zip(vals, vals[1:]))
    assert -0.5 <= s.limit <= 0.0
    assert isinstance(s.as_dict()["points"], list)


def test_g_input_validation():
    with pytest.raises(ValueError):
        estimate_g(0.5, (6.0, 8.0))
    with pytest.raises(ValueError):
        estimate_g(0.5, (8.0, 6.0, 10.0))
    with pytest.raises(ValueError):
        estimate_g(0.5, (2.0, 6.0, 8.0))
    with pytest.raises(ValueError):
        estimate_g(-0.5, (4.0, 6.0, 8.0))


def test_gl_route_sides_grow_with_the_correlation_length():
    assert gl_sides(0.5) == (16.0, 20.0, 24.0)
    s0 = gl_sides(0.975)[0]
    assert s0 >= 0.025 ** -0.8
    with pytest.raises(ValueError):
        estimate_e2_gl([0.9, 1.1])


def test_gl_route_drops_short_sides_with_warning():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        with pytest.raises(ValueError):
            estimate_e2_gl([0.9, 0.95], sides=[4.0, 6.0, 8.0], spacing=0.5)
    assert any(issubclass(w.category, SeriesWarning) for w in rec)


def test_lattice_route_is_stable_under_spacing_refinement():
    coarse = estimate_e2_lattice([4, 9, 16], spacing=0.25)
    fine = estimate_e2_lattice([4, 9, 16], spacing=0.125)
    assert -0.5 <= fine.limit < 0.0
    assert abs(coarse.limit - fine.limit) < 1e-3


def test_lattice_route_needs_three_tori():
    with pytest.raises(ValueError):
        estimate_e2_lattice([4, 4, 9])


def test_trial_energy_vanishes_at_the_critical_field():
    r = bulk_trial_energy(40.0, 40.0, N=4)
    assert r.energy == 0.0 and r.bound == 0.0


def test_trial_configuration_structure_at_moderate_kappa():
    r = bulk_trial_energy(40.0, 36.0, N=4)
    assert r.vanishes_on_layer and r.matches_outside
    assert r.max_modulus <= 1.0 + 1e-6
    assert r.bound < 0.0
    assert r.normalized_slack == pytest.approx(r.slack / max(40.0, 16.0))
    assert abs(r.domain_volume - 1.0) < 0.1


def test_trial_input_validation():
    with pytest.raises(ValueError):
        bulk_trial_energy(40.0, 10.0)
    with pytest.raises(ValueError):
        bulk_trial_energy(40.0, 36.0, eta=0.01)


def test_suite_passes_in_the_normal_phase():
    cfg = SuiteConfig(bs=(1.05,), Ns=(4,), sides=(4.0, 6.0, 8.0), spacing=0.5)
    rep = property_suite(cfg)
    assert rep.passed
    assert any(c.name == "m0.normal_state" for c in rep.checks)
    assert any(c.name == "m0.subadditive" for c in rep.checks)


def test_suite_catches_a_corrupted_minimizer():
    cfg = SuiteConfig(bs=(0.3,), Ns=(4,), sides=(4.0, 6.0), spacing=0.5, corrupt=2.0)
    rep = property_suite(cfg)
    assert not rep.passed
    names = {c.name for c in rep.failures()}
    assert "m0.max_principle" in names


def test_suite_records_fitted_constants():
    cfg = SuiteConfig(bs=(0.7,), Ns=(4,), sides=(4.0, 6.0, 8.0), spacing=0.5)
    rep = property_suite(cfg)
    assert rep.passed
    cal = rep.calibration
    assert cal.C_hat is not None and cal.C_max is not None
    assert set(cal.C_p) == {"2", "4"}
    assert "calibration" in rep.as_dict()


def test_g_shape_checks_flag_a_non_concave_profile():
    fake = [ThermoSeries(b, ((8.0, g),), g, 0.0, None, 0.0, 0.0)
            for b, g in [(0.0, -0.5), (0.5, -0.45), (1.0, 0.0)]]
    bad = [c for c in g_shape_checks(fake) if not c.passed]
    assert any(c.name == "g.concave" for c in bad)


def test_g_approaches_minus_one_half_as_b_goes_to_zero():
    vals = [estimate_g(b, (4.0, 6.0, 8.0), 0.5).limit for b in (0.0, 0.01, 0.05)]
    assert vals[0] <= vals[1] + 1e-6 <= vals[2] + 2e-6
    assert abs(vals[1] + 0.5) < 0.02
