import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from donorspin.errors import BackgroundFitError, UsageError
from donorspin.specfit import (
    IllConditionedFitWarning,
    PeakModel,
    assign_transitions,
    derivative_lineshape,
    expected_resonances,
    fit_peaks,
    peak_to_peak_width,
    resonance_fields,
    skewed_absorption,
    subtract_background,
)
from donorspin.spin import AS75, PB0
from donorspin.transitions import transition_table


@pytest.mark.parametrize("skew", [0.0, 0.4, -1.3])
def test_derivative_matches_numeric_derivative(skew):
    B = np.linspace(3.0, 4.6, 401)
    h = 1e-6
    num = (skewed_absorption(B + h, 3.8, 0.07, skew) - skewed_absorption(B - h, 3.8, 0.07, skew)) / (2 * h)
    np.testing.assert_allclose(derivative_lineshape(B, 3.8, 0.07, skew), num, rtol=1e-6, atol=1e-6)


def test_peak_to_peak_symmetric():
    for g in (0.01, 0.05, 1.0):
        assert peak_to_peak_width(g) == pytest.approx(2 * g / np.sqrt(3), rel=1e-12)


@pytest.mark.parametrize("skew", [0.3, -0.8, 2.0])
def test_peak_to_peak_skewed_against_dense_grid(skew):
    x = np.linspace(-6, 6, 1_200_001)
    y = derivative_lineshape(x, 0.0, 1.0, skew)
    assert peak_to_peak_width(1.0, skew) == pytest.approx(abs(x[np.argmax(y)] - x[np.argmin(y)]), abs=2e-5)


def test_single_peak_recovery():
    B = np.linspace(3.3, 4.3, 2001)
    y = PeakModel(3.8, 0.05, 2.0).evaluate(B)
    fit = fit_peaks(B, y, 1, guesses=[(3.75, 0.08)])
    (p,) = fit.peaks
    assert fit.converged and not fit.degenerate
    assert abs(p.center - 3.8) < 1e-4
    assert p.delta_B_pp == pytest.approx(2 * 0.05 / np.sqrt(3), rel=1e-3)
    assert fit.r_squared > 0.999999
    assert fit.residual_history[-1] <= fit.residual_history[0]


def test_single_peak_auto_seed_and_phase():
    B = np.linspace(3.3, 4.3, 2001)
    y = PeakModel(3.8, 0.05, 2.0, phase_sign=-1).evaluate(B)
    (p,) = fit_peaks(B, y, 1).peaks
    assert p.phase_sign == -1 and p.center == pytest.approx(3.8, abs=1e-6)


def test_two_overlapping_peaks():
    g = 0.05
    B = np.linspace(3.4, 4.2, 3201)
    y = PeakModel(3.75, g, 1.0).evaluate(B) + PeakModel(3.75 + 2 * g, g, 0.7).evaluate(B)
    fit = fit_peaks(B, y, 2, guesses=[(3.74, 0.06), (3.86, 0.06)])
    c = fit.centers
    assert abs(c[0] - 3.75) < 0.02 * g and abs(c[1] - 3.85) < 0.02 * g


def test_zero_trace_is_degenerate():
    B = np.linspace(0, 1, 50)
    fit = fit_peaks(B, np.zeros(50), 1)
    assert fit.degenerate and fit.peaks[0].amplitude == 0.0


def test_close_peaks_warn():
    B = np.linspace(3.5, 4.1, 1201)
    y = PeakModel(3.8, 0.05, 1.0).evaluate(B)
    with pytest.warns(IllConditionedFitWarning):
        fit = fit_peaks(B, y, 2, guesses=[(3.799, 0.05), (3.801, 0.05)], max_nfev=5)
    assert fit.warnings


def test_fit_argument_validation():
    B = np.linspace(0, 1, 50)
    y = np.sin(B)
    with pytest.raises(UsageError):
        fit_peaks(B, y, 0)
    with pytest.raises(UsageError):
        fit_peaks(B, y, 1, guesses=[(2.0, 0.1)])
    with pytest.raises(UsageError):
        fit_peaks(B, y, 1, guesses=[(0.5, -0.1)])
    with pytest.raises(UsageError):
        fit_peaks(B[:3], y[:3], 1)


@given(scale=st.floats(1e-3, 1e3), sign=st.sampled_from([-1, 1]))
def test_width_invariant_under_scaling(scale, sign):
    B = np.linspace(3.5, 4.1, 801)
    y = sign * scale * PeakModel(3.8, 0.04, 1.0, skew=0.2).evaluate(B)
    (p,) = fit_peaks(B, y, 1).peaks
    assert p.delta_B_pp == pytest.approx(peak_to_peak_width(0.04, 0.2), rel=1e-6)
    assert p.phase_sign == sign


# ---------------------------------------------------------------- background


def test_flat_background_removed_exactly():
    B = np.linspace(0, 5, 501)
    corrected, base = subtract_background(B, np.full_like(B, 3.2), [(2.0, 3.0)])
    np.testing.assert_allclose(corrected, 0.0, atol=1e-12)


def test_ramp_under_peak():
    B = np.linspace(3.0, 4.6, 3201)
    peak = PeakModel(3.8, 0.05, 1.0).evaluate(B)
    ramp = 0.8 + 3.0 * (B - 3.0)
    lo, hi = 3.8 - 8 * 0.05, 3.8 + 8 * 0.05
    corrected, _ = subtract_background(B, peak + ramp, [(lo, hi)])
    assert abs(np.ptp(corrected) / np.ptp(peak) - 1) < 5e-3
    anchors = (B < lo) | (B > hi)
    assert abs(corrected[anchors].mean()) < 1e-9 * np.max(np.abs(peak + ramp))


def test_background_idempotent_on_baseline_free_region():
    B = np.linspace(0, 5, 501)
    y = 0.3 * B**2 - B
    once, _ = subtract_background(B, y, [(2, 3)])
    twice, base2 = subtract_background(B, once, [(2, 3)])
    np.testing.assert_allclose(twice, once, atol=1e-12)
    np.testing.assert_allclose(base2, 0.0, atol=1e-12)


def test_background_errors():
    B = np.linspace(0, 5, 101)
    y = np.zeros_like(B)
    with pytest.raises(BackgroundFitError):
        subtract_background(B, y, [(-1, 6)])
    with pytest.raises(UsageError):
        subtract_background(B, y, [(7, 8)])
    with pytest.raises(UsageError):
        subtract_background(B[::-1], y, [(1, 2)])


def test_smoothing_spline_tolerates_noise(rng):
    B = np.linspace(0, 5, 501)
    y = 0.5 + 0.1 * B + rng.normal(0, 0.01, B.size)
    corrected, base = subtract_background(B, y, [(2, 3)], smoothing=1.0)
    assert np.std(base - (0.5 + 0.1 * B)) < 0.005


# ---------------------------------------------------------------- assignment


def test_assignment_empty_and_unmatched():
    assert assign_transitions([], AS75, 383.0) == []
    (a,) = assign_transitions([10.0], AS75, 383.0)
    assert not a.assigned and np.isnan(a.B_resonance)


def test_assignment_at_fixed_carrier():
    (res,) = resonance_fields(AS75, 383.0, 0.0, 10.0)
    pair, Br = res
    assert pair == (3, 4)
    f = next(t.f for t in transition_table(AS75, Br) if t.pair == pair)
    assert f == pytest.approx(383.0, abs=1e-3)
    (a,) = assign_transitions([Br + 0.01], AS75, 383.0)
    assert a.transition == (3, 4) and a.distance == pytest.approx(0.01, abs=1e-4)


def test_near_miss_turning_points():
    found = resonance_fields(AS75, 383.0, 3.0, 4.6, near_miss=0.5)
    assert {p for p, _ in found} == {(2, 5), (3, 6)}
    assert all(3.7 < B < 3.9 for _, B in found)


def test_assignment_with_near_miss():
    # At 383 MHz the clock-transition pair turns just above the carrier.
    a34, act = assign_transitions([0.666, 3.8], AS75, 383.0, near_miss=0.5)
    assert a34.transition == (3, 4)
    assert act.transition in {(2, 5), (3, 6)} and act.distance < 0.01
    assert not assign_transitions([3.8], AS75, 383.0)[0].assigned


def test_expected_resonance_width():
    rf = 383.34409891678797
    found = expected_resonances(AS75, rf, 3.3, 4.3, 0.005)
    assert [p for p, _, _ in found] == [(3, 6), (2, 5), (2, 5), (3, 6)]
    for pair, Br, w in found:
        t = next(t for t in transition_table(AS75, Br) if t.pair == pair)
        assert w == pytest.approx(0.005 / abs(t.dfdB))


def test_pb0_single_resonance():
    (res,) = resonance_fields(PB0, 100.0, 0.0, 10.0)
    assert res[1] == pytest.approx(3.5724, abs=1e-3)
