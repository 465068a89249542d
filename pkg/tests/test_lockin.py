import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from donorspin.constants import CONSTANTS
from donorspin.errors import InvalidLineshapeError, UsageError
from donorspin.lockin import (
    BM,
    FM,
    SpectrumConfig,
    effective_field_modulation,
    find_zero_crossing,
    lockin_response,
    lorentzian,
    simulate_spectrum,
)
from donorspin.spin import AS75, PB0, solve
from donorspin.transitions import find_clock_transitions, strength_matrix


def dL(d, g):
    """d/dd of 1/(1 + (d/g)^2)."""
    x = d / g
    return -2 * x / g / (1 + x * x) ** 2


def d2L(d, g):
    x = d / g
    return (6 * x * x - 2) / g**2 / (1 + x * x) ** 3


def cfg(mode=FM, amp=0.5, gamma=1.0, rf=100.0, grid=(0.0,), **kw):
    return SpectrumConfig(rf_freq=rf, B_grid=np.asarray(grid), mode=mode, mod_amplitude=amp, gamma=gamma, **kw)


# --------------------------------------------------------------------------
# Building blocks


@pytest.mark.parametrize("d, expected", [(0, 1.0), (1, 0.5), (3, 0.1), (-3, 0.1)])
def test_lorentzian_values(d, expected):
    assert lorentzian(d, 1.0) == pytest.approx(expected, rel=1e-15)


@pytest.mark.parametrize("gamma", [0.0, -1.0])
def test_lorentzian_rejects_width(gamma):
    with pytest.raises(InvalidLineshapeError):
        lorentzian(0.0, gamma)


def test_effective_field_modulation():
    assert effective_field_modulation(-10.0, 0.5) == pytest.approx(-0.05)
    assert effective_field_modulation(10.0, 0.5) == pytest.approx(0.05)
    out = effective_field_modulation(0.0, 0.5)
    assert np.isinf(out) and not np.isnan(out)
    arr = effective_field_modulation(np.array([-10.0, 0.0, 10.0]), 0.5)
    assert np.isinf(arr[1]) and not np.any(np.isnan(arr))


def test_config_validation():
    with pytest.raises(UsageError):
        cfg(mode="AM")
    with pytest.raises(UsageError):
        cfg(amp=-1)
    with pytest.raises(UsageError):
        cfg(rf=0)
    with pytest.raises(InvalidLineshapeError):
        cfg(gamma=0)
    with pytest.raises(UsageError):
        cfg(harmonic=0)
    assert cfg(mode="bm").mode == BM


# --------------------------------------------------------------------------
# Single-transition response


def test_zero_modulation_gives_zero():
    c = cfg(amp=0.0)
    f = np.linspace(95, 105, 41)
    np.testing.assert_array_equal(lockin_response(f, 1.0, 1.0, c), 0.0)
    cb = cfg(mode=BM, amp=0.0)
    np.testing.assert_array_equal(lockin_response(f, 3.0, 1.0, cb), 0.0)


def test_on_resonance_is_zero():
    assert abs(lockin_response(100.0, 1.0, 1.0, cfg())) < 1e-15
    assert abs(lockin_response(100.0, -7.0, 1.0, cfg(mode=BM, amp=0.01))) < 1e-15


@pytest.mark.parametrize("gamma", [0.3, 1.0, 2.5])
def test_fm_small_modulation_limit(gamma):
    delta = gamma / 100
    f = 100.0 + gamma * np.concatenate([np.linspace(-5, -0.1, 30), np.linspace(0.1, 5, 30)])
    out = lockin_response(f, 0.0, 1.0, cfg(amp=delta, gamma=gamma, cutoff=None))
    # Detuning is rf - f, so the derivative with respect to f is -dL/dd.
    expected = -dL(100.0 - f, gamma)
    np.testing.assert_allclose(out / delta, expected, rtol=1e-2)


def test_bm_small_modulation_limit():
    gamma, slope, dB = 1.0, -4.0, 1.0 / 400
    f = 100.0 + np.linspace(-4, 4, 81)
    f = f[np.abs(f - 100.0) > 0.05]
    out = lockin_response(f, slope, 1.0, cfg(mode=BM, amp=dB, gamma=gamma, cutoff=None))
    # d/dB L(rf - f(B)) = -L'(d) * slope
    np.testing.assert_allclose(out / dB, -dL(100.0 - f, gamma) * slope, rtol=1e-2)


def test_second_harmonic_limit():
    gamma, delta = 1.0, 0.01
    f = 100.0 + np.array([-3, -1.5, -0.2, 0.0, 0.2, 1.5, 3.0])
    out = lockin_response(f, 0.0, 1.0, cfg(amp=delta, gamma=gamma, harmonic=2, cutoff=None))
    np.testing.assert_allclose(out / delta**2, d2L(100.0 - f, gamma) / 4, rtol=1e-2)


@given(
    slope=st.floats(0.5, 40).flatmap(lambda m: st.sampled_from([m, -m])),
    delta=st.floats(0.01, 2.0),
    offset=st.floats(-5, 5),
)
def test_fm_equals_signed_bm(slope, delta, offset):
    f = 100.0 + offset
    fm = lockin_response(f, slope, 1.0, cfg(amp=delta))
    bm = lockin_response(f, slope, 1.0, cfg(mode=BM, amp=delta / abs(slope)))
    assert fm == pytest.approx(np.sign(slope) * bm, abs=1e-14)


@given(w=st.floats(0.001, 10), offset=st.floats(-8, 8))
def test_linear_in_strength(w, offset):
    c = cfg()
    assert lockin_response(100 + offset, 1.0, 2 * w, c) == 2 * lockin_response(100 + offset, 1.0, w, c)


def test_sampling_refinement():
    f = 100.0 + np.linspace(-5, 5, 101)
    a = lockin_response(f, 0.0, 1.0, cfg())
    b = lockin_response(f, 0.0, 1.0, cfg(n_samples=512))
    assert np.max(np.abs(a - b)) < 1e-6 * np.max(np.abs(a))


def test_cutoff_zeroes_far_lines():
    # The closest approach during the modulation period decides.
    c = cfg(amp=0.5, gamma=0.1)
    assert lockin_response(100.0 + 1.6, 0.0, 1.0, c) == 0.0
    assert lockin_response(100.0 + 1.4, 0.0, 1.0, c) != 0.0


# --------------------------------------------------------------------------
# Spectra


def pb0_center(rf):
    return rf / (PB0.g_e * CONSTANTS.mu_B_over_h)


def test_pb0_single_resonance():
    grid = np.linspace(3.3, 3.85, 1101)
    sim = simulate_spectrum(PB0, SpectrumConfig(100.0, grid, FM, 0.5, 1.0))
    Bc = find_zero_crossing(grid, sim.signal, 3.4, 3.75)
    assert Bc == pytest.approx(pb0_center(100.0), abs=1e-4)
    assert Bc == pytest.approx(3.571, abs=0.005)


@pytest.mark.parametrize("mode, amp", [(FM, 0.05), (BM, 0.002)])
def test_lone_line_is_odd_about_center(mode, amp):
    Bc = pb0_center(100.0)
    delta = np.linspace(0, 0.2, 201)
    grid = np.concatenate([Bc - delta[::-1], Bc + delta[1:]])
    sim = simulate_spectrum(PB0, SpectrumConfig(100.0, grid, mode, amp, 1.0))
    s = sim.signal
    n = len(delta) - 1
    sym = s[n + 1 :] + s[: n][::-1]
    assert np.max(np.abs(sym)) < 1e-3 * np.max(np.abs(s))


def test_spectrum_is_deterministic():
    c = SpectrumConfig(383.0, np.linspace(3, 4.5, 301), FM, 0.5, 1.0)
    a = simulate_spectrum(AS75, c).signal
    b = simulate_spectrum(AS75, c).signal
    assert np.array_equal(a, b)


def test_spectrum_zero_far_from_resonance():
    grid = np.linspace(0.0, 6.0, 601)
    c = SpectrumConfig(383.0, grid, FM, 0.5, 1.0)
    sim = simulate_spectrum(AS75, c)
    assert np.all(np.isfinite(sim.signal))
    for B, s in zip(grid, sim.signal):
        sol = solve(AS75, B)
        W = strength_matrix(AS75, sol)
        E = sol.energies
        iu, ju = np.triu_indices(8, 1)
        ok = W[iu, ju] > c.strength_threshold
        nearest = np.min(np.abs(383.0 - (E[ju] - E[iu]))[ok])
        if nearest > 10 * c.gamma + c.mod_amplitude:
            assert s == 0.0


@pytest.fixture(scope="module")
def ct_spectra():
    grid = np.linspace(0.0, 6.0, 3001)
    fm = simulate_spectrum(AS75, SpectrumConfig(383.0, grid, FM, 0.5, 1.0), keep_components=True)
    # BM amplitude comparable to the FM field excursion on the CT branch flanks.
    bm = simulate_spectrum(AS75, SpectrumConfig(383.0, grid, BM, 0.05, 1.0))
    return grid, fm, bm.signal


def test_three_features(ct_spectra):
    grid, fm, _ = ct_spectra
    assert set(fm.components) == {(3, 4), (2, 5), (3, 6)}
    peak = {p: grid[np.argmax(np.abs(v))] for p, v in fm.components.items()}
    assert 0.5 < peak[(3, 4)] < 0.8
    assert 2.8 < peak[(2, 5)] < 4.8 and 2.8 < peak[(3, 6)] < 4.8


def _mirror_correlation(grid, s, centre, half):
    d = np.linspace(0.02, half, 200)
    a = np.interp(centre - d, grid, s)
    b = np.interp(centre + d, grid, s)
    return float(np.dot(a, b) / np.sqrt(np.dot(a, a) * np.dot(b, b)))


def test_fm_phase_inversion_vs_bm(ct_spectra):
    grid, fm, bm = ct_spectra
    fm = fm.signal
    c1, c2 = find_clock_transitions(AS75, 3.0, 4.5)
    centre = 0.5 * (c1.B_star + c2.B_star)
    # FM: the feature above the turning point mirrors the one below, which is
    # a phase-inverted derivative line. BM: odd about the turning point.
    assert _mirror_correlation(grid, fm, centre, 0.6) > 0.9
    assert _mirror_correlation(grid, bm, centre, 0.6) < -0.9


def test_exact_bm_matches_linearized_for_small_modulation():
    grid = np.linspace(3.3, 3.7, 41)
    lin = simulate_spectrum(AS75, SpectrumConfig(383.5, grid, BM, 0.002, 0.2))
    ex = simulate_spectrum(AS75, SpectrumConfig(383.5, grid, BM, 0.002, 0.2, n_samples=64, exact_bm=True))
    scale = np.abs(lin.signal).max()
    assert scale > 0
    assert np.max(np.abs(lin.signal - ex.signal)) < 2e-2 * scale


def test_components_sum_to_signal():
    grid = np.linspace(3.0, 4.5, 151)
    sim = simulate_spectrum(AS75, SpectrumConfig(383.5, grid, FM, 0.5, 1.0), keep_components=True)
    assert {(2, 5), (3, 6)} <= set(sim.components)
    np.testing.assert_allclose(sum(sim.components.values()), sim.signal, atol=1e-15)
