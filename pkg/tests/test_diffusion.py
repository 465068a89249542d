import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq
from scipy.special import erfc, erfcinv

from donorspin.diffusion import (
    DEVICE_BUDGET,
    ConcentrationProfile,
    DiffusivityModel,
    ThermalStep,
    diffuse,
    diffusion_length,
    mit_crossing,
    reference_marker,
)
from donorspin.errors import InvalidProfileError

# Synthetic Arrhenius parameters: D(1000 K) is about 83 nm^2/s.
MODEL = DiffusivityModel(1e-2, 2.0)
T = 1000.0
CS = 1e20


def source_profile(length=200.0, dx=0.5):
    return ConcentrationProfile.uniform(length, dx, left_bc="source", source_concentration=CS)


def test_arrhenius():
    from donorspin.constants import K_B_EV

    assert MODEL.diffusivity(T) == pytest.approx(1e-2 * math.exp(-2.0 / (K_B_EV * T)))
    assert MODEL.diffusivity(1200) > MODEL.diffusivity(1000)


def test_erfc_oracle():
    t = 1.0
    L = diffusion_length(MODEL, [ThermalStep(T, t)])
    out = diffuse(source_profile(), [ThermalStep(T, t)], MODEL)
    exact = CS * erfc(out.x / (2 * L))
    mask = exact > 1e-3 * CS
    assert np.max(np.abs(out.concentration[mask] / exact[mask] - 1)) < 0.01


def test_closed_box_conserves_dose():
    x = np.arange(0, 100.5, 0.5)
    c = np.where((x > 30) & (x < 50), 1e19, 0.0)
    p = ConcentrationProfile(x, c)
    out = diffuse(p, [ThermalStep(T, 3.0), ThermalStep(1050.0, 1.0)], MODEL)
    assert out.dose() == pytest.approx(p.dose(), rel=1e-6)


def test_mit_crossing_against_inverse_erfc():
    t = 1.0
    L = diffusion_length(MODEL, [ThermalStep(T, t)])
    out = diffuse(source_profile(), [ThermalStep(T, t)], MODEL)
    x_exact = 2 * L * erfcinv(7.8e18 / CS)
    x_root = brentq(lambda x: CS * erfc(x / (2 * L)) - 7.8e18, 0, 200)
    assert x_root == pytest.approx(x_exact, rel=1e-10)
    assert abs(mit_crossing(out, 7.8e18) - x_exact) < out.dx


def test_mit_trivial_cases():
    x = np.linspace(0, 10, 11)
    assert mit_crossing(ConcentrationProfile(x, np.full(11, 1e18))) == 0.0
    assert mit_crossing(ConcentrationProfile(x, np.full(11, 1e19))) is None
    with pytest.raises(InvalidProfileError):
        mit_crossing(ConcentrationProfile(x, np.full(11, 1e19)), threshold=0)


def test_mit_interpolates_linearly():
    x = np.array([0.0, 1.0, 2.0, 3.0])
    p = ConcentrationProfile(x, np.array([4.0, 3.0, 1.0, 0.0]))
    assert mit_crossing(p, 2.0) == pytest.approx(1.5)


def test_zero_duration_is_identity(rng):
    p = ConcentrationProfile(np.linspace(0, 20, 41), rng.uniform(0, 1e19, 41))
    out = diffuse(p, [ThermalStep(T, 0.0)], MODEL)
    np.testing.assert_array_equal(out.concentration, p.concentration)
    np.testing.assert_array_equal(diffuse(p, [], MODEL).concentration, p.concentration)


@given(
    seed=st.integers(0, 2**31),
    left=st.sampled_from(["source", "zero-flux"]),
    right=st.sampled_from(["zero-flux", "fixed"]),
    duration=st.floats(0.01, 2.0),
)
def test_maximum_principle(seed, left, right, duration):
    rng = np.random.default_rng(seed)
    c = rng.uniform(0, 1e19, 81) * (rng.random(81) < 0.5)
    cs = float(rng.uniform(0, 2e19)) if left == "source" else None
    p = ConcentrationProfile(np.linspace(0, 40, 81), c, left_bc=left, right_bc=right, source_concentration=cs)
    out = diffuse(p, [ThermalStep(T, duration)], MODEL).concentration
    hi, lo = p.concentration.max(), p.concentration.min()
    assert out.max() <= hi * (1 + 1e-12)
    assert out.min() >= lo - 1e-12 * hi


@pytest.mark.parametrize("fine_ratio", [1.0, 2.0])
def test_grid_convergence(fine_ratio):
    # Diffusion length about 36 nm, i.e. some 70 cells at the default spacing.
    steps = [ThermalStep(T, 4.0)]
    coarse = diffuse(source_profile(200, 0.5), steps, MODEL, max_ratio=1.0)
    fine = diffuse(source_profile(200, 0.25), steps, MODEL, max_ratio=fine_ratio)
    a, b = coarse.concentration, fine.concentration[::2]
    mask = b > 1e-3 * CS
    assert np.max(np.abs(a[mask] / b[mask] - 1)) < 2.5e-3


def test_step_composition():
    p = source_profile(100)
    a = diffuse(p, [ThermalStep(T, 1.3), ThermalStep(T, 2.2)], MODEL).concentration
    b = diffuse(p, [ThermalStep(T, 3.5)], MODEL).concentration
    np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9 * CS)


def test_fixed_right_boundary_held():
    x = np.linspace(0, 20, 41)
    p = ConcentrationProfile(x, np.full(41, 3e18), left_bc="source", right_bc="fixed", source_concentration=CS)
    out = diffuse(p, [ThermalStep(T, 1.0)], MODEL)
    assert out.concentration[-1] == 3e18 and out.concentration[0] == CS


def test_large_ratio_still_stable():
    out = diffuse(source_profile(100), [ThermalStep(T, 1.0)], MODEL, max_ratio=5.0)
    assert np.all(out.concentration >= 0) and out.concentration.max() <= CS


def test_device_budget():
    labels = [s.label for s in DEVICE_BUDGET]
    assert labels == ["drive-in", "RTA 1", "RTA 2"]
    assert DEVICE_BUDGET[0].temperature == pytest.approx(1223.15)
    assert sum(s.duration for s in DEVICE_BUDGET) == 1205.0
    L = diffusion_length(MODEL, DEVICE_BUDGET)
    assert L == pytest.approx(math.sqrt(sum(MODEL.diffusivity(s.temperature) * 1e14 * s.duration for s in DEVICE_BUDGET)))


def test_validation():
    with pytest.raises(InvalidProfileError):
        ThermalStep(0.0, 1.0)
    with pytest.raises(InvalidProfileError):
        ThermalStep(300.0, -1.0)
    with pytest.raises(InvalidProfileError):
        DiffusivityModel(0.0, 1.0)
    with pytest.raises(InvalidProfileError):
        DiffusivityModel(1.0, -1.0)
    x = np.linspace(0, 10, 11)
    with pytest.raises(InvalidProfileError):
        ConcentrationProfile(x, -np.ones(11))
    with pytest.raises(InvalidProfileError):
        ConcentrationProfile(x**2, np.ones(11))
    with pytest.raises(InvalidProfileError):
        ConcentrationProfile(x, np.ones(11), left_bc="source")
    with pytest.raises(InvalidProfileError):
        ConcentrationProfile(x, np.ones(11), right_bc="periodic")
    with pytest.raises(InvalidProfileError):
        diffuse(ConcentrationProfile(x, np.ones(11)), [], MODEL, max_ratio=0)


def test_markers():
    m = reference_marker(16, 5e17)
    assert m.header_line() == "marker: P implant depth_nm=16 concentration_cm3=5e+17"
    assert reference_marker(0, 0).depth_nm == 0.0
    with pytest.raises(InvalidProfileError):
        reference_marker(-1, 5e17)
    with pytest.raises(InvalidProfileError):
        reference_marker(16, -1)
