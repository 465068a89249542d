"""Quasi-static lock-in simulation of cw EDMR spectra.

Each allowed transition contributes a Lorentzian absorption in the
detuning between the RF carrier and the transition frequency, weighted by
its ESR strength. Two modulation schemes are supported:

``FM``
    The instantaneous transition frequency is swept around its value at B0,
    f(t) = f(B0) + df_mod sin(wt). The resulting field-domain response
    behaves like a field modulation of amplitude df_mod / (df/dB0), so its
    phase follows the sign of the slope and flips across a clock-transition
    turning point.
``BM``
    The static field is swept, B0(t) = B0 + dB_mod sin(wt), and the
    transition frequency follows through its local slope (or, optionally,
    through full re-diagonalization at each sample).

The demodulated output is twice the period average of signal x reference,
i.e. the amplitude of the selected harmonic. The modulation frequency does
not enter the quasi-static result.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidLineshapeError, UsageError
from .spin import solve, zeeman_derivative
from .transitions import DEFAULT_THRESHOLD, level_expectations, strength_matrix

FM = "FM"
BM = "BM"


def lorentzian(delta_f, gamma):
    """Unit-height Lorentzian 1 / (1 + (delta_f/gamma)^2); ``gamma`` is the HWHM."""
    if not np.all(np.asarray(gamma) > 0):
        raise InvalidLineshapeError(f"gamma must be positive, got {gamma!r}")
    x = np.asarray(delta_f, dtype=float) / gamma
    out = 1.0 / (1.0 + x * x)
    return float(out) if out.ndim == 0 else out


def effective_field_modulation(dfdB, delta_f_mod):
    """Field-domain amplitude of a frequency modulation, delta_f_mod / (df/dB0).

    The sign follows the slope. A zero slope returns ``inf`` (signed by
    ``delta_f_mod``) rather than NaN.
    """
    dfdB = np.asarray(dfdB, dtype=float)
    amp = np.asarray(delta_f_mod, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = amp / dfdB
    out = np.where(dfdB == 0.0, np.copysign(np.inf, np.where(amp == 0.0, 1.0, amp)), out)
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpectrumConfig:
    """Parameters of a simulated lock-in field sweep.

    ``mod_amplitude`` is in MHz for FM and in mT for BM. ``cutoff`` (in
    units of ``gamma``) drops transitions whose detuning never comes closer
    than ``cutoff * gamma`` during the modulation period; ``None`` keeps
    every tail.
    """

    rf_freq: float
    B_grid: np.ndarray
    mode: str = FM
    mod_amplitude: float = 0.5
    gamma: float = 1.0
    harmonic: int = 1
    strength_threshold: float = DEFAULT_THRESHOLD
    mod_frequency: float = 1737.0
    n_samples: int = 256
    cutoff: float = 10.0
    exact_bm: bool = False

    def __post_init__(self):
        object.__setattr__(self, "B_grid", np.atleast_1d(np.asarray(self.B_grid, dtype=float)))
        object.__setattr__(self, "mode", str(self.mode).upper())
        if self.mode not in (FM, BM):
            raise UsageError(f"mode must be FM or BM, got {self.mode!r}")
        if not self.rf_freq > 0:
            raise UsageError("rf_freq must be positive")
        if self.mod_amplitude < 0:
            raise UsageError("mod_amplitude must be >= 0")
        if not self.gamma > 0:
            raise InvalidLineshapeError(f"gamma must be positive, got {self.gamma!r}")
        if int(self.harmonic) != self.harmonic or self.harmonic < 1:
            raise UsageError("harmonic must be a positive integer")
        if self.n_samples < 8:
            raise UsageError("n_samples must be at least 8")
        if self.strength_threshold < 0:
            raise UsageError("strength_threshold must be >= 0")

    def to_dict(self):
        return {
            "rf_freq_MHz": self.rf_freq,
            "mode": self.mode,
            "mod_amplitude": self.mod_amplitude,
            "gamma_MHz": self.gamma,
            "harmonic": int(self.harmonic),
            "strength_threshold": self.strength_threshold,
            "mod_frequency_Hz": self.mod_frequency,
            "n_samples": int(self.n_samples),
            "cutoff": self.cutoff,
            "exact_bm": self.exact_bm,
            "B_min_mT": float(self.B_grid[0]),
            "B_max_mT": float(self.B_grid[-1]),
            "n_points": int(len(self.B_grid)),
        }


@dataclass
class Spectrum:
    B_grid: np.ndarray
    signal: np.ndarray
    config: SpectrumConfig
    components: dict = field(default_factory=dict)


def _phase_grid(n):
    return 2.0 * np.pi * np.arange(n) / n


def _reference(theta, harmonic):
    # Signs chosen so the small-modulation output is a positive multiple of
    # the n-th derivative in the modulated variable.
    n = int(harmonic)
    if n % 2:
        return (-1) ** ((n - 1) // 2) * np.sin(n * theta)
    return (-1) ** (n // 2) * np.cos(n * theta)


def _demodulate(absorption, theta, harmonic):
    # Uniform samples over one full period: the trapezoid rule reduces to the mean.
    return 2.0 * np.mean(absorption * _reference(theta, harmonic), axis=-1)


def lockin_response(freq, slope, strength, config, freq_samples=None):
    """Demodulated lock-in amplitude of one or more transitions.

    Parameters
    ----------
    freq : float or ndarray
        Transition frequency at the static field, MHz.
    slope : float or ndarray
        df/dB0 at the static field, MHz/mT (used in BM mode only).
    strength : float or ndarray
        Weight of each transition.
    config : SpectrumConfig
    freq_samples : ndarray, optional
        BM only: transition frequency at each modulation sample, shape
        ``freq.shape + (n_samples,)``, overriding the linear slope model.

    Returns
    -------
    float or ndarray
        First-harmonic (or selected harmonic) amplitude, broadcast over the
        inputs.
    """
    theta = _phase_grid(config.n_samples)
    freq = np.asarray(freq, dtype=float)
    strength = np.asarray(strength, dtype=float)
    if config.mod_amplitude == 0:
        # No modulation, no harmonic content; skip the round-off of the quadrature.
        out = np.zeros(np.broadcast_shapes(freq.shape, strength.shape, np.shape(slope)))
        return float(out) if out.ndim == 0 else out
    mod = np.sin(theta)
    if config.mode == FM:
        f_t = freq[..., None] + config.mod_amplitude * mod
    elif freq_samples is not None:
        f_t = np.asarray(freq_samples, dtype=float)
    else:
        f_t = freq[..., None] + np.asarray(slope, dtype=float)[..., None] * config.mod_amplitude * mod
    detuning = config.rf_freq - f_t
    absorption = np.asarray(strength)[..., None] * lorentzian(detuning, config.gamma)
    out = _demodulate(absorption, theta, config.harmonic)
    if config.cutoff is not None:
        far = np.min(np.abs(detuning), axis=-1) > config.cutoff * config.gamma
        out = np.where(far, 0.0, out)
    return float(out) if out.ndim == 0 else out


def _pair_tables(system, grid, threshold):
    dim = system.dim
    iu, ju = np.triu_indices(dim, k=1)
    n = len(grid)
    freq = np.empty((n, len(iu)))
    slope = np.empty_like(freq)
    strength = np.empty_like(freq)
    dHdB = zeeman_derivative(system)
    for m, B in enumerate(grid):
        sol = solve(system, B)
        E = sol.energies
        d, _ = level_expectations(sol, dHdB)
        W = strength_matrix(system, sol)
        freq[m] = E[ju] - E[iu]
        slope[m] = d[ju] - d[iu]
        strength[m] = W[iu, ju]
    allowed = strength > threshold
    return iu + 1, ju + 1, freq, slope, np.where(allowed, strength, 0.0)


def _exact_bm_samples(system, grid, config, iu, ju):
    theta = _phase_grid(config.n_samples)
    out = np.empty((len(grid), len(iu), config.n_samples))
    for m, B in enumerate(grid):
        for k, t in enumerate(theta):
            E = solve(system, B + config.mod_amplitude * np.sin(t)).energies
            out[m, :, k] = E[ju - 1] - E[iu - 1]
    return out


def simulate_spectrum(system, config, keep_components=False):
    """Lock-in spectrum of ``system`` over ``config.B_grid``.

    Sums the response of every allowed transition (strength above
    ``config.strength_threshold`` at that field), weighted by strength.
    With ``keep_components`` the per-transition traces of all transitions
    that contribute anywhere on the grid are kept, keyed by (i, j).
    """
    grid = config.B_grid
    iu, ju, freq, slope, weight = _pair_tables(system, grid, config.strength_threshold)
    samples = None
    if config.mode == BM and config.exact_bm:
        samples = _exact_bm_samples(system, grid, config, iu, ju)
    resp = lockin_response(freq, slope, weight, config, freq_samples=samples)
    resp = np.atleast_2d(resp)
    signal = resp.sum(axis=1)
    components = {}
    if keep_components:
        for k, (i, j) in enumerate(zip(iu, ju)):
            if np.any(resp[:, k] != 0):
                components[(int(i), int(j))] = resp[:, k].copy()
    return Spectrum(grid.copy(), signal, config, components)


def find_zero_crossing(B, signal, B_lo, B_hi):
    """Field of the steepest sign change of ``signal`` inside [B_lo, B_hi].

    For a first-harmonic lineshape this is the resonance centre. Linear
    interpolation between samples; ``None`` when there is no sign change.
    """
    B = np.asarray(B)
    s = np.asarray(signal)
    sel = np.where((B >= B_lo) & (B <= B_hi))[0]
    best = None
    best_jump = 0.0
    for a, b in zip(sel[:-1], sel[1:]):
        if s[a] == 0.0 and s[b] == 0.0:
            continue
        if s[a] * s[b] <= 0:
            jump = abs(s[b] - s[a])
            if jump > best_jump:
                best_jump = jump
                best = B[a] + (B[b] - B[a]) * s[a] / (s[a] - s[b]) if s[a] != s[b] else B[a]
    return best


__all__ = [
    "FM",
    "BM",
    "lorentzian",
    "effective_field_modulation",
    "SpectrumConfig",
    "Spectrum",
    "lockin_response",
    "simulate_spectrum",
    "find_zero_crossing",
]
