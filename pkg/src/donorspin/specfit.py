"""Background removal and derivative-lineshape peak fitting for field sweeps.

Lock-in traces are first-derivative lineshapes. Each peak is modelled as
the field derivative of a skewed Lorentzian absorption

    a(x) = (1 + q x) / (1 + x^2),    x = (B - center) / gamma,

scaled by a signed amplitude. With q = 0 the extrema of da/dB sit at
x = +-1/sqrt(3), so the peak-to-peak width is 2 gamma / sqrt(3).
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline, make_smoothing_spline
from scipy.optimize import least_squares

from .errors import BackgroundFitError, UsageError
from .transitions import DEFAULT_THRESHOLD, strength_matrix, sweep_grid, transition_table

SQRT3 = np.sqrt(3.0)


class IllConditionedFitWarning(UserWarning):
    pass


# --------------------------------------------------------------------------
# Background


def subtract_background(B, signal, exclude_windows, smoothing=None):
    """Subtract a cubic-spline baseline fitted outside ``exclude_windows``.

    Parameters
    ----------
    B, signal : array_like
        Ascending field grid and trace.
    exclude_windows : sequence of (lo, hi)
        Field intervals containing resonances; points inside are not used
        as anchors.
    smoothing : float, optional
        Smoothing parameter for a penalized spline (noisy data). The default
        interpolates the anchors exactly.

    Returns
    -------
    corrected : ndarray
    baseline : ndarray
    """
    B = np.asarray(B, dtype=float)
    y = np.asarray(signal, dtype=float)
    if B.shape != y.shape or B.ndim != 1:
        raise UsageError("field and signal must be 1-D arrays of equal length")
    if np.any(np.diff(B) <= 0):
        raise UsageError("field grid must be strictly ascending")
    keep = np.ones(len(B), dtype=bool)
    for lo, hi in exclude_windows:
        if lo > hi or hi < B[0] or lo > B[-1]:
            raise UsageError(f"exclusion window ({lo}, {hi}) lies outside the trace range")
        keep &= ~((B >= lo) & (B <= hi))
    if keep.sum() < 4:
        raise BackgroundFitError(
            f"only {int(keep.sum())} anchor points outside the exclusion windows; need at least 4"
        )
    if smoothing is None:
        spline = CubicSpline(B[keep], y[keep])
    else:
        spline = make_smoothing_spline(B[keep], y[keep], lam=smoothing)
    baseline = spline(B)
    return y - baseline, baseline


# --------------------------------------------------------------------------
# Lineshape


def skewed_absorption(B, center, gamma, skew=0.0):
    x = (np.asarray(B, dtype=float) - center) / gamma
    return (1.0 + skew * x) / (1.0 + x * x)


def derivative_lineshape(B, center, gamma, skew=0.0):
    """d a / d B of the skewed Lorentzian absorption."""
    x = (np.asarray(B, dtype=float) - center) / gamma
    d = 1.0 + x * x
    return (skew - 2.0 * x - skew * x * x) / (d * d) / gamma


def _lineshape_and_grads(B, center, gamma, skew):
    """Value of d a/d B and its partial derivatives w.r.t. (center, gamma, skew)."""
    x = (B - center) / gamma
    d = 1.0 + x * x
    num = skew - 2.0 * x - skew * x * x
    g = num / (d * d)  # da/dx
    value = g / gamma
    dg_dx = (-2.0 - 2.0 * skew * x) / d**2 - 4.0 * x * num / d**3
    dg_dq = (1.0 - x * x) / d**2
    d_center = -dg_dx / gamma**2
    d_gamma = -g / gamma**2 - dg_dx * x / gamma**2
    d_skew = dg_dq / gamma
    return value, d_center, d_gamma, d_skew


def peak_to_peak_width(gamma, skew=0.0):
    """Field separation of the extrema of the derivative lineshape.

    The extrema of da/dx are real roots of q x^3 + 3 x^2 - 3 q x - 1 = 0;
    the pair giving the global maximum and minimum is used.
    """
    if skew == 0.0:
        return 2.0 * gamma / SQRT3
    roots = np.roots([skew, 3.0, -3.0 * skew, -1.0])
    xs = np.sort(roots[np.abs(roots.imag) < 1e-9].real)
    g = (skew - 2.0 * xs - skew * xs**2) / (1.0 + xs**2) ** 2
    return float(abs(xs[np.argmax(g)] - xs[np.argmin(g)]) * gamma)


@dataclass(frozen=True)
class PeakModel:
    center: float
    gamma: float
    amplitude: float
    skew: float = 0.0
    phase_sign: int = 1

    @property
    def delta_B_pp(self):
        return peak_to_peak_width(self.gamma, self.skew)

    def evaluate(self, B):
        return self.phase_sign * self.amplitude * derivative_lineshape(B, self.center, self.gamma, self.skew)


@dataclass
class PeakFitResult:
    """Outcome of :func:`fit_peaks`.

    ``uncertainties`` holds per-peak dicts with the 1-sigma errors of
    center, gamma, amplitude and skew.
    """

    peaks: list
    uncertainties: list
    rms_residual: float
    r_squared: float
    converged: bool
    message: str
    residual_history: list = field(default_factory=list)
    warnings: list = field(default_factory=list)
    degenerate: bool = False

    @property
    def centers(self):
        return [p.center for p in self.peaks]

    def evaluate(self, B):
        return sum((p.evaluate(B) for p in self.peaks), np.zeros_like(np.asarray(B, dtype=float)))

    def to_dict(self):
        return {
            "peaks": [
                {
                    "center_mT": p.center,
                    "gamma_mT": p.gamma,
                    "amplitude": p.amplitude,
                    "skew": p.skew,
                    "phase_sign": p.phase_sign,
                    "delta_B_pp_mT": p.delta_B_pp,
                    "uncertainty": u,
                }
                for p, u in zip(self.peaks, self.uncertainties)
            ],
            "rms_residual": self.rms_residual,
            "r_squared": self.r_squared,
            "converged": self.converged,
            "message": self.message,
            "warnings": list(self.warnings),
            "degenerate": self.degenerate,
        }


def seed_peaks(B, signal, n_peaks):
    """Initial (center, gamma, amplitude) guesses from paired local extrema.

    Adjacent maximum/minimum pairs of opposite sign are ranked by their
    peak-to-peak height and the ``n_peaks`` largest are returned.
    """
    B = np.asarray(B, dtype=float)
    y = np.asarray(signal, dtype=float)
    interior = np.arange(1, len(y) - 1)
    is_max = (y[interior] >= y[interior - 1]) & (y[interior] > y[interior + 1])
    is_min = (y[interior] <= y[interior - 1]) & (y[interior] < y[interior + 1])
    ext = interior[is_max | is_min]
    pairs = []
    for a, b in zip(ext[:-1], ext[1:]):
        if y[a] * y[b] < 0:
            height = abs(y[a] - y[b])
            center = B[a] + (B[b] - B[a]) * y[a] / (y[a] - y[b])
            gamma = abs(B[b] - B[a]) * SQRT3 / 2.0
            # Extremum of the unit derivative lineshape is 3*sqrt(3)/8 / gamma.
            amp = np.sign(y[a]) * (height / 2.0) * gamma / (3.0 * SQRT3 / 8.0)
            pairs.append((height, center, gamma, amp))
    pairs.sort(key=lambda p: -p[0])
    guesses = [(c, g, a) for _, c, g, a in pairs[:n_peaks]]
    if len(guesses) < n_peaks:
        span = B[-1] - B[0]
        for k in range(len(guesses), n_peaks):
            guesses.append((B[0] + span * (k + 1) / (n_peaks + 1), span / (10 * n_peaks), 0.0))
    return sorted(guesses)


def fit_peaks(B, signal, n_peaks, guesses=None, fit_skew=True, max_nfev=500):
    """Least-squares fit of ``n_peaks`` derivative skewed Lorentzians.

    Parameters
    ----------
    B, signal : array_like
    n_peaks : int
    guesses : sequence, optional
        Per-peak (center, gamma) or (center, gamma, amplitude). Amplitudes
        left out are estimated linearly. Auto-seeded when omitted.
    fit_skew : bool
        Fit the asymmetry q; otherwise q = 0.

    Returns
    -------
    PeakFitResult
        Non-convergence is reported through ``converged`` and
        ``residual_history`` rather than raised.
    """
    B = np.asarray(B, dtype=float)
    y = np.asarray(signal, dtype=float)
    if n_peaks < 1:
        raise UsageError("n_peaks must be >= 1")
    if B.shape != y.shape or B.ndim != 1 or len(B) < 4 * n_peaks:
        raise UsageError("need 1-D field/signal arrays with at least 4 points per peak")
    lo, hi = B.min(), B.max()

    if guesses is None:
        guesses = seed_peaks(B, y, n_peaks)
    if len(guesses) != n_peaks:
        raise UsageError(f"expected {n_peaks} guesses, got {len(guesses)}")
    centers = np.array([g[0] for g in guesses], dtype=float)
    gammas = np.array([g[1] for g in guesses], dtype=float)
    if np.any(centers < lo) or np.any(centers > hi):
        raise UsageError("initial peak centers must lie inside the trace range")
    if np.any(gammas <= 0):
        raise UsageError("initial widths must be positive")
    basis = np.column_stack([derivative_lineshape(B, c, g) for c, g in zip(centers, gammas)])
    amps_lin = np.linalg.lstsq(basis, y, rcond=None)[0]
    amps = np.array([g[2] if len(g) > 2 and g[2] != 0 else a for g, a in zip(guesses, amps_lin)])

    npp = 4 if fit_skew else 3
    p0 = np.empty(n_peaks * npp)
    for k in range(n_peaks):
        p0[k * npp : k * npp + 3] = centers[k], gammas[k], amps[k]
        if fit_skew:
            p0[k * npp + 3] = 0.0
    span = hi - lo
    lower = np.full_like(p0, -np.inf)
    upper = np.full_like(p0, np.inf)
    lower[0::npp], upper[0::npp] = lo, hi
    lower[1::npp], upper[1::npp] = 1e-9 * span, 10 * span
    if fit_skew:
        lower[3::npp], upper[3::npp] = -10.0, 10.0
    p0 = np.clip(p0, lower, upper)

    history = []

    def residual(p):
        model = np.zeros_like(y)
        for k in range(n_peaks):
            c, g, a = p[k * npp : k * npp + 3]
            q = p[k * npp + 3] if fit_skew else 0.0
            model += a * derivative_lineshape(B, c, g, q)
        r = model - y
        history.append(float(r @ r))
        return r

    def jacobian(p):
        J = np.empty((len(y), len(p)))
        for k in range(n_peaks):
            c, g, a = p[k * npp : k * npp + 3]
            q = p[k * npp + 3] if fit_skew else 0.0
            v, dc, dg, dq = _lineshape_and_grads(B, c, g, q)
            J[:, k * npp] = a * dc
            J[:, k * npp + 1] = a * dg
            J[:, k * npp + 2] = v
            if fit_skew:
                J[:, k * npp + 3] = a * dq
        return J

    scale_y = float(np.max(np.abs(y))) if np.any(y) else 0.0
    notes = []
    if scale_y == 0.0:
        peaks = [PeakModel(float(c), float(g), 0.0, 0.0, 1) for c, g in zip(centers, gammas)]
        unc = [dict(center=np.inf, gamma=np.inf, amplitude=0.0, skew=np.inf) for _ in peaks]
        notes.append("trace is identically zero; amplitudes set to 0")
        return PeakFitResult(peaks, unc, 0.0, 0.0, True, "degenerate: zero trace", [0.0], notes, True)

    res = least_squares(
        residual,
        p0,
        jac=jacobian,
        bounds=(lower, upper),
        method="trf",
        x_scale="jac",
        ftol=1e-10,
        xtol=1e-12,
        gtol=1e-12,
        max_nfev=max_nfev,
    )
    p = res.x
    r = res.fun
    dof = max(len(y) - len(p), 1)
    s2 = float(r @ r) / dof
    try:
        cov = np.linalg.pinv(res.jac.T @ res.jac) * s2
        perr = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
    except np.linalg.LinAlgError:
        perr = np.full(len(p), np.inf)

    peaks = []
    unc = []
    for k in range(n_peaks):
        c, g, a = p[k * npp : k * npp + 3]
        q = p[k * npp + 3] if fit_skew else 0.0
        sign = -1 if a < 0 else 1
        peaks.append(PeakModel(float(c), float(g), float(abs(a)), float(q), sign))
        unc.append(
            dict(
                center=float(perr[k * npp]),
                gamma=float(perr[k * npp + 1]),
                amplitude=float(perr[k * npp + 2]),
                skew=float(perr[k * npp + 3]) if fit_skew else 0.0,
            )
        )
    order = np.argsort([pk.center for pk in peaks])
    peaks = [peaks[k] for k in order]
    unc = [unc[k] for k in order]

    for a, b in zip(peaks[:-1], peaks[1:]):
        if b.center - a.center < 0.1 * min(a.gamma, b.gamma):
            msg = f"peaks at {a.center:.5g} and {b.center:.5g} mT closer than gamma/10; fit is ill-conditioned"
            notes.append(msg)
            warnings.warn(msg, IllConditionedFitWarning, stacklevel=2)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    rss = float(r @ r)
    degenerate = all(pk.amplitude * 3 * SQRT3 / 8 / pk.gamma < 1e-9 * scale_y for pk in peaks)
    return PeakFitResult(
        peaks=peaks,
        uncertainties=unc,
        rms_residual=float(np.sqrt(rss / len(y))),
        r_squared=1.0 - rss / ss_tot if ss_tot > 0 else 1.0,
        converged=bool(res.status > 0),
        message=str(res.message),
        residual_history=history,
        warnings=notes,
        degenerate=degenerate,
    )


# --------------------------------------------------------------------------
# Assignment


@dataclass(frozen=True)
class Assignment:
    peak_index: int
    center: float
    transition: tuple
    B_resonance: float
    distance: float

    @property
    def assigned(self):
        return self.transition is not None


def resonance_fields(system, rf_freq, B_min, B_max, step=0.005, threshold=DEFAULT_THRESHOLD, near_miss=None):
    """Fields where allowed transitions match ``rf_freq``.

    Roots of f(B) - rf are located on a grid and refined linearly. When
    ``near_miss`` (MHz) is given, turning points of a transition that come
    within ``near_miss`` of the carrier without crossing it are included too.

    Returns
    -------
    list of ((i, j), B_res)
    """
    grid = np.arange(B_min, B_max + 0.5 * step, step)
    table = sweep_grid(system, grid)
    E = table.energies
    dim = system.dim
    strengths = np.array([strength_matrix(system, s) for s in table.solutions])
    out = []
    for i in range(1, dim):
        for j in range(i + 1, dim + 1):
            d = E[:, j - 1] - E[:, i - 1] - rf_freq
            w = strengths[:, i - 1, j - 1]
            for m in range(len(grid) - 1):
                if d[m] == 0.0 or d[m] * d[m + 1] < 0:
                    Br = grid[m] - d[m] * (grid[m + 1] - grid[m]) / (d[m + 1] - d[m])
                    if max(w[m], w[m + 1]) > threshold:
                        out.append(((i, j), float(Br)))
            if near_miss is not None:
                ad = np.abs(d)
                for m in range(1, len(grid) - 1):
                    if ad[m] < ad[m - 1] and ad[m] <= ad[m + 1] and d[m] * d[m - 1] > 0 and d[m] * d[m + 1] > 0:
                        if ad[m] < near_miss and w[m] > threshold:
                            out.append(((i, j), float(grid[m])))
    out.sort(key=lambda t: t[1])
    return out


def assign_transitions(peaks, system, rf_freq, window=0.3, threshold=DEFAULT_THRESHOLD, near_miss=None):
    """Match fitted peak centres to the nearest allowed resonance at ``rf_freq``.

    Peaks with no candidate within ``window`` (mT) get ``transition=None``.
    """
    if isinstance(peaks, PeakFitResult):
        centers = peaks.centers
    else:
        centers = [p.center if isinstance(p, PeakModel) else float(p) for p in peaks]
    if not centers:
        return []
    B_lo = max(0.0, min(centers) - window)
    B_hi = max(centers) + window
    cands = resonance_fields(system, rf_freq, B_lo, B_hi, threshold=threshold, near_miss=near_miss)
    out = []
    for k, c in enumerate(centers):
        if cands:
            pair, Br = min(cands, key=lambda t: abs(t[1] - c))
            dist = abs(Br - c)
        else:
            pair, Br, dist = None, float("nan"), float("inf")
        if dist > window:
            out.append(Assignment(k, float(c), None, float("nan"), float(dist)))
        else:
            out.append(Assignment(k, float(c), pair, Br, float(dist)))
    return out


def expected_resonances(system, rf_freq, B_min, B_max, gamma, threshold=DEFAULT_THRESHOLD):
    """Allowed resonances in [B_min, B_max] with their field-domain half widths.

    ``gamma`` is the frequency-domain HWHM in MHz; the field width of each
    line is gamma / |df/dB0| at its resonance field.

    Returns
    -------
    list of ((i, j), B_res, width_mT)
    """
    out = []
    for pair, Br in resonance_fields(system, rf_freq, B_min, B_max, threshold=threshold):
        tr = next(t for t in transition_table(system, Br, threshold=threshold) if t.pair == pair)
        width = gamma / abs(tr.dfdB) if tr.dfdB != 0 else np.inf
        out.append((pair, Br, float(width)))
    return out
