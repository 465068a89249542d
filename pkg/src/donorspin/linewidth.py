"""Peak-to-peak linewidth model for field-swept resonances.

The field-domain linewidth of a transition combines three broadening terms:

* static field inhomogeneity ``delta_B0`` (mT),
* hyperfine inhomogeneity mapped to field, |df/dA| * delta_A / |df/dB0|,
* the effective field modulation of an RF frequency modulation,
  delta_f_mod / |df/dB0|.

They are either summed (``"linear"``, correlated sources) or added in
quadrature (``"quadrature"``, independent sources). Both terms containing
1/|df/dB0| diverge at a clock transition.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .errors import InsufficientDataError, UsageError
from .spin import operator_set, solve, zeeman_derivative
from .transitions import find_clock_transitions, level_expectations

LINEAR = "linear"
QUADRATURE = "quadrature"


@dataclass(frozen=True)
class LinewidthModel:
    delta_B0: float
    delta_A: float
    delta_f_mod: float
    combine: str = LINEAR

    def __post_init__(self):
        if min(self.delta_B0, self.delta_A, self.delta_f_mod) < 0:
            raise UsageError("broadening parameters must be >= 0")
        if self.combine not in (LINEAR, QUADRATURE):
            raise UsageError(f"combine must be {LINEAR!r} or {QUADRATURE!r}")


class CTPairBranch:
    """Transition selector for the merged clock-transition pair.

    Below ``split`` the (2,5) branch is used, above it (3,6). By default
    the split is the midpoint of the two clock-transition fields found for
    ``system``.
    """

    def __init__(self, system=None, split=None, low=(2, 5), high=(3, 6)):
        if split is None:
            if system is None:
                raise UsageError("CTPairBranch needs either a system or an explicit split field")
            cts = [c for c in find_clock_transitions(system) if c.pair in (low, high)]
            if len(cts) != 2:
                raise UsageError("could not locate both clock transitions of the pair")
            split = 0.5 * (cts[0].B_star + cts[1].B_star)
        self.split = float(split)
        self.low = tuple(low)
        self.high = tuple(high)

    def __call__(self, B0):
        return self.low if B0 < self.split else self.high

    def __repr__(self):
        return f"CTPairBranch(split={self.split!r}, low={self.low}, high={self.high})"


def _pair_for(transition, B0):
    return tuple(transition(B0)) if callable(transition) else tuple(transition)


def transition_derivatives(system, transition, B0):
    """df/dB0 and df/dA of ``transition`` at each field in ``B0``.

    ``transition`` is an (i, j) tuple or a callable mapping B0 to one.
    """
    B0 = np.atleast_1d(np.asarray(B0, dtype=float))
    dHdB = zeeman_derivative(system)
    SI = operator_set(system).SdotI
    dfdB = np.empty_like(B0)
    dfdA = np.empty_like(B0)
    for k, B in enumerate(B0):
        i, j = _pair_for(transition, B)
        sol = solve(system, B)
        dB, _ = level_expectations(sol, dHdB)
        dA, _ = level_expectations(sol, SI)
        dfdB[k] = dB[j - 1] - dB[i - 1]
        dfdA[k] = dA[j - 1] - dA[i - 1]
    return dfdB, dfdA


def linewidth_terms(delta_B0, delta_A, delta_f_mod, dfdB, dfdA):
    """The three broadening terms (mT) as magnitudes; ``inf`` where df/dB0 = 0."""
    dfdB = np.abs(np.asarray(dfdB, dtype=float))
    dfdA = np.abs(np.asarray(dfdA, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = np.where(dfdB == 0.0, np.inf, 1.0 / np.where(dfdB == 0.0, 1.0, dfdB))
        hyper = np.where(dfdA * delta_A == 0.0, 0.0, dfdA * delta_A * inv)
        mod = np.where(delta_f_mod == 0.0, 0.0, delta_f_mod * inv)
    field_term = np.full_like(dfdB, float(delta_B0))
    return field_term, hyper, mod


def combine_terms(terms, combine):
    t0, t1, t2 = terms
    if combine == LINEAR:
        return t0 + t1 + t2
    if combine == QUADRATURE:
        return np.sqrt(t0**2 + t1**2 + t2**2)
    raise UsageError(f"unknown combination mode {combine!r}")


def predict_linewidth(model, system, transition, B0):
    """Peak-to-peak linewidth (mT) at each field; ``inf`` at an exact turning point."""
    scalar = np.ndim(B0) == 0
    dfdB, dfdA = transition_derivatives(system, transition, B0)
    out = combine_terms(
        linewidth_terms(model.delta_B0, model.delta_A, model.delta_f_mod, dfdB, dfdA), model.combine
    )
    return float(out[0]) if scalar else out


def inverse_linewidth(model, system, transition, B0):
    """1/linewidth in 1/mT, reported as 0 where the linewidth diverges."""
    w = np.asarray(predict_linewidth(model, system, transition, B0), dtype=float)
    with np.errstate(divide="ignore"):
        out = np.where(np.isinf(w), 0.0, 1.0 / w)
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# Fitting


@dataclass
class LinewidthFit:
    delta_B0: float
    delta_A: float
    delta_B0_err: float
    delta_A_err: float
    covariance: np.ndarray
    residual_norm: float
    residuals: np.ndarray
    combine: str
    delta_f_mod: float
    converged: bool = True
    message: str = ""
    n_evaluations: int = 0
    extra: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "combine": self.combine,
            "delta_f_mod_MHz": self.delta_f_mod,
            "delta_B0_mT": self.delta_B0,
            "delta_B0_err_mT": self.delta_B0_err,
            "delta_A_MHz": self.delta_A,
            "delta_A_err_MHz": self.delta_A_err,
            "covariance": np.asarray(self.covariance).tolist(),
            "residual_norm": self.residual_norm,
            "residuals": np.asarray(self.residuals).tolist(),
            "converged": self.converged,
            "message": self.message,
            **self.extra,
        }


def _as_data(data):
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 3:
        raise UsageError("linewidth data must be rows of (B0_mT, dBpp_mT, sigma_mT)")
    return arr[:, 0], arr[:, 1], arr[:, 2]


def _hessian(fun, p, steps):
    n = len(p)
    H = np.empty((n, n))
    f0 = fun(p)
    for a in range(n):
        ea = np.zeros(n)
        ea[a] = steps[a]
        H[a, a] = (fun(p + ea) - 2 * f0 + fun(p - ea)) / steps[a] ** 2
        for b in range(a + 1, n):
            eb = np.zeros(n)
            eb[b] = steps[b]
            H[a, b] = H[b, a] = (
                fun(p + ea + eb) - fun(p + ea - eb) - fun(p - ea + eb) + fun(p - ea - eb)
            ) / (4 * steps[a] * steps[b])
    return H


def fit_linewidth_model(
    data,
    system,
    transition,
    combine=LINEAR,
    delta_f_mod=0.5,
    max_restarts=5,
    derivatives=None,
    fix_delta_B0=None,
):
    """Weighted least-squares fit of (delta_B0, delta_A) to measured linewidths.

    Parameters
    ----------
    data : array_like, shape (n, 3)
        Rows of (B0 in mT, peak-to-peak linewidth in mT, 1-sigma in mT).
    system : SpinSystem
    transition : tuple or callable
        (i, j) pair or a field-dependent selector such as :class:`CTPairBranch`.
    combine : {"linear", "quadrature"}
    delta_f_mod : float
        FM amplitude in MHz, held fixed.
    derivatives : tuple of arrays, optional
        Precomputed (df/dB0, df/dA) at the data fields.
    fix_delta_B0 : float, optional
        Hold the static term at this value and fit delta_A alone. Its
        uncertainty is then reported as 0, and ``extra["mean_offset"]``
        gives the weighted mean of data minus model.

    Notes
    -----
    The chi-square is minimized with a bounded Nelder-Mead simplex that is
    restarted from its own optimum until it stops improving. Uncertainties
    come from the inverse Hessian of chi-square / 2 at the optimum.
    """
    B0, y, sigma = _as_data(data)
    if len(B0) < 3 or len(np.unique(B0)) < 3:
        raise InsufficientDataError("need at least 3 data points at distinct fields")
    if np.any(~(sigma > 0)):
        raise UsageError("sigma must be positive")
    if combine not in (LINEAR, QUADRATURE):
        raise UsageError(f"unknown combination mode {combine!r}")
    if derivatives is None:
        dfdB, dfdA = transition_derivatives(system, transition, B0)
    else:
        dfdB, dfdA = (np.asarray(d, dtype=float) for d in derivatives)
    with np.errstate(divide="ignore"):
        a = np.abs(dfdA) / np.abs(dfdB)
        m = delta_f_mod / np.abs(dfdB)
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(m))):
        raise UsageError("a data point sits exactly on a turning point (df/dB0 = 0)")

    def model(p):
        b, dA = p
        if combine == LINEAR:
            return b + a * dA + m
        return np.sqrt(b * b + (a * dA) ** 2 + m * m)

    def chi2(p):
        r = (model(p) - y) / sigma
        return float(r @ r)

    far = np.abs(dfdB) >= np.median(np.abs(dfdB))
    p0 = np.array([max(float(np.median(y[far])), 1e-6), 0.1])
    upper = np.array([10 * y.max(), 10 * float(np.max(y / np.maximum(a, 1e-300)))])
    bounds = [(0.0, upper[0]), (0.0, upper[1])]
    free = np.array([True, True])
    if fix_delta_B0 is not None:
        if not fix_delta_B0 >= 0:
            raise UsageError("fix_delta_B0 must be >= 0")
        p0[0] = fix_delta_B0
        free[0] = False
    scale = np.maximum(np.abs(p0), 1e-3)[free]
    fixed = p0.copy()

    def full(q):
        out = fixed.copy()
        out[free] = q
        return out

    def objective(q):
        return chi2(full(q))

    best = p0[free]
    best_val = objective(best)
    nfev = 0
    converged = False
    message = ""
    for _ in range(max_restarts + 1):
        start_val = best_val
        res = minimize(
            lambda q: objective(q * scale),
            best / scale,
            method="Nelder-Mead",
            bounds=[(lo / s, hi / s) for (lo, hi), s in zip(np.array(bounds)[free], scale)],
            options={"xatol": 1e-12, "fatol": max(1e-14 * start_val, 1e-30), "maxiter": 1000},
        )
        nfev += res.nfev
        message = res.message
        cand = res.x * scale
        val = objective(cand)
        if val < best_val:
            best, best_val = cand, val
        # A restart that cannot improve the optimum means the simplex has settled.
        if start_val - best_val <= 1e-10 * start_val + 1e-26:
            converged = True
            message = "optimum stable under simplex restart"
            break
    steps = np.maximum(np.abs(best), scale) * 1e-4
    H = _hessian(objective, best, steps)
    cov = np.zeros((2, 2))
    try:
        cov[np.ix_(free, free)] = 2.0 * np.linalg.inv(H)
    except np.linalg.LinAlgError:
        cov[np.ix_(free, free)] = np.inf
    errs = np.sqrt(np.clip(np.diag(cov), 0.0, np.inf))
    best = full(best)
    resid = (model(best) - y) / sigma
    return LinewidthFit(
        delta_B0=float(best[0]),
        delta_A=float(best[1]),
        delta_B0_err=float(errs[0]),
        delta_A_err=float(errs[1]),
        covariance=cov,
        residual_norm=float(np.sqrt(resid @ resid)),
        residuals=resid,
        combine=combine,
        delta_f_mod=delta_f_mod,
        converged=converged,
        message=str(message),
        n_evaluations=int(nfev),
        extra={} if free.all() else {"mean_offset": float(np.sum((y - model(best)) / sigma**2) / np.sum(sigma**-2.0))},
    )


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    slope_err: float
    intercept_err: float


def fit_line(x, y, sigma=None):
    """Straight-line fit y = slope * x + intercept.

    With ``sigma`` the uncertainties are absolute; without, they are scaled
    by the residual variance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 3:
        raise InsufficientDataError("need at least 3 points for a line fit with uncertainties")
    if sigma is None:
        coef, cov = np.polyfit(x, y, 1, cov=True)
    else:
        coef, cov = np.polyfit(x, y, 1, w=1.0 / np.asarray(sigma, dtype=float), cov="unscaled")
    err = np.sqrt(np.diag(cov))
    return LineFit(float(coef[0]), float(coef[1]), float(err[0]), float(err[1]))


def strain_from_deltaA(delta_A, A, kappa):
    """Strain implied by a hyperfine spread: (delta_A / A) / kappa."""
    if not A > 0 or not kappa > 0:
        raise UsageError("A and kappa must be positive")
    return (delta_A / A) / kappa
