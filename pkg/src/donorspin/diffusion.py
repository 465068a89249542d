"""One-dimensional Fickian diffusion of a dopant profile through a thermal budget.

The lateral coordinate x runs from the contact edge (x = 0) into the device.
Each thermal step evolves dC/dt = D(T) d2C/dx2 with Crank-Nicolson time
stepping on a uniform grid. The left boundary is either a fixed-concentration
source or zero-flux; the right boundary is zero-flux or held at its initial
value.
"""

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from .constants import K_B_EV
from .errors import InvalidProfileError, NumericError

CM2_TO_NM2 = 1e14
ZERO_FLUX = "zero-flux"
SOURCE = "source"
FIXED = "fixed"

#: Illustrative Arrhenius parameters for intrinsic As diffusion in Si. They
#: are placeholders for demonstrations, not fitted values.
ILLUSTRATIVE_AS_IN_SI = {"D0": 22.9, "Ea": 4.1}


@dataclass(frozen=True)
class ThermalStep:
    temperature: float
    duration: float
    label: str = ""

    def __post_init__(self):
        if not self.temperature > 0:
            raise InvalidProfileError(f"temperature must be > 0 K, got {self.temperature!r}")
        if not self.duration >= 0:
            raise InvalidProfileError(f"duration must be >= 0 s, got {self.duration!r}")

    @classmethod
    def from_celsius(cls, T_C, duration, label=""):
        return cls(T_C + 273.15, duration, label)


DEVICE_BUDGET = (
    ThermalStep.from_celsius(950.0, 600.0, "drive-in"),
    ThermalStep.from_celsius(620.0, 600.0, "RTA 1"),
    ThermalStep.from_celsius(1000.0, 5.0, "RTA 2"),
)


@dataclass(frozen=True)
class DiffusivityModel:
    """Arrhenius diffusivity D(T) = D0 exp(-Ea / kT); D0 in cm^2/s, Ea in eV."""

    D0: float
    Ea: float

    def __post_init__(self):
        if not (self.D0 > 0 and self.Ea > 0):
            raise InvalidProfileError("D0 and Ea must be positive")

    def diffusivity(self, T):
        """D(T) in cm^2/s."""
        return self.D0 * math.exp(-self.Ea / (K_B_EV * T))


@dataclass(frozen=True)
class ConcentrationProfile:
    """Concentration (cm^-3) on a uniform grid ``x`` (nm)."""

    x: np.ndarray
    concentration: np.ndarray
    left_bc: str = ZERO_FLUX
    right_bc: str = ZERO_FLUX
    source_concentration: float = None
    annotations: tuple = field(default=())

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        c = np.asarray(self.concentration, dtype=float)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "concentration", c)
        if x.ndim != 1 or c.shape != x.shape or len(x) < 3:
            raise InvalidProfileError("grid and concentration must be 1-D with at least 3 points")
        dx = np.diff(x)
        if not np.all(dx > 0) or not np.allclose(dx, dx[0], rtol=1e-9, atol=0):
            raise InvalidProfileError("grid spacing must be uniform and positive")
        if np.any(~np.isfinite(c)) or np.any(c < 0):
            raise InvalidProfileError("concentration must be finite and >= 0")
        if self.left_bc not in (ZERO_FLUX, SOURCE):
            raise InvalidProfileError(f"left boundary must be {ZERO_FLUX!r} or {SOURCE!r}")
        if self.right_bc not in (ZERO_FLUX, FIXED):
            raise InvalidProfileError(f"right boundary must be {ZERO_FLUX!r} or {FIXED!r}")
        if self.left_bc == SOURCE:
            if self.source_concentration is None or not self.source_concentration >= 0:
                raise InvalidProfileError("a source boundary needs source_concentration >= 0")
            c = c.copy()
            c[0] = self.source_concentration
            object.__setattr__(self, "concentration", c)

    @property
    def dx(self):
        return float(self.x[1] - self.x[0])

    @classmethod
    def uniform(cls, length, dx=0.5, initial=0.0, **kwargs):
        """Grid from 0 to ``length`` nm with spacing ``dx`` and a constant initial value."""
        n = int(round(length / dx)) + 1
        x = np.linspace(0.0, (n - 1) * dx, n)
        return cls(x, np.full(n, float(initial)), **kwargs)

    def dose(self):
        """Areal dose, cm^-3 * nm (trapezoid rule)."""
        c = self.concentration
        return float(self.dx * (c.sum() - 0.5 * (c[0] + c[-1])))


def _laplacian_bands(n, left_bc, right_bc):
    """Banded form of the dimensionless second-difference operator."""
    lower = np.ones(n)  # element (k, k-1) stored at lower[k-1]
    diag = -2.0 * np.ones(n)
    upper = np.ones(n)  # element (k, k+1) stored at upper[k+1]
    if left_bc == ZERO_FLUX:
        upper[1] = 2.0
    else:
        diag[0] = 0.0
        upper[1] = 0.0
    if right_bc == ZERO_FLUX:
        lower[n - 2] = 2.0
    else:
        diag[-1] = 0.0
        lower[n - 2] = 0.0
    upper[0] = 0.0
    lower[-1] = 0.0
    return lower, diag, upper


def _apply(lower, diag, upper, c):
    out = diag * c
    out[:-1] += upper[1:] * c[1:]
    out[1:] += lower[:-1] * c[:-1]
    return out


def crank_nicolson(c, r, n_steps, left_bc, right_bc):
    """Advance ``c`` by ``n_steps`` Crank-Nicolson steps with mesh ratio ``r`` = D dt / dx^2."""
    n = len(c)
    lower, diag, upper = _laplacian_bands(n, left_bc, right_bc)
    ab = np.zeros((3, n))
    ab[0] = -0.5 * r * upper
    ab[1] = 1.0 - 0.5 * r * diag
    ab[2] = -0.5 * r * lower
    c = c.copy()
    for _ in range(n_steps):
        rhs = c + 0.5 * r * _apply(lower, diag, upper, c)
        c = solve_banded((1, 1), ab, rhs, check_finite=False)
    return c


def diffuse(profile, steps, model, max_ratio=1.0):
    """Evolve ``profile`` through each thermal step in order.

    Parameters
    ----------
    profile : ConcentrationProfile
    steps : sequence of ThermalStep
    model : DiffusivityModel
    max_ratio : float
        Upper bound on D dt / dx^2 per time step. Crank-Nicolson is stable
        for any ratio; values <= 1 additionally keep the scheme free of
        over- and undershoots.

    Returns
    -------
    ConcentrationProfile
    """
    if not isinstance(profile, ConcentrationProfile):
        raise InvalidProfileError("profile must be a ConcentrationProfile")
    if not max_ratio > 0:
        raise InvalidProfileError("max_ratio must be positive")
    c = profile.concentration.copy()
    dx = profile.dx
    for step in steps:
        if step.duration == 0:
            continue
        D = model.diffusivity(step.temperature) * CM2_TO_NM2
        total = D * step.duration / dx**2
        n_steps = max(1, math.ceil(total / max_ratio))
        c = crank_nicolson(c, total / n_steps, n_steps, profile.left_bc, profile.right_bc)
    scale = max(float(np.max(np.abs(c))), 1e-300)
    if np.any(c < -1e-10 * scale):
        raise NumericError(
            f"negative concentration after diffusion (min {c.min():.3g}); reduce max_ratio"
        )
    # Round-off below zero is clipped so the profile invariant holds.
    return replace(profile, concentration=np.maximum(c, 0.0))


def diffusion_length(model, steps):
    """sqrt(sum D_k t_k) in nm for a sequence of thermal steps."""
    return math.sqrt(sum(model.diffusivity(s.temperature) * CM2_TO_NM2 * s.duration for s in steps))


def mit_crossing(profile, threshold=7.8e18):
    """Distance (nm) at which the profile first drops below ``threshold``.

    Scans away from x = 0 and interpolates linearly between grid points.
    Returns ``x[0]`` if the profile starts below the threshold and ``None``
    if it never drops below.
    """
    if not threshold > 0:
        raise InvalidProfileError("threshold must be positive")
    c = profile.concentration
    x = profile.x
    below = np.nonzero(c < threshold)[0]
    if len(below) == 0:
        return None
    k = int(below[0])
    if k == 0:
        return float(x[0])
    c0, c1 = c[k - 1], c[k]
    return float(x[k - 1] + (x[k] - x[k - 1]) * (c0 - threshold) / (c0 - c1))


@dataclass(frozen=True)
class Marker:
    """Annotation attached to emitted profile tables."""

    label: str
    depth_nm: float
    concentration: float

    def header_line(self):
        return f"marker: {self.label} depth_nm={self.depth_nm:g} concentration_cm3={self.concentration:g}"


def reference_marker(depth, concentration, label="P implant"):
    """Reference point (depth in nm, concentration in cm^-3) for profile output."""
    if depth < 0:
        raise InvalidProfileError("marker depth must be >= 0")
    if concentration < 0:
        raise InvalidProfileError("marker concentration must be >= 0")
    return Marker(label, float(depth), float(concentration))
