"""Spin systems, angular-momentum operators and the donor Hamiltonian.

The Hamiltonian of an electron spin S coupled isotropically to a nuclear
spin I in a static field B0 along z is

    H/h = g_e (mu_B/h) B0 Sz - g_n (mu_N/h) B0 Iz + A (S . I)

with H/h in MHz and B0 in mT. Operators act on the product space
|m_S> (x) |m_I>, electron factor first.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .constants import CONSTANTS
from .errors import InvalidSpinError
from .linalg import jacobi_eigh, symmetrize


def _twice(s):
    two_s = 2 * s
    if isinstance(two_s, complex) or not np.isfinite(two_s):
        raise InvalidSpinError(f"spin must be a non-negative half-integer, got {s!r}")
    k = round(two_s)
    if k < 0 or abs(two_s - k) > 1e-12:
        raise InvalidSpinError(f"spin must be a non-negative half-integer, got {s!r}")
    return k


@dataclass(frozen=True)
class SpinSystem:
    """One paramagnetic species: electron spin coupled to a nuclear spin.

    Attributes
    ----------
    name : str
    S, I : float
        Electron and nuclear spin quantum numbers (half-integers).
    A : float
        Isotropic hyperfine constant, MHz. Ignored (forced to 0) when I = 0.
    g_e, g_n : float
        Electron and nuclear g-factors. The nuclear Zeeman term enters with
        a minus sign, so a positive g_n lowers the energy of m_I > 0.
    """

    name: str
    S: float
    I: float
    A: float = 0.0
    g_e: float = 2.0
    g_n: float = 0.0

    def __post_init__(self):
        _twice(self.S)
        _twice(self.I)
        if not np.isfinite(self.A) or self.A < 0:
            raise InvalidSpinError(f"hyperfine constant must be finite and >= 0, got {self.A!r}")
        if self.I == 0 and self.A != 0:
            object.__setattr__(self, "A", 0.0)

    @property
    def dim(self):
        return (_twice(self.S) + 1) * (_twice(self.I) + 1)

    def with_hyperfine(self, A):
        return SpinSystem(self.name, self.S, self.I, A, self.g_e, self.g_n)

    def to_dict(self):
        return {
            "name": self.name,
            "S": str(Fraction(self.S).limit_denominator(2)),
            "I": str(Fraction(self.I).limit_denominator(2)),
            "A_MHz": self.A,
            "g_e": self.g_e,
            "g_n": self.g_n,
        }


AS75 = SpinSystem("As75", S=0.5, I=1.5, A=198.4, g_e=1.99837, g_n=0.959)
PB0 = SpinSystem("Pb0", S=0.5, I=0.0, A=0.0, g_e=2.0, g_n=0.0)
PRESETS = {"As75": AS75, "Pb0": PB0}


def spin_operators(s):
    """Single-spin operators (Jx, Jy, Jz) for spin quantum number ``s``.

    The basis is ordered m = s, s-1, ..., -s.
    """
    two_s = _twice(s)
    s = two_s / 2
    m = s - np.arange(two_s + 1)
    jp = np.zeros((two_s + 1, two_s + 1), dtype=complex)
    for k in range(1, two_s + 1):
        jp[k - 1, k] = np.sqrt(s * (s + 1) - m[k] * (m[k] + 1))
    jm = jp.conj().T
    jx = 0.5 * (jp + jm)
    jy = -0.5j * (jp - jm)
    jz = np.diag(m).astype(complex)
    return jx, jy, jz


@dataclass(frozen=True)
class OperatorSet:
    """Electron and nuclear spin operators on the product space."""

    Sx: np.ndarray
    Sy: np.ndarray
    Sz: np.ndarray
    Ix: np.ndarray
    Iy: np.ndarray
    Iz: np.ndarray
    SdotI: np.ndarray = field(repr=False)

    @property
    def dim(self):
        return self.Sz.shape[0]


@lru_cache(maxsize=64)
def _operator_set(two_s, two_i):
    es = spin_operators(two_s / 2)
    ns = spin_operators(two_i / 2)
    eye_s = np.eye(two_s + 1)
    eye_i = np.eye(two_i + 1)
    S = [np.kron(op, eye_i) for op in es]
    I = [np.kron(eye_s, op) for op in ns]
    SdotI = sum(a @ b for a, b in zip(S, I))
    ops = [*S, *I, SdotI]
    for op in ops:
        op.setflags(write=False)
    return OperatorSet(*ops)


def operator_set(system):
    """Product-space operators for ``system`` (cached, read-only arrays)."""
    return _operator_set(_twice(system.S), _twice(system.I))


def zeeman_derivative(system, constants=CONSTANTS):
    """dH/dB0 in MHz/mT."""
    ops = operator_set(system)
    return (
        system.g_e * constants.mu_B_over_h * ops.Sz
        - system.g_n * constants.mu_N_over_h * ops.Iz
    )


def build_hamiltonian(system, B0, constants=CONSTANTS):
    """Donor Hamiltonian at field ``B0`` (mT), in MHz."""
    B0 = float(B0)
    if not np.isfinite(B0):
        raise InvalidSpinError(f"field must be finite, got {B0!r}")
    ops = operator_set(system)
    return B0 * zeeman_derivative(system, constants) + system.A * ops.SdotI


@dataclass(frozen=True)
class EigenSolution:
    """Spectral decomposition at one field point.

    ``energies`` (MHz) are ascending; column k of ``vectors`` is the state
    labelled k+1 in the ascending-energy convention.
    """

    B0: float
    energies: np.ndarray
    vectors: np.ndarray

    @property
    def dim(self):
        return len(self.energies)

    def expectation(self, op):
        """Diagonal matrix elements <k|op|k> for every eigenstate."""
        return np.einsum("ik,ij,jk->k", self.vectors.conj(), op, self.vectors).real

    def in_eigenbasis(self, op):
        return self.vectors.conj().T @ op @ self.vectors


def eigensolve(H, B0=float("nan"), method="jacobi"):
    """Full eigendecomposition of a Hermitian matrix.

    Parameters
    ----------
    H : array_like
        Hermitian matrix (symmetrized defensively; rejected when the
        correction exceeds 1e-10).
    B0 : float, optional
        Field at which H was built, stored on the result.
    method : {"jacobi", "lapack"}
        ``"lapack"`` defers to :func:`numpy.linalg.eigh` and exists as an
        independent cross-check.
    """
    if method == "jacobi":
        energies, vectors = jacobi_eigh(H)
    elif method == "lapack":
        energies, vectors = np.linalg.eigh(symmetrize(H))
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    return EigenSolution(float(B0), energies, vectors)


def solve(system, B0, method="jacobi"):
    """Build and diagonalize the Hamiltonian of ``system`` at ``B0``."""
    return eigensolve(build_hamiltonian(system, B0), B0=B0, method=method)
