"""Transition frequencies, strengths, derivatives and clock transitions.

States are labelled 1..dim in ascending energy at each field, and a
transition (i, j) with i < j has frequency f = E_j - E_i >= 0. Strengths
are |<i|Sx|j>|^2. Field and hyperfine derivatives use Hellmann-Feynman
expectation values, which are exact for a non-degenerate spectrum.

At exactly degenerate points (B0 = 0 for the donor) eigenvectors are not
unique. Quantities exposed here are made gauge independent: strengths are
averaged over degenerate blocks and derivatives are taken in the basis that
diagonalizes the perturbation inside each degenerate subspace, which gives
the one-sided derivative for an increasing parameter.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import TrackingError, UsageError
from .linalg import jacobi_eigh
from .spin import build_hamiltonian, eigensolve, operator_set, solve, zeeman_derivative

DEGENERACY_TOL = 1e-9
DEFAULT_THRESHOLD = 1e-3


class DegenerateLevelWarning(UserWarning):
    """A derivative was evaluated on a degenerate level (one-sided value)."""


@dataclass(frozen=True)
class Transition:
    i: int
    j: int
    f: float
    strength: float
    dfdB: float
    dfdA: float
    allowed: bool
    degenerate: bool = False

    @property
    def pair(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class ClockTransition:
    i: int
    j: int
    B_star: float
    f_star: float
    curvature: float
    strength: float

    @property
    def pair(self):
        return (self.i, self.j)


def degenerate_groups(energies, tol=DEGENERACY_TOL):
    """Split ascending ``energies`` into runs closer than ``tol``."""
    groups = []
    start = 0
    for k in range(1, len(energies) + 1):
        if k == len(energies) or energies[k] - energies[k - 1] > tol:
            groups.append(np.arange(start, k))
            start = k
    return groups


def strength_matrix(system, solution, tol=DEGENERACY_TOL):
    """Gauge-invariant matrix of |<a|Sx|b>|^2 in the eigenbasis.

    Inside degenerate blocks the squared elements are replaced by their
    block average, which keeps the total equal to Tr(Sx^2).
    """
    M = np.abs(solution.in_eigenbasis(operator_set(system).Sx)) ** 2
    groups = degenerate_groups(solution.energies, tol)
    if len(groups) == solution.dim:
        return M
    W = np.empty_like(M)
    for ga in groups:
        for gb in groups:
            W[np.ix_(ga, gb)] = M[np.ix_(ga, gb)].mean()
    return W


def level_expectations(solution, op, tol=DEGENERACY_TOL):
    """Per-level <k|op|k>, resolved inside degenerate subspaces.

    Returns
    -------
    values : ndarray
        Expectation value for each ascending label. Within a degenerate
        subspace the eigenvalues of ``op`` restricted to it are assigned in
        ascending order.
    degenerate : ndarray of bool
        True for levels that belong to a degenerate subspace.
    """
    M = solution.in_eigenbasis(op)
    values = np.diag(M).real.copy()
    flags = np.zeros(solution.dim, dtype=bool)
    for g in degenerate_groups(solution.energies, tol):
        if len(g) > 1:
            values[g] = jacobi_eigh(M[np.ix_(g, g)])[0]
            flags[g] = True
    return values, flags


def _pair_derivative(solution, op, i, j):
    _check_pair(solution.dim, i, j)
    values, flags = level_expectations(solution, op)
    degenerate = bool(flags[i - 1] or flags[j - 1])
    if degenerate:
        warnings.warn(
            f"transition ({i},{j}) involves a degenerate level at B0={solution.B0}; "
            "returning the one-sided derivative",
            DegenerateLevelWarning,
            stacklevel=3,
        )
    return values[j - 1] - values[i - 1]


def _check_pair(dim, i, j):
    if i == j or not (1 <= i <= dim and 1 <= j <= dim):
        raise UsageError(f"invalid transition labels ({i}, {j}) for dimension {dim}")


def df_dB0(system, solution, i, j):
    """Field derivative of f = E_j - E_i in MHz/mT (Hellmann-Feynman)."""
    return _pair_derivative(solution, zeeman_derivative(system), i, j)


def df_dA(system, solution, i, j):
    """Hyperfine derivative <j|S.I|j> - <i|S.I|i> (dimensionless)."""
    return _pair_derivative(solution, operator_set(system).SdotI, i, j)


def transition_table(system, B0, threshold=DEFAULT_THRESHOLD, solution=None):
    """All dim*(dim-1)/2 transitions at field ``B0``.

    ``allowed`` is ``strength > threshold``.
    """
    if threshold < 0:
        raise UsageError("threshold must be >= 0")
    sol = solution if solution is not None else solve(system, B0)
    W = strength_matrix(system, sol)
    dB, flag_b = level_expectations(sol, zeeman_derivative(system))
    dA, flag_a = level_expectations(sol, operator_set(system).SdotI)
    E = sol.energies
    out = []
    for a in range(sol.dim - 1):
        for b in range(a + 1, sol.dim):
            s = float(W[a, b])
            out.append(
                Transition(
                    i=a + 1,
                    j=b + 1,
                    f=float(E[b] - E[a]),
                    strength=s,
                    dfdB=float(dB[b] - dB[a]),
                    dfdA=float(dA[b] - dA[a]),
                    allowed=s > threshold,
                    degenerate=bool(flag_b[a] or flag_b[b] or flag_a[a] or flag_a[b]),
                )
            )
    return out


# --------------------------------------------------------------------------
# Field sweeps and adiabatic tracking


@dataclass
class SweepTable:
    """Eigen-solutions on an ascending field grid.

    ``permutations[m, k]`` is the ascending-energy index (0-based) at grid
    point m of the state that is continuously connected to ascending index k
    at the first grid point.
    """

    system: object
    B_grid: np.ndarray
    solutions: list
    permutations: np.ndarray

    @property
    def energies(self):
        return np.array([s.energies for s in self.solutions])

    @property
    def tracked_energies(self):
        E = self.energies
        return np.take_along_axis(E, self.permutations, axis=1)

    def frequencies(self, i, j):
        E = self.energies
        return E[:, j - 1] - E[:, i - 1]

    def level_slopes(self):
        """Hellmann-Feynman dE_k/dB0 for every grid point, shape (n, dim)."""
        op = zeeman_derivative(self.system)
        return np.array([level_expectations(s, op)[0] for s in self.solutions])


def _aligned_vectors(solution, system):
    """Eigenvectors with degenerate subspaces rotated to diagonalize dH/dB0."""
    V = solution.vectors
    groups = [g for g in degenerate_groups(solution.energies) if len(g) > 1]
    if not groups or system is None:
        return V
    V = V.copy()
    D = solution.in_eigenbasis(zeeman_derivative(system))
    for g in groups:
        _, R = jacobi_eigh(D[np.ix_(g, g)])
        V[:, g] = V[:, g] @ R
    return V


def _greedy_match(overlap):
    n = overlap.shape[0]
    perm = -np.ones(n, dtype=int)
    best = np.zeros(n)
    used_rows = np.zeros(n, dtype=bool)
    used_cols = np.zeros(n, dtype=bool)
    # Stable descending order keeps ties deterministic.
    for flat in np.argsort(-overlap, axis=None, kind="stable"):
        r, c = divmod(int(flat), n)
        if used_rows[r] or used_cols[c]:
            continue
        perm[r] = c
        best[r] = overlap[r, c]
        used_rows[r] = used_cols[c] = True
    return perm, best


def track_states(solutions, system=None, min_overlap=0.5):
    """Adiabatic tracking permutations for a sequence of eigen-solutions.

    Adjacent points are matched by greedy maximum |overlap|.

    Raises
    ------
    TrackingError
        If any matched overlap is below ``min_overlap``.
    """
    n = len(solutions)
    dim = solutions[0].dim
    perms = np.empty((n, dim), dtype=int)
    perms[0] = np.arange(dim)
    prev = _aligned_vectors(solutions[0], system)
    for m in range(1, n):
        cur = _aligned_vectors(solutions[m], system)
        overlap = np.abs(prev.conj().T @ cur)
        step, best = _greedy_match(overlap)
        if best.min() < min_overlap:
            raise TrackingError(
                f"ambiguous state tracking between B0={solutions[m - 1].B0} and "
                f"B0={solutions[m].B0} mT (best overlap {best.min():.3f}); refine the grid",
                interval=(solutions[m - 1].B0, solutions[m].B0),
            )
        perms[m] = step[perms[m - 1]]
        prev = cur
    return perms


def field_grid(B_min, B_max, step):
    if not (np.isfinite(B_min) and np.isfinite(B_max)) or B_min > B_max:
        raise UsageError(f"invalid field range [{B_min}, {B_max}]")
    if step <= 0:
        raise UsageError("step must be positive")
    n = int(round((B_max - B_min) / step)) + 1
    return np.linspace(B_min, B_max, n)


def sweep(system, B_min, B_max, step=0.01, method="jacobi"):
    """Solve on a uniform grid and track states adiabatically."""
    grid = field_grid(B_min, B_max, step)
    return sweep_grid(system, grid, method=method)


def sweep_grid(system, grid, method="jacobi"):
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0 or np.any(np.diff(grid) <= 0):
        raise UsageError("field grid must be a non-empty ascending sequence")
    sols = [solve(system, B, method=method) for B in grid]
    perms = track_states(sols, system)
    return SweepTable(system, grid, sols, perms)


# --------------------------------------------------------------------------
# Clock transitions


def _slope_at(system, B, i, j):
    sol = solve(system, B)
    vals, _ = level_expectations(sol, zeeman_derivative(system))
    return vals[j - 1] - vals[i - 1]


def _frequency_at(system, B, i, j):
    E = eigensolve(build_hamiltonian(system, B)).energies
    return E[j - 1] - E[i - 1]


def _bisect(g, a, b, ga, xtol):
    while b - a > xtol:
        mid = 0.5 * (a + b)
        gm = g(mid)
        if gm == 0.0:
            return mid
        if np.sign(gm) == np.sign(ga):
            a, ga = mid, gm
        else:
            b = mid
    return 0.5 * (a + b)


def find_clock_transitions(
    system,
    B_min=0.5,
    B_max=10.0,
    step=0.01,
    threshold=DEFAULT_THRESHOLD,
    xtol=1e-9,
    slope_tol=1e-6,
    table=None,
):
    """Locate turning points df/dB0 = 0 of allowed transitions.

    Sign changes of the Hellmann-Feynman slope on the sweep grid are refined
    by bisection. Brackets whose refined slope does not vanish (kinks from
    level crossings under ascending labels) are discarded, as are
    transitions whose strength at the turning point is below ``threshold``.

    Returns
    -------
    list of ClockTransition
        Sorted by field. Empty when no turning point exists.
    """
    if B_min < 0:
        raise UsageError("B_min must be >= 0 (the zero-field degeneracy is excluded)")
    if B_min >= B_max:
        raise UsageError(f"B_min must be below B_max, got [{B_min}, {B_max}]")
    if table is None:
        table = sweep(system, B_min, B_max, step)
    grid = table.B_grid
    slopes = table.level_slopes()
    dim = system.dim
    h = 1e-3
    found = []
    for i in range(1, dim):
        for j in range(i + 1, dim + 1):
            d = slopes[:, j - 1] - slopes[:, i - 1]
            for m in range(len(grid) - 1):
                a, b = d[m], d[m + 1]
                if a == 0.0:
                    B_star = grid[m]
                elif a * b < 0:
                    B_star = _bisect(
                        lambda B: _slope_at(system, B, i, j), grid[m], grid[m + 1], a, xtol
                    )
                elif b == 0.0 and m + 1 == len(grid) - 1:
                    B_star = grid[m + 1]
                else:
                    continue
                if abs(_slope_at(system, B_star, i, j)) > slope_tol:
                    continue
                sol = solve(system, B_star)
                strength = float(strength_matrix(system, sol)[i - 1, j - 1])
                if strength <= threshold:
                    continue
                f0 = sol.energies[j - 1] - sol.energies[i - 1]
                fp = _frequency_at(system, B_star + h, i, j)
                fm = _frequency_at(system, B_star - h, i, j)
                found.append(
                    ClockTransition(i, j, float(B_star), float(f0), float((fp - 2 * f0 + fm) / h**2), strength)
                )
    found.sort(key=lambda c: (c.B_star, c.i, c.j))
    return found
