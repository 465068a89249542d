"""Cyclic Jacobi eigensolver for small dense Hermitian matrices.

The spin Hamiltonians handled here are at most ~20-dimensional and very
sparse in the product basis, so a rotation-based solver is both fast enough
and easy to reason about. Each rotation first removes the phase of the
targeted off-diagonal element and then applies an ordinary real Jacobi
rotation to the 2x2 block.
"""

import numpy as np

from .errors import ConvergenceError, MatrixShapeError

HERMITIAN_TOL = 1e-10


def symmetrize(H, tol=HERMITIAN_TOL):
    """Return (H + H^dagger)/2, rejecting matrices that are not Hermitian.

    Raises
    ------
    MatrixShapeError
        If H is not square, or the symmetrizing correction exceeds ``tol``
        in max-norm.
    """
    H = np.asarray(H, dtype=complex)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise MatrixShapeError(f"expected a square matrix, got shape {H.shape}")
    if not np.all(np.isfinite(H)):
        raise MatrixShapeError("matrix has non-finite entries")
    Hs = 0.5 * (H + H.conj().T)
    dev = np.max(np.abs(Hs - H)) if H.size else 0.0
    if dev > tol:
        raise MatrixShapeError(f"matrix is not Hermitian (deviation {dev:.3e} > {tol:.1e})")
    return Hs


def _offdiag_norm(A):
    # Summing the off-diagonal entries directly avoids the cancellation of
    # ||A||^2 - ||diag A||^2, which floors near sqrt(eps) * ||A||.
    off = A - np.diag(np.diag(A))
    return float(np.sqrt(np.sum(off.real**2 + off.imag**2)))


def jacobi_eigh(H, tol=1e-12, max_sweeps=100):
    """Diagonalize a Hermitian matrix with cyclic Jacobi rotations.

    Parameters
    ----------
    H : (n, n) array_like
        Hermitian matrix. It is symmetrized before solving.
    tol : float
        Convergence when the off-diagonal Frobenius norm drops below
        ``tol`` times the norm of the diagonal.
    max_sweeps : int
        Maximum number of full cyclic sweeps.

    Returns
    -------
    energies : (n,) ndarray
        Eigenvalues in ascending order.
    vectors : (n, n) ndarray
        Unitary matrix whose columns are the eigenvectors. Each column's
        largest component is made real and positive so the output is
        reproducible.
    """
    A = symmetrize(H).copy()
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    if n == 0:
        return np.zeros(0), V

    for _ in range(max_sweeps + 1):
        off = _offdiag_norm(A)
        scale = np.linalg.norm(np.diag(A))
        if off <= tol * scale or off == 0.0:
            break
        # Tiny elements left behind by earlier rotations are not worth a rotation.
        skip = 1e-3 * tol * max(scale, off) / n
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                r = abs(apq)
                if r <= skip:
                    continue
                phase = apq / r
                app = A[p, p].real
                aqq = A[q, q].real
                theta = (aqq - app) / (2.0 * r)
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # U acts on columns (p, q): phase removal followed by rotation.
                U = np.array([[c, s], [-s * np.conj(phase), c * np.conj(phase)]])
                idx = [p, q]
                A[:, idx] = A[:, idx] @ U
                A[idx, :] = U.conj().T @ A[idx, :]
                A[p, q] = A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                V[:, idx] = V[:, idx] @ U
    else:
        raise ConvergenceError(
            f"Jacobi iteration did not converge in {max_sweeps} sweeps "
            f"(off-diagonal norm {off:.3e})"
        )

    energies = np.diag(A).real.copy()
    order = np.argsort(energies, kind="stable")
    energies = energies[order]
    V = V[:, order]
    for k in range(n):
        m = np.argmax(np.abs(V[:, k]) + 1e-14 * np.arange(n)[::-1])
        V[:, k] *= np.conj(V[m, k]) / abs(V[m, k])
    return energies, V
