"""Cyclic Jacobi diagonalization of small symmetric matrices.

Works on a single matrix or a stack of them; the rotation sequence is the same
for every matrix in the batch, so results for one matrix do not depend on the
others it was batched with.
"""

from __future__ import annotations

import numpy as np

MAX_SWEEPS = 100
OFF_TOL = 1e-12


class JacobiConvergenceError(ArithmeticError):
    pass


def _off_norm(A: np.ndarray) -> np.ndarray:
    n = A.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.where(mask, A, 0.0) ** 2, axis=(-2, -1)))


def jacobi_eigh(A, tol: float = OFF_TOL, max_sweeps: int = MAX_SWEEPS):
    """Eigen-decomposition ``A = V diag(w) V^T`` by cyclic Jacobi rotations.

    Parameters
    ----------
    A : array (..., n, n)
        Symmetric matrices.
    tol : float
        Sweeps stop once the off-diagonal Frobenius norm is at most
        ``tol * ||A||_F`` for every matrix in the batch.

    Returns
    -------
    w : array (..., n)
        Eigenvalues, ascending.
    V : array (..., n, n)
        Orthogonal matrices whose columns are the eigenvectors.
    """
    A = np.array(A, dtype=float, copy=True)
    single = A.ndim == 2
    if single:
        A = A[None]
    if A.shape[-1] != A.shape[-2]:
        raise ValueError("matrices must be square")
    n = A.shape[-1]
    A = 0.5 * (A + np.swapaxes(A, -1, -2))
    V = np.broadcast_to(np.eye(n), A.shape).copy()
    fro = np.sqrt(np.sum(A * A, axis=(-2, -1)))
    target = tol * fro

    sweeps = 0
    while np.any(_off_norm(A) > target):
        if sweeps >= MAX_SWEEPS or sweeps >= max_sweeps:
            raise JacobiConvergenceError(f"Jacobi did not converge in {sweeps} sweeps")
        sweeps += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[:, p, q]
                active = apq != 0.0
                if not np.any(active):
                    continue
                app = A[:, p, p]
                aqq = A[:, q, q]
                safe = np.where(active, apq, 1.0)
                theta = (aqq - app) / (2.0 * safe)
                t = np.sign(theta) / (np.abs(theta) + np.hypot(theta, 1.0))
                t = np.where(theta == 0.0, 1.0, t)
                t = np.where(active, t, 0.0)
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                # A <- J^T A J with J = rotation in the (p, q) plane
                Ap = A[:, :, p].copy()
                Aq = A[:, :, q].copy()
                A[:, :, p] = c[:, None] * Ap - s[:, None] * Aq
                A[:, :, q] = s[:, None] * Ap + c[:, None] * Aq
                Ap = A[:, p, :].copy()
                Aq = A[:, q, :].copy()
                A[:, p, :] = c[:, None] * Ap - s[:, None] * Aq
                A[:, q, :] = s[:, None] * Ap + c[:, None] * Aq
                A[:, p, q] = np.where(active, 0.0, A[:, p, q])
                A[:, q, p] = A[:, p, q]
                Vp = V[:, :, p].copy()
                Vq = V[:, :, q].copy()
                V[:, :, p] = c[:, None] * Vp - s[:, None] * Vq
                V[:, :, q] = s[:, None] * Vp + c[:, None] * Vq

    w = np.diagonal(A, axis1=-2, axis2=-1).copy()
    order = np.argsort(w, axis=-1, kind="stable")
    w = np.take_along_axis(w, order, axis=-1)
    V = np.take_along_axis(V, order[:, None, :], axis=-1)
    if single:
        return w[0], V[0]
    return w, V


def jacobi_eigvalsh(A, tol: float = OFF_TOL) -> np.ndarray:
    return jacobi_eigh(A, tol)[0]


def zero_threshold(H) -> np.ndarray:
    """Eigenvalues with modulus below this are treated as exactly zero."""
    H = np.asarray(H, dtype=float)
    return 1e-12 * (1.0 + np.sqrt(np.sum(H * H, axis=(-2, -1))))
