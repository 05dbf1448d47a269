"""Dense symmetric eigenvalues via cyclic Jacobi rotations.

Kept deliberately independent of any optimization backend so that LMI
certificates rest only on this routine plus plain matrix arithmetic.
"""

from __future__ import annotations

import numpy as np

__all__ = ["offdiag_norm", "symmetric_eigvals"]


def offdiag_norm(a: np.ndarray) -> float:
    """Frobenius norm of the strictly off-diagonal part."""
    off = a.copy()
    np.fill_diagonal(off, 0.0)
    return float(np.linalg.norm(off))


def symmetric_eigvals(a: np.ndarray, rel_tol: float = 1e-12,
                      max_sweeps: int = 60) -> np.ndarray:
    """Eigenvalues of a symmetric matrix, ascending.

    Cyclic-by-rows Jacobi; sweeps until the off-diagonal Frobenius norm
    drops below ``rel_tol`` times the Frobenius norm of the input.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    sym_err = np.abs(a - a.T).max()
    if sym_err > 1e-10 * (1.0 + np.abs(a).max()):
        raise ValueError("matrix is not symmetric")
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 1:
        return a[0].copy()

    norm = float(np.linalg.norm(a))
    if norm == 0.0:
        return np.zeros(n)
    stop = rel_tol * norm

    for _ in range(max_sweeps):
        if offdiag_norm(a) <= stop:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                # small-angle root of the 2x2 subproblem; |theta| <= pi/4 is
                # required for cyclic sweeps to converge
                tau = (a[q, q] - a[p, p]) / (2.0 * apq)
                if not np.isfinite(tau):
                    # element is negligible against the diagonal gap
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    continue
                t = np.sign(tau) / (abs(tau) + np.hypot(1.0, tau)) if tau != 0.0 else 1.0
                c = 1.0 / np.hypot(1.0, t)
                s = t * c
                rp = c * a[p, :] - s * a[q, :]
                rq = s * a[p, :] + c * a[q, :]
                a[p, :] = rp
                a[q, :] = rq
                cp = c * a[:, p] - s * a[:, q]
                cq = s * a[:, p] + c * a[:, q]
                a[:, p] = cp
                a[:, q] = cq
                a[p, q] = 0.0
                a[q, p] = 0.0
    else:
        raise RuntimeError("Jacobi iteration did not converge")
    return np.sort(np.diag(a))
