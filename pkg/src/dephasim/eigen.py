"""Cyclic Jacobi eigenvalues for stacks of small Hermitian matrices."""
from __future__ import annotations

import numpy as np

OFF_TOL = 1e-14
MAX_SWEEPS = 50


class EigenFailure(RuntimeError):
    """Jacobi sweeps did not reduce the off-diagonal norm below threshold."""


def _off_norm(a: np.ndarray) -> np.ndarray:
    n = a.shape[-1]
    mask = ~np.eye(n, dtype=bool)
    return np.sqrt(np.sum(np.abs(a[..., mask]) ** 2, axis=-1))


def jacobi_eigvalsh(a, tol: float = OFF_TOL, max_sweeps: int = MAX_SWEEPS) -> np.ndarray:
    """Eigenvalues (ascending) of Hermitian matrices of shape (..., n, n).

    Each rotation first removes the phase of a_pq with a diagonal unitary and
    then applies the real Jacobi rotation that annihilates the now-real
    entry.  Sweeps continue until every matrix in the stack has
    off-diagonal Frobenius norm below ``tol`` times its full norm.
    """
    a = np.array(a, dtype=complex, copy=True)
    batch_shape = a.shape[:-2]
    n = a.shape[-1]
    a = a.reshape((-1, n, n))
    a = 0.5 * (a + a.conj().transpose(0, 2, 1))
    scale = np.sqrt(np.sum(np.abs(a) ** 2, axis=(1, 2)))
    thresh = tol * np.where(scale > 0, scale, 1.0)
    active = np.arange(a.shape[0])
    for _ in range(max_sweeps):
        done = _off_norm(a[active]) <= thresh[active]
        active = active[~done]
        if active.size == 0:
            break
        sub = a[active]
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = sub[:, p, q]
                r = np.abs(apq)
                rot = r > 0
                phase = np.where(rot, apq / np.where(rot, r, 1.0), 1.0)
                app = sub[:, p, p].real
                aqq = sub[:, q, q].real
                with np.errstate(divide="ignore", invalid="ignore"):
                    theta = np.where(rot, (aqq - app) / (2 * np.where(rot, r, 1.0)), 0.0)
                t = np.where(theta >= 0, 1.0, -1.0) / (np.abs(theta) + np.sqrt(1 + theta * theta))
                t = np.where(rot, t, 0.0)
                c = 1 / np.sqrt(1 + t * t)
                s = t * c
                # U restricted to (p, q): [[c, s], [-s conj(phase), c conj(phase)]]
                upp, upq = c, s
                uqp, uqq = -s * phase.conj(), c * phase.conj()
                col_p = sub[:, :, p].copy()
                col_q = sub[:, :, q].copy()
                sub[:, :, p] = col_p * upp[:, None] + col_q * uqp[:, None]
                sub[:, :, q] = col_p * upq[:, None] + col_q * uqq[:, None]
                row_p = sub[:, p, :].copy()
                row_q = sub[:, q, :].copy()
                sub[:, p, :] = np.conj(upp)[:, None] * row_p + np.conj(uqp)[:, None] * row_q
                sub[:, q, :] = np.conj(upq)[:, None] * row_p + np.conj(uqq)[:, None] * row_q
                sub[:, p, q] = 0.0
                sub[:, q, p] = 0.0
        a[active] = sub
    else:
        if _off_norm(a[active]).max(initial=0.0) > thresh[active].max(initial=0.0):
            raise EigenFailure(f"no convergence after {max_sweeps} sweeps")
    w = np.sort(np.diagonal(a, axis1=1, axis2=2).real, axis=-1)
    return w.reshape(batch_shape + (n,))
