"""One-sided (Hestenes) Jacobi singular values.

Columns are rotated pairwise until mutually orthogonal; the singular values
are then the column norms. Each rotation is computed from the exact column
inner products, so small singular values come out with high relative
accuracy, unlike bidiagonalization-based drivers whose error is relative to
``sigma_1``. The matrix is first reduced by a pivoted QR and the sweeps run
on ``R^T``; this keeps the relative-accuracy property and cuts the sweep
count roughly in half.

Sweeps use the cyclic row ordering, so the result is a deterministic function
of the input bits.
"""
from __future__ import annotations

import numba as nb
import numpy as np
import scipy.linalg

__all__ = ["jacobi_singular_values"]

_EPS = np.finfo(np.float64).eps
_MAX_SWEEPS = 60


@nb.njit(cache=True)
def _hestenes_real(x, tol, max_sweeps):
    m, n = x.shape
    norms = np.empty(n)
    for j in range(n):
        s = 0.0
        for i in range(m):
            s += x[i, j] * x[i, j]
        norms[j] = s
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = norms[p]
                b = norms[q]
                g = 0.0
                for i in range(m):
                    g += x[i, p] * x[i, q]
                if a == 0.0 or b == 0.0 or abs(g) <= tol * np.sqrt(a * b):
                    continue
                rotated = True
                zeta = (b - a) / (2.0 * g)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                for i in range(m):
                    xp = x[i, p]
                    xq = x[i, q]
                    x[i, p] = c * xp - s * xq
                    x[i, q] = s * xp + c * xq
                # recompute instead of updating; keeps tiny norms accurate
                a = 0.0
                b = 0.0
                for i in range(m):
                    a += x[i, p] * x[i, p]
                    b += x[i, q] * x[i, q]
                norms[p] = a
                norms[q] = b
        if not rotated:
            break
    return np.sqrt(norms), sweeps


@nb.njit(cache=True)
def _hestenes_complex(x, tol, max_sweeps):
    m, n = x.shape
    norms = np.empty(n)
    for j in range(n):
        s = 0.0
        for i in range(m):
            s += x[i, j].real ** 2 + x[i, j].imag ** 2
        norms[j] = s
    sweeps = 0
    for sweep in range(max_sweeps):
        sweeps = sweep + 1
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                a = norms[p]
                b = norms[q]
                g = 0j
                for i in range(m):
                    g += x[i, p].conjugate() * x[i, q]
                ag = abs(g)
                if a == 0.0 or b == 0.0 or ag <= tol * np.sqrt(a * b):
                    continue
                rotated = True
                ph = g / ag
                zeta = (b - a) / (2.0 * ag)
                t = np.sign(zeta) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                if zeta == 0.0:
                    t = 1.0
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                phc = ph.conjugate()
                for i in range(m):
                    xp = x[i, p]
                    y = x[i, q] * phc
                    x[i, p] = c * xp - s * y
                    x[i, q] = s * xp + c * y
                a = 0.0
                b = 0.0
                for i in range(m):
                    a += x[i, p].real ** 2 + x[i, p].imag ** 2
                    b += x[i, q].real ** 2 + x[i, q].imag ** 2
                norms[p] = a
                norms[q] = b
        if not rotated:
            break
    return np.sqrt(norms), sweeps


def jacobi_singular_values(a: np.ndarray, precondition: bool = True) -> np.ndarray:
    """Singular values of ``a`` in descending order.

    Parameters
    ----------
    a : ndarray
        Real or complex 2-D array with finite entries.
    precondition : bool
        Run the sweeps on the triangular factor of a column-pivoted QR.

    Returns
    -------
    ndarray
        ``min(a.shape)`` values, sorted descending.
    """
    a = np.asarray(a)
    if a.ndim != 2:
        raise ValueError("expected a 2-D array")
    if a.shape[0] < a.shape[1]:
        a = a.conj().T
    m, n = a.shape
    if n == 0:
        return np.zeros(0)
    cplx = np.iscomplexobj(a)
    dtype = np.complex128 if cplx else np.float64
    if precondition and n > 1:
        r = scipy.linalg.qr(a.astype(dtype), mode="r", pivoting=True)[0][:n, :]
        work = np.asfortranarray(r.conj().T)
    else:
        work = np.asfortranarray(a.astype(dtype, copy=True))
    tol = work.shape[0] * _EPS
    if cplx:
        s, _ = _hestenes_complex(work, tol, _MAX_SWEEPS)
    else:
        s, _ = _hestenes_real(work, tol, _MAX_SWEEPS)
    return np.sort(s)[::-1]
