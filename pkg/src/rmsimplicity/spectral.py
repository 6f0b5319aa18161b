"""Dense spectral quantities: singular values and gaps, real eigenvalue counts,
normal vectors of column hyperplanes, interlacing and delocalization checks.

Column indices ``j`` are 1-based.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

from .ensembles import shifted
from .jacobi import jacobi_singular_values

__all__ = [
    "SpectralSummary",
    "RankDeficientError",
    "svd_values",
    "min_gap",
    "sigma_min_shifted",
    "real_eigenvalues",
    "schur_eigenvalues",
    "real_eigen_count",
    "normal_vector",
    "dist_col_to_span",
    "overlap_beta",
    "interlacing_check",
    "block_singular_check",
    "curly_block_balance_check",
    "eigenvector_overlap_check",
    "delocalization_profile",
    "joint_delocalization_count",
    "summarize",
]

JACOBI_MAX_DIM = 512


class RankDeficientError(ValueError):
    pass


def _finite(m: np.ndarray) -> np.ndarray:
    m = np.asarray(m)
    if m.ndim != 2:
        raise ValueError("expected a matrix")
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix has NaN or Inf entries")
    return m


def svd_values(m, method: str = "auto") -> np.ndarray:
    """Singular values in decreasing order.

    ``method`` is ``"jacobi"``, ``"lapack"`` or ``"auto"`` (Jacobi up to
    min dimension 512, LAPACK beyond). Jacobi is the accurate route for the
    smallest singular values; LAPACK's error is relative to ``sigma_1``.
    """
    m = _finite(m)
    if method == "auto":
        method = "jacobi" if min(m.shape) <= JACOBI_MAX_DIM else "lapack"
    if method == "jacobi":
        return jacobi_singular_values(m)
    if method == "lapack":
        return np.linalg.svd(m, compute_uv=False)
    raise ValueError(f"unknown svd method {method!r}")


def min_gap(values: Sequence[float]) -> tuple[int, float, float]:
    """Smallest consecutive gap of a decreasing sequence.

    Returns ``(k, gap, sqrt(n) * gap)`` where ``k`` is the 1-based index of the
    first value of the closest pair (smallest k on ties) and n = len(values).
    """
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    gaps = v[:-1] - v[1:]
    k = int(np.argmin(gaps))
    return k + 1, float(gaps[k]), float(np.sqrt(v.size) * gaps[k])


def sigma_min_shifted(a, lam: complex = 0.0, method: str = "auto") -> float:
    a = _finite(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError("shift needs a square matrix")
    return float(svd_values(shifted(a, lam), method)[-1])


def real_eigenvalues(a, rel_tol: float = 1e-9) -> np.ndarray:
    """Eigenvalues with ``|Im| <= rel_tol * sqrt(n)``, read off the real Schur form."""
    a = _finite(a)
    if np.iscomplexobj(a):
        raise ValueError("real Schur form needs a real matrix")
    ev = schur_eigenvalues(a)
    return np.sort(ev[np.abs(ev.imag) <= rel_tol * np.sqrt(a.shape[0])].real)


def schur_eigenvalues(a) -> np.ndarray:
    """All eigenvalues of a real square matrix, read off its real Schur form."""
    a = _finite(a)
    if np.iscomplexobj(a):
        raise ValueError("real Schur form needs a real matrix")
    return _schur_eigenvalues(scipy.linalg.schur(a, output="real")[0])


def _schur_eigenvalues(t: np.ndarray) -> np.ndarray:
    n = t.shape[0]
    out = np.empty(n, dtype=complex)
    i = 0
    while i < n:
        if i + 1 < n and t[i + 1, i] != 0.0:
            # standardized 2x2 block: equal diagonal, off-diagonals of opposite sign
            a, b, c, d = t[i, i], t[i, i + 1], t[i + 1, i], t[i + 1, i + 1]
            mean = 0.5 * (a + d)
            disc = 0.25 * (a - d) ** 2 + b * c
            if disc >= 0:
                r = np.sqrt(disc)
                out[i], out[i + 1] = mean + r, mean - r
            else:
                r = np.sqrt(-disc)
                out[i], out[i + 1] = mean + 1j * r, mean - 1j * r
            i += 2
        else:
            out[i] = t[i, i]
            i += 1
    return out


def real_eigen_count(a, rel_tol: float = 1e-9) -> int:
    """Number of real eigenvalues (conjugate pairs are counted consistently)."""
    return int(real_eigenvalues(a, rel_tol).size)


def _column_system(a, lam, j: int) -> tuple[np.ndarray, np.ndarray]:
    a = _finite(a)
    n = a.shape[0]
    if a.shape[1] != n:
        raise ValueError("normal vectors need a square matrix")
    if not 1 <= j <= n:
        raise ValueError("column index out of range")
    b = shifted(a, lam)
    others = np.delete(b, j - 1, axis=1)
    return b, others


def normal_vector(a, lam: complex = 0.0, j: int = 1, rank_tol: float = 1e-12) -> np.ndarray:
    """Unit normal to the span of the columns of ``A - lam I`` other than column j.

    Taken from the null space of the transposed n x (n-1) submatrix via a full
    SVD. The sign (or phase) is fixed so the largest-magnitude coordinate is
    real and positive.
    """
    _, others = _column_system(a, lam, j)
    n = others.shape[0]
    _, s, vh = np.linalg.svd(others.conj().T)
    if n > 1 and (s[0] == 0 or s[-1] <= rank_tol * s[0]):
        raise RankDeficientError(
            f"columns other than {j} have rank < {n - 1} (sigma ratio {s[-1] / s[0] if s[0] else 0:.3g})"
        )
    v = vh[-1].conj()
    k = int(np.argmax(np.abs(v)))
    v = v * (abs(v[k]) / v[k])
    v = v / np.linalg.norm(v) + 0.0  # no signed zeros
    return v.real + 0.0 if not np.iscomplexobj(a) and np.isrealobj(lam) else v


def dist_col_to_span(a, lam: complex = 0.0, j: int = 1) -> float:
    b, _ = _column_system(a, lam, j)
    v = normal_vector(a, lam, j)
    return float(abs(np.vdot(v, b[:, j - 1])))


def overlap_beta(a, lam1: float, lam2: float, j: int = 1) -> tuple[float, float]:
    """``alpha = <X2, X1>`` and ``beta = sqrt(1 - alpha^2)`` for the two unit normals."""
    x1 = normal_vector(a, lam1, j)
    x2 = normal_vector(a, lam2, j)
    alpha = float(np.real(np.vdot(x1, x2)))
    alpha = max(-1.0, min(1.0, alpha))
    return alpha, float(np.sqrt(max(0.0, 1.0 - alpha * alpha)))


def _check_symmetric(m) -> np.ndarray:
    m = _finite(m)
    if m.shape[0] != m.shape[1] or not np.allclose(m, m.conj().T, rtol=0, atol=1e-12 * max(1.0, np.abs(m).max())):
        raise ValueError("matrix is not symmetric")
    return m


def interlacing_check(m, j: int) -> float:
    """Worst signed violation of Cauchy interlacing for the minor without row/column j.

    With ascending eigenvalues ``l_1 <= ... <= l_n`` of M and ``mu_k`` of the
    minor, checks ``l_k <= mu_k <= l_{k+1}``. Non-positive means it holds.
    """
    m = _check_symmetric(m)
    lam = np.linalg.eigvalsh(m)
    minor = np.delete(np.delete(m, j - 1, axis=0), j - 1, axis=1)
    mu = np.linalg.eigvalsh(minor)
    return float(max(np.max(lam[:-1] - mu), np.max(mu - lam[1:])))


def eigenvector_overlap_check(m, j: int, min_component: float = 1e-8) -> float:
    """Worst value of ``|<v, X^(j)>| - |lam - lam'| / |u_j|`` over all eigenpairs.

    ``(lam, u)`` ranges over eigenpairs of M, ``(lam', v)`` over eigenpairs of
    the minor without row/column j, and ``X^(j)`` is column j of M with its
    j-th entry removed. Pairs with ``|u_j| < min_component`` are skipped (the
    bound is vacuous there). Non-positive means the inequality holds.
    """
    m = _check_symmetric(m)
    lam, u = np.linalg.eigh(m)
    minor = np.delete(np.delete(m, j - 1, axis=0), j - 1, axis=1)
    mu, v = np.linalg.eigh(minor)
    x = np.delete(m[:, j - 1], j - 1)
    lhs = np.abs(v.conj().T @ x)  # one per minor eigenpair
    uj = np.abs(u[j - 1, :])
    keep = uj >= min_component
    if not keep.any():
        return -np.inf
    rhs = np.abs(np.subtract.outer(lam[keep], mu)) / uj[keep, None]
    return float(np.max(lhs[None, :] - rhs))


def block_singular_check(a) -> float:
    """Largest gap between the n largest eigenvalues of ``[[0, A], [A^T, 0]]`` and
    the singular values of the square matrix A."""
    a = _finite(a)
    n = a.shape[0]
    big = np.zeros((2 * n, 2 * n), dtype=a.dtype)
    big[:n, n:] = a
    big[n:, :n] = a.conj().T
    ev = np.sort(np.linalg.eigvalsh(big))[::-1][:n]
    return float(np.max(np.abs(ev - np.linalg.svd(a, compute_uv=False))))


def curly_block_balance_check(a, min_eig: float = 1e-8) -> float:
    """Largest ``| ||v^1|| - ||v^2|| |`` over unit eigenvectors ``(v^1, v^2)`` of the
    block matrix built from the (n-1) x n matrix ``a``, for eigenvalues with
    ``|lambda| > min_eig`` (``v^1`` has n-1 coordinates)."""
    a = _finite(a)
    m, n = a.shape
    big = np.zeros((m + n, m + n), dtype=a.dtype)
    big[:m, m:] = a
    big[m:, :m] = a.conj().T
    lam, u = np.linalg.eigh(big)
    keep = np.abs(lam) > min_eig
    if not keep.any():
        return 0.0
    u = u[:, keep]
    return float(np.max(np.abs(np.linalg.norm(u[:m], axis=0) - np.linalg.norm(u[m:], axis=0))))


def least_singular_vector(a, lam: complex = 0.0) -> np.ndarray:
    b = shifted(_finite(a), lam)
    _, _, vh = np.linalg.svd(b)
    return vh[-1].conj()


def delocalization_profile(a, lam: complex = 0.0, thetas: Sequence[float] = (0.1, 0.25, 0.5, 1.0),
                           w: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Least singular vector ``w`` of ``A - lam I`` and, per threshold theta, the
    number of coordinates with ``|w_i| >= theta / sqrt(n)``.

    Passing ``w`` skips the SVD and profiles the given unit vector instead.
    """
    if w is None:
        w = least_singular_vector(a, lam)
    w = np.asarray(w)
    n = w.size
    mags = np.abs(w) * np.sqrt(n)
    th = np.asarray(thetas, dtype=float)
    counts = (mags[None, :] >= th[:, None] - 1e-12).sum(axis=1)
    return w, counts


def joint_delocalization_count(w1: np.ndarray, w2: np.ndarray, theta: float, big_theta: float) -> int:
    """Coordinates where both ``|w1_i|`` and ``|w2_i|`` lie in ``[theta, Theta] / sqrt(n)``."""
    n = w1.size
    m1 = np.abs(w1) * np.sqrt(n)
    m2 = np.abs(w2) * np.sqrt(n)
    return int(np.sum((m1 >= theta) & (m1 <= big_theta) & (m2 >= theta) & (m2 <= big_theta)))


@dataclass
class SpectralSummary:
    singular_values: np.ndarray
    min_gap_scaled: float
    sigma_min: float
    real_eig_count: int | None
    op_norm: float

    CSV_FIELDS = ("n_rows", "n_cols", "op_norm", "sigma_min", "min_gap_scaled", "gap_index", "real_eig_count")

    def csv_row(self, shape: tuple[int, int], gap_index: int) -> dict:
        return {
            "n_rows": shape[0],
            "n_cols": shape[1],
            "op_norm": repr(self.op_norm),
            "sigma_min": repr(self.sigma_min),
            "min_gap_scaled": repr(self.min_gap_scaled),
            "gap_index": gap_index,
            "real_eig_count": "" if self.real_eig_count is None else self.real_eig_count,
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d["singular_values"] = [float(x) for x in self.singular_values]
        return d


def summarize(a, method: str = "auto", rel_tol: float = 1e-9) -> tuple[SpectralSummary, int]:
    """Spectral summary of ``a`` plus the 1-based index of its smallest gap."""
    a = _finite(a)
    s = svd_values(a, method)
    k, _, scaled = min_gap(s) if s.size > 1 else (0, 0.0, 0.0)
    real = a.shape[0] == a.shape[1] and not np.iscomplexobj(a)
    count = real_eigen_count(a, rel_tol) if real else None
    return SpectralSummary(s, scaled, float(s[-1]), count, float(s[0])), k
