"""Deterministic linear-algebra and lattice property checks on random instances."""
from __future__ import annotations

import numpy as np

from .arithmetic import dist_to_int_lattice
from .rng import stream
from .spectral import (
    block_singular_check,
    curly_block_balance_check,
    eigenvector_overlap_check,
    interlacing_check,
)

__all__ = ["deterministic_suite", "SUITE_TOLERANCE"]

SUITE_TOLERANCE = 1e-9


def _block(a: np.ndarray) -> np.ndarray:
    m, n = a.shape
    big = np.zeros((m + n, m + n))
    big[:m, m:] = a
    big[m:, :m] = a.T
    return big


def deterministic_suite(instances: int = 200, n_max: int = 12, seed: int = 0) -> dict[str, float]:
    """Worst violation per property over ``instances`` random cases with n <= ``n_max``.

    Properties: singular values equal the nonnegative block eigenvalues; the
    eigenvector/minor inner-product bound; equal block norms for the
    ``(n-1) x n`` block; Cauchy interlacing; lattice distance invariance under
    integer shifts.
    """
    worst = {"block_singular": 0.0, "eigenvector_overlap": -np.inf, "curly_balance": 0.0,
             "interlacing": -np.inf, "lattice_shift": 0.0}
    for i in range(instances):
        rng = stream(seed, "selftest", i)
        n = int(rng.integers(2, n_max + 1))
        a = rng.standard_normal((n, n))
        worst["block_singular"] = max(worst["block_singular"], block_singular_check(a))
        sym = _block(a)
        j = int(rng.integers(1, 2 * n + 1))
        worst["eigenvector_overlap"] = max(worst["eigenvector_overlap"], eigenvector_overlap_check(sym, j))
        worst["interlacing"] = max(worst["interlacing"], interlacing_check(sym, j))
        worst["curly_balance"] = max(worst["curly_balance"], curly_block_balance_check(a[1:, :]))
        w = rng.uniform(-3, 3, size=n)
        p = rng.integers(-50, 51, size=n)
        worst["lattice_shift"] = max(worst["lattice_shift"], abs(dist_to_int_lattice(w + p) - dist_to_int_lattice(w)))
    return {k: float(v) for k, v in worst.items()}
