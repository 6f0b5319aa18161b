"""Matrix families: i.i.d., block linearizations, zeroed-out and truncated variants.

Only free entries are drawn from the stream, in a fixed row-major order per
family; structural zeros are written directly. Paired experiments therefore
reuse one sample under several shifts rather than resampling.

Index sets (``D``) are 1-based throughout, matching how the block layouts are
usually written down.
"""
from __future__ import annotations

import csv
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .distributions import EntryLaw, LazyLaw

__all__ = [
    "FAMILIES",
    "EnsembleSpec",
    "MatrixSample",
    "ShiftRangeWarning",
    "sample",
    "n_free",
    "assemble",
    "shifted",
    "anchor_set",
    "initial_segment_permutation",
    "zeroed_pattern",
    "write_matrix",
    "read_matrix",
    "write_matrix_csv",
]

FAMILIES = (
    "iid_square",
    "iid_rect",
    "iid_complex",
    "block_LA",
    "block_curlyLA",
    "zeroed_M",
    "linearized_P",
    "truncated_M_underline",
    "complex_P_G",
    "complex_M_G",
)


class ShiftRangeWarning(UserWarning):
    """A shift lies outside the range the bounds are stated for."""


@dataclass(frozen=True)
class EnsembleSpec:
    family: str
    n: int
    law: EntryLaw | LazyLaw = field(default_factory=EntryLaw)
    n_rows: int | None = None
    aspect_bound: float = 2.0
    D_size: int | None = None
    lam1: complex = 0.0
    lam2: complex = 0.0
    lam_hat: complex = 0.0

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.family == "iid_rect":
            if self.n_rows is None:
                raise ValueError("iid_rect needs n_rows")
            if self.n_rows < self.n:
                raise ValueError("iid_rect requires n_rows >= n (otherwise zero singular values are forced)")
            if self.n_rows > self.aspect_bound * self.n:
                raise ValueError(f"n_rows exceeds aspect bound {self.aspect_bound} * n")
        if self.family == "zeroed_M":
            if self.D_size is None or not (0 <= self.D_size <= self.n - 1):
                raise ValueError("zeroed_M needs 0 <= D_size <= n - 1")
        if self.family in ("truncated_M_underline", "complex_M_G") and not isinstance(self.law, LazyLaw):
            raise ValueError(f"{self.family} draws entries from a LazyLaw")
        if self.family == "linearized_P" and any(complex(x).imag != 0 for x in (self.lam1, self.lam2, self.lam_hat)):
            raise ValueError("linearized_P takes real shifts")
        bound = (8.0 if self.family == "complex_P_G" else 4.0) * np.sqrt(self.n)
        for lam in (self.lam1, self.lam2):
            if abs(lam) > bound:
                warnings.warn(f"shift {lam} outside |lambda| <= {bound:.3g}", ShiftRangeWarning, stacklevel=3)

    @property
    def is_complex(self) -> bool:
        if self.family in ("iid_complex", "complex_P_G", "complex_M_G"):
            return True
        return bool(getattr(self.law, "complexified", False))

    @property
    def shape(self) -> tuple[int, int]:
        n = self.n
        return {
            "iid_square": (n, n),
            "iid_rect": (self.n_rows or n, n),
            "iid_complex": (n, n),
            "block_LA": (2 * n, 2 * n),
            "block_curlyLA": (2 * n - 1, 2 * n - 1),
            "zeroed_M": (2 * n - 1, 2 * n - 1),
            "linearized_P": (2 * n + 1, 2 * n + 1),
            "truncated_M_underline": (2 * n + 1, 2 * n + 1),
            "complex_P_G": (2 * n + 1, 2 * n + 1),
            "complex_M_G": (2 * n + 1, 2 * n + 1),
        }[self.family]


@dataclass(frozen=True)
class MatrixSample:
    data: np.ndarray
    spec: EnsembleSpec
    seed_path: tuple[int, int] | None = None

    def __post_init__(self) -> None:
        if self.data.shape != self.spec.shape:
            raise ValueError(f"data shape {self.data.shape} does not match spec {self.spec.shape}")
        self.data.setflags(write=False)


def _draw(law, rng, shape, complex_entries: bool) -> np.ndarray:
    x = law.draw(rng, shape)
    if complex_entries and not np.iscomplexobj(x):
        # complex family over a real law: xi + i xi'
        x = x + 1j * law.draw(rng, shape)
    return x


def _linearization(a_zero_row: np.ndarray, lam1, lam2, lam_hat, dtype) -> np.ndarray:
    """Assemble the (2n+1) x (2n+1) linearization from an n x n block whose first row is zero."""
    n = a_zero_row.shape[0]
    i_cut = np.eye(n, dtype=dtype)
    i_cut[0, 0] = 0
    e1 = np.zeros(n, dtype=dtype)
    e1[0] = 1
    p = np.zeros((2 * n + 1, 2 * n + 1), dtype=dtype)
    p[1 : n + 1, 1 : n + 1] = -lam_hat * np.eye(n, dtype=dtype) + 0.0  # no signed zeros
    p[1 : n + 1, n + 1 :] = a_zero_row - lam2 * i_cut
    p[n + 1 :, 0] = a_zero_row[:, 0] - lam1 * e1
    p[n + 1 :, 1 : n + 1] = a_zero_row - lam1 * i_cut
    return p


def zeroed_pattern(n: int, d: int) -> np.ndarray:
    """Boolean mask of free positions in the (n-1) x n block of the zeroed-out matrix.

    With anchor set ``D = {1..d}``: entry (i, j) is free iff exactly one of
    ``i in D``, ``j in D`` holds.
    """
    rows = np.arange(1, n) <= d
    cols = np.arange(1, n + 1) <= d
    return rows[:, None] ^ cols[None, :]


def n_free(spec: EnsembleSpec) -> int:
    """Number of free entries; complex families count one complex entry each."""
    n, fam = spec.n, spec.family
    if fam in ("iid_square", "iid_complex", "block_LA"):
        return n * n
    if fam == "iid_rect":
        return spec.n_rows * n
    if fam == "zeroed_M":
        return int(zeroed_pattern(n, spec.D_size).sum())
    return (n - 1) * n


def assemble(spec: EnsembleSpec, values: np.ndarray) -> np.ndarray:
    """Place a flat vector of free entries (row-major per family) into the family layout."""
    n, fam = spec.n, spec.family
    dtype = np.complex128 if spec.is_complex else np.float64
    values = np.asarray(values)
    if values.shape != (n_free(spec),):
        raise ValueError(f"expected {n_free(spec)} free values, got shape {values.shape}")
    values = values.astype(dtype, copy=False)
    if fam in ("iid_square", "iid_complex"):
        data = values.reshape(n, n).copy()
    elif fam == "iid_rect":
        data = values.reshape(spec.n_rows, n).copy()
    elif fam == "block_LA":
        a = values.reshape(n, n)
        data = np.zeros((2 * n, 2 * n), dtype=dtype)
        data[:n, n:] = a
        data[n:, :n] = a.conj().T
    elif fam == "block_curlyLA":
        a = values.reshape(n - 1, n)
        data = np.zeros((2 * n - 1, 2 * n - 1), dtype=dtype)
        data[: n - 1, n - 1 :] = a
        data[n - 1 :, : n - 1] = a.conj().T
    elif fam == "zeroed_M":
        block = np.zeros((n - 1, n), dtype=dtype)
        block[zeroed_pattern(n, spec.D_size)] = values
        data = np.zeros((2 * n - 1, 2 * n - 1), dtype=dtype)
        data[: n - 1, n - 1 :] = block
        data[n - 1 :, : n - 1] = block.conj().T
    elif fam in ("linearized_P", "complex_P_G"):
        a = np.zeros((n, n), dtype=dtype)
        a[1:, :] = values.reshape(n - 1, n)
        data = _linearization(a, spec.lam1, spec.lam2, spec.lam_hat, dtype)
    elif fam in ("truncated_M_underline", "complex_M_G"):
        a = np.zeros((n, n), dtype=dtype)
        a[1:, :] = values.reshape(n - 1, n)
        data = _linearization(a, 0.0, 0.0, 0.0, dtype)
    else:  # pragma: no cover - guarded by EnsembleSpec
        raise ValueError(fam)
    return np.ascontiguousarray(data, dtype=dtype)


def sample(spec: EnsembleSpec, rng: np.random.Generator, seed_path: tuple[int, int] | None = None) -> MatrixSample:
    """Draw one matrix of the given family."""
    values = _draw(spec.law, rng, (n_free(spec),), spec.is_complex)
    return MatrixSample(assemble(spec, values), spec, seed_path)


def shifted(s: MatrixSample | np.ndarray, lam: complex) -> np.ndarray:
    """``A - lam I`` as a new array."""
    a = s.data if isinstance(s, MatrixSample) else np.asarray(s)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("shift needs a square matrix")
    out = a.astype(np.result_type(a.dtype, np.asarray(lam).dtype), copy=True)
    out[np.diag_indices_from(out)] -= lam
    return out


def anchor_set(n: int, D1: Iterable[int], D2: Iterable[int]) -> list[int]:
    """``D = D1 U (D2 - n + 1)`` with ``2n - 1`` dropped from ``D2`` first."""
    d1 = {int(i) for i in D1}
    d2 = {int(i) for i in D2} - {2 * n - 1}
    if any(i < 1 or i > n - 1 for i in d1):
        raise ValueError("D1 must lie in [1, n-1]")
    if any(i < n or i > 2 * n - 1 for i in d2):
        raise ValueError("D2 must lie in [n, 2n-1]")
    return sorted(d1 | {i - n + 1 for i in d2})


def initial_segment_permutation(D: Sequence[int], size: int) -> np.ndarray:
    """0-based permutation of ``range(size)`` sending the indices in ``D`` to the front.

    ``perm[k]`` is the original (0-based) index placed at position k; order
    is preserved within and outside ``D``.
    """
    dset = sorted({int(i) for i in D})
    if any(i < 1 or i > size for i in dset):
        raise ValueError("indices out of range")
    front = [i - 1 for i in dset]
    rest = [i for i in range(size) if i + 1 not in set(dset)]
    return np.array(front + rest, dtype=int)


# container formats ----------------------------------------------------------

_MAGIC = b"RMSM"
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<c16")}


def write_matrix(path: str | Path, data: np.ndarray) -> None:
    """Row-major binary container: magic, dtype code (u8), rows and cols (u64), payload."""
    data = np.asarray(data)
    code = 1 if np.iscomplexobj(data) else 0
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<BQQ", code, data.shape[0], data.shape[1]))
        fh.write(np.ascontiguousarray(data, dtype=_DTYPES[code]).tobytes(order="C"))


def read_matrix(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise ValueError("not a matrix container (bad magic)")
    code, rows, cols = struct.unpack_from("<BQQ", raw, 4)
    if code not in _DTYPES:
        raise ValueError(f"unknown dtype code {code}")
    payload = raw[4 + struct.calcsize("<BQQ") :]
    dt = _DTYPES[code]
    if len(payload) != rows * cols * dt.itemsize:
        raise ValueError("payload length does not match header")
    return np.frombuffer(payload, dtype=dt).reshape(rows, cols).copy()


def write_matrix_csv(path_or_buf, data: np.ndarray) -> None:
    """CSV for inspection; complex entries are written as ``re+imj``."""
    data = np.asarray(data)
    own = isinstance(path_or_buf, (str, Path))
    fh = open(path_or_buf, "w", newline="") if own else path_or_buf
    try:
        w = csv.writer(fh)
        for row in data:
            w.writerow([repr(complex(x)) if np.iscomplexobj(data) else repr(float(x)) for x in row])
    finally:
        if own:
            fh.close()
