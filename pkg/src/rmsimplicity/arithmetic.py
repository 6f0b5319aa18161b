"""Lattice distances, essential LCD with certified bounds, compressibility, angles.

For a vector ``a`` the essential LCD is the infimum of ``theta > 0`` with

    ||theta a||_Z <= min(sqrt(alpha * m), gamma * ||theta a||_2),

where ``m`` is the ambient count (vector length by default). Writing ``f`` for
the left side minus the right side, ``f`` is Lipschitz in ``theta`` with
constant ``||a||_2 (1 + gamma)``, and for ``theta <= 1 / (2 ||a||_inf)`` it is
exactly ``theta ||a|| - min(...) > 0``. A branch-and-bound over intervals then
turns the infimum over a continuum into a finite certified computation: an
interval with midpoint ``c`` and half-width ``w`` is excluded once
``f(c) > Lip * w``.

In several dimensions the same search runs radially along each direction of
a net on the sphere. Directions off the net are covered by inflating the
required slack by ``(1 + gamma) * r * rho * ||a||_op`` at radius r, where rho
bounds the chord distance to the nearest net direction. When that inflated
slack cannot be met the result is reported as not certified.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "LcdQuery",
    "LcdResult",
    "LcdBudgetError",
    "CompressibilityVerdict",
    "dist_to_int_lattice",
    "lcd_objective",
    "essential_lcd",
    "direction_net",
    "classify_compressibility",
    "cosine",
    "real_embedding",
    "ang_overlap",
    "lcd_gamma_threshold",
]


class LcdBudgetError(RuntimeError):
    """The scan would need more evaluations than the configured budget."""


def dist_to_int_lattice(w) -> float:
    """Euclidean distance from ``w`` to the nearest point of the integer lattice."""
    w = np.asarray(w, dtype=float)
    if not np.all(np.isfinite(w)):
        raise ValueError("non-finite entries")
    r = w - np.round(w)
    return float(np.sqrt(np.sum(r * r)))


def _torus_norms(x: np.ndarray) -> np.ndarray:
    r = x - np.round(x)
    return np.sqrt(np.einsum("ij,ij->i", r, r))


def lcd_objective(theta, a, alpha: float, gamma: float, ambient_count: int | None = None) -> np.ndarray:
    """``||theta . a||_Z - min(sqrt(alpha m), gamma ||theta . a||_2)``.

    ``a`` is a vector (1-D) or an ``m x n`` array; ``theta`` is a scalar or
    array of scalars (1-D) or an array of m-vectors.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    m = a.shape[1] if ambient_count is None else ambient_count
    th = np.asarray(theta, dtype=float)
    if a.shape[0] == 1:
        x = np.multiply.outer(th.ravel(), a[0])
    else:
        x = th.reshape(-1, a.shape[0]) @ a
    nz = _torus_norms(x)
    nrm = np.sqrt(np.einsum("ij,ij->i", x, x))
    out = nz - np.minimum(math.sqrt(alpha * m), gamma * nrm)
    return out.reshape(th.shape if a.shape[0] == 1 else th.shape[:-1])


@dataclass
class LcdQuery:
    """Parameters of one essential-LCD computation.

    ``vectors`` is either a length-n vector or an ``m x n`` array whose rows
    are the components (``m <= 4``). ``scan_step`` is the bracket resolution in
    ``find_infimum`` mode and the initial interval width in
    ``certify_lower_bound`` mode; ``None`` picks ``min(0.5, sqrt(alpha m) / (4 Lip))``
    for finding and ``1 / Lip`` for certifying.
    """

    vectors: np.ndarray
    alpha: float
    gamma: float
    search_bound: float
    scan_step: float | None = None
    mode: str = "find_infimum"
    ambient_count: int | None = None
    directions: int = 64
    max_evals: int = 50_000_000

    def __post_init__(self) -> None:
        a = np.atleast_2d(np.asarray(self.vectors, dtype=float))
        if a.shape[0] > 4:
            raise ValueError("at most 4 component rows are supported")
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite entries")
        self.vectors = a
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0 < self.gamma < 1:
            raise ValueError("gamma must lie in (0, 1)")
        if not (0 < self.search_bound < math.inf):
            raise ValueError("search bound must be positive and finite")
        if self.mode not in ("find_infimum", "certify_lower_bound"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.ambient_count is None:
            self.ambient_count = a.shape[1]
        smin = np.linalg.svd(a, compute_uv=False)[-1] if a.shape[0] > 1 else np.linalg.norm(a)
        if smin < 1e-12:
            raise ValueError("vector (or component rows) degenerate: norm or rank below 1e-12")
        lip = self.lipschitz
        if self.scan_step is None:
            if self.mode == "find_infimum":
                self.scan_step = min(0.5, self.level / (4.0 * lip))
            else:
                self.scan_step = 1.0 / lip
        elif self.mode == "find_infimum" and self.scan_step > min(0.5, self.level / (4.0 * lip)) * (1 + 1e-12):
            raise ValueError("scan_step exceeds min(0.5, sqrt(alpha m) / (4 Lip))")
        if self.scan_step <= 0:
            raise ValueError("scan_step must be positive")

    @property
    def dim(self) -> int:
        return self.vectors.shape[0]

    @property
    def level(self) -> float:
        return math.sqrt(self.alpha * self.ambient_count)

    @property
    def op_norm(self) -> float:
        return float(np.linalg.norm(self.vectors, 2))

    @property
    def lipschitz(self) -> float:
        """Lipschitz bound of the objective along any ray (per unit of ``||theta||``)."""
        return self.op_norm * (1.0 + self.gamma)


@dataclass
class LcdResult:
    mode: str
    certified: bool
    lipschitz_bound: float
    theta_lo: float | None = None
    theta_hi: float | None = None
    lower_bound: float | None = None
    witness: np.ndarray | float | None = None
    evaluations: int = 0
    net_radius: float = 0.0
    notes: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        w = self.witness
        if isinstance(w, np.ndarray):
            w = [float(x) for x in w]
        elif w is not None:
            w = float(w)
        return {
            "mode": self.mode,
            "certified": self.certified,
            "lipschitz_bound": self.lipschitz_bound,
            "theta_lo": self.theta_lo,
            "theta_hi": self.theta_hi,
            "lower_bound": self.lower_bound,
            "witness": w,
            "evaluations": self.evaluations,
            "net_radius": self.net_radius,
            "notes": list(self.notes),
        }


def direction_net(m: int, resolution: int) -> tuple[np.ndarray, float]:
    """Unit directions covering the sphere in R^m up to sign, with a chord radius.

    For m = 2, ``resolution`` equally spaced angles in [0, pi). For m >= 3 a
    grid with ``resolution`` points per axis on the faces ``x_i = +1`` of the
    cube, projected radially; radial projection from outside the unit ball is
    1-Lipschitz, so the cube-face covering radius carries over.

    Returns ``(dirs, rho)``: every unit u has ``min ||u -+ d|| <= rho``.
    """
    if m == 1:
        return np.ones((1, 1)), 0.0
    if m == 2:
        k = np.arange(resolution)
        ang = np.pi * (k + 0.5) / resolution
        return np.stack([np.cos(ang), np.sin(ang)], axis=1), 2.0 * math.sin(math.pi / (4 * resolution))
    g = max(2, resolution)
    ticks = np.linspace(-1.0, 1.0, g)
    spacing = 2.0 / (g - 1)
    faces = []
    for i in range(m):
        grid = np.array(list(itertools.product(ticks, repeat=m - 1)))
        pts = np.insert(grid, i, 1.0, axis=1)
        faces.append(pts)
    pts = np.unique(np.round(np.concatenate(faces), 14), axis=0)
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    return pts, spacing * math.sqrt(m - 1) / 2.0


def essential_lcd(q: LcdQuery) -> LcdResult:
    """Bracket or certified lower bound for the essential LCD (see module doc)."""
    a = q.vectors
    m = q.dim
    s = q.level
    gamma = q.gamma
    K = float(q.search_bound)
    if m == 1:
        dirs, rho = np.ones((1, 1)), 0.0
    else:
        dirs, rho = direction_net(m, q.directions)
    B = dirs @ a  # one 1-D problem per direction
    bn = np.linalg.norm(B, axis=1)
    lip = bn * (1.0 + gamma)
    infl = (1.0 + gamma) * rho * q.op_norm
    # exact region: |<theta, a_k>| <= 1/2 for all columns k
    r0 = 0.5 / float(np.max(np.linalg.norm(a, axis=0)))
    notes: list[str] = []
    if r0 >= K:
        return _finish(q, [], r0, K, None, math.inf, 0, True, rho, notes + ["search range inside exact region"])

    h = float(q.scan_step)
    n_init = int(math.ceil((K - r0) / h))
    if n_init * len(dirs) > q.max_evals:
        raise LcdBudgetError(f"initial scan needs {n_init * len(dirs)} evaluations > budget {q.max_evals}")
    edges = np.linspace(r0, K, n_init + 1)
    di = np.repeat(np.arange(len(dirs)), n_init)
    lo = np.tile(edges[:-1], len(dirs))
    hi = np.tile(edges[1:], len(dirs))

    finding = q.mode == "find_infimum"
    floor = h * 2.0**-30
    best = math.inf
    best_dir = -1
    evals = 0
    net_limited_lo = math.inf
    stuck_lo = math.inf
    while lo.size:
        evals += lo.size
        if evals > q.max_evals:
            raise LcdBudgetError(f"scan exceeded {q.max_evals} evaluations")
        mid = 0.5 * (lo + hi)
        half = 0.5 * (hi - lo)
        f = _objective_chunks(B, di, mid, s, gamma)
        hit = f <= 0.0
        if hit.any():
            k = int(np.argmin(np.where(hit, mid, np.inf)))
            if mid[k] < best:
                best, best_dir = float(mid[k]), int(di[k])
        exact_ok = f > lip[di] * half
        covered = f > lip[di] * half + infl * hi
        net_only = exact_ok & ~covered & ~hit
        if net_only.any():
            net_limited_lo = min(net_limited_lo, float(lo[net_only].min()))
        keep = ~exact_ok & ~hit
        # a hit interval still has its left half undecided
        keep_left = hit & (mid > lo)
        tiny = (hi - lo) <= floor
        if (keep & tiny).any():
            stuck_lo = min(stuck_lo, float(lo[keep & tiny].min()))
        keep &= ~tiny
        nl = np.concatenate([lo[keep], mid[keep], lo[keep_left & ~tiny]])
        nh = np.concatenate([mid[keep], hi[keep], mid[keep_left & ~tiny]])
        nd = np.concatenate([di[keep], di[keep], di[keep_left & ~tiny]])
        if finding:
            alive = nl < best
        else:
            if best < math.inf:
                break
            alive = np.ones(nl.size, dtype=bool)
        lo, hi, di = nl[alive], nh[alive], nd[alive]
        if finding and best < math.inf:
            lowest = min(float(lo.min()) if lo.size else best, stuck_lo, net_limited_lo)
            if best - lowest <= h:
                break

    witness_theta = None
    if best < math.inf:
        witness_theta = best if m == 1 else best * dirs[best_dir]
    pending_lo = float(lo.min()) if lo.size else math.inf
    return _finish(q, witness_theta, r0, K, pending_lo, best, evals,
                   stuck_lo == math.inf and net_limited_lo == math.inf, rho, notes,
                   stuck_lo=stuck_lo, net_lo=net_limited_lo)


def _objective_chunks(B, di, r, s, gamma, chunk_elems: int = 4_000_000) -> np.ndarray:
    n = B.shape[1]
    step = max(1, chunk_elems // max(n, 1))
    out = np.empty(r.size)
    for i in range(0, r.size, step):
        x = r[i : i + step, None] * B[di[i : i + step]]
        nrm = np.sqrt(np.einsum("ij,ij->i", x, x))
        out[i : i + step] = _torus_norms(x) - np.minimum(s, gamma * nrm)
    return out


def _finish(q, witness, r0, K, pending_lo, best, evals, clean, rho, notes, stuck_lo=math.inf, net_lo=math.inf):
    lipb = q.lipschitz
    if q.mode == "certify_lower_bound":
        if best < math.inf:
            return LcdResult(q.mode, False, lipb, lower_bound=None, witness=witness, evaluations=evals,
                             net_radius=rho, notes=notes + [f"objective <= 0 at ||theta|| = {best:.6g}"])
        if not clean:
            notes = notes + ["slack not covered everywhere (net resolution or tangency); heuristic only"]
        return LcdResult(q.mode, clean, lipb, lower_bound=K, evaluations=evals, net_radius=rho, notes=notes)
    if best == math.inf:
        ok = clean
        return LcdResult(q.mode, ok, lipb, theta_lo=K, theta_hi=None, lower_bound=K, evaluations=evals,
                         net_radius=rho, notes=notes + ["no theta within the search bound satisfies the inequality"])
    lowest = min(pending_lo, stuck_lo, net_lo, best)
    certified = clean and best - lowest <= q.scan_step * (1 + 1e-9)
    if not clean:
        notes = notes + ["part of (0, theta_lo) only heuristically excluded"]
    return LcdResult(q.mode, certified, lipb, theta_lo=float(lowest), theta_hi=float(best), witness=witness,
                     evaluations=evals, net_radius=rho, notes=notes)


# compressibility ------------------------------------------------------------

@dataclass
class CompressibilityVerdict:
    delta: float
    rho: float
    tail_norm: float
    verdict: str
    spread_count: int
    spread_band: tuple[float, float]

    @property
    def compressible(self) -> bool:
        return self.verdict == "compressible"


def classify_compressibility(v, delta: float, rho: float) -> CompressibilityVerdict:
    """(delta, rho)-compressibility of ``v / ||v||`` and its spread count.

    The distance to the nearest vector supported on ``floor(delta n)``
    coordinates is the norm of everything outside the largest magnitudes.
    """
    v = np.asarray(v)
    nrm = np.linalg.norm(v)
    if nrm < 1e-12:
        raise ValueError("zero vector")
    if not (0 < delta < 1 and 0 < rho < 1):
        raise ValueError("delta and rho must lie in (0, 1)")
    u = np.abs(v) / nrm
    n = u.size
    k = int(math.floor(delta * n + 1e-9))
    mags = np.sort(u)[::-1]
    tail = float(np.sqrt(np.sum(mags[k:] ** 2)))
    lo_b, hi_b = rho / 2.0 / math.sqrt(n), 1.0 / math.sqrt(delta * n)
    tol = 1e-12
    spread = int(np.sum((u >= lo_b - tol) & (u <= hi_b + tol)))
    verdict = "compressible" if tail <= rho else "incompressible"
    if verdict == "incompressible" and spread < rho * rho * delta * n / 2.0 - 1e-9:
        raise AssertionError(f"spread count {spread} below rho^2 delta n / 2 for an incompressible vector")
    return CompressibilityVerdict(delta, rho, tail, verdict, spread, (lo_b, hi_b))


# angles ---------------------------------------------------------------------

def cosine(x, y) -> float:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValueError("cosine of a zero vector")
    return float(np.clip(np.dot(x, y) / (nx * ny), -1.0, 1.0))


def real_embedding(v) -> np.ndarray:
    """``(Re v_1, ..., Re v_n, Im v_1, ..., Im v_n)``."""
    v = np.asarray(v, dtype=complex)
    return np.concatenate([v.real, v.imag])


def ang_overlap(v, w, D: Sequence[int] | None = None) -> float:
    """Largest of the four ``|cos|`` between the embeddings of ``v, iv`` and ``w, iw``
    restricted to the 1-based index set ``D`` of the 2n real coordinates."""
    v = np.asarray(v, dtype=complex)
    w = np.asarray(w, dtype=complex)
    if v.shape != w.shape:
        raise ValueError("shape mismatch")
    idx = np.arange(2 * v.size) if D is None else np.asarray(sorted(D), dtype=int) - 1
    vs = [real_embedding(v)[idx], real_embedding(1j * v)[idx]]
    ws = [real_embedding(w)[idx], real_embedding(1j * w)[idx]]
    if np.linalg.norm(vs[0]) == 0 or np.linalg.norm(ws[0]) == 0:
        raise ValueError("restriction to D is zero")
    return max(abs(cosine(x, y)) for x in vs for y in ws)


def lcd_gamma_threshold(kappa0: float, d_size: int, n: int) -> float:
    """``kappa0 * sqrt(|D| / (2n))``, the upper limit for gamma used with anchored sets."""
    return kappa0 * math.sqrt(d_size / (2.0 * n))
