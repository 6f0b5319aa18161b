"""Integer boxes, box pairs, the random-generation LCD experiment and
covering-family counts at toy scale.

A coordinate set ``B_i`` is a union of closed integer intervals. Anchored
coordinates (1-based indices in ``D1`` or ``D2``) use
``[-kappa N, -N] U [N, kappa N]``; the others use the dyadic shell of their
level: level 0 is ``[-N, N]`` and level l >= 1 is
``[-2^l N, 2^l N]`` minus ``[-2^(l-1) N, 2^(l-1) N]``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .arithmetic import LcdQuery, essential_lcd
from .stats import clopper_pearson

__all__ = [
    "BoxSpec",
    "BoxPair",
    "BoxSample",
    "coordinate_sets",
    "sample_box",
    "box_lcd_experiment",
    "BoxLcdReport",
    "overlap_of_box_pair",
    "CoveringFamily",
    "enumerate_covering_family",
]

Interval = tuple[int, int]


def _anchored(boxN: int, kappa: float) -> tuple[Interval, ...]:
    top = int(math.floor(kappa * boxN))
    return ((-top, -boxN), (boxN, top))


def _shell(boxN: int, level: int) -> tuple[Interval, ...]:
    if level == 0:
        return ((-boxN, boxN),)
    hi = (2**level) * boxN
    lo = (2 ** (level - 1)) * boxN + 1
    return ((-hi, -lo), (lo, hi))


def _size(sets: Sequence[Interval]) -> int:
    return sum(b - a + 1 for a, b in sets)


@dataclass(frozen=True)
class BoxSpec:
    """An ``(N, kappa, D1, D2)`` box.

    ``levels`` assigns a shell level to each non-anchored coordinate (all 0
    by default). ``custom_sets`` overrides every coordinate with explicit
    intervals; with ``validate=False`` the size floor is skipped, which
    allows degenerate diagnostic boxes.
    """

    dim: int
    boxN: int
    kappa: float = 2.0
    D1: tuple[int, ...] = ()
    D2: tuple[int, ...] = ()
    levels: tuple[int, ...] | None = None
    custom_sets: tuple[tuple[Interval, ...], ...] | None = None
    validate: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "D1", tuple(sorted(int(i) for i in self.D1)))
        object.__setattr__(self, "D2", tuple(sorted(int(i) for i in self.D2)))
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.boxN < 2:
            raise ValueError("boxN must be at least 2")
        if self.kappa < 2:
            raise ValueError("kappa must be at least 2")
        if any(i < 1 or i > self.dim for i in self.D1 + self.D2):
            raise ValueError("anchor indices out of range")
        if self.levels is not None:
            if len(self.levels) != self.dim or any(l < 0 for l in self.levels):
                raise ValueError("levels must give a nonnegative level per coordinate")
        if self.custom_sets is not None:
            sets = tuple(tuple((int(a), int(b)) for a, b in s) for s in self.custom_sets)
            object.__setattr__(self, "custom_sets", sets)
            if len(sets) != self.dim:
                raise ValueError("custom_sets must list one set per coordinate")
        for i, s in enumerate(coordinate_sets(self)):
            if any(b < a for a, b in s) or _size(s) == 0:
                raise ValueError(f"coordinate {i + 1} has an empty set")
            if self.validate and _size(s) < self.boxN:
                raise ValueError(f"coordinate {i + 1} has fewer than boxN points")

    @property
    def anchors(self) -> frozenset[int]:
        return frozenset(self.D1) | frozenset(self.D2)

    def sizes(self) -> np.ndarray:
        return np.array([_size(s) for s in coordinate_sets(self)], dtype=np.int64)

    def cardinality(self) -> int:
        return math.prod(int(x) for x in self.sizes())

    def log_cap_ratio(self) -> float:
        """``log(|B| / (kappa N)^dim)``; nonpositive when the size cap holds."""
        return float(np.sum(np.log(self.sizes())) - self.dim * math.log(self.kappa * self.boxN))

    def max_norm(self) -> float:
        return float(math.sqrt(sum(max(abs(v) for iv in s for v in iv) ** 2 for s in coordinate_sets(self))))

    def to_json(self) -> dict:
        d = asdict(self)
        d["D1"], d["D2"] = list(self.D1), list(self.D2)
        return d

    @classmethod
    def from_json(cls, obj: dict | str) -> "BoxSpec":
        if isinstance(obj, str):
            obj = json.loads(obj)
        known = {f for f in cls.__dataclass_fields__}
        extra = set(obj) - known
        if extra:
            raise ValueError(f"unknown BoxSpec fields {sorted(extra)}")
        obj = dict(obj)
        for key in ("D1", "D2", "levels"):
            if obj.get(key) is not None:
                obj[key] = tuple(obj[key])
        if obj.get("custom_sets") is not None:
            obj["custom_sets"] = tuple(tuple(tuple(iv) for iv in s) for s in obj["custom_sets"])
        return cls(**obj)


def coordinate_sets(spec: BoxSpec) -> list[tuple[Interval, ...]]:
    if spec.custom_sets is not None:
        return list(spec.custom_sets)
    out = []
    anchors = set(spec.D1) | set(spec.D2)
    for i in range(1, spec.dim + 1):
        if i in anchors:
            out.append(_anchored(spec.boxN, spec.kappa))
        else:
            lvl = 0 if spec.levels is None else spec.levels[i - 1]
            out.append(_shell(spec.boxN, lvl))
    return out


@dataclass(frozen=True)
class BoxPair:
    """Two boxes on a common index range; ``second.boxN`` plays the role of N1 <= N."""

    first: BoxSpec
    second: BoxSpec

    def __post_init__(self) -> None:
        if self.first.dim != self.second.dim:
            raise ValueError("boxes of a pair must share the dimension")
        if self.second.boxN > self.first.boxN:
            raise ValueError("need N1 <= N")


@dataclass
class BoxSample:
    point: np.ndarray
    provenance: tuple = ()


def _draw_sets(sets: list[tuple[Interval, ...]], rng: np.random.Generator, size: int) -> np.ndarray:
    out = np.empty((size, len(sets)), dtype=np.int64)
    for j, s in enumerate(sets):
        lens = np.array([b - a + 1 for a, b in s], dtype=np.int64)
        starts = np.array([a for a, _ in s], dtype=np.int64)
        u = rng.integers(0, lens.sum(), size=size)
        cum = np.cumsum(lens)
        which = np.searchsorted(cum, u, side="right")
        offset = u - np.concatenate([[0], cum[:-1]])[which]
        out[:, j] = starts[which] + offset
    return out


def sample_box(spec: BoxSpec, rng: np.random.Generator, size: int | None = None,
               provenance: tuple = ()) -> BoxSample | np.ndarray:
    """Uniform point of the box (independent uniform coordinates).

    With ``size`` given, returns a ``size x dim`` integer array instead.
    """
    pts = _draw_sets(coordinate_sets(spec), rng, 1 if size is None else size)
    if size is None:
        return BoxSample(pts[0], provenance)
    return pts


# LCD of random box points -----------------------------------------------------

@dataclass
class BoxLcdReport:
    d: int
    boxN: int
    kappa: float
    alpha: float
    K: float
    r: float
    trials: int
    failures: int
    bound: float
    ci_low: float
    ci_high: float
    witnesses: int = 0

    CSV_FIELDS = ("d", "boxN", "kappa", "alpha", "K", "trials", "failures", "bound")

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials

    @property
    def bound_vacuous(self) -> bool:
        return self.bound >= 1.0

    @property
    def consistent(self) -> bool:
        """Observed rate within ``max(bound, upper CI at the observed count)``."""
        return self.failure_rate <= max(self.bound, self.ci_high)

    def csv_row(self) -> dict:
        return {k: repr(getattr(self, k)) if isinstance(getattr(self, k), float) else getattr(self, k)
                for k in self.CSV_FIELDS}


def box_lcd_experiment(d: int, boxN: int, kappa: float, alpha: float, K: float, trials: int,
                       rng: np.random.Generator, r: float | None = None, gamma: float = 0.5,
                       conf: float = 0.99) -> BoxLcdReport:
    """Fraction of uniform ``X`` in ``([-kN, -N] U [N, kN])^d`` whose LCD at scale
    ``r X`` is not certified above K.

    ``r`` defaults to ``1 / (kappa boxN)``, which puts every coordinate of
    ``r X`` in ``[1/kappa, 1]`` so the scan up to K crosses many lattice
    periods. The ambient count is d.
    """
    if not K * boxN < 2**d:
        raise ValueError(f"hypothesis K N < 2^d fails ({K * boxN} >= 2^{d})")
    if not d >= K * K * alpha:
        raise ValueError(f"hypothesis d >= K^2 alpha fails ({d} < {K * K * alpha})")
    if r is None:
        r = 1.0 / (kappa * boxN)
    spec = BoxSpec(d, boxN, kappa, D1=tuple(range(1, d + 1)))
    failures = 0
    witnesses = 0
    for _ in range(trials):
        x = sample_box(spec, rng).point.astype(float)
        res = essential_lcd(LcdQuery(r * x, alpha, gamma, K, mode="certify_lower_bound"))
        if not res.certified:
            failures += 1
            witnesses += res.witness is not None
    lo, hi = clopper_pearson(failures, trials, conf)
    bound = (2.0**20 * alpha) ** (d / 4.0)
    return BoxLcdReport(d, boxN, kappa, alpha, K, r, trials, failures, bound, lo, hi, witnesses)


# box pair overlap ------------------------------------------------------------

def overlap_of_box_pair(pair: BoxPair, trials: int, rng: np.random.Generator,
                        T: float | None = None) -> dict:
    """Distribution of ``|cos(X_[2,D], Y_[2,D])|`` for independent uniform X, Y.

    ``T`` defaults to the smallest constant with ``||X|| <= T sqrt(D) N`` on the
    first box and ``||Y|| <= T sqrt(D) N1`` on the second. The threshold
    ``32 kappa^2 T^2 / D`` is reported with a flag when it is at least 1, in
    which case the fraction below it is trivially 1.
    """
    a, b = pair.first, pair.second
    D = a.dim
    if T is None:
        T = max(a.max_norm() / (math.sqrt(D) * a.boxN), b.max_norm() / (math.sqrt(D) * b.boxN))
    x = sample_box(a, rng, size=trials)[:, 1:].astype(float)
    y = sample_box(b, rng, size=trials)[:, 1:].astype(float)
    dots = np.einsum("ij,ij->i", x, y)
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    ok = (nx > 0) & (ny > 0)
    cos = np.abs(dots[ok] / (nx[ok] * ny[ok]))
    thr = 32.0 * max(a.kappa, b.kappa) ** 2 * T * T / D
    frac = float(np.mean(cos < thr))
    mean_dot = float(dots.mean())
    se_dot = float(dots.std(ddof=1) / math.sqrt(trials)) if trials > 1 else math.inf
    return {
        "trials": trials,
        "T": T,
        "threshold": thr,
        "threshold_vacuous": thr >= 1.0,
        "fraction_below": frac,
        "mean_abs_cos": float(cos.mean()) if cos.size else math.nan,
        "quantiles_abs_cos": {q: float(np.quantile(cos, q)) for q in (0.5, 0.75, 0.9, 0.99)} if cos.size else {},
        "mean_inner": mean_dot,
        "mean_inner_se": se_dot,
    }


# covering family --------------------------------------------------------------

@dataclass
class CoveringFamily:
    n_tiny: int
    kappa: float
    kappa0: float
    budget: float
    free_coords: int
    size: int
    bound: float
    sequences: list[tuple[int, ...]] = field(default_factory=list)

    @property
    def within_bound(self) -> bool:
        return self.size <= self.bound


def enumerate_covering_family(n_tiny: int, kappa: float, kappa0: float, D1: Sequence[int] = (),
                              D2: Sequence[int] = (), dim: int | None = None, keep: bool = False) -> CoveringFamily:
    """Level sequences over the non-anchored coordinates with
    ``sum_{l_j > 0} 4^{l_j} <= 16 n / kappa0^2``.

    ``dim`` defaults to ``2n - 1``; anchors are 1-based. The size is compared
    with ``kappa^(2n)``.
    """
    if n_tiny > 6:
        raise ValueError("n_tiny is capped at 6")
    if n_tiny < 1:
        raise ValueError("n_tiny must be positive")
    dim = 2 * n_tiny - 1 if dim is None else dim
    anchors = {int(i) for i in D1} | {int(i) for i in D2}
    if any(i < 1 or i > dim for i in anchors):
        raise ValueError("anchor indices out of range")
    free = dim - len(anchors)
    budget = 16.0 * n_tiny / kappa0**2
    seqs: list[tuple[int, ...]] = []

    def count(j: int, left: float, prefix: tuple[int, ...]) -> int:
        if j == free:
            if keep:
                seqs.append(prefix)
            return 1
        total = count(j + 1, left, prefix + (0,))
        lvl = 1
        while 4**lvl <= left:
            total += count(j + 1, left - 4**lvl, prefix + (lvl,))
            lvl += 1
        return total

    size = count(0, budget, ())
    return CoveringFamily(n_tiny, kappa, kappa0, budget, free, size, float(kappa) ** (2 * n_tiny), seqs)
