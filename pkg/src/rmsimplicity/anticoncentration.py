"""Small-ball and Levy concentration estimates, the threshold function, and
Littlewood-Offord checks in one, two and four dimensions.

Estimates over an epsilon grid share one sample pool, so ``p_hat`` is exactly
monotone in epsilon. The supremum over centres in the Levy concentration
function is estimated by scanning candidate centres (the origin included),
which biases the estimate upward; finitely supported cases use exact
enumeration instead.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .arithmetic import LcdQuery, cosine, essential_lcd
from .distributions import EntryLaw, LazyLaw
from .ensembles import EnsembleSpec, assemble, n_free, sample
from .stats import ci_width_ok, clopper_pearson, fit_scaling

__all__ = [
    "ConcentrationEstimate",
    "ThresholdEstimate",
    "EnumerationBudgetError",
    "PreconditionError",
    "ball_counts",
    "levy_estimate",
    "levy_exact",
    "small_ball_matrix",
    "threshold_tau",
    "lo_bound_check_1d",
    "lo_bound_check_2d",
    "lo_bound_check_4d",
    "tensorization_check",
    "LoTable",
]

CONF = 0.99
MAX_PATTERNS = 2**24
MAX_FREE_EXACT = 24

Sampler = Callable[[np.random.Generator, int], np.ndarray]


class EnumerationBudgetError(RuntimeError):
    pass


class PreconditionError(ValueError):
    """A hypothesis of the bound being checked is not met; the check refuses to run."""


@dataclass
class ConcentrationEstimate:
    radius: float
    p_hat: float
    ci_low: float
    ci_high: float
    trials: int
    method: str = "monte_carlo"
    center_policy: str = "fixed_zero"
    k_hits: int | None = None

    CSV_FIELDS = ("epsilon", "k_hits", "trials", "p_hat", "ci_low", "ci_high", "method")

    @classmethod
    def from_counts(cls, radius, k, trials, center_policy="fixed_zero", conf=CONF):
        lo, hi = clopper_pearson(int(k), int(trials), conf)
        return cls(float(radius), float(k) / int(trials), float(lo), float(hi), int(trials), "monte_carlo", center_policy,
                   int(k))

    @classmethod
    def exact(cls, radius, p, center_policy="fixed_zero"):
        p = float(min(1.0, max(0.0, p)))
        return cls(float(radius), p, p, p, 0, "exact_enumeration", center_policy, None)

    def csv_row(self) -> dict:
        return {
            "epsilon": repr(self.radius),
            "k_hits": "" if self.k_hits is None else self.k_hits,
            "trials": self.trials,
            "p_hat": repr(self.p_hat),
            "ci_low": repr(self.ci_low),
            "ci_high": repr(self.ci_high),
            "method": self.method,
        }


# Levy concentration ---------------------------------------------------------

def _as_points(samples: np.ndarray) -> np.ndarray:
    x = np.asarray(samples, dtype=float)
    return x[:, None] if x.ndim == 1 else x


def ball_counts(samples, radii: Sequence[float], center_policy: str = "fixed_zero",
                rng: np.random.Generator | None = None, candidates: int = 256) -> np.ndarray:
    """Hit counts per radius for closed balls around the chosen centre.

    ``empirical_mode_search`` takes, per radius, the best count over
    candidate centres: in 1-D every window ``[x_i, x_i + 2r]`` over the sorted
    sample (the exact sup for the empirical measure); in higher dimension the
    origin plus ``candidates`` sample points.
    """
    x = _as_points(samples)
    radii = np.asarray(radii, dtype=float)
    if center_policy == "fixed_zero":
        nr = np.sqrt(np.einsum("ij,ij->i", x, x))
        nr.sort()
        return np.searchsorted(nr, radii, side="right")
    if center_policy != "empirical_mode_search":
        raise ValueError(f"unknown center policy {center_policy!r}")
    if x.shape[1] == 1:
        s = np.sort(x[:, 0])
        out = np.empty(radii.size, dtype=np.int64)
        for i, r in enumerate(radii):
            out[i] = int(np.max(np.searchsorted(s, s + 2.0 * r, side="right") - np.arange(s.size)))
        return out
    if rng is None:
        raise ValueError("multi-dimensional mode search needs a stream to pick candidate centres")
    pick = rng.choice(x.shape[0], size=min(candidates, x.shape[0]), replace=False)
    centres = np.vstack([np.zeros((1, x.shape[1])), x[np.sort(pick)]])
    tree = cKDTree(x)
    out = np.empty(radii.size, dtype=np.int64)
    for i, r in enumerate(radii):
        out[i] = int(np.max(tree.query_ball_point(centres, r, return_length=True)))
    return out


def levy_estimate(sampler: Sampler, eps, trials: int, center_policy: str, rng: np.random.Generator,
                  conf: float = CONF) -> list[ConcentrationEstimate]:
    """Monte Carlo estimate of the concentration function at each radius in ``eps``."""
    if trials <= 0:
        raise ValueError("trial budget must be positive")
    if trials < 100:
        raise ValueError("at least 100 trials are required")
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    if np.any(eps <= 0):
        raise ValueError("radii must be positive")
    x = sampler(rng, trials)
    counts = ball_counts(x, eps, center_policy, rng)
    return [ConcentrationEstimate.from_counts(e, k, trials, center_policy, conf) for e, k in zip(eps, counts)]


def levy_exact(atoms, probs, eps, center_policy: str = "empirical_mode_search") -> list[ConcentrationEstimate]:
    """Exact concentration function of a finitely supported distribution.

    In 1-D the sup over all centres is computed exactly (windows starting at
    atoms). In higher dimension the candidate centres are the atoms and the
    origin, which gives a lower bound for the sup.
    """
    x = _as_points(atoms)
    p = np.asarray(probs, dtype=float)
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    out = []
    for e in eps:
        if center_policy == "fixed_zero":
            val = p[np.linalg.norm(x, axis=1) <= e].sum()
        elif x.shape[1] == 1:
            order = np.argsort(x[:, 0])
            s, ps = x[order, 0], np.concatenate([[0.0], np.cumsum(p[order])])
            hi = np.searchsorted(s, s + 2.0 * e, side="right")
            val = float(np.max(ps[hi] - ps[np.arange(s.size)]))
        else:
            centres = np.vstack([np.zeros((1, x.shape[1])), x])
            d = np.linalg.norm(centres[:, None, :] - x[None, :, :], axis=2)
            val = float(np.max((d <= e) @ p))
        out.append(ConcentrationEstimate.exact(e, val, center_policy))
    return out


# matrix small ball ------------------------------------------------------------

def _real_variables(spec: EnsembleSpec):
    """Linear structure ``M v = c + G x`` over real variables x, plus per-variable atoms."""
    k = n_free(spec)
    cplx = spec.is_complex
    nvar = 2 * k if cplx else k
    atoms, probs = spec.law.support()
    return k, nvar, atoms, probs


def _norm_distribution_exact(spec: EnsembleSpec, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    base = spec.law.base if isinstance(spec.law, LazyLaw) else spec.law
    if not base.is_discrete:
        raise EnumerationBudgetError("exact enumeration needs a discrete law")
    k, nvar, atoms, probs = _real_variables(spec)
    if k > MAX_FREE_EXACT:
        raise EnumerationBudgetError(f"{k} free entries exceed the exact-enumeration cap of {MAX_FREE_EXACT}")
    keep = probs > 0
    atoms, probs = atoms[keep], probs[keep]
    if len(atoms) ** nvar > MAX_PATTERNS:
        raise EnumerationBudgetError(f"{len(atoms)}^{nvar} patterns exceed the budget {MAX_PATTERNS}")
    dtype = np.complex128 if spec.is_complex else np.float64
    base = assemble(spec, np.zeros(k, dtype=dtype)) @ v
    cols = []
    for j in range(nvar):
        e = np.zeros(k, dtype=dtype)
        if j < k:
            e[j] = 1.0
        else:
            e[j - k] = 1j
        cols.append(assemble(spec, e) @ v - base)
    g = np.array(cols).T if cols else np.zeros((base.size, 0))
    idx = np.array(list(itertools.product(range(len(atoms)), repeat=nvar)), dtype=np.int64).reshape(-1, nvar)
    xs = atoms[idx]
    w = np.prod(probs[idx], axis=1) if nvar else np.ones(1)
    y = base[None, :] + xs @ g.T
    return np.linalg.norm(y, axis=1), w


def _norm_samples(spec: EnsembleSpec, v: np.ndarray, trials: int, rng: np.random.Generator) -> np.ndarray:
    out = np.empty(trials)
    for i in range(trials):
        out[i] = np.linalg.norm(sample(spec, rng).data @ v)
    return out


def _check_v(spec: EnsembleSpec, v) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (spec.shape[1],):
        raise ValueError(f"v must have length {spec.shape[1]}")
    return v


def small_ball_matrix(spec: EnsembleSpec, v, t: float | Sequence[float], trials: int | None = None,
                      exact: bool = False, rng: np.random.Generator | None = None,
                      conf: float = CONF) -> list[ConcentrationEstimate]:
    """``P(||M v|| <= t sqrt(n))`` for each t, with ``n = spec.n``."""
    v = _check_v(spec, v)
    ts = np.atleast_1d(np.asarray(t, dtype=float))
    cut = ts * math.sqrt(spec.n)
    if exact:
        norms, w = _norm_distribution_exact(spec, v)
        order = np.argsort(norms)
        cw = np.concatenate([[0.0], np.cumsum(w[order])])
        pos = np.searchsorted(norms[order], cut * (1 + 1e-12), side="right")
        return [ConcentrationEstimate.exact(r, cw[p]) for r, p in zip(ts, pos)]
    if trials is None or trials <= 0 or rng is None:
        raise ValueError("Monte Carlo mode needs a positive trial count and a stream")
    norms = np.sort(_norm_samples(spec, v, trials, rng))
    hits = np.searchsorted(norms, cut * (1 + 1e-12), side="right")
    return [ConcentrationEstimate.from_counts(r, k, trials, conf=conf) for r, k in zip(ts, hits)]


@dataclass
class ThresholdEstimate:
    L: float
    t_hat: float
    exponent: int
    bracket: tuple[float, float]
    inconclusive: bool = False
    method: str = "exact_enumeration"
    grid: list[tuple[float, float, float]] = field(default_factory=list)


def threshold_tau(spec: EnsembleSpec, v, L: float, exponent: int, rng: np.random.Generator | None = None,
                  trials: int | None = None, exact: bool | None = None, tol: float = 1e-3,
                  conf: float = CONF) -> ThresholdEstimate:
    """Bisection for ``sup{t in [0,1]: P(||Mv|| <= t sqrt n) >= (4 L t)^exponent}``.

    The probability is nondecreasing in t and the benchmark is increasing, so
    bisection between 0 (always feasible) and ``min(1, 1/(4L))`` (never
    strictly feasible beyond) brackets the crossing. Exact enumeration is used
    whenever the law and size allow it. In Monte Carlo mode one pool of norms
    serves every t, and the result is marked inconclusive when the CI at the
    bracket ends does not separate from the benchmark.
    """
    if L < 2:
        raise ValueError("L must be at least 2")
    v = _check_v(spec, v)
    if exact is None:
        try:
            norms, w = _norm_distribution_exact(spec, v)
            exact = True
        except EnumerationBudgetError:
            exact = False
    elif exact:
        norms, w = _norm_distribution_exact(spec, v)
    if not exact:
        if rng is None or not trials:
            raise ValueError("Monte Carlo mode needs a positive trial count and a stream")
        norms = _norm_samples(spec, v, trials, rng)
        w = np.full(trials, 1.0 / trials)
    order = np.argsort(norms)
    ns = norms[order]
    cw = np.concatenate([[0.0], np.cumsum(w[order])])
    root_n = math.sqrt(spec.n)

    def prob(t: float) -> float:
        return float(cw[np.searchsorted(ns, t * root_n * (1 + 1e-12), side="right")])

    def bench(t: float) -> float:
        return (4.0 * L * t) ** exponent

    lo, hi = 0.0, min(1.0, 1.0 / (4.0 * L))
    grid = []
    if prob(hi) >= bench(hi):
        lo = hi
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        pm = prob(mid)
        grid.append((mid, pm, bench(mid)))
        if pm >= bench(mid):
            lo = mid
        else:
            hi = mid
    inconclusive = False
    if not exact:
        k_lo = int(round(prob(lo) * trials))
        k_hi = int(round(prob(hi) * trials))
        _, up_hi = clopper_pearson(k_hi, trials, conf)
        low_lo, _ = clopper_pearson(k_lo, trials, conf)
        inconclusive = up_hi >= bench(hi) or (lo > 0 and low_lo < bench(lo))
    return ThresholdEstimate(L, lo, exponent, (lo, hi), inconclusive,
                             "exact_enumeration" if exact else "monte_carlo", grid)


# Littlewood-Offord checks ----------------------------------------------------

@dataclass
class LoTable:
    kind: str
    rows: list[ConcentrationEstimate]
    slope: float
    stderr: float
    used: list[bool]
    stats: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "slope": self.slope,
            "stderr": self.stderr,
            "used": self.used,
            "stats": self.stats,
            "rows": [r.csv_row() for r in self.rows],
        }


def _law_sampler(law: EntryLaw | LazyLaw, a: np.ndarray, batch: int = 20_000) -> Sampler:
    """Sampler of ``S = sum_k a_k xi_k`` for a ``m x n`` coefficient array."""
    a = np.atleast_2d(a)

    def draw(rng: np.random.Generator, trials: int) -> np.ndarray:
        out = np.empty((trials, a.shape[0]))
        for i in range(0, trials, batch):
            m = min(batch, trials - i)
            out[i : i + m] = law.draw(rng, (m, a.shape[1])) @ a.T
        return out

    return draw


def _slope_table(kind, rows, trials, conf, extra=None) -> LoTable:
    eps = [r.radius for r in rows]
    fit = fit_scaling(eps, [r.k_hits for r in rows], trials, conf)
    return LoTable(kind, rows, fit.slope, fit.stderr, [bool(u) for u in fit.used], dict(extra or {}))


def _certify(a: np.ndarray, K: float, alpha: float, gamma: float, directions: int, refinements: int = 2) -> None:
    # a net-only failure is retried on a finer direction net; a witness is final
    for _ in range(refinements + 1):
        res = essential_lcd(LcdQuery(a, alpha, gamma, K, mode="certify_lower_bound", directions=directions))
        if res.certified or res.witness is not None or np.ndim(a) == 1:
            break
        directions = int(math.ceil(1.5 * directions))
    if not res.certified:
        raise PreconditionError(f"essential LCD not certified above {K:.4g}: {res.notes}")


def lo_bound_check_1d(v, law: EntryLaw | LazyLaw, eps_grid, trials: int, rng: np.random.Generator,
                      alpha: float = 0.01, gamma: float = 0.5, c_margin: float = 10.0,
                      conf: float = CONF, certify: bool = True) -> LoTable:
    """``P(|<X, v>| <= eps)`` over the grid; requires a certified LCD above ``c_margin / min(eps)``."""
    v = np.asarray(v, dtype=float)
    v = v / np.linalg.norm(v)
    eps = np.asarray(eps_grid, dtype=float)
    if certify:
        _certify(v, c_margin / eps.min(), alpha, gamma, 1)
    rows = levy_estimate(_law_sampler(law, v), eps, trials, "fixed_zero", rng, conf)
    ratio = max(r.p_hat / r.radius for r in rows)
    return _slope_table("lo_1d", rows, trials, conf, {"max_ratio_p_over_eps": ratio})


def _pair_rows(c, d, law, eps, trials, rng, conf, scale):
    a = np.vstack([c, d])
    return levy_estimate(_law_sampler(law, a), scale * eps, trials, "empirical_mode_search", rng, conf)


def lo_bound_check_2d(c, d, law: EntryLaw | LazyLaw, eps_grid, trials: int, rng: np.random.Generator,
                      alpha: float = 0.01, gamma: float = 0.5, directions: int = 256,
                      conf: float = CONF, certify: bool = True, halving: bool = True) -> LoTable:
    """Concentration of ``S = sum_k (c_k, d_k) xi_k`` at radius ``eps * sqrt 2``.

    With ``halving`` a second run with ``d / 2`` reports the ratio of hit
    rates at each epsilon; the bound's ``omega^-1`` factor predicts 2.
    """
    c = np.asarray(c, dtype=float)
    d = np.asarray(d, dtype=float)
    eps = np.asarray(eps_grid, dtype=float)
    omega = float(np.linalg.norm(d))
    if abs(np.linalg.norm(c) - 1) > 1e-9:
        raise PreconditionError("c must be a unit vector")
    if not 0 < omega <= 1:
        raise PreconditionError("need 0 < ||d|| <= 1")
    if abs(cosine(c, d)) > 0.01:
        raise PreconditionError(f"|cos(c, d)| = {abs(cosine(c, d)):.4g} exceeds 0.01")
    if certify:
        _certify(np.vstack([c, d]), math.sqrt(2) / eps.min(), alpha, gamma, directions)
    rows = _pair_rows(c, d, law, eps, trials, rng, conf, math.sqrt(2))
    extra = {"omega": omega, "ratio_p_omega_over_eps2": [r.p_hat * omega / r.radius**2 * 2 for r in rows]}
    if halving:
        rows_h = _pair_rows(c, d / 2, law, eps, trials, rng, conf, math.sqrt(2))
        extra["halving_ratios"] = _ratios(rows_h, rows)
        extra["halving_rows"] = [r.csv_row() for r in rows_h]
    return _slope_table("lo_2d", rows, trials, conf, extra)


def _ratios(num: list[ConcentrationEstimate], den: list[ConcentrationEstimate]) -> list[float | None]:
    out = []
    for a, b in zip(num, den):
        ok = ci_width_ok(a.p_hat, a.ci_low, a.ci_high) and ci_width_ok(b.p_hat, b.ci_low, b.ci_high)
        out.append(a.p_hat / b.p_hat if ok else None)
    return out


def lo_bound_check_4d(c, c2, d, d2, law: EntryLaw | LazyLaw, eps_grid, trials: int, rng: np.random.Generator,
                      alpha: float = 0.01, gamma: float = 0.5, directions: int = 31,
                      conf: float = CONF, certify: bool = True, halving: bool = True) -> LoTable:
    """Concentration of ``S = sum_k (c_k, c'_k, d_k, d'_k) xi_k`` at radius ``2 eps``."""
    c, c2, d, d2 = (np.asarray(x, dtype=float) for x in (c, c2, d, d2))
    eps = np.asarray(eps_grid, dtype=float)
    omega = float(np.linalg.norm(d))
    if omega == 0 or np.linalg.norm(d2) == 0:
        raise PreconditionError("d and d' must be nonzero")
    if abs(np.linalg.norm(d2) - omega) > 1e-9 * max(1.0, omega) or omega > 1:
        raise PreconditionError("need ||d|| = ||d'|| <= 1")
    for x in (c, c2):
        if abs(np.linalg.norm(x) - 1) > 1e-9:
            raise PreconditionError("c and c' must be unit vectors")
    if abs(np.dot(c, c2)) > 1e-9 or abs(np.dot(d, d2)) > 1e-9 * omega**2:
        raise PreconditionError("need <c, c'> = <d, d'> = 0")
    worst = max(abs(cosine(x, y)) for x in (c, c2) for y in (d, d2))
    if worst > 0.01:
        raise PreconditionError(f"max |cos| between c-type and d-type vectors is {worst:.4g} > 0.01")
    a = np.vstack([c, c2, d, d2])
    if certify:
        _certify(a, 2.0 / eps.min(), alpha, gamma, directions)
    rows = levy_estimate(_law_sampler(law, a), 2.0 * eps, trials, "empirical_mode_search", rng, conf)
    extra = {"omega": omega}
    if halving:
        a_h = np.vstack([c, c2, d / 2, d2 / 2])
        rows_h = levy_estimate(_law_sampler(law, a_h), 2.0 * eps, trials, "empirical_mode_search", rng, conf)
        extra["halving_ratios"] = _ratios(rows_h, rows)
        extra["halving_rows"] = [r.csv_row() for r in rows_h]
    return _slope_table("lo_4d", rows, trials, conf, extra)


def tensorization_check(sampler: Sampler, K_cal: float, eps_grid, n: int, trials: int,
                        rng: np.random.Generator, conf: float = CONF) -> dict:
    """``P(sum xi_k^2 <= eps^2 n)`` against ``(C K eps)^n`` over the grid.

    ``sampler(rng, size)`` draws the nonnegative scalar law. Reports the
    smallest C for which the bound holds at every grid point, using both the
    point estimate and the upper confidence limit.
    """
    eps = np.asarray(eps_grid, dtype=float)
    x = np.empty(trials)
    batch = 100_000
    for i in range(0, trials, batch):
        m = min(batch, trials - i)
        x[i : i + m] = np.sum(sampler(rng, m * n).reshape(m, n) ** 2, axis=1)
    x.sort()
    hits = np.searchsorted(x, eps**2 * n, side="right")
    rows = [ConcentrationEstimate.from_counts(e, k, trials, conf=conf) for e, k in zip(eps, hits)]
    c_hat = max(r.p_hat ** (1.0 / n) / (K_cal * r.radius) for r in rows)
    c_up = max(r.ci_high ** (1.0 / n) / (K_cal * r.radius) for r in rows)
    return {"n": n, "K": K_cal, "rows": rows, "C_point": c_hat, "C_upper": c_up}
