"""Scalar entry laws and the symmetrize/truncate/lazify transform.

An :class:`EntryLaw` is a mean-zero, unit-variance subgaussian law (optionally
complexified as ``xi + i xi'``). A :class:`LazyLaw` wraps one and describes

    xi_nu = 1{|xi - xi'| in (1, 16 B^2)} * (xi - xi') * Z_nu,

with ``Z_nu`` an independent Bernoulli(nu). With ``truncate=False`` the
indicator is dropped, giving the untruncated ``(xi - xi') Z_nu``.

Characteristic functions use the ``E exp(2 pi i t X)`` convention throughout.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy import special

__all__ = [
    "EntryLaw",
    "LazyLaw",
    "SandwichReport",
    "sample_scalar",
    "sample_array",
    "char_fn_exact",
    "char_fn_base",
    "char_fn_untruncated_lazy",
    "char_fn_sandwich_check",
    "law_from_json",
    "law_to_json",
]

KINDS = ("rademacher", "gaussian", "uniform_pm_k", "custom_discrete")
_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(64)


@dataclass(frozen=True)
class EntryLaw:
    """Base entry distribution.

    ``kind`` is one of ``rademacher``, ``gaussian``, ``uniform_pm_k`` (uniform
    on ``{+-1, ..., +-k}`` rescaled to unit variance) or ``custom_discrete``
    (explicit ``atoms`` as ``(value, prob)`` pairs). ``B`` is the user-supplied
    subgaussian bound; it is metadata and only feeds derived constants.

    ``validate=False`` skips the moment checks. It exists so tests can force
    deterministic matrices through the samplers (e.g. a point mass at 1).
    """

    kind: str = "rademacher"
    k: int | None = None
    atoms: tuple[tuple[float, float], ...] | None = None
    complexified: bool = False
    B: float = 1.0
    validate: bool = field(default=True, compare=False)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown law kind {self.kind!r}; expected one of {KINDS}")
        if self.B <= 0:
            raise ValueError("subgaussian bound B must be positive")
        if self.kind == "uniform_pm_k":
            if self.k is None or int(self.k) != self.k or self.k < 1:
                raise ValueError("uniform_pm_k needs an integer k >= 1")
        if self.kind == "custom_discrete":
            if not self.atoms:
                raise ValueError("custom_discrete needs a non-empty atom list")
            atoms = tuple((float(v), float(p)) for v, p in self.atoms)
            object.__setattr__(self, "atoms", atoms)
            probs = np.array([p for _, p in atoms])
            if np.any(probs < 0):
                raise ValueError("atom probabilities must be non-negative")
            if abs(probs.sum() - 1.0) > 1e-12:
                raise ValueError(f"atom probabilities sum to {probs.sum()!r}, not 1")
            if self.validate:
                vals = np.array([v for v, _ in atoms])
                mean = float(probs @ vals)
                var = float(probs @ (vals - mean) ** 2)
                if abs(mean) > 1e-12 or abs(var - 1.0) > 1e-12:
                    raise ValueError(f"custom law must have mean 0, variance 1 (got {mean}, {var})")

    @property
    def is_discrete(self) -> bool:
        return self.kind != "gaussian"

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Atoms and probabilities of a discrete law."""
        if self.kind == "rademacher":
            return np.array([-1.0, 1.0]), np.array([0.5, 0.5])
        if self.kind == "uniform_pm_k":
            k = int(self.k)
            scale = 1.0 / math.sqrt((k + 1) * (2 * k + 1) / 6.0)
            vals = np.concatenate([-np.arange(k, 0, -1), np.arange(1, k + 1)]) * scale
            return vals.astype(float), np.full(2 * k, 1.0 / (2 * k))
        if self.kind == "custom_discrete":
            vals = np.array([v for v, _ in self.atoms])
            probs = np.array([p for _, p in self.atoms])
            return vals, probs
        raise ValueError("gaussian law has no finite support")

    def _draw_real(self, rng: np.random.Generator, shape) -> np.ndarray:
        if self.kind == "gaussian":
            return rng.standard_normal(shape)
        if self.kind == "rademacher":
            return 2.0 * rng.integers(0, 2, size=shape).astype(float) - 1.0
        vals, probs = self.support()
        if len(vals) == 1:
            return np.full(shape, vals[0])
        idx = rng.choice(len(vals), size=shape, p=probs)
        return vals[idx]

    def draw(self, rng: np.random.Generator, shape=()) -> np.ndarray:
        x = self._draw_real(rng, shape)
        if self.complexified:
            return (x + 1j * self._draw_real(rng, shape)).astype(np.complex128)
        return x

    def char_fn(self, t) -> np.ndarray:
        """``E exp(2 pi i t xi)`` of the real law (complex in general)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "gaussian":
            return np.exp(-2.0 * np.pi**2 * t**2).astype(complex)
        vals, probs = self.support()
        return np.exp(2j * np.pi * np.multiply.outer(t, vals)) @ probs


@dataclass(frozen=True)
class LazyLaw:
    """``xi_nu`` built from ``base``; see the module docstring."""

    base: EntryLaw
    nu: float
    B: float | None = None
    truncate: bool = True
    complexified: bool = False

    def __post_init__(self) -> None:
        if self.B is None:
            object.__setattr__(self, "B", self.base.B)
        if not (0.0 <= self.nu < 1.0):
            raise ValueError("laziness nu must lie in [0, 1)")
        if self.B <= 0:
            raise ValueError("subgaussian bound B must be positive")
        if self.base.complexified:
            raise ValueError("lazy transform takes a real base law; set complexified on the LazyLaw")
        if self.base.is_discrete and self.base.validate:
            floor = 2.0**-7 * self.B**-4
            if self.p < floor:
                raise ValueError(f"retention probability p={self.p} below 2^-7 B^-4 = {floor}")

    @property
    def interval(self) -> tuple[float, float]:
        """Open truncation interval ``I_B = (1, 16 B^2)``."""
        return 1.0, 16.0 * self.B**2

    def difference_support(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact law of ``xi - xi'`` for a discrete base (merged atoms)."""
        vals, probs = self.base.support()
        diffs = np.subtract.outer(vals, vals).ravel()
        pr = np.multiply.outer(probs, probs).ravel()
        keys = np.round(diffs, 12)
        uniq, inv = np.unique(keys, return_inverse=True)
        out = np.zeros(len(uniq))
        np.add.at(out, inv, pr)
        return uniq, out

    def _in_interval(self, x: np.ndarray) -> np.ndarray:
        lo, hi = self.interval
        ax = np.abs(x)
        return (ax > lo) & (ax < hi)

    @property
    def p(self) -> float:
        """``P(|xi - xi'| in I_B)``."""
        if self.base.is_discrete:
            d, pr = self.difference_support()
            return float(pr[self._in_interval(d)].sum())
        lo, hi = self.interval
        # xi - xi' ~ N(0, 2)
        return float(special.erf(hi / 2.0) - special.erf(lo / 2.0))

    def support(self) -> tuple[np.ndarray, np.ndarray]:
        """Exact atoms of ``xi_nu`` (discrete base only)."""
        d, pr = self.difference_support()
        if self.truncate:
            keep = self._in_interval(d)
            d, pr = d[keep], pr[keep]
        else:
            keep = d != 0
            d, pr = d[keep], pr[keep]
        vals = np.concatenate([[0.0], d])
        probs = np.concatenate([[1.0 - self.nu * pr.sum()], self.nu * pr])
        order = np.argsort(vals)
        return vals[order], probs[order]

    def _draw_real(self, rng: np.random.Generator, shape) -> np.ndarray:
        x = self.base._draw_real(rng, shape) - self.base._draw_real(rng, shape)
        z = rng.random(shape) < self.nu
        if self.truncate:
            z &= self._in_interval(x)
        return np.where(z, x, 0.0)

    def draw(self, rng: np.random.Generator, shape=()) -> np.ndarray:
        x = self._draw_real(rng, shape)
        if self.complexified:
            return (x + 1j * self._draw_real(rng, shape)).astype(np.complex128)
        return x

    # conditional expectations over xi_bar given |xi_bar| in I_B

    def _conditional_expect(self, fn, t: np.ndarray) -> np.ndarray:
        """``E[fn(t * xi_bar) | |xi_bar| in I_B]`` for each t."""
        t = np.asarray(t, dtype=float)
        if self.base.is_discrete:
            d, pr = self.difference_support()
            keep = self._in_interval(d)
            d, pr = d[keep], pr[keep] / pr[keep].sum()
            return fn(np.multiply.outer(t, d)) @ pr
        return _gaussian_conditional(fn, t, *self.interval, self.p)


def _gaussian_conditional(fn, t: np.ndarray, lo: float, hi: float, mass: float) -> np.ndarray:
    """Composite 64-point Gauss-Legendre over ``lo < |x| < hi`` for x ~ N(0, 2).

    The range is cut at ``|x| = 20`` where the density is below ``1e-43``.
    Panel edges sit at the half-integer points of ``t x`` (the kinks of the
    torus distance), so each panel spans one period of ``cos(2 pi t x)`` and
    the integrand is smooth on it; the 64-point rule is then converged to
    double precision.
    """
    t = np.atleast_1d(t)
    hi = min(hi, 20.0)
    out = np.zeros(t.shape)
    if hi <= lo:
        return out
    for i, ti in enumerate(t):
        a = abs(float(ti))
        kinks = (np.arange(math.ceil(lo * a - 0.5), math.floor(hi * a - 0.5) + 1) + 0.5) / a if a > 0 else []
        edges = np.unique(np.concatenate([np.linspace(lo, hi, 5), kinks]))
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        x = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        w = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        dens = np.exp(-(x**2) / 4.0) / math.sqrt(4.0 * math.pi)
        # symmetric integrand: both signs of x contribute equally
        out[i] = fn(ti * x) @ (2.0 * w * dens / mass)
    return out


def sample_scalar(law: EntryLaw | LazyLaw, rng: np.random.Generator):
    """One draw from ``law``."""
    v = law.draw(rng, ())
    return complex(v) if np.iscomplexobj(v) else float(v)


def sample_array(law: EntryLaw | LazyLaw, rng: np.random.Generator, shape) -> np.ndarray:
    return law.draw(rng, shape)


def _torus_sq(x: np.ndarray) -> np.ndarray:
    r = x - np.round(x)
    return r * r


def char_fn_exact(law: LazyLaw, t) -> np.ndarray | float:
    """``1 - nu p + nu p E[cos(2 pi t xi_bar) | |xi_bar| in I_B]``."""
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    nup = law.nu * law.p
    ec = law._conditional_expect(lambda x: np.cos(2.0 * np.pi * x), t)
    out = 1.0 - nup + nup * ec
    return float(out[0]) if scalar else out


def char_fn_base(law: EntryLaw, t) -> np.ndarray:
    return law.char_fn(t)


def char_fn_untruncated_lazy(law: LazyLaw, t) -> np.ndarray:
    """Characteristic function of ``(xi - xi') Z_nu`` (no truncation)."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    phi = law.base.char_fn(t)
    # xi - xi' has characteristic function |phi_xi|^2
    return 1.0 - law.nu + law.nu * np.abs(phi) ** 2


@dataclass
class SandwichReport:
    max_violation: float
    worst_t: float | None
    violations: int
    checked: int
    slack: float
    details: dict[str, float]

    @property
    def ok(self) -> bool:
        return self.violations == 0


def char_fn_sandwich_check(law: LazyLaw, t_grid: Sequence[float], slack: float = 1e-9) -> SandwichReport:
    """Check the two-sided exponential bounds and Fourier dominance on a grid.

    Three inequalities are tested at every t:

    * ``exp(-32 nu p E||t xi_bar||^2) <= phi_{xi_nu}(t) <= exp(-nu p E||t xi_bar||^2)``
    * ``phi_{(xi-xi') Z_nu}(t) <= phi_{xi_nu}(t)``
    * ``|phi_xi(t)| <= |phi_{(xi-xi') Z_nu}(t)|`` (requires ``nu <= 1/4``)

    A positive violation larger than ``slack`` counts as a failure.
    """
    if law.nu > 0.25:
        raise ValueError("dominance check requires nu <= 1/4")
    if not law.truncate:
        raise ValueError("sandwich check is stated for the truncated law")
    t = np.asarray(t_grid, dtype=float)
    nup = law.nu * law.p
    phi = char_fn_exact(law, t)
    et = law._conditional_expect(_torus_sq, t)
    lower = np.exp(-32.0 * nup * et)
    upper = np.exp(-nup * et)
    untrunc = char_fn_untruncated_lazy(law, t)
    base = np.abs(law.base.char_fn(t))
    terms = {
        "lower": lower - phi,
        "upper": phi - upper,
        "untruncated": untrunc - phi,
        "dominance": base - np.abs(untrunc),
    }
    worst = np.max(np.stack(list(terms.values())), axis=0)
    bad = worst > slack
    i = int(np.argmax(worst))
    return SandwichReport(
        max_violation=float(max(worst[i], 0.0)),
        worst_t=float(t[i]) if bad.any() else None,
        violations=int(bad.sum()),
        checked=int(t.size),
        slack=slack,
        details={k: float(np.max(v)) for k, v in terms.items()},
    )


# JSON round trip ---------------------------------------------------------

def law_to_json(law: EntryLaw | LazyLaw) -> dict[str, Any]:
    if isinstance(law, LazyLaw):
        out = law_to_json(law.base)
        out.update({"nu": law.nu, "B": law.B, "truncate": law.truncate, "complexified": law.complexified})
        return out
    out: dict[str, Any] = {"kind": law.kind, "B": law.B, "complexified": law.complexified}
    if law.k is not None:
        out["k"] = law.k
    if law.atoms is not None:
        out["atoms"] = [list(a) for a in law.atoms]
    return out


def law_from_json(obj: dict[str, Any]) -> EntryLaw | LazyLaw:
    """Inverse of :func:`law_to_json`.

    Keys: ``kind`` (required), ``k``, ``atoms``, ``B``, ``complexified``; the
    presence of ``nu`` makes it a :class:`LazyLaw` (then ``truncate`` applies).
    """
    if "kind" not in obj:
        raise ValueError("law spec needs a 'kind' field")
    known = {"kind", "k", "atoms", "B", "complexified", "nu", "truncate"}
    extra = set(obj) - known
    if extra:
        raise ValueError(f"unknown law fields: {sorted(extra)}")
    atoms = obj.get("atoms")
    lazy = "nu" in obj
    base = EntryLaw(
        kind=obj["kind"],
        k=obj.get("k"),
        atoms=tuple(tuple(a) for a in atoms) if atoms else None,
        complexified=bool(obj.get("complexified", False)) and not lazy,
        B=float(obj.get("B", 1.0)),
    )
    if lazy:
        return LazyLaw(base, nu=float(obj["nu"]), truncate=bool(obj.get("truncate", True)),
                       complexified=bool(obj.get("complexified", False)))
    return base
