"""Configured Monte Carlo experiments, their rows and summaries.

Every trial draws from ``stream(master_seed, tag, trial_index)`` where the tag
names the experiment, law and series. Trials are cut into chunks of fixed
size (independent of the worker count), evaluated serially or in a process
pool, and concatenated in trial order. Rows are formatted with ``repr`` so
identical configurations give identical ``rows.csv`` bytes whatever the
worker count.

Epsilon conventions follow the statement being tested and are recorded in
each report: gap and complex two-point experiments threshold at
``eps / sqrt(n)``; the real two-point experiment thresholds ``sigma_min`` at
bare ``eps`` (with an optional ``n_inv_half`` series for comparison).
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
import shutil
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
from scipy import stats as sstats

from . import __version__
from .anticoncentration import (
    lo_bound_check_1d,
    lo_bound_check_2d,
    lo_bound_check_4d,
    tensorization_check,
)
from .arithmetic import LcdQuery, essential_lcd
from .distributions import EntryLaw, LazyLaw, law_from_json
from .ensembles import EnsembleSpec, sample
from .nets import BoxSpec, sample_box
from .rng import stream
from .spectral import (
    delocalization_profile,
    joint_delocalization_count,
    RankDeficientError,
    overlap_beta,
    schur_eigenvalues,
    svd_values,
)
from .stats import ScalingFit, ci_width_ok, clopper_pearson, fit_scaling

__all__ = [
    "SCHEMA",
    "EXPERIMENT_IDS",
    "ExperimentConfig",
    "ExperimentReport",
    "Row",
    "TrialError",
    "run",
    "joint_indicator",
    "fixed_exponent_constant",
    "parse_law",
    "law_label",
]

SCHEMA = 1
CHUNK = 500
CONF = 0.99

EXPERIMENT_IDS = (
    "gap_simplicity",
    "gap_rect",
    "two_point_real",
    "two_point_complex",
    "real_eig_count",
    "box_lcd",
    "lo_1d",
    "lo_2d",
    "lo_4d",
    "overlap_beta",
    "delocalization",
    "tensorization",
    "linear_relation_repulsion",
)

# experiments whose rows are probabilities estimated from indicator means
PROBABILITY_FACING = frozenset(
    {"gap_simplicity", "gap_rect", "two_point_real", "two_point_complex", "box_lcd", "lo_1d", "lo_2d",
     "lo_4d", "tensorization", "linear_relation_repulsion"}
)

CONVENTIONS = {
    "gap_simplicity": "P(sqrt(n) * min gap <= eps)",
    "gap_rect": "P(sqrt(n) * min gap <= eps), n = column count",
    "two_point_real": "P(sigma_min(A - l1) <= eps and sigma_min(A - l2) <= eps), bare eps",
    "two_point_complex": "P(sigma_min(A - z1) <= eps/sqrt(n) and sigma_min(A - z2) <= eps/sqrt(n))",
    "real_eig_count": "count of eigenvalues with |Im| <= tol * sqrt(n)",
    "box_lcd": "fraction of box points whose LCD at scale r is not certified above K",
    "lo_1d": "P(|<X, v>| <= eps)",
    "lo_2d": "sup_w P(||S - w|| <= eps * sqrt(2))",
    "lo_4d": "sup_w P(||S - w|| <= 2 eps)",
    "overlap_beta": "beta * sqrt(n) / |l1 - l2|",
    "delocalization": "count of |w_i| >= theta / sqrt(n)",
    "tensorization": "P(sum xi_k^2 <= eps^2 n)",
    "linear_relation_repulsion": "some real pair with |l_i + a l_j - b| <= tol * sqrt(n)",
}

ROW_FIELDS = ("experiment", "law", "n", "series", "epsilon", "k_hits", "trials", "p_hat", "ci_low", "ci_high",
              "method", "value")


class TrialError(RuntimeError):
    """A trial raised; carries the failing trial index."""

    def __init__(self, index: int, message: str):
        super().__init__(f"trial {index}: {message}")
        self.index = index


# configuration -----------------------------------------------------------------

def parse_law(obj: str | dict) -> EntryLaw | LazyLaw:
    """``"rademacher"``, ``"gaussian"``, ``"uniform_pm_k:3"`` or a law JSON object."""
    if isinstance(obj, dict):
        return law_from_json(obj)
    if not isinstance(obj, str):
        raise ValueError(f"cannot parse law {obj!r}")
    if obj.startswith("uniform_pm_k:"):
        return EntryLaw("uniform_pm_k", k=int(obj.split(":", 1)[1]))
    if obj in ("rademacher", "gaussian"):
        return EntryLaw(obj)
    raise ValueError(f"unknown law name {obj!r}")


def law_label(obj: str | dict) -> str:
    return obj if isinstance(obj, str) else json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _parse_shift(x) -> complex:
    if isinstance(x, (list, tuple)):
        if len(x) != 2:
            raise ValueError("complex shifts are written as [re, im]")
        return complex(float(x[0]), float(x[1]))
    return complex(float(x))


@dataclass
class ExperimentConfig:
    experiment_id: str
    n_list: list[int] = field(default_factory=list)
    epsilon_grid: list[float] = field(default_factory=list)
    shifts: list = field(default_factory=list)
    trials: int = 1000
    laws: list = field(default_factory=lambda: ["rademacher", "gaussian"])
    master_seed: int | None = None
    workers: int = 1
    options: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.validate()

    def validate(self) -> None:
        if self.experiment_id not in EXPERIMENT_IDS:
            raise ValueError(f"unknown experiment id {self.experiment_id!r}")
        eps = list(self.epsilon_grid)
        if eps and (any(e <= 0 or not math.isfinite(e) for e in eps) or any(b <= a for a, b in zip(eps, eps[1:]))):
            raise ValueError("epsilon_grid must be strictly increasing and positive")
        if self.trials <= 0:
            raise ValueError("trials must be positive")
        if self.experiment_id in PROBABILITY_FACING and self.trials < 1000:
            raise ValueError("probability-facing experiments need at least 1000 trials")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")
        if self.master_seed is not None and self.master_seed < 0:
            raise ValueError("master_seed must be non-negative")
        if any(int(n) != n or n < 1 for n in self.n_list):
            raise ValueError("n_list holds positive integers")
        if not self.laws:
            raise ValueError("at least one law is required")
        for law in self.laws:
            parse_law(law)
        for pair in self.shifts:
            if len(pair) != 2:
                raise ValueError("shifts are pairs (l1, l2)")
            for x in pair:
                _parse_shift(x)

    @classmethod
    def from_json(cls, obj: dict | str | bytes) -> "ExperimentConfig":
        if isinstance(obj, (str, bytes)):
            obj = json.loads(obj)
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known - {"schema"}
        if extra:
            raise ValueError(f"unknown config fields {sorted(extra)}")
        if obj.get("schema", SCHEMA) != SCHEMA:
            raise ValueError(f"unsupported config schema {obj.get('schema')!r}")
        return cls(**{k: v for k, v in obj.items() if k in known})

    def to_json(self) -> dict:
        d = asdict(self)
        d["schema"] = SCHEMA
        return d

    def canonical_bytes(self) -> bytes:
        """Config bytes that determine the rows (worker count excluded)."""
        d = self.to_json()
        d.pop("workers")
        return json.dumps(d, sort_keys=True, separators=(",", ":")).encode("utf-8")

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    def opt(self, key: str, default=None):
        return self.options.get(key, default)


# rows and report ---------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


@dataclass
class Row:
    experiment: str
    law: str
    n: int | str
    series: str
    epsilon: float | None = None
    k_hits: int | None = None
    trials: int | None = None
    p_hat: float | None = None
    ci_low: float | None = None
    ci_high: float | None = None
    method: str = "monte_carlo"
    value: float | None = None

    @classmethod
    def prob(cls, exp, law, n, series, eps, k, trials, conf=CONF, value=None) -> "Row":
        lo, hi = clopper_pearson(int(k), int(trials), conf)
        return cls(exp, law, n, series, float(eps), int(k), int(trials), k / trials, lo, hi, "monte_carlo", value)

    @classmethod
    def stat(cls, exp, law, n, series, value, trials=None, eps=None) -> "Row":
        return cls(exp, law, n, series, eps, None, trials, None, None, None, "summary", value)

    def as_strings(self) -> list[str]:
        return [_fmt(getattr(self, f)) for f in ROW_FIELDS]

    def qualified(self) -> bool:
        return self.p_hat is not None and ci_width_ok(self.p_hat, self.ci_low, self.ci_high)


@dataclass
class ExperimentReport:
    experiment_id: str
    rows: list[Row]
    fits: dict[str, dict]
    summary: dict[str, Any]
    runtime_s: float
    seed: int
    config: dict
    config_hash: str
    version: str = __version__
    epsilon_convention: str = ""
    schema: int = SCHEMA

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_FIELDS)
        for r in self.rows:
            w.writerow(r.as_strings())
        return buf.getvalue()

    def report_json(self) -> dict:
        return {
            "schema": self.schema,
            "experiment_id": self.experiment_id,
            "version": self.version,
            "config_hash": self.config_hash,
            "seed": self.seed,
            "epsilon_convention": self.epsilon_convention,
            "runtime_s": self.runtime_s,
            "fits": self.fits,
            "summary": _jsonable(self.summary),
        }

    def series(self, name: str, law: str | None = None, n=None) -> list[Row]:
        return [r for r in self.rows if r.series == name and (law is None or r.law == law)
                and (n is None or str(r.n) == str(n))]

    def write(self, out_dir: str | Path) -> Path:
        """Write rows.csv, report.json and config-echo.json, staging in a sibling temp dir."""
        out = Path(out_dir)
        out.parent.mkdir(parents=True, exist_ok=True)
        tmp = out.parent / f".{out.name}.tmp-{os.getpid()}"
        if tmp.exists():
            shutil.rmtree(tmp)
        tmp.mkdir()
        (tmp / "rows.csv").write_text(self.rows_csv(), encoding="utf-8")
        (tmp / "report.json").write_text(json.dumps(self.report_json(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        (tmp / "config-echo.json").write_text(json.dumps(self.config, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        if not out.exists():
            os.rename(tmp, out)
        else:
            for f in tmp.iterdir():
                os.replace(f, out / f.name)
            tmp.rmdir()
        return out


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else None
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    return x


# scaling helpers ---------------------------------------------------------------

def _fit_rows(rows: Sequence[Row], window: tuple[float, float] | None = None) -> ScalingFit:
    sel = [r for r in rows if window is None or window[0] - 1e-12 <= r.epsilon <= window[1] + 1e-12]
    if not sel:
        return fit_scaling([], [], [], CONF)
    return fit_scaling([r.epsilon for r in sel], [r.k_hits for r in sel], [r.trials for r in sel], CONF)


def _fit_json(fit: ScalingFit) -> dict:
    d = fit.to_json()
    d["inconclusive"] = fit.points < 3
    return d


def fixed_exponent_constant(rows: Sequence[Row], exponent: float) -> float | None:
    """Geometric mean of ``p_hat / eps^exponent`` over CI-qualified rows.

    Zero when no row has a hit; None when hits exist but no row qualifies.
    """
    if all((r.k_hits or 0) == 0 for r in rows):
        return 0.0
    q = [r for r in rows if r.qualified()]
    if not q:
        return None
    return float(np.exp(np.mean([math.log(r.p_hat / r.epsilon**exponent) for r in q])))


def joint_indicator(a, lam1: complex, lam2: complex, eps: float, scaling: str = "unscaled",
                    method: str = "auto") -> tuple[bool, bool, bool]:
    """Indicators of ``sigma_min(A - l_i) <= eps * scale`` from one shared sample."""
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("joint indicator needs a square matrix")
    scale = {"unscaled": 1.0, "n_inv_half": 1.0 / math.sqrt(a.shape[0])}[scaling]
    s1 = _sigma_min(a, lam1, method)
    s2 = s1 if lam2 == lam1 else _sigma_min(a, lam2, method)
    b1, b2 = s1 <= eps * scale, s2 <= eps * scale
    return bool(b1), bool(b2), bool(b1 and b2)


def _sigma_min(a, lam, method):
    b = a.astype(np.result_type(a.dtype, np.asarray(lam).dtype), copy=True)
    b[np.diag_indices_from(b)] -= lam
    return float(svd_values(b, method)[-1])


# parallel map --------------------------------------------------------------------

def _map_trials(fn: Callable, args: tuple, trials: int, workers: int) -> np.ndarray:
    bounds = [(s, min(s + CHUNK, trials)) for s in range(0, trials, CHUNK)]
    if workers <= 1 or len(bounds) == 1:
        parts = [fn(args, a, b) for a, b in bounds]
    else:
        with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("fork")) as ex:
            futures = [ex.submit(fn, args, a, b) for a, b in bounds]
            parts = [f.result() for f in futures]
    return np.concatenate(parts, axis=0)


def _guard(i: int, f: Callable):
    try:
        return f()
    except TrialError:
        raise
    except Exception as exc:  # noqa: BLE001 - re-raised with the trial index
        raise TrialError(i, f"{type(exc).__name__}: {exc}") from exc


# chunk functions (top level so they pickle) ---------------------------------------

def _gap_chunk(args, start, stop):
    seed, tag, spec, method = args
    out = np.empty((stop - start, 3))
    for k, i in enumerate(range(start, stop)):
        def one():
            s = svd_values(sample(spec, stream(seed, tag, i)).data, method)
            gap = float(np.min(s[:-1] - s[1:]))
            return math.sqrt(spec.n) * gap, gap / s[0], s[0]
        out[k] = _guard(i, one)
    return out


def _two_point_chunk(args, start, stop):
    seed, tag, spec, lams, method = args
    out = np.empty((stop - start, len(lams)))
    if method == "lapack":
        mats = np.stack([_guard(i, lambda: sample(spec, stream(seed, tag, i)).data) for i in range(start, stop)])
        idx = np.arange(spec.n)
        for j, lam in enumerate(lams):
            b = mats.astype(np.result_type(mats.dtype, np.asarray(lam).dtype), copy=True)
            b[:, idx, idx] -= lam
            out[:, j] = np.linalg.svd(b, compute_uv=False)[:, -1]
        return out
    for k, i in enumerate(range(start, stop)):
        def one():
            a = sample(spec, stream(seed, tag, i)).data
            return [_sigma_min(a, lam, method) for lam in lams]
        out[k] = _guard(i, one)
    return out


def _real_eig_chunk(args, start, stop):
    seed, tag, spec, tols, a_n, b_n = args
    out = np.empty((stop - start, len(tols) + 1))
    for k, i in enumerate(range(start, stop)):
        def one():
            a = sample(spec, stream(seed, tag, i)).data
            allev = schur_eigenvalues(a)
            counts = [int(np.sum(np.abs(allev.imag) <= t * math.sqrt(spec.n))) for t in tols]
            ev = allev.real[np.abs(allev.imag) <= tols[0] * math.sqrt(spec.n)]
            rel = math.inf
            if ev.size >= 2:
                d = np.abs(ev[:, None] + a_n * ev[None, :] - b_n)
                np.fill_diagonal(d, np.inf)
                rel = float(d.min()) / math.sqrt(spec.n)
            return counts + [rel]
        out[k] = _guard(i, one)
    return out


def _overlap_chunk(args, start, stop):
    seed, tag, spec, pairs = args
    out = np.empty((stop - start, len(pairs)))
    for k, i in enumerate(range(start, stop)):
        def one():
            a = sample(spec, stream(seed, tag, i)).data
            try:
                return [overlap_beta(a, l1, l2, 1)[1] for l1, l2 in pairs]
            except RankDeficientError:
                # singular column system: the normal is undefined, recorded as NaN
                return [math.nan] * len(pairs)
        out[k] = _guard(i, one)
    return out


def _deloc_chunk(args, start, stop):
    seed, tag, spec, lam1, lam2, thetas, big_theta = args
    m = len(thetas)
    out = np.empty((stop - start, 2 * m))
    for k, i in enumerate(range(start, stop)):
        def one():
            a = sample(spec, stream(seed, tag, i)).data
            w1, counts = delocalization_profile(a, lam1, thetas)
            w2, _ = delocalization_profile(a, lam2, thetas)
            joint = [joint_delocalization_count(w1, w2, t, big_theta) for t in thetas]
            return list(counts) + joint
        out[k] = _guard(i, one)
    return out


def _box_chunk(args, start, stop):
    seed, tag, box, r, alpha, gamma, K = args
    out = np.empty((stop - start, 2))
    for k, i in enumerate(range(start, stop)):
        def one():
            x = sample_box(box, stream(seed, tag, i)).point.astype(float)
            res = essential_lcd(LcdQuery(r * x, alpha, gamma, K, mode="certify_lower_bound"))
            return float(not res.certified), float(res.witness is not None)
        out[k] = _guard(i, one)
    return out


# experiments ---------------------------------------------------------------------

def _tag(cfg: ExperimentConfig, law: str, *parts) -> str:
    return "/".join([cfg.experiment_id, law] + [str(p) for p in parts])


def _prob_series(exp, law, n, series, eps_grid, values, trials, inclusive=True):
    vals = np.sort(np.asarray(values))
    ks = np.searchsorted(vals, np.asarray(eps_grid), side="right" if inclusive else "left")
    return [Row.prob(exp, law, n, series, e, int(k), trials) for e, k in zip(eps_grid, ks)]


def _run_gap(cfg: ExperimentConfig, law_obj, label, rows, fits, summary):
    exp = cfg.experiment_id
    method = cfg.opt("svd_method", "auto")
    tol = cfg.opt("collision_rel_tol", 1e-10)
    window = tuple(cfg.opt("fit_window", (cfg.epsilon_grid[0], cfg.epsilon_grid[-1])))
    n_rows_list = cfg.opt("n_rows_list", [None] * len(cfg.n_list))
    for n, n_rows in zip(cfg.n_list, n_rows_list):
        if exp == "gap_rect":
            spec = EnsembleSpec("iid_rect", n, parse_law(law_obj), n_rows=n_rows,
                                aspect_bound=cfg.opt("aspect_bound", 2.0))
            key = f"{n_rows}x{n}"
        else:
            spec = EnsembleSpec("iid_square", n, parse_law(law_obj))
            key = str(n)
        data = _map_trials(_gap_chunk, (cfg.master_seed, _tag(cfg, label, key), spec, method), cfg.trials,
                           cfg.workers)
        series = _prob_series(exp, label, key, "min_gap_scaled", cfg.epsilon_grid, data[:, 0], cfg.trials)
        rows.extend(series)
        collisions = int(np.sum(data[:, 1] <= tol))
        rows.append(Row(exp, label, key, "collisions", None, collisions, cfg.trials, collisions / cfg.trials,
                        *clopper_pearson(collisions, cfg.trials, CONF), "monte_carlo",
                        float(np.min(data[:, 1]))))
        fit = _fit_rows(series, window)
        fits[f"{label}/{key}/min_gap_scaled"] = _fit_json(fit)
        summary[f"{label}/{key}"] = {
            "collisions": collisions,
            "min_relative_gap": float(np.min(data[:, 1])),
            "slope": fit.slope,
            "stderr": fit.stderr,
            "fit_window": list(window),
        }


def _shift_values(cfg: ExperimentConfig, n: int) -> list[tuple[complex, complex]]:
    unit = math.sqrt(n) if cfg.opt("shift_units", "absolute") == "sqrt_n" else 1.0
    return [(_parse_shift(a) * unit, _parse_shift(b) * unit) for a, b in cfg.shifts]


def _real_if_possible(z: complex):
    return z.real if z.imag == 0 else z


def _run_two_point(cfg: ExperimentConfig, law_obj, label, rows, fits, summary):
    exp = cfg.experiment_id
    complex_case = exp == "two_point_complex"
    method = cfg.opt("svd_method", "lapack" if complex_case else "auto")
    scalings = cfg.opt("scalings", ["n_inv_half"] if complex_case else ["unscaled"])
    exponent = cfg.opt("exponent", 4 if complex_case else 2)
    window = tuple(cfg.opt("fit_window", (cfg.epsilon_grid[0], cfg.epsilon_grid[-1])))
    for n in cfg.n_list:
        family = "iid_complex" if complex_case else "iid_square"
        spec = EnsembleSpec(family, n, parse_law(law_obj))
        pairs = _shift_values(cfg, n)
        lams = []
        for p in pairs:
            for z in p:
                if z not in lams:
                    lams.append(z)
        lam_args = [_real_if_possible(z) if not complex_case else z for z in lams]
        data = _map_trials(_two_point_chunk, (cfg.master_seed, _tag(cfg, label, n), spec, lam_args, method),
                           cfg.trials, cfg.workers)
        consts = {}
        for (z1, z2) in pairs:
            i1, i2 = lams.index(z1), lams.index(z2)
            sep = abs(z1 - z2) / math.sqrt(n)
            pk = f"{_fmt_shift(z1)},{_fmt_shift(z2)}"
            for sc in scalings:
                scale = 1.0 if sc == "unscaled" else 1.0 / math.sqrt(n)
                joint_ok = True
                jrows = []
                for e in cfg.epsilon_grid:
                    b1 = data[:, i1] <= e * scale
                    b2 = data[:, i2] <= e * scale
                    bj = b1 & b2
                    k1, k2, kj = int(b1.sum()), int(b2.sum()), int(bj.sum())
                    joint_ok &= kj <= min(k1, k2)
                    rows.append(Row.prob(exp, label, n, f"marginal_1@{pk}/{sc}", e, k1, cfg.trials))
                    rows.append(Row.prob(exp, label, n, f"marginal_2@{pk}/{sc}", e, k2, cfg.trials))
                    jr = Row.prob(exp, label, n, f"joint@{pk}/{sc}", e, kj, cfg.trials)
                    rows.append(jr)
                    jrows.append(jr)
                fit = _fit_rows(jrows, window)
                fits[f"{label}/{n}/joint@{pk}/{sc}"] = _fit_json(fit)
                c = fixed_exponent_constant([r for r in jrows if window[0] - 1e-12 <= r.epsilon <= window[1] + 1e-12],
                                            exponent)
                consts.setdefault(sc, []).append((sep, c))
                summary[f"{label}/{n}/{pk}/{sc}"] = {
                    "separation_over_sqrt_n": sep,
                    "joint_slope": fit.slope,
                    "joint_stderr": fit.stderr,
                    "fit_points": fit.points,
                    "joint_le_marginals": bool(joint_ok),
                    "fixed_exponent_constant": c,
                    "rows_failing_ci_rule": [r.epsilon for r in jrows if not r.qualified()],
                }
        for sc, lst in consts.items():
            lst.sort(key=lambda t: t[0])
            vals = [c for _, c in lst]
            ok = all(c is not None for c in vals) and all(a > b or (a == 0 and b == 0) for a, b in zip(vals, vals[1:]))
            summary[f"{label}/{n}/constants/{sc}"] = {
                "separations": [s for s, _ in lst],
                "constants": vals,
                "rank_decreasing": bool(ok),
            }


def _fmt_shift(z: complex) -> str:
    return f"{z.real:.6g}" if z.imag == 0 else f"{z.real:.6g}{z.imag:+.6g}j"


def _run_real_eig(cfg: ExperimentConfig, law_obj, label, rows, fits, summary, linear=False):
    exp = cfg.experiment_id
    tols = cfg.opt("tolerances", [1e-9, 1e-6, 1e-12])
    a_n = cfg.opt("a_n", -3.0)
    b_n = cfg.opt("b_n", 0.0)
    hit_tol = cfg.opt("tol", 1e-6)
    for n in cfg.n_list:
        spec = EnsembleSpec("iid_square", n, parse_law(law_obj))
        data = _map_trials(_real_eig_chunk, (cfg.master_seed, _tag(cfg, label, n), spec, tols, a_n, b_n),
                           cfg.trials, cfg.workers)
        if linear:
            hits = int(np.sum(data[:, -1] <= hit_tol))
            rows.append(Row(exp, label, n, "pairs_within_tol", hit_tol, hits, cfg.trials, hits / cfg.trials,
                            *clopper_pearson(hits, cfg.trials, CONF), "monte_carlo", float(np.min(data[:, -1]))))
            summary[f"{label}/{n}"] = {"hits": hits, "a_n": a_n, "b_n": b_n, "tol": hit_tol,
                                       "min_scaled_residual": float(np.min(data[:, -1]))}
            continue
        ref = math.sqrt(2 * n / math.pi)
        entry = {"reference": ref}
        for j, t in enumerate(tols):
            c = data[:, j]
            mean = float(c.mean())
            rows.append(Row.stat(exp, label, n, f"mean_real_count@tol={t:g}", mean, cfg.trials))
            entry[f"mean@{t:g}"] = mean
        c0 = data[:, 0].astype(int)
        parity = float(np.mean((c0 % 2) == (n % 2)))
        rows.append(Row.stat(exp, label, n, "parity_fraction", parity, cfg.trials))
        rows.append(Row.stat(exp, label, n, "reference_sqrt_2n_over_pi", ref))
        entry.update({"mean": float(c0.mean()), "relative_error": float(c0.mean()) / ref - 1.0,
                      "parity_fraction": parity, "std": float(c0.std(ddof=1))})
        summary[f"{label}/{n}"] = entry


def _run_overlap(cfg: ExperimentConfig, law_obj, label, rows, fits, summary):
    exp = cfg.experiment_id
    for n in cfg.n_list:
        spec = EnsembleSpec("iid_square", n, parse_law(law_obj))
        pairs = [(z1.real, z2.real) for z1, z2 in _shift_values(cfg, n)]
        data = _map_trials(_overlap_chunk, (cfg.master_seed, _tag(cfg, label, n), spec, pairs), cfg.trials,
                           cfg.workers)
        degenerate = int(np.isnan(data[:, 0]).sum())
        data = data[~np.isnan(data).any(axis=1)]
        summary[f"{label}/{n}/degenerate_trials"] = degenerate
        scaled = []
        for j, (l1, l2) in enumerate(pairs):
            sep = abs(l2 - l1)
            x = data[:, j] * math.sqrt(n) / sep
            scaled.append((sep, x))
            key = f"{l1:.6g},{l2:.6g}"
            for q_name, q in (("min", None), ("q01", 0.01), ("median", 0.5)):
                v = float(x.min()) if q is None else float(np.quantile(x, q))
                rows.append(Row.stat(exp, label, n, f"beta_scaled_{q_name}@{key}", v, cfg.trials))
            summary[f"{label}/{n}/{key}"] = {"min": float(x.min()), "q01": float(np.quantile(x, 0.01)),
                                             "median": float(np.median(x)), "min_beta": float(data[:, j].min())}
        scaled.sort(key=lambda t: t[0])
        tests = []
        for (s_a, x_a), (s_b, x_b) in zip(scaled, scaled[1:]):
            # beta itself, not the scaled ratio, should grow with the separation
            beta_a, beta_b = x_a * s_a, x_b * s_b
            p = float(sstats.mannwhitneyu(beta_b, beta_a, alternative="greater").pvalue)
            tests.append({"from": s_a, "to": s_b, "p_value": p, "increasing": p < 0.01})
        summary[f"{label}/{n}/rank_tests"] = tests


def _run_deloc(cfg: ExperimentConfig, law_obj, label, rows, fits, summary):
    exp = cfg.experiment_id
    thetas = list(cfg.opt("thetas", [round(0.05 * k, 2) for k in range(1, 21)]))
    big_theta = cfg.opt("Theta", math.sqrt(20.0))
    need = cfg.opt("trial_fraction", 0.99)
    for n in cfg.n_list:
        spec = EnsembleSpec("iid_square", n, parse_law(law_obj))
        l1, l2 = _shift_values(cfg, n)[0] if cfg.shifts else (0.0, math.sqrt(n))
        data = _map_trials(_deloc_chunk, (cfg.master_seed, _tag(cfg, label, n), spec, l1.real if isinstance(l1, complex) else l1,
                                          l2.real if isinstance(l2, complex) else l2, thetas, big_theta),
                           cfg.trials, cfg.workers)
        m = len(thetas)
        single = data[:, :m] >= 0.75 * n
        joint = data[:, m:] >= 0.25 * n
        for j, t in enumerate(thetas):
            rows.append(Row.prob(exp, label, n, "three_quarter_support", t, int(single[:, j].sum()), cfg.trials))
            rows.append(Row.prob(exp, label, n, "joint_quarter_support", t, int(joint[:, j].sum()), cfg.trials))
        frac1 = single.mean(axis=0)
        frac2 = joint.mean(axis=0)
        ok1 = [t for t, f in zip(thetas, frac1) if f >= need]
        ok2 = [t for t, f in zip(thetas, frac2) if f >= need]
        summary[f"{label}/{n}"] = {
            "theta_three_quarter": max(ok1) if ok1 else None,
            "theta_joint_quarter": max(ok2) if ok2 else None,
            "Theta": big_theta,
            "trial_fraction_required": need,
            "fractions_three_quarter": frac1.tolist(),
            "fractions_joint_quarter": frac2.tolist(),
            "thetas": thetas,
        }


def _run_box(cfg: ExperimentConfig, law_obj, label, rows, fits, summary):
    exp = cfg.experiment_id
    d = int(cfg.opt("d", cfg.n_list[0] if cfg.n_list else 32))
    boxN = int(cfg.opt("boxN", 1024))
    kappa = float(cfg.opt("kappa", 2.0))
    alpha = float(cfg.opt("alpha", 2.0**-24))
    K = float(cfg.opt("K", 1024))
    gamma = float(cfg.opt("gamma", 0.5))
    r = float(cfg.opt("r", 1.0 / (kappa * boxN)))
    if not K * boxN < 2**d:
        raise ValueError(f"hypothesis K N < 2^d fails ({K * boxN} >= 2^{d})")
    if not d >= K * K * alpha:
        raise ValueError(f"hypothesis d >= K^2 alpha fails ({d} < {K * K * alpha})")
    box = BoxSpec(d, boxN, kappa, D1=tuple(range(1, d + 1)))
    data = _map_trials(_box_chunk, (cfg.master_seed, _tag(cfg, "box", d), box, r, alpha, gamma, K), cfg.trials,
                       cfg.workers)
    fails = int(data[:, 0].sum())
    bound = (2.0**20 * alpha) ** (d / 4.0)
    lo, hi = clopper_pearson(fails, cfg.trials, CONF)
    rows.append(Row(exp, "box", d, "uncertified", K, fails, cfg.trials, fails / cfg.trials, lo, hi,
                    "monte_carlo", bound))
    summary["box"] = {"d": d, "boxN": boxN, "kappa": kappa, "alpha": alpha, "K": K, "r": r, "gamma": gamma,
                      "failures": fails, "witnessed": int(data[:, 1].sum()), "bound": bound,
                      "bound_vacuous": bound >= 1, "ci_high": hi,
                      "consistent": fails / cfg.trials <= max(bound, hi)}


def _orthonormal(rng: np.random.Generator, n: int, k: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, k)))
    return q * np.sign(np.diag(r))


def _lo_rows(exp, label, n, series, table_rows):
    return [Row(exp, label, n, series, r.radius, r.k_hits, r.trials, r.p_hat, r.ci_low, r.ci_high, r.method)
            for r in table_rows]


def _run_lo(cfg: ExperimentConfig, law_obj, label, rows, fits, summary):
    exp = cfg.experiment_id
    n = cfg.n_list[0]
    law = parse_law(law_obj)
    alpha = cfg.opt("alpha", 0.01)
    gamma = cfg.opt("gamma", 0.5)
    eps = np.asarray(cfg.epsilon_grid)
    vec_rng = stream(cfg.master_seed, _tag(cfg, label, n, "vectors"))
    rng = stream(cfg.master_seed, _tag(cfg, label, n, "pool"))
    if exp == "lo_1d":
        v = vec_rng.standard_normal(n)
        table = lo_bound_check_1d(v, law, eps, cfg.trials, rng, alpha, gamma, cfg.opt("c_margin", 10.0))
    elif exp == "lo_2d":
        q = _orthonormal(vec_rng, n, 2)
        omega = cfg.opt("omega", 0.5)
        table = lo_bound_check_2d(q[:, 0], omega * q[:, 1], law, eps, cfg.trials, rng, alpha, gamma,
                                  cfg.opt("directions", 256))
    else:
        q = _orthonormal(vec_rng, n, 4)
        omega = cfg.opt("omega", 1.0)
        table = lo_bound_check_4d(q[:, 0], q[:, 1], omega * q[:, 2], omega * q[:, 3], law, eps, cfg.trials, rng,
                                  alpha, gamma, cfg.opt("directions", 31))
    rows.extend(_lo_rows(exp, label, n, "levy", table.rows))
    st = dict(table.stats)
    halving_rows = st.pop("halving_rows", None)
    if halving_rows is not None:
        for hr in halving_rows:
            k = int(hr["k_hits"])
            rows.append(Row.prob(exp, label, n, "levy_half_omega", float(hr["epsilon"]), k, int(hr["trials"])))
    fits[f"{label}/{n}/levy"] = {"slope": table.slope, "stderr": table.stderr, "used": table.used}
    entry = {"slope": table.slope, "stderr": table.stderr, **st}
    ratios = st.get("halving_ratios")
    if ratios is not None:
        first = next((x for x in ratios if x is not None), None)
        entry["halving_ratio_small_eps"] = first
    summary[f"{label}/{n}"] = entry


def _run_tensorization(cfg: ExperimentConfig, law_obj, label, rows, fits, summary):
    exp = cfg.experiment_id
    K_cal = cfg.opt("K_cal", 1.0)
    for n in cfg.n_list:
        rng = stream(cfg.master_seed, _tag(cfg, "uniform01", n))
        rep = tensorization_check(lambda g, m: g.random(m), K_cal, cfg.epsilon_grid, n, cfg.trials, rng)
        rows.extend(_lo_rows(exp, "uniform01", n, "sum_squares", rep["rows"]))
        summary[f"uniform01/{n}"] = {"C_point": rep["C_point"], "C_upper": rep["C_upper"], "K": K_cal}


_DISPATCH = {
    "gap_simplicity": _run_gap,
    "gap_rect": _run_gap,
    "two_point_real": _run_two_point,
    "two_point_complex": _run_two_point,
    "real_eig_count": _run_real_eig,
    "linear_relation_repulsion": lambda *a: _run_real_eig(*a, linear=True),
    "overlap_beta": _run_overlap,
    "delocalization": _run_deloc,
    "box_lcd": _run_box,
    "lo_1d": _run_lo,
    "lo_2d": _run_lo,
    "lo_4d": _run_lo,
    "tensorization": _run_tensorization,
}

# experiments that do not depend on the entry law run once
_LAW_FREE = frozenset({"box_lcd", "tensorization"})


def run(cfg: ExperimentConfig) -> ExperimentReport:
    """Run a configured experiment and return its report."""
    cfg.validate()
    if cfg.master_seed is None:
        raise ValueError("run needs an explicit master_seed")
    t0 = time.perf_counter()
    rows: list[Row] = []
    fits: dict[str, dict] = {}
    summary: dict[str, Any] = {}
    laws = cfg.laws[:1] if cfg.experiment_id in _LAW_FREE else cfg.laws
    for law_obj in laws:
        _DISPATCH[cfg.experiment_id](cfg, law_obj, law_label(law_obj), rows, fits, summary)
    runtime = time.perf_counter() - t0
    echo = cfg.to_json()
    return ExperimentReport(cfg.experiment_id, rows, fits, summary, runtime, int(cfg.master_seed), echo, cfg.hash(),
                            __version__, CONVENTIONS[cfg.experiment_id])
