"""Binomial confidence intervals and log-log scaling fits."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

__all__ = ["clopper_pearson", "ScalingFit", "fit_scaling", "ci_width_ok"]


def clopper_pearson(k: int, n: int, conf: float = 0.99) -> tuple[float, float]:
    """Exact two-sided binomial interval for ``k`` successes in ``n`` trials."""
    if n <= 0:
        raise ValueError("trial count must be positive")
    if not 0 <= k <= n:
        raise ValueError("successes out of range")
    a = 1.0 - conf
    lo = 0.0 if k == 0 else float(stats.beta.ppf(a / 2, k, n - k + 1))
    hi = 1.0 if k == n else float(stats.beta.ppf(1 - a / 2, k + 1, n - k))
    return lo, hi


def ci_width_ok(p_hat: float, lo: float, hi: float, max_rel_width: float = 0.3) -> bool:
    """Whether the interval is narrow enough, relative to ``p_hat``, to enter a slope fit."""
    return p_hat > 0 and (hi - lo) < max_rel_width * p_hat


@dataclass
class ScalingFit:
    slope: float
    stderr: float
    log_const: float
    used: np.ndarray
    points: int

    @property
    def const(self) -> float:
        return math.exp(self.log_const)

    def to_json(self) -> dict:
        return {
            "slope": self.slope,
            "stderr": self.stderr,
            "const": self.const if math.isfinite(self.log_const) else None,
            "points": self.points,
            "used": [bool(u) for u in self.used],
        }


def fit_scaling(eps, k_hits, trials, conf: float = 0.99, max_rel_width: float = 0.3) -> ScalingFit:
    """OLS of ``log p_hat`` on ``log eps`` over rows whose CI width is below
    ``max_rel_width * p_hat``.

    ``trials`` may be a scalar or per-row. The standard error is NaN with
    fewer than three usable rows.
    """
    eps = np.asarray(eps, dtype=float)
    k = np.asarray(k_hits, dtype=int)
    t = np.broadcast_to(np.asarray(trials, dtype=int), k.shape)
    used = np.zeros(k.size, dtype=bool)
    for i in range(k.size):
        p = k[i] / t[i]
        lo, hi = clopper_pearson(int(k[i]), int(t[i]), conf)
        used[i] = ci_width_ok(p, lo, hi, max_rel_width)
    if used.sum() < 2:
        return ScalingFit(math.nan, math.nan, math.nan, used, int(used.sum()))
    x = np.log(eps[used])
    y = np.log(k[used] / t[used])
    res = stats.linregress(x, y)
    se = float(res.stderr) if used.sum() > 2 else math.nan
    return ScalingFit(float(res.slope), se, float(res.intercept), used, int(used.sum()))
