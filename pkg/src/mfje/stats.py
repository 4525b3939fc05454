"""LLN/CLT/decay-rate harness for scalar path functionals."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
from scipy import stats as sps


@dataclass
class LlnRow:
    n: int
    l2_error: float
    ci_low: float
    ci_high: float
    samples: int


def lln_check(samples_by_n: Dict[int, np.ndarray], target: float) -> List[LlnRow]:
    """Per-n mean squared deviation of cohort averages from the target.

    The CI is a jackknife 95% interval for the mean squared deviation.
    """
    if len(samples_by_n) < 1:
        raise ValueError("need samples for at least one n")
    rows = []
    for n in sorted(samples_by_n):
        vals = np.asarray(samples_by_n[n], dtype=float)
        sq = (vals - target) ** 2
        l2 = float(sq.mean())
        if sq.size > 1:
            # leave-one-out means of the squared deviations
            loo = (sq.sum() - sq) / (sq.size - 1)
            se = float(np.sqrt((sq.size - 1) / sq.size *
                               np.sum((loo - loo.mean()) ** 2)))
        else:
            se = 0.0
        rows.append(LlnRow(int(n), l2, l2 - 1.96 * se, l2 + 1.96 * se,
                           int(sq.size)))
    return rows


@dataclass
class CltReport:
    n_samples: int
    mean: float
    variance: float
    skewness: float
    excess_kurtosis: float
    ks_statistic: float
    degenerate: bool
    flags: Dict[str, bool] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return not self.degenerate and all(self.flags.values())


def clt_check(standardized_samples, skew_tol: float = 0.15,
              kurt_tol: float = 0.3, ks_tol: Optional[float] = None,
              mean_tol: Optional[float] = None,
              var_tol: Optional[float] = None) -> CltReport:
    """Normality diagnostics for standardized sums.

    Defaults: |skewness| < 0.15, |excess kurtosis| < 0.3, KS < 1.63/sqrt(N)
    (roughly the 1% level); mean and variance tolerances scale with the
    sampling error at N draws.
    """
    x = np.asarray(standardized_samples, dtype=float)
    if x.size < 200:
        raise ValueError("need at least 200 samples")
    N = x.size
    ks_tol = 1.63 / np.sqrt(N) if ks_tol is None else ks_tol
    mean_tol = 4.0 / np.sqrt(N) if mean_tol is None else mean_tol
    var_tol = 6.0 * np.sqrt(2.0 / N) if var_tol is None else var_tol

    mean = float(x.mean())
    var = float(x.var(ddof=1))
    if var < 1e-15:
        return CltReport(N, mean, var, 0.0, 0.0, 1.0, degenerate=True)
    skew = float(sps.skew(x))
    kurt = float(sps.kurtosis(x))
    ks = float(sps.kstest(x, "norm").statistic)
    flags = {
        "mean": abs(mean) <= mean_tol,
        "variance": abs(var - 1.0) <= var_tol,
        "skewness": abs(skew) <= skew_tol,
        "excess_kurtosis": abs(kurt) <= kurt_tol,
        "ks": ks <= ks_tol,
    }
    return CltReport(N, mean, var, skew, kurt, ks, degenerate=False,
                     flags=flags)


def rate_fit(xs, ys):
    """Log-log least-squares fit; returns (slope, intercept, r_squared)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 3:
        raise ValueError("need at least 3 points")
    if np.any(ys <= 0) or np.any(xs <= 0):
        raise ValueError("log-log fit needs positive values")
    res = sps.linregress(np.log(xs), np.log(ys))
    return float(res.slope), float(res.intercept), float(res.rvalue ** 2)
