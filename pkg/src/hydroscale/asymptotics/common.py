from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from ..core import InvalidInput

# share of blown-up replicas beyond which the grid is declared at fault
MAX_EXCLUDED = 0.01


class ExperimentFailure(RuntimeError):
    """Too many replicas blew up; the discretization is at fault."""


def mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.shape[0] < 2:
        raise InvalidInput("need at least 2 replicas for a standard error")
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(x.shape[0]))


@dataclass
class ErrorStatistic:
    """Mean-square path distance over replicas at one noise level."""

    eps: float
    replicas: int
    sup_mean: float
    sup_se: float
    energy_mean: float
    energy_se: float
    D: float
    D_se: float
    excluded: int = 0
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_samples(cls, eps, sup_sq, energy, excluded=0, **extra):
        sup_sq = np.asarray(sup_sq, dtype=float)
        energy = np.asarray(energy, dtype=float)
        sm, ss = mean_se(sup_sq)
        em, es = mean_se(energy)
        dm, ds = mean_se(sup_sq + energy)
        return cls(float(eps), int(sup_sq.shape[0]), sm, ss, em, es, dm, ds, int(excluded), dict(extra))

    def row(self):
        out = {
            "eps": self.eps,
            "replicas": self.replicas,
            "excluded": self.excluded,
            "sup_mean": self.sup_mean,
            "sup_se": self.sup_se,
            "energy_mean": self.energy_mean,
            "energy_se": self.energy_se,
            "D": self.D,
            "D_se": self.D_se,
        }
        out.update(self.extra)
        return out


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float

    def to_dict(self):
        return {k: float(v) for k, v in vars(self).items()}


def fit_loglog(x, y, level=0.95):
    """Least-squares slope of log y against log x with a t-based interval."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] < 2:
        raise InvalidInput("need at least 2 points for a slope")
    if np.any(y <= 0) or np.any(x <= 0):
        return SlopeFit(np.nan, np.nan, np.nan, np.nan, np.nan)
    r = stats.linregress(np.log(x), np.log(y))
    if x.shape[0] > 2:
        half = stats.t.ppf(0.5 + level / 2, x.shape[0] - 2) * r.stderr
    else:
        half = 0.0
    return SlopeFit(float(r.slope), float(r.intercept), float(r.stderr), float(r.slope - half), float(r.slope + half))


def check_exclusions(excluded, total):
    if excluded > MAX_EXCLUDED * total:
        raise ExperimentFailure(f"{excluded} of {total} replicas blew up (limit {MAX_EXCLUDED:.0%})")
