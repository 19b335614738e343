"""Confidence intervals used by the Monte Carlo estimators."""
from dataclasses import dataclass

import numpy as np
from scipy import stats

Z95 = 1.959963984540054


@dataclass(frozen=True)
class MomentEstimate:
    mean: float
    half_width_95: float
    samples: int

    @property
    def lo(self):
        return self.mean - self.half_width_95

    @property
    def hi(self):
        return self.mean + self.half_width_95

    @property
    def stderr(self):
        return self.half_width_95 / Z95

    def consistent_with(self, value, slack=0.0):
        return abs(self.mean - value) <= self.half_width_95 + slack


def moment_from_sums(total, total_sq, count):
    """Normal-approximation 95% interval from running sums."""
    count = int(count)
    mean = total / count
    if count > 1:
        var = max(total_sq / count - mean * mean, 0.0) * count / (count - 1)
        half = Z95 * np.sqrt(var / count)
    else:
        half = float("inf")
    return MomentEstimate(float(mean), float(half), count)


def moment_of(values):
    v = np.asarray(values, dtype=float)
    return moment_from_sums(float(v.sum()), float(np.dot(v, v)), v.size)


def agree(a, b):
    """Two estimates agree when their difference is inside the combined 95% interval."""
    return abs(a.mean - b.mean) <= np.hypot(a.half_width_95, b.half_width_95)


def clopper_pearson(errors, trials, level=0.95):
    errors, trials = int(errors), int(trials)
    a = 1.0 - level
    lo = 0.0 if errors == 0 else float(stats.beta.ppf(a / 2, errors, trials - errors + 1))
    hi = 1.0 if errors == trials else float(stats.beta.ppf(1 - a / 2, errors + 1, trials - errors))
    return lo, hi


@dataclass(frozen=True)
class ErrorRateEstimate:
    """Binomial tally with an exact (Clopper-Pearson) 95% interval."""

    errors: int
    trials: int

    @property
    def p_hat(self):
        return self.errors / self.trials

    @property
    def ci95(self):
        return clopper_pearson(self.errors, self.trials)

    def overlaps(self, other):
        lo1, hi1 = self.ci95
        lo2, hi2 = other.ci95
        return lo1 <= hi2 and lo2 <= hi1
