"""Pearson chi-square on a 2x2 table and a two-sided paired t-test."""

from typing import NamedTuple

import numpy as np
from scipy import special

from .errors import DegenerateTestError, UndefinedTestError


class TestResult(NamedTuple):
    statistic: float
    p_value: float


class ContingencyTable(NamedTuple):
    """Rows are controller modes, columns (success, failure)."""

    counts: np.ndarray
    rows: tuple = ("feedback", "baseline")

    @classmethod
    def from_counts(cls, a, b, c, d, rows=("feedback", "baseline")):
        counts = np.array([[a, b], [c, d]], dtype=np.int64)
        if np.any(counts < 0):
            raise ValueError("counts must be non-negative")
        return cls(counts, tuple(rows))

    @property
    def totals(self):
        return self.counts.sum(axis=1)

    @property
    def rates(self):
        t = self.totals
        return np.where(t > 0, self.counts[:, 0] / np.maximum(t, 1), np.nan)


def chi_square_2x2(table, correction=False):
    """Pearson chi-square, one degree of freedom.

    ``correction=True`` applies the Yates continuity correction.
    """
    obs = np.asarray(getattr(table, "counts", table), float)
    if obs.shape != (2, 2) or np.any(obs < 0):
        raise ValueError("need a 2x2 table of non-negative counts")
    n = obs.sum()
    rows = obs.sum(axis=1)
    cols = obs.sum(axis=0)
    if n == 0 or np.any(rows == 0) or np.any(cols == 0):
        raise UndefinedTestError("chi-square undefined: a marginal total is zero")
    expected = np.outer(rows, cols) / n
    dev = np.abs(obs - expected)
    if correction:
        dev = np.maximum(dev - 0.5, 0.0)
    stat = float(np.sum(dev * dev / expected))
    return TestResult(stat, float(special.gammaincc(0.5, stat / 2.0)))


def paired_t_test(a, b):
    """Two-sided paired t-test on a - b; p from the regularized incomplete beta."""
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError("paired samples must be 1-d and equally long")
    n = len(a)
    if n < 2:
        raise DegenerateTestError("need at least two pairs")
    d = a - b
    sd = np.std(d, ddof=1)
    if not sd > 0:
        raise DegenerateTestError("differences have zero variance")
    t = float(np.mean(d) / (sd / np.sqrt(n)))
    nu = n - 1
    p = float(special.betainc(nu / 2.0, 0.5, nu / (nu + t * t)))
    return TestResult(t, p)
