"""Mergeable moment accumulators and Monte-Carlo estimates.

Accumulators are merged in a fixed order with the pairwise update formulas
of Chan et al. / Pebay, so aggregated results do not depend on how work was
split across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np


@dataclass(frozen=True)
class OracleEstimate:
    value: float
    se: float
    n: int

    def z(self, target: float) -> float:
        """Distance from ``target`` in standard errors (inf if se is 0 and they differ)."""
        diff = self.value - target
        if self.se == 0:
            return 0.0 if diff == 0 else np.inf
        return abs(diff) / self.se

    def within(self, target: float, n_se: float) -> bool:
        return self.z(target) <= n_se


class Moments:
    """Running count, mean and central moments M2..M4 of an array of variables."""

    def __init__(self, shape):
        self.n = 0
        self.mean = np.zeros(shape)
        self.M2 = np.zeros(shape)
        self.M3 = np.zeros(shape)
        self.M4 = np.zeros(shape)

    @classmethod
    def from_samples(cls, x: np.ndarray) -> "Moments":
        """Moments of ``x`` along axis 0."""
        x = np.asarray(x, dtype=float)
        m = cls(x.shape[1:])
        m.n = x.shape[0]
        if m.n == 0:
            return m
        m.mean = x.mean(axis=0)
        d = x - m.mean
        d2 = d * d
        m.M2 = d2.sum(axis=0)
        m.M3 = (d2 * d).sum(axis=0)
        m.M4 = (d2 * d2).sum(axis=0)
        return m

    def merge(self, other: "Moments") -> "Moments":
        na, nb = self.n, other.n
        if nb == 0:
            return self
        if na == 0:
            self.n, self.mean, self.M2, self.M3, self.M4 = (
                other.n, other.mean.copy(), other.M2.copy(), other.M3.copy(), other.M4.copy())
            return self
        n = na + nb
        delta = other.mean - self.mean
        d2 = delta * delta
        M4 = (self.M4 + other.M4
              + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / n**3
              + 6 * d2 * (na * na * other.M2 + nb * nb * self.M2) / n**2
              + 4 * delta * (na * other.M3 - nb * self.M3) / n)
        M3 = (self.M3 + other.M3
              + d2 * delta * na * nb * (na - nb) / n**2
              + 3 * delta * (na * other.M2 - nb * self.M2) / n)
        self.M2 = self.M2 + other.M2 + d2 * na * nb / n
        self.M3, self.M4 = M3, M4
        self.mean = self.mean + delta * nb / n
        self.n = n
        return self

    @property
    def var(self) -> np.ndarray:
        """Unbiased sample variance."""
        if self.n < 2:
            return np.zeros_like(self.M2)
        return self.M2 / (self.n - 1)

    @property
    def var_se(self) -> np.ndarray:
        """Large-sample standard error of the sample variance."""
        n = self.n
        if n < 4:
            return np.full_like(self.M2, np.nan)
        s2 = self.var
        m4 = self.M4 / n
        return np.sqrt(np.maximum(m4 - s2 * s2 * (n - 3) / (n - 1), 0.0) / n)

    @property
    def mean_se(self) -> np.ndarray:
        if self.n < 2:
            return np.full_like(self.M2, np.nan)
        return np.sqrt(self.var / self.n)


def covariance_estimate(x: np.ndarray, y: np.ndarray) -> OracleEstimate:
    """Sample covariance of paired samples with the standard error of its mean-of-products form."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    z = (x - x.mean()) * (y - y.mean())
    cov = z.sum() / (n - 1)
    se = z.std(ddof=1) / np.sqrt(n)
    return OracleEstimate(float(cov), float(se), n)


EXACT_FLOAT = 2**53


class IntegerCoMoments:
    """Exact integer power sums of nonnegative count vectors.

    Keeps ``sum x``, ``sum x x'``, ``sum x^2 x'``, ``sum x^2 x'^2`` so means,
    covariances and the standard errors of both are exact up to the final
    float conversion, independent of summation order.
    """

    def __init__(self, nvars: int):
        self.n = 0
        self.s1 = np.zeros(nvars, dtype=np.int64)
        self.s11 = np.zeros((nvars, nvars), dtype=np.int64)
        self.s21 = np.zeros((nvars, nvars), dtype=np.int64)
        self.s22 = np.zeros((nvars, nvars), dtype=np.int64)

    def add(self, x: np.ndarray) -> None:
        x = np.asarray(x, dtype=np.int64)
        top = int(x.max()) if x.size else 0
        if top ** 4 * max(x.shape[0], 1) < EXACT_FLOAT:
            # every partial sum fits in a double's mantissa, so BLAS is exact
            xf = x.astype(np.float64)
            x2f = xf * xf
            products = (xf.T @ xf, x2f.T @ xf, x2f.T @ x2f)
            s11, s21, s22 = (p.astype(np.int64) for p in products)
        else:
            x2 = x * x
            s11, s21, s22 = x.T @ x, x2.T @ x, x2.T @ x2
        self.n += x.shape[0]
        self.s1 += x.sum(axis=0)
        self.s11 += s11
        self.s21 += s21
        self.s22 += s22

    def mean(self) -> tuple[np.ndarray, np.ndarray]:
        """Means and their standard errors."""
        n = self.n
        mean = self.s1 / n
        var = (np.diag(self.s11) - n * mean * mean) / (n - 1)
        return mean, np.sqrt(np.maximum(var, 0.0) / n)

    def covariance(self, a: int, b: int) -> OracleEstimate:
        """Sample covariance of variables ``a`` and ``b`` with its standard error."""
        n = self.n
        sa, sb = Fraction(int(self.s1[a])), Fraction(int(self.s1[b]))
        ma, mb = sa / n, sb / n
        sab = int(self.s11[a, b])
        cov = (sab - n * ma * mb) / (n - 1)
        # sum of squared centred products (x_a - ma)^2 (x_b - mb)^2
        sq = (int(self.s22[a, b])
              - 2 * mb * int(self.s21[a, b]) - 2 * ma * int(self.s21[b, a])
              + mb * mb * int(self.s11[a, a]) + ma * ma * int(self.s11[b, b])
              + 4 * ma * mb * sab
              - 2 * ma * mb * mb * sa - 2 * ma * ma * mb * sb
              + n * ma * ma * mb * mb)
        zbar = (sab - n * ma * mb) / n
        zvar = (sq - n * zbar * zbar) / (n - 1)
        se = float(max(zvar, 0) / n) ** 0.5
        return OracleEstimate(float(cov), se, n)
