"""One-parameter exponential families.

Each family is parametrised so that its density with respect to the
natural base measure reads ``exp(u(g) * T(y) - A(g)) * h(y)`` with
``T(y) = y`` throughout:

===================  ==================  ==========  ===============  =============
family               parameter g         u(g)        A(g)             domain I
===================  ==================  ==========  ===============  =============
GaussianKnownSigma   mean                g / s^2     g^2 / (2 s^2)    all reals
Poisson              log mean            g           exp(g)           all reals
ExponentialRate      rate                -g          -log(g)          (0, inf)
Bernoulli            log odds            g           log(1 + e^g)     all reals
===================  ==================  ==========  ===============  =============

Beyond densities and sampling, families expose closed-form squared
Hellinger distances and O(1) segment costs from prefix sums, which is what
the dynamic-programming candidate generators and the selection statistic
consume.  Maximum-likelihood fits are clamped away from the boundary of
the parameter domain (see ``POISSON_MEAN_FLOOR`` etc.) so that fitted
candidates always have strictly positive densities on the observed data.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator

# MLE clamps: keep fitted parameters strictly inside the domain so density
# ratios of fitted candidates never hit 0/0 or a/0.
POISSON_MEAN_FLOOR = 1e-6
EXPONENTIAL_MEAN_FLOOR = 1e-9

_LOG_2PI = math.log(2.0 * math.pi)

_lgamma = np.frompyfunc(math.lgamma, 1, 1)


def _log_factorial(y: np.ndarray) -> np.ndarray:
    return np.asarray(_lgamma(np.asarray(y, dtype=float) + 1.0), dtype=float)


class ExpFamily(ABC):
    """Common interface of the supported one-parameter families."""

    name: str = ""

    # -- parametrisation ------------------------------------------------

    @abstractmethod
    def u(self, gamma):
        """Natural-direction map u(g), strictly monotone on the domain."""

    @abstractmethod
    def log_partition(self, gamma):
        """Log-normaliser A(g), finite on the interior of the domain."""

    @abstractmethod
    def log_carrier(self, y):
        """log h(y), the parameter-free part of the log density."""

    @abstractmethod
    def _check_param(self, gamma: np.ndarray) -> None:
        ...

    @abstractmethod
    def _check_support(self, y: np.ndarray) -> None:
        ...

    # -- densities ------------------------------------------------------

    def log_density(self, gamma, y):
        """Full log density log r_g(y), carrier included.

        Raises ``ValueError`` if ``gamma`` leaves the parameter domain or
        ``y`` the support.  Broadcasts over arrays.
        """
        g = np.asarray(gamma, dtype=float)
        yy = np.asarray(y, dtype=float)
        self._check_param(g)
        self._check_support(yy)
        out = self.u(g) * yy - self.log_partition(g) + self.log_carrier(yy)
        return float(out) if np.ndim(out) == 0 else out

    def log_density_ratio(self, gamma1, gamma2, y):
        """log r_g2(y) - log r_g1(y); the carrier cancels algebraically."""
        g1 = np.asarray(gamma1, dtype=float)
        g2 = np.asarray(gamma2, dtype=float)
        yy = np.asarray(y, dtype=float)
        self._check_param(g1)
        self._check_param(g2)
        self._check_support(yy)
        out = (self.u(g2) - self.u(g1)) * yy - (
            self.log_partition(g2) - self.log_partition(g1)
        )
        return float(out) if np.ndim(out) == 0 else out

    # -- sampling and fitting --------------------------------------------

    @abstractmethod
    def sample(self, gamma, rng: Generator, size=None):
        """Draw from the distribution with parameter ``gamma``."""

    @abstractmethod
    def mle(self, y) -> float:
        """Clamped maximum-likelihood parameter for a slice of data."""

    @abstractmethod
    def hellinger_sq(self, gamma1, gamma2):
        """Closed-form squared Hellinger distance, in [0, 1]."""

    # -- segment costs ----------------------------------------------------

    def segment_costs(self, y) -> "SegmentCosts":
        """Prefix-sum accelerator for per-segment likelihood costs."""
        yy = np.asarray(y, dtype=float)
        if yy.ndim != 1 or yy.size == 0:
            raise ValueError("segment costs need a nonempty 1-d series")
        self._check_support(yy)
        return SegmentCosts(self, yy)

    @abstractmethod
    def _mle_cost(self, s, s2, ln, n_series):
        """Negative maximised segment log likelihood from (sum, sum of
        squares, length); constant carrier terms dropped.  ``n_series`` is
        the length of the full series: clamp bounds must not depend on the
        segment length, or segment costs lose subadditivity (which the
        pruned dynamic programs rely on)."""

    @abstractmethod
    def _fixed_cost(self, gamma: float, s, s2, ln):
        """Negative segment log likelihood at a fixed parameter, same
        carrier convention as ``_mle_cost``."""

    # -- misc ------------------------------------------------------------

    def to_string(self) -> str:
        return self.name

    def __repr__(self) -> str:  # pragma: no cover - debugging aid
        return f"{type(self).__name__}()"

    @staticmethod
    def _as_slice(y) -> np.ndarray:
        yy = np.asarray(y, dtype=float)
        if yy.size == 0:
            raise ValueError("mle of an empty slice is undefined")
        return yy


@dataclass(frozen=True)
class GaussianKnownSigma(ExpFamily):
    """Gaussian with known standard deviation; parameter is the mean."""

    sigma: float = 1.0
    name = "gaussian"

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ValueError(f"sigma must be positive, got {self.sigma}")

    def u(self, gamma):
        return gamma / self.sigma**2

    def log_partition(self, gamma):
        return gamma**2 / (2.0 * self.sigma**2)

    def log_carrier(self, y):
        return -(y**2) / (2.0 * self.sigma**2) - 0.5 * _LOG_2PI - math.log(self.sigma)

    def _check_param(self, gamma):
        if not np.all(np.isfinite(gamma)):
            raise ValueError("Gaussian mean must be finite")

    def _check_support(self, y):
        if not np.all(np.isfinite(y)):
            raise ValueError("Gaussian observations must be finite")

    def sample(self, gamma, rng, size=None):
        self._check_param(np.asarray(gamma, dtype=float))
        return rng.normal(gamma, self.sigma, size=size)

    def mle(self, y):
        return float(np.mean(self._as_slice(y)))

    def hellinger_sq(self, gamma1, gamma2):
        g1 = np.asarray(gamma1, dtype=float)
        g2 = np.asarray(gamma2, dtype=float)
        self._check_param(g1)
        self._check_param(g2)
        out = -np.expm1(-((g1 - g2) ** 2) / (8.0 * self.sigma**2))
        return float(out) if np.ndim(out) == 0 else out

    # Cost keeps the quadratic data term (residual sum of squares) and
    # drops only the constant log(2*pi*sigma^2) part, so a perfectly fitted
    # point costs exactly 0.
    def _mle_cost(self, s, s2, ln, n_series):
        return (s2 - s * s / ln) / (2.0 * self.sigma**2)

    def _fixed_cost(self, gamma, s, s2, ln):
        return (s2 - 2.0 * gamma * s + ln * gamma**2) / (2.0 * self.sigma**2)

    def to_string(self) -> str:
        return f"gaussian:{self.sigma:.12g}"

    def __repr__(self) -> str:
        return f"GaussianKnownSigma(sigma={self.sigma!r})"


@dataclass(frozen=True)
class Poisson(ExpFamily):
    """Poisson counts; parameter is the log mean."""

    name = "poisson"

    def u(self, gamma):
        return gamma

    def log_partition(self, gamma):
        return np.exp(gamma)

    def log_carrier(self, y):
        return -_log_factorial(y)

    def _check_param(self, gamma):
        if not np.all(np.isfinite(gamma)):
            raise ValueError("Poisson log-mean must be finite")

    def _check_support(self, y):
        yy = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(yy)) or np.any(yy < 0) or np.any(yy != np.floor(yy)):
            raise ValueError("Poisson observations must be nonnegative integers")

    def sample(self, gamma, rng, size=None):
        g = np.asarray(gamma, dtype=float)
        self._check_param(g)
        return rng.poisson(np.exp(g), size=size)

    def mle(self, y):
        mean = float(np.mean(self._as_slice(y)))
        return math.log(max(mean, POISSON_MEAN_FLOOR))

    def hellinger_sq(self, gamma1, gamma2):
        g1 = np.asarray(gamma1, dtype=float)
        g2 = np.asarray(gamma2, dtype=float)
        self._check_param(g1)
        self._check_param(g2)
        # Affinity exp(-(sqrt(l1) - sqrt(l2))^2 / 2) with l = exp(g).
        out = -np.expm1(-0.5 * (np.exp(g1 / 2.0) - np.exp(g2 / 2.0)) ** 2)
        return float(out) if np.ndim(out) == 0 else out

    def _mle_cost(self, s, s2, ln, n_series):
        lam = np.maximum(s / ln, POISSON_MEAN_FLOOR)
        return ln * lam - s * np.log(lam)

    def _fixed_cost(self, gamma, s, s2, ln):
        return ln * math.exp(gamma) - gamma * s


@dataclass(frozen=True)
class ExponentialRate(ExpFamily):
    """Exponential waiting times; parameter is the rate (> 0)."""

    name = "exponential"

    def u(self, gamma):
        return -gamma

    def log_partition(self, gamma):
        return -np.log(gamma)

    def log_carrier(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def _check_param(self, gamma):
        g = np.asarray(gamma, dtype=float)
        if not np.all(np.isfinite(g)) or np.any(g <= 0):
            raise ValueError("exponential rate must be finite and positive")

    def _check_support(self, y):
        yy = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(yy)) or np.any(yy <= 0):
            raise ValueError("exponential observations must be strictly positive")

    def sample(self, gamma, rng, size=None):
        g = np.asarray(gamma, dtype=float)
        self._check_param(g)
        return rng.exponential(1.0 / g, size=size)

    def mle(self, y):
        mean = float(np.mean(self._as_slice(y)))
        return 1.0 / max(mean, EXPONENTIAL_MEAN_FLOOR)

    def hellinger_sq(self, gamma1, gamma2):
        g1 = np.asarray(gamma1, dtype=float)
        g2 = np.asarray(gamma2, dtype=float)
        self._check_param(g1)
        self._check_param(g2)
        out = 1.0 - 2.0 * np.sqrt(g1 * g2) / (g1 + g2)
        return float(out) if np.ndim(out) == 0 else out

    def _mle_cost(self, s, s2, ln, n_series):
        mean = np.maximum(s / ln, EXPONENTIAL_MEAN_FLOOR)
        return s / mean + ln * np.log(mean)

    def _fixed_cost(self, gamma, s, s2, ln):
        return gamma * s - ln * math.log(gamma)


@dataclass(frozen=True)
class Bernoulli(ExpFamily):
    """Bernoulli trials; parameter is the log odds."""

    name = "bernoulli"

    def u(self, gamma):
        return gamma

    def log_partition(self, gamma):
        return np.logaddexp(0.0, gamma)

    def log_carrier(self, y):
        return np.zeros_like(np.asarray(y, dtype=float))

    def _check_param(self, gamma):
        if not np.all(np.isfinite(gamma)):
            raise ValueError("Bernoulli log-odds must be finite")

    def _check_support(self, y):
        yy = np.asarray(y, dtype=float)
        if not np.all((yy == 0) | (yy == 1)):
            raise ValueError("Bernoulli observations must be 0 or 1")

    def sample(self, gamma, rng, size=None):
        g = np.asarray(gamma, dtype=float)
        self._check_param(g)
        p = 1.0 / (1.0 + np.exp(-g))
        return rng.binomial(1, p, size=size)

    def mle(self, y):
        yy = self._as_slice(y)
        n = yy.size
        lo = 1.0 / (2.0 * n)
        p = min(max(float(np.mean(yy)), lo), 1.0 - lo)
        return math.log(p / (1.0 - p))

    def hellinger_sq(self, gamma1, gamma2):
        g1 = np.asarray(gamma1, dtype=float)
        g2 = np.asarray(gamma2, dtype=float)
        self._check_param(g1)
        self._check_param(g2)
        p1 = 1.0 / (1.0 + np.exp(-g1))
        p2 = 1.0 / (1.0 + np.exp(-g2))
        out = 1.0 - (np.sqrt(p1 * p2) + np.sqrt((1.0 - p1) * (1.0 - p2)))
        # Guard the tiny negative round-off at p1 == p2.
        out = np.maximum(out, 0.0)
        return float(out) if np.ndim(out) == 0 else out

    def _mle_cost(self, s, s2, ln, n_series):
        # Clamp at the series length, not the segment length: a common
        # constraint set keeps segment costs subadditive.
        lo = 1.0 / (2.0 * n_series)
        p = np.clip(s / ln, lo, 1.0 - lo)
        return -(s * np.log(p) + (ln - s) * np.log1p(-p))

    def _fixed_cost(self, gamma, s, s2, ln):
        return ln * np.logaddexp(0.0, gamma) - gamma * s


class SegmentCosts:
    """O(1) segment costs for one series, from cumulative sums.

    Indices are 1-based and inclusive on both ends, matching the partition
    convention used throughout the package.  Costs are negative segment
    log likelihoods with constant carrier terms dropped; only differences
    between segmentations are meaningful.
    """

    def __init__(self, fam: ExpFamily, y: np.ndarray):
        self.fam = fam
        self.n = y.size
        self._csum = np.concatenate(([0.0], np.cumsum(y)))
        self._csum2 = np.concatenate(([0.0], np.cumsum(y * y)))

    def _sums(self, i, j):
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        if np.any(i < 1) or np.any(j > self.n) or np.any(i > j):
            raise IndexError(f"segment indices out of range for n={self.n}")
        s = self._csum[j] - self._csum[i - 1]
        s2 = self._csum2[j] - self._csum2[i - 1]
        ln = (j - i + 1).astype(float)
        return s, s2, ln

    def cost(self, i, j):
        """Cost of the segment y[i..j] at its clamped MLE parameter."""
        s, s2, ln = self._sums(i, j)
        out = self.fam._mle_cost(s, s2, ln, self.n)
        return float(out) if np.ndim(out) == 0 else out

    def cost_at(self, i, j, gamma: float):
        """Cost of the segment y[i..j] at a fixed parameter."""
        self.fam._check_param(np.asarray(gamma, dtype=float))
        s, s2, ln = self._sums(i, j)
        out = self.fam._fixed_cost(float(gamma), s, s2, ln)
        return float(out) if np.ndim(out) == 0 else out

    def mle(self, i: int, j: int) -> float:
        """Clamped MLE parameter of the segment y[i..j] from prefix sums."""
        s, _, ln = self._sums(i, j)
        if np.ndim(s) != 0:
            raise ValueError("mle expects scalar indices")
        return self._mle_from_mean(float(s), float(ln))

    def _mle_from_mean(self, s: float, ln: float) -> float:
        fam = self.fam
        mean = s / ln
        if isinstance(fam, GaussianKnownSigma):
            return mean
        if isinstance(fam, Poisson):
            return math.log(max(mean, POISSON_MEAN_FLOOR))
        if isinstance(fam, ExponentialRate):
            return 1.0 / max(mean, EXPONENTIAL_MEAN_FLOOR)
        if isinstance(fam, Bernoulli):
            lo = 1.0 / (2.0 * self.n)
            p = min(max(mean, lo), 1.0 - lo)
            return math.log(p / (1.0 - p))
        raise TypeError(f"unsupported family {fam!r}")

    def cost_matrix(self) -> np.ndarray:
        """Dense (n, n) matrix with entry [a, b] = cost of y[a+1..b+1]
        (0-based ends, inclusive); +inf above the diagonal.

        Memory is O(n^2); intended for desk-scale dynamic programming.
        """
        n = self.n
        ends = np.arange(1, n + 1)
        starts = np.arange(1, n + 1)
        s = self._csum[ends][None, :] - self._csum[starts - 1][:, None]
        s2 = self._csum2[ends][None, :] - self._csum2[starts - 1][:, None]
        ln = (ends[None, :] - starts[:, None] + 1).astype(float)
        valid = ln >= 1
        ln = np.where(valid, ln, 1.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            cm = self.fam._mle_cost(s, s2, ln, self.n)
        return np.where(valid, cm, np.inf)


_FAMILY_PARSERS = {
    "poisson": lambda arg: Poisson(),
    "exponential": lambda arg: ExponentialRate(),
    "bernoulli": lambda arg: Bernoulli(),
    "gaussian": lambda arg: GaussianKnownSigma(sigma=float(arg)),
}


def family_from_string(text: str) -> ExpFamily:
    """Parse a family tag: ``poisson``, ``exponential``, ``bernoulli`` or
    ``gaussian:<sigma>``."""
    parts = text.strip().lower().split(":")
    name, arg = parts[0], (parts[1] if len(parts) > 1 else None)
    if name not in _FAMILY_PARSERS:
        raise ValueError(
            f"unknown family {text!r}; expected one of "
            "poisson, exponential, bernoulli, gaussian:<sigma>"
        )
    if name == "gaussian" and arg is None:
        raise ValueError("gaussian family needs an explicit sigma, e.g. 'gaussian:1'")
    if name != "gaussian" and arg is not None:
        raise ValueError(f"family {name!r} takes no argument")
    return _FAMILY_PARSERS[name](arg)
