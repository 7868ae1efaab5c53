"""Partitions of the index grid ``1..n`` and piecewise-constant candidates.

A partition is stored by its changepoints: the 1-based index at which each
new segment starts (so a changepoint ``t`` means indices ``t-1`` and ``t``
belong to different segments).  Step functions attach one parameter value
per segment, right-continuous at the changepoints, plus a provenance label
naming the generator that produced them.

The module also provides the two maps that drive the selection penalty:
``dn_complexity`` charges a partition for its dimension, and
``delta_weight`` charges it for how many partitions share its segment
count (a log binomial plus the segment count, whose exponential weights
sum to less than 1/(e-1) over all partitions of the grid).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Exact integer binomials stay cheap up to here; beyond, use log-gamma.
_EXACT_BINOM_MAX_N = 60


@dataclass(frozen=True)
class Partition:
    """Ordered partition of ``1..n`` into contiguous segments."""

    n: int
    cps: tuple[int, ...] = ()

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"series length must be >= 1, got {self.n}")
        cps = tuple(int(c) for c in self.cps)
        object.__setattr__(self, "cps", cps)
        if any(c < 2 or c > self.n for c in cps):
            raise ValueError(f"changepoints must lie in 2..{self.n}, got {cps}")
        if any(a >= b for a, b in zip(cps, cps[1:])):
            raise ValueError(f"changepoints must be strictly increasing, got {cps}")

    @property
    def segment_count(self) -> int:
        return len(self.cps) + 1

    def starts(self) -> np.ndarray:
        """1-based first index of each segment."""
        return np.concatenate(([1], np.asarray(self.cps, dtype=np.int64)))

    def ends(self) -> np.ndarray:
        """1-based last index of each segment."""
        return np.concatenate((np.asarray(self.cps, dtype=np.int64) - 1, [self.n]))

    def segment_lengths(self) -> np.ndarray:
        return self.ends() - self.starts() + 1

    def refine(self, other: "Partition") -> "Partition":
        """Common refinement: the union of both changepoint sets."""
        if other.n != self.n:
            raise ValueError(f"cannot refine partitions of lengths {self.n} and {other.n}")
        merged = sorted(set(self.cps) | set(other.cps))
        return Partition(self.n, tuple(merged))

    def segment_index_of(self, i: int) -> int:
        """0-based segment number containing the 1-based index ``i``."""
        if not 1 <= i <= self.n:
            raise IndexError(f"index {i} out of range 1..{self.n}")
        return int(np.searchsorted(np.asarray(self.cps, dtype=np.int64), i, side="right"))


@dataclass(frozen=True)
class StepFn:
    """A candidate estimator: a partition plus one value per segment."""

    partition: Partition
    values: tuple[float, ...]
    label: str = ""

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if len(vals) != self.partition.segment_count:
            raise ValueError(
                f"{len(vals)} values for {self.partition.segment_count} segments"
            )
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("segment values must be finite")

    @property
    def n(self) -> int:
        return self.partition.n

    @property
    def segment_count(self) -> int:
        return self.partition.segment_count

    def eval_at(self, i: int) -> float:
        """Value at the 1-based index ``i`` (right-continuous steps)."""
        return self.values[self.partition.segment_index_of(i)]

    def values_by_index(self) -> np.ndarray:
        """Length-n vector of per-index values."""
        return np.repeat(np.asarray(self.values), self.partition.segment_lengths())

    @staticmethod
    def constant(n: int, value: float, label: str = "") -> "StepFn":
        return StepFn(Partition(n), (value,), label)


def log_binomial(n: int, k: int) -> float:
    """log of C(n, k); exact-integer route for small n, log-gamma otherwise."""
    if k < 0 or k > n:
        raise ValueError(f"binomial C({n},{k}) undefined")
    if n <= _EXACT_BINOM_MAX_N:
        return math.log(math.comb(n, k))
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _check_segment_count(n: int, k: int) -> None:
    if not 1 <= k <= n:
        raise ValueError(f"segment count {k} out of range 1..{n}")


def delta_weight(n: int, k: int) -> float:
    """Partition weight log C(n-1, k-1) + k for a k-segment partition of
    ``1..n``; summing exp(-weight) over all partitions gives
    sum_{k=1..n} e^(-k) < 1/(e-1)."""
    _check_segment_count(n, k)
    return log_binomial(n - 1, k - 1) + k


def dn_complexity(n: int, k: int) -> float:
    """Dimension charge k * (9.11 + max(log(n/k), 0))."""
    _check_segment_count(n, k)
    return k * (9.11 + max(math.log(n / k), 0.0))
