"""Pairwise candidate selection.

Candidates are compared through a bounded statistic: for candidates ``a``
and ``b`` on the same data,

    t(a, b) = sum_i psi( sqrt( r_{b_i}(y_i) / r_{a_i}(y_i) ) ),

where ``psi(x) = (x - 1) / (x + 1)`` maps the square-root density ratio
into [-1, 1].  Using the identity ``psi(sqrt(x)) = tanh(log(x) / 4)`` the
sum is evaluated entirely in log space, which keeps extreme ratios finite
and makes antisymmetry ``t(a, b) = -t(b, a)`` exact in floating point.

Each candidate pays a penalty proportional to its partition's dimension
and weight charges; a candidate's score is the best penalty-adjusted
comparison against it plus its own penalty:

    upsilon(a) = max_b [ t(a, b) - pen(b) ] + pen(a),

and the candidate minimising upsilon is selected (lowest index on ties).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from stepselect.expfam import ExpFamily
from stepselect.stepfn import StepFn, log_binomial

# Absolute tolerance below which two upsilon values count as tied.
TIE_TOL = 1e-9


def psi(x) -> float:
    """Bounded ratio score (x - 1) / (x + 1) on [0, +inf], with psi(+inf) = 1."""
    xx = np.asarray(x, dtype=float)
    if np.any(np.isnan(xx)) or np.any(xx < 0):
        raise ValueError("psi is defined on [0, +inf] only")
    with np.errstate(invalid="ignore"):
        out = np.where(np.isinf(xx), 1.0, (xx - 1.0) / (xx + 1.0))
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class PenaltyConfig:
    """Penalty tuning: pen(k segments) = kappa * (k*(10.11 + log(n/k)) +
    log C(n-1, k-1)).

    ``kappa`` absorbs the universal constant of the underlying theory; the
    default 0.08 comes from the simulation calibration (see the
    ``calibrate`` CLI command to redo it).  ``alpha`` records the partition
    refinement constant, which is 1 for partitions of a line and enters the
    calibrated kappa rather than the formula.
    """

    kappa: float = 0.08
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.kappa >= 0 and math.isfinite(self.kappa)):
            raise ValueError(f"kappa must be finite and >= 0, got {self.kappa}")
        if self.alpha < 1:
            raise ValueError(f"alpha must be >= 1, got {self.alpha}")


def penalty(cfg: PenaltyConfig, n: int, k: int) -> float:
    """Penalty charged to a k-segment candidate on n points; equals
    kappa * (dn_complexity + delta_weight) since 10.11*k = 9.11*k + k."""
    if not 1 <= k <= n:
        raise ValueError(f"segment count {k} out of range 1..{n}")
    return cfg.kappa * (k * (10.11 + math.log(n / k)) + log_binomial(n - 1, k - 1))


@dataclass(frozen=True)
class SelectionResult:
    """Selection outcome plus full diagnostics.

    ``t_matrix[a, b]`` is the pairwise statistic for the ordered pair; the
    matrix is exactly antisymmetric with zero diagonal.  ``ties`` lists the
    candidate indices whose upsilon is within ``TIE_TOL`` of the minimum;
    ``chosen`` is the smallest of them.
    """

    chosen: int
    upsilon: np.ndarray
    t_matrix: np.ndarray
    penalties: np.ndarray
    ties: tuple[int, ...]


def t_statistic(fam: ExpFamily, y, a: StepFn, b: StepFn) -> float:
    """Pairwise statistic t(a, b) = sum_i tanh(log-density-ratio_i / 4)."""
    yy = np.asarray(y, dtype=float)
    if not (a.n == b.n == yy.size):
        raise ValueError(f"length mismatch: y has {yy.size}, candidates {a.n}, {b.n}")
    la = _loglik_profile(fam, yy, a)
    lb = _loglik_profile(fam, yy, b)
    return float(np.sum(np.tanh(0.25 * (lb - la))))


def _loglik_profile(fam: ExpFamily, y: np.ndarray, f: StepFn) -> np.ndarray:
    """Per-index log density of the data under a candidate, carrier dropped
    (it cancels in every pairwise difference)."""
    vals = f.values_by_index()
    fam._check_param(vals)
    return fam.u(vals) * y - fam.log_partition(vals)


def upsilon_scores(
    fam: ExpFamily,
    y,
    candidates: Sequence[StepFn],
    cfg: PenaltyConfig = PenaltyConfig(),
) -> SelectionResult:
    """Score every candidate against every other.

    Evaluates the pairwise matrix on the upper triangle only (the lower
    one is its exact negation), the per-candidate penalties, and the
    upsilon scores.  O(len(candidates)^2 * n).
    """
    yy = np.asarray(y, dtype=float)
    fam._check_support(yy)
    if len(candidates) == 0:
        raise ValueError("need at least one candidate")
    n = yy.size
    for f in candidates:
        if f.n != n:
            raise ValueError(f"candidate {f.label!r} has length {f.n}, data has {n}")

    m = len(candidates)
    profiles = np.empty((m, n))
    for idx, f in enumerate(candidates):
        profiles[idx] = _loglik_profile(fam, yy, f)

    tm = np.zeros((m, m))
    for a in range(m - 1):
        rows = np.tanh(0.25 * (profiles[a + 1 :] - profiles[a])).sum(axis=1)
        tm[a, a + 1 :] = rows
        tm[a + 1 :, a] = -rows

    pens = np.array([penalty(cfg, n, f.segment_count) for f in candidates])
    ups = (tm - pens[None, :]).max(axis=1) + pens

    ties = _tied_indices(ups, range(m))
    return SelectionResult(
        chosen=ties[0], upsilon=ups, t_matrix=tm, penalties=pens, ties=ties
    )


def select(
    fam: ExpFamily,
    y,
    candidates: Sequence[StepFn],
    cfg: PenaltyConfig = PenaltyConfig(),
) -> SelectionResult:
    """Pick the candidate with minimal upsilon (lowest index on ties)."""
    return upsilon_scores(fam, y, candidates, cfg)


def select_among(result: SelectionResult, indices: Sequence[int]) -> tuple[int, np.ndarray]:
    """Re-run the selection restricted to a subset of candidates.

    Rescores from the already-computed pairwise matrix (the statistic of a
    pair does not depend on which other candidates are present), so this
    is O(len(indices)^2).  Returns the chosen index in the original
    numbering and the restricted upsilon values.
    """
    idx = np.asarray(sorted(indices), dtype=np.int64)
    if idx.size == 0:
        raise ValueError("need at least one candidate index")
    sub_t = result.t_matrix[np.ix_(idx, idx)]
    sub_pen = result.penalties[idx]
    ups = (sub_t - sub_pen[None, :]).max(axis=1) + sub_pen
    ties = _tied_indices(ups, idx)
    return ties[0], ups


def _tied_indices(ups: np.ndarray, labels) -> tuple[int, ...]:
    best = ups.min()
    return tuple(int(lab) for lab, u in zip(labels, ups) if u - best <= TIE_TOL)
