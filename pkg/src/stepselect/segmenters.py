"""Candidate generators for the selection procedure.

Five generator kinds populate the candidate set:

- ``KSegDP``: exact segment-neighbourhood dynamic programming, returning
  the optimal partition for every segment count up to ``k_max`` with
  per-segment maximum-likelihood values (likelihood of the observation
  family, evaluated on the raw series).
- ``Pelt``: penalized optimal partitioning with the standard pruning rule
  (the pruning provably never changes the optimum for these costs).
- ``BinSeg`` / ``WbsSsic``: greedy and wild binary segmentation driven by
  the CUSUM statistic; WBS picks the number of changepoints with a
  strengthened Schwarz criterion ``n/2 * log(RSS_k / n) + k * (log n)^a``.
- ``RobustDP``: penalized partitioning under a Huber or Tukey-biweight
  location loss, for stability against outliers.  Per-segment locations
  are found by iteratively reweighted least squares; the O(n^2) dynamic
  program is compiled with numba.

Generators flagged ``use_vst`` run on a variance-stabilised scale
(``2*sqrt(y + 1/4)`` for Poisson, ``log(2y)`` for exponential, identity
for Gaussian) standardised by the first-difference MAD estimate of the
noise level; ``refit_mle`` then replaces segment values by family MLEs on
the original series, so every candidate is expressed in the family's own
parameter.

Candidates can also be exchanged with external tools through a JSON
candidate file; see ``import_candidates`` / ``export_candidates`` and the
schema in the README.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from numba import njit
from numpy.random import Generator

from stepselect._rng import stream
from stepselect.expfam import (
    ExpFamily,
    ExponentialRate,
    GaussianKnownSigma,
    Poisson,
    family_from_string,
)
from stepselect.stepfn import Partition, StepFn

# First-difference MAD normalisation: quartile of the standard normal
# times sqrt(2) for the difference of two independent draws.
_MAD_NORMAL_QUARTILE = 0.6744897
_MAD_SCALE = _MAD_NORMAL_QUARTILE * math.sqrt(2.0)

# 95%-efficiency location constants for the robust losses.
HUBER_DELTA_DEFAULT = 1.345
BIWEIGHT_C_DEFAULT = 4.685

_RSS_FLOOR = 1e-300


class SolverConvergenceError(RuntimeError):
    """An iterative segment fit failed to converge."""


class CandidateFileError(ValueError):
    """A candidate file violates the schema or its value domains."""


# ---------------------------------------------------------------------------
# Generator specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Huber:
    delta: float = HUBER_DELTA_DEFAULT

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError(f"Huber delta must be positive, got {self.delta}")


@dataclass(frozen=True)
class Biweight:
    c: float = BIWEIGHT_C_DEFAULT

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError(f"biweight c must be positive, got {self.c}")


RobustLoss = Union[Huber, Biweight]


@dataclass(frozen=True)
class KSegDP:
    """Exact optimal partitions for every segment count 1..k_max."""

    k_max: int = 20
    use_vst: bool = False
    refit_mle: bool = False

    def label(self) -> str:
        return _tag(f"ksegdp-k{self.k_max}", self.use_vst)


@dataclass(frozen=True)
class Pelt:
    """Penalized optimal partitioning; ``beta=None`` means 2*log(n)."""

    beta: float | None = None
    use_vst: bool = False
    refit_mle: bool = False

    def label(self) -> str:
        base = "pelt" if self.beta is None else f"pelt-b{self.beta:g}"
        return _tag(base, self.use_vst)


@dataclass(frozen=True)
class BinSeg:
    """Greedy CUSUM splits, one candidate per depth 1..k_max."""

    k_max: int = 10
    use_vst: bool = False
    refit_mle: bool = False

    def label(self) -> str:
        return _tag(f"binseg-k{self.k_max}", self.use_vst)


@dataclass(frozen=True)
class WbsSsic:
    """Wild binary segmentation with the strengthened Schwarz criterion."""

    intervals: int = 5000
    ssic_alpha: float = 1.01
    k_max: int = 50
    use_vst: bool = False
    refit_mle: bool = False

    def label(self) -> str:
        return _tag("wbs-ssic", self.use_vst)


@dataclass(frozen=True)
class RobustDP:
    """Penalized partitioning under a robust location loss.

    ``beta=None`` picks a loss-dependent default (see
    ``default_robust_beta``); the quadratic-cost default would
    systematically under-segment the bounded losses.
    """

    loss: RobustLoss = field(default_factory=Biweight)
    beta: float | None = None
    use_vst: bool = False
    refit_mle: bool = False

    def label(self) -> str:
        base = "robust-huber" if isinstance(self.loss, Huber) else "robust-biweight"
        if self.beta is not None:
            base += f"-b{self.beta:g}"
        return _tag(base, self.use_vst)


SegmenterSpec = Union[KSegDP, Pelt, BinSeg, WbsSsic, RobustDP]


def _tag(base: str, use_vst: bool) -> str:
    return f"{base}-t" if use_vst else base


def default_ensemble(k_max: int = 15) -> list[SegmenterSpec]:
    """The standard candidate roster: family-likelihood k-segment DP on
    the raw series plus transformed-scale PELT, WBS and robust fits."""
    return [
        KSegDP(k_max=k_max),
        Pelt(use_vst=True, refit_mle=True),
        WbsSsic(use_vst=True, refit_mle=True),
        RobustDP(Biweight(), use_vst=True, refit_mle=True),
        RobustDP(Huber(), use_vst=True, refit_mle=True),
    ]


# ---------------------------------------------------------------------------
# Transforms and scale estimation
# ---------------------------------------------------------------------------


def vst_transform(fam: ExpFamily, y) -> np.ndarray:
    """Variance-stabilising transform toward unit-scale Gaussian data."""
    yy = np.asarray(y, dtype=float)
    fam._check_support(yy)
    if isinstance(fam, Poisson):
        return 2.0 * np.sqrt(yy + 0.25)
    if isinstance(fam, ExponentialRate):
        return np.log(2.0 * yy)
    if isinstance(fam, GaussianKnownSigma):
        return yy.copy()
    raise ValueError(f"no variance-stabilising transform for family {fam.name!r}")


def mad_sigma(y) -> float:
    """Noise scale from first differences:
    median(|y_{i+1} - y_i|) / (0.6744897 * sqrt(2)).

    Degenerate series (all differences zero) return the machine-epsilon
    floor and emit a warning.
    """
    yy = np.asarray(y, dtype=float)
    if yy.size < 2:
        raise ValueError("scale estimation needs at least two points")
    med = float(np.median(np.abs(np.diff(yy))))
    if med == 0.0:
        warnings.warn("all first differences are zero; scale floored at eps")
        return float(np.finfo(float).eps)
    return med / _MAD_SCALE


# ---------------------------------------------------------------------------
# Exact k-segment dynamic programming
# ---------------------------------------------------------------------------


def k_segment_dp(fam: ExpFamily, y, k_max: int) -> list[StepFn]:
    """Optimal partition into exactly k segments, for every k = 1..k_max.

    Minimises the total per-segment cost (negative maximised log
    likelihood) over all partitions; ties resolve to the earliest segment
    starts.  Values are the clamped per-segment MLEs.
    """
    yy = np.asarray(y, dtype=float)
    n = yy.size
    if not 1 <= k_max <= n:
        raise ValueError(f"k_max must lie in 1..{n}, got {k_max}")
    costs = fam.segment_costs(yy)
    cm = costs.cost_matrix()

    # best[k-1][b] = optimal cost of covering points 0..b with k segments;
    # back[k-1][b] = start index of the last segment in that optimum.
    back = np.zeros((k_max, n), dtype=np.int64)
    best = cm[0].copy()
    fits = [_partition_from_back(back, 1, n)]
    for k in range(2, k_max + 1):
        shifted = np.concatenate(([np.inf], best[:-1]))
        table = shifted[:, None] + cm
        best = table.min(axis=0)
        back[k - 1] = table.argmin(axis=0)
        fits.append(_partition_from_back(back, k, n))

    out = []
    for cps in fits:
        part = Partition(n, cps)
        values = tuple(
            costs.mle(int(s), int(e)) for s, e in zip(part.starts(), part.ends())
        )
        out.append(StepFn(part, values, label="ksegdp"))
    return out


def _partition_from_back(back: np.ndarray, k: int, n: int) -> tuple[int, ...]:
    cps = []
    end = n - 1
    for kk in range(k, 1, -1):
        start = int(back[kk - 1][end])
        cps.append(start + 1)  # 0-based start -> 1-based changepoint
        end = start - 1
    return tuple(reversed(cps))


# ---------------------------------------------------------------------------
# PELT
# ---------------------------------------------------------------------------


def pelt(fam: ExpFamily, y, beta: float) -> StepFn:
    """Minimise total segment cost + beta * (number of segments).

    Standard pruned dynamic program; candidates whose partial cost already
    exceeds the incumbent can never re-enter an optimum because segment
    costs are subadditive, so pruning is lossless.
    """
    yy = np.asarray(y, dtype=float)
    if beta < 0 or not math.isfinite(beta):
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    n = yy.size
    costs = fam.segment_costs(yy)

    f = np.empty(n + 1)
    f[0] = -beta
    prev = np.zeros(n + 1, dtype=np.int64)
    cand = np.array([0], dtype=np.int64)
    for j in range(1, n + 1):
        seg = costs.cost(cand + 1, j)
        totals = f[cand] + seg + beta
        best = int(np.argmin(totals))
        f[j] = totals[best]
        prev[j] = cand[best]
        keep = f[cand] + seg <= f[j]
        cand = np.append(cand[keep], j)

    cps = []
    j = n
    while j > 0:
        t = int(prev[j])
        if t > 0:
            cps.append(t + 1)
        j = t
    part = Partition(n, tuple(reversed(cps)))
    values = tuple(costs.mle(int(s), int(e)) for s, e in zip(part.starts(), part.ends()))
    return StepFn(part, values, label="pelt")


def default_pelt_beta(n: int) -> float:
    """Default penalty per extra segment for the quadratic cost on
    standardised data."""
    return 2.0 * math.log(n)


def default_robust_beta(n: int, loss: RobustLoss) -> float:
    """Default penalty per extra segment for the robust losses.

    Huber grows without bound like the quadratic cost and shares its
    conservative default 2 log n (a lighter one makes it chase large
    outliers).  The biweight caps each point's evidence at c^2/6, so it
    affords 0.8 log n: still above the cap, keeping isolated outliers
    unable to force a split, yet light enough to detect short segments.
    """
    if isinstance(loss, Biweight):
        return 0.8 * math.log(n)
    return default_pelt_beta(n)


# ---------------------------------------------------------------------------
# Binary segmentation and WBS
# ---------------------------------------------------------------------------


def _cusum_best_split(csum: np.ndarray, s: int, e: int, sigma: float) -> tuple[int, float]:
    """Best split of the 0-based closed interval [s, e]: returns (b, stat)
    where the left part is s..b.  Requires e > s."""
    b = np.arange(s, e)
    left_len = (b - s + 1).astype(float)
    right_len = (e - b).astype(float)
    total = float(e - s + 1)
    left_sum = csum[b + 1] - csum[s]
    right_sum = csum[e + 1] - csum[b + 1]
    stats = (
        np.abs(
            np.sqrt(right_len / (total * left_len)) * left_sum
            - np.sqrt(left_len / (total * right_len)) * right_sum
        )
        / sigma
    )
    pick = int(np.argmax(stats))
    return s + pick, float(stats[pick])


def binary_segmentation(y_gaussianized, sigma: float, k_max: int) -> list[StepFn]:
    """Greedy CUSUM segmentation; returns one candidate per depth, i.e.
    step functions with 1, 2, ..., up to k_max segments (fewer when no
    splittable segment remains).  Values are segment means of the input."""
    yy = np.asarray(y_gaussianized, dtype=float)
    n = yy.size
    if n < 2:
        raise ValueError("binary segmentation needs at least two points")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if k_max < 1:
        raise ValueError(f"k_max must be >= 1, got {k_max}")
    csum = np.concatenate(([0.0], np.cumsum(yy)))

    segments = [(0, n - 1)]
    splits: dict[tuple[int, int], tuple[int, float]] = {}

    def ensure_split(seg):
        if seg not in splits and seg[1] > seg[0]:
            splits[seg] = _cusum_best_split(csum, seg[0], seg[1], sigma)

    ensure_split(segments[0])
    out = [_means_stepfn(yy, csum, segments, "binseg")]
    while len(out) < k_max:
        splittable = [seg for seg in segments if seg[1] > seg[0]]
        if not splittable:
            break
        target = max(splittable, key=lambda seg: splits[seg][1])
        b, _ = splits[target]
        s, e = target
        segments.remove(target)
        segments.extend([(s, b), (b + 1, e)])
        segments.sort()
        ensure_split((s, b))
        ensure_split((b + 1, e))
        out.append(_means_stepfn(yy, csum, segments, "binseg"))
    return out


def _means_stepfn(yy, csum, segments, label) -> StepFn:
    segs = sorted(segments)
    n = yy.size
    cps = tuple(s + 1 for s, _ in segs[1:])
    values = tuple(
        float((csum[e + 1] - csum[s]) / (e - s + 1)) for s, e in segs
    )
    return StepFn(Partition(n, cps), values, label=label)


def _draw_intervals(n: int, m: int, rng: Generator) -> np.ndarray:
    """m random intervals [s, e] (0-based, e > s), uniform over all pairs."""
    out = np.empty((m, 2), dtype=np.int64)
    filled = 0
    while filled < m:
        draw = rng.integers(0, n, size=(m - filled, 2))
        lo = draw.min(axis=1)
        hi = draw.max(axis=1)
        ok = hi > lo
        take = int(ok.sum())
        out[filled : filled + take, 0] = lo[ok]
        out[filled : filled + take, 1] = hi[ok]
        filled += take
    return out


def wbs_ssic(
    y_gaussianized,
    sigma: float,
    intervals: int,
    rng: Generator,
    ssic_alpha: float = 1.01,
    k_max: int = 50,
) -> StepFn:
    """Wild binary segmentation with the sSIC stopping rule.

    Candidate changepoints come from recursively splitting at the CUSUM
    maximiser of the best random interval inside the current segment (the
    segment itself always competes, so recursion never starves); they are
    ranked by their CUSUM value and the returned model is the prefix of
    the top ``k_max`` ranks minimising
    ``n/2 * log(RSS_k / n) + k * (log n)^ssic_alpha``.
    """
    yy = np.asarray(y_gaussianized, dtype=float)
    n = yy.size
    if n < 2:
        raise ValueError("wild binary segmentation needs at least two points")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if intervals < 1:
        raise ValueError(f"interval count must be >= 1, got {intervals}")
    csum = np.concatenate(([0.0], np.cumsum(yy)))
    csum2 = np.concatenate(([0.0], np.cumsum(yy * yy)))

    draws = _draw_intervals(n, intervals, rng)
    ivl_s = draws[:, 0]
    ivl_e = draws[:, 1]
    ivl_b = np.empty(intervals, dtype=np.int64)
    ivl_stat = np.empty(intervals)
    for i in range(intervals):
        ivl_b[i], ivl_stat[i] = _cusum_best_split(csum, int(ivl_s[i]), int(ivl_e[i]), sigma)

    found: list[tuple[float, int]] = []  # (stat, changepoint b)
    stack: list[tuple[int, int, np.ndarray]] = [(0, n - 1, np.arange(intervals))]
    while stack:
        s, e, idx = stack.pop()
        if e <= s:
            continue
        b, stat = _cusum_best_split(csum, s, e, sigma)
        if idx.size:
            local = idx[int(np.argmax(ivl_stat[idx]))]
            if ivl_stat[local] > stat:
                b, stat = int(ivl_b[local]), float(ivl_stat[local])
        found.append((stat, b))
        stack.append((s, b, idx[ivl_e[idx] <= b]))
        stack.append((b + 1, e, idx[ivl_s[idx] >= b + 1]))

    ranked = [b for _, b in sorted(found, key=lambda t: (-t[0], t[1]))][:k_max]

    log_pen = math.log(n) ** ssic_alpha
    best_k, best_crit = 0, math.inf
    for k in range(len(ranked) + 1):
        rss = _partition_rss(csum, csum2, n, sorted(ranked[:k]))
        crit = 0.5 * n * math.log(max(rss, _RSS_FLOOR) / n) + k * log_pen
        if crit < best_crit:
            best_k, best_crit = k, crit

    chosen = sorted(ranked[:best_k])
    segs = _segments_from_breaks(n, chosen)
    return _means_stepfn(yy, csum, segs, "wbs-ssic")


def _segments_from_breaks(n: int, breaks: list[int]) -> list[tuple[int, int]]:
    starts = [0] + [b + 1 for b in breaks]
    ends = [b for b in breaks] + [n - 1]
    return list(zip(starts, ends))


def _partition_rss(csum, csum2, n, breaks) -> float:
    rss = 0.0
    for s, e in _segments_from_breaks(n, list(breaks)):
        tot = csum[e + 1] - csum[s]
        tot2 = csum2[e + 1] - csum2[s]
        rss += tot2 - tot * tot / (e - s + 1)
    return max(rss, 0.0)


# ---------------------------------------------------------------------------
# Robust penalized DP (numba kernels)
# ---------------------------------------------------------------------------

_LOSS_HUBER = 0
_LOSS_BIWEIGHT = 1


@njit(cache=True)
def _rho_total(z, c, kind, scale):
    total = 0.0
    if kind == _LOSS_HUBER:
        for v in z:
            r = abs(v - c)
            if r <= scale:
                total += 0.5 * r * r
            else:
                total += scale * (r - 0.5 * scale)
    else:
        cap = scale * scale / 6.0
        for v in z:
            r = abs(v - c)
            if r <= scale:
                t = 1.0 - (r / scale) ** 2
                total += cap * (1.0 - t * t * t)
            else:
                total += cap
    return total


@njit(cache=True)
def _m_location(z, kind, scale, tol, max_iter):
    """IRLS location fit from the median; returns (c, cost, converged).

    Plain reweighting converges only linearly on bimodal segments, so
    every third iterate is Aitken-extrapolated; the jump is kept only if
    it does not increase the loss, preserving monotone descent.
    """
    c = np.median(z)
    if z.size == 1:
        return c, 0.0, True
    prev = 0.0
    plain_steps = 0  # consecutive reweighting steps since the last jump
    for _ in range(max_iter):
        wsum = 0.0
        wz = 0.0
        for v in z:
            a = abs(v - c)
            if kind == _LOSS_HUBER:
                w = 1.0 if a <= scale else scale / a
            else:
                if a <= scale:
                    t = 1.0 - (a / scale) ** 2
                    w = t * t
                else:
                    w = 0.0
            wsum += w
            wz += w * v
        if wsum == 0.0:
            # Every point beyond the cutoff: the loss is flat in c.
            return c, _rho_total(z, c, kind, scale), True
        c_new = wz / wsum
        if abs(c_new - c) < tol:
            return c_new, _rho_total(z, c_new, kind, scale), True
        if plain_steps >= 2:
            # (prev, c, c_new) are consecutive reweighting iterates.
            denom = c_new - 2.0 * c + prev
            if abs(denom) > 1e-300:
                acc = prev - (c - prev) ** 2 / denom
                if _rho_total(z, acc, kind, scale) <= _rho_total(z, c_new, kind, scale):
                    c_new = acc
                    plain_steps = -1
        prev = c
        c = c_new
        plain_steps += 1
    return c, _rho_total(z, c, kind, scale), False


@njit(cache=True)
def _robust_pelt(z, beta, kind, scale, tol, max_iter):
    """Pruned penalized DP under a robust segment loss.

    Returns (prev, n_fail): predecessor links for backtracking and the
    number of segment fits that hit the iteration cap.
    """
    n = z.size
    f = np.empty(n + 1)
    f[0] = -beta
    prev = np.zeros(n + 1, dtype=np.int64)
    cand = np.empty(n + 1, dtype=np.int64)
    cand[0] = 0
    n_cand = 1
    n_fail = 0
    seg_cost = np.empty(n + 1)
    for j in range(1, n + 1):
        best_val = np.inf
        best_t = 0
        for ci in range(n_cand):
            t = cand[ci]
            _, cost, ok = _m_location(z[t:j], kind, scale, tol, max_iter)
            if not ok:
                n_fail += 1
            seg_cost[ci] = cost
            val = f[t] + cost + beta
            if val < best_val:
                best_val = val
                best_t = t
        f[j] = best_val
        prev[j] = best_t
        kept = 0
        for ci in range(n_cand):
            if f[cand[ci]] + seg_cost[ci] <= f[j]:
                cand[kept] = cand[ci]
                kept += 1
        cand[kept] = j
        n_cand = kept + 1
    return prev, n_fail


def robust_penalized_dp(
    y_standardized,
    loss: RobustLoss,
    beta: float,
    tol: float = 1e-8,
    max_iter: int = 200,
) -> StepFn:
    """Penalized optimal partitioning with a robust per-segment location
    loss on standardised data (the loss constants assume unit noise).

    Raises :class:`SolverConvergenceError` if any segment fit fails to
    converge within ``max_iter`` iterations.
    """
    zz = np.asarray(y_standardized, dtype=float)
    if zz.size < 1:
        raise ValueError("robust segmentation needs a nonempty series")
    if beta < 0 or not math.isfinite(beta):
        raise ValueError(f"beta must be finite and >= 0, got {beta}")
    kind, scale = (
        (_LOSS_HUBER, loss.delta) if isinstance(loss, Huber) else (_LOSS_BIWEIGHT, loss.c)
    )
    prev, n_fail = _robust_pelt(zz, float(beta), kind, float(scale), tol, max_iter)
    if n_fail:
        raise SolverConvergenceError(
            f"{n_fail} segment fits did not converge within {max_iter} iterations"
        )
    n = zz.size
    cps = []
    j = n
    while j > 0:
        t = int(prev[j])
        if t > 0:
            cps.append(t + 1)
        j = t
    part = Partition(n, tuple(reversed(cps)))
    values = []
    for s, e in zip(part.starts(), part.ends()):
        c, _, ok = _m_location(zz[s - 1 : e], kind, float(scale), tol, max_iter)
        if not ok:
            raise SolverConvergenceError("final segment fit did not converge")
        values.append(float(c))
    label = "robust-huber" if kind == _LOSS_HUBER else "robust-biweight"
    return StepFn(part, tuple(values), label=label)


# ---------------------------------------------------------------------------
# Ensemble orchestration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CandidateSet:
    """Deduplicated candidates plus provenance bookkeeping.

    ``groups`` maps each generator label to the indices of its candidates
    inside ``candidates`` (indices may be shared when two generators
    produced identical fits).  ``diagnostics`` records generators that
    failed, as (label, error message) pairs.
    """

    candidates: tuple[StepFn, ...]
    groups: dict[str, tuple[int, ...]]
    diagnostics: tuple[tuple[str, str], ...] = ()


def run_segmenter(
    spec: SegmenterSpec, fam: ExpFamily, y, rng: Generator
) -> list[StepFn]:
    """Run one generator spec on a series, honouring its transform and
    refit flags; candidates come back labelled with the spec label."""
    yy = np.asarray(y, dtype=float)
    n = yy.size

    if spec.use_vst:
        yt = vst_transform(fam, yy)
        sigma = mad_sigma(yt)
        work_fam: ExpFamily = GaussianKnownSigma(sigma)
    else:
        yt = yy
        sigma = None
        work_fam = fam

    if isinstance(spec, KSegDP):
        cands = k_segment_dp(work_fam, yt, spec.k_max)
    elif isinstance(spec, Pelt):
        beta = spec.beta if spec.beta is not None else default_pelt_beta(n)
        cands = [pelt(work_fam, yt, beta)]
    elif isinstance(spec, BinSeg):
        cands = binary_segmentation(yt, sigma if sigma is not None else mad_sigma(yt), spec.k_max)
    elif isinstance(spec, WbsSsic):
        cands = [
            wbs_ssic(
                yt,
                sigma if sigma is not None else mad_sigma(yt),
                spec.intervals,
                rng,
                ssic_alpha=spec.ssic_alpha,
                k_max=spec.k_max,
            )
        ]
    elif isinstance(spec, RobustDP):
        scale = sigma if sigma is not None else mad_sigma(yt)
        beta = spec.beta if spec.beta is not None else default_robust_beta(n, spec.loss)
        cands = [robust_penalized_dp(yt / scale, spec.loss, beta)]
    else:
        raise TypeError(f"unknown segmenter spec {spec!r}")

    out = []
    for cand in cands:
        if spec.refit_mle:
            cand = refit_values(fam, yy, cand)
        out.append(StepFn(cand.partition, cand.values, label=spec.label()))
    return out


def refit_values(fam: ExpFamily, y, f: StepFn) -> StepFn:
    """Replace segment values by the family's clamped MLEs on ``y``."""
    costs = fam.segment_costs(y)
    part = f.partition
    values = tuple(costs.mle(int(s), int(e)) for s, e in zip(part.starts(), part.ends()))
    return StepFn(part, values, label=f.label)


def dedupe_candidates(
    candidates: Sequence[StepFn],
) -> tuple[list[StepFn], list[int]]:
    """Drop exact duplicates (same partition and values, first label
    wins); returns the unique list and, per input, the index it maps to."""
    seen: dict[tuple, int] = {}
    unique: list[StepFn] = []
    mapping: list[int] = []
    for cand in candidates:
        key = (cand.partition.cps, cand.values)
        if key in seen:
            mapping.append(seen[key])
        else:
            seen[key] = len(unique)
            mapping.append(len(unique))
            unique.append(cand)
    return unique, mapping


def ensemble_labels(specs: Sequence[SegmenterSpec]) -> list[str]:
    """Per-spec labels, uniquified in order (repeats get a #i suffix)."""
    seen: dict[str, int] = {}
    out = []
    for spec in specs:
        label = spec.label()
        bump = seen.get(label, 0)
        seen[label] = bump + 1
        out.append(f"{label}#{bump + 1}" if bump else label)
    return out


def generate_candidates(
    fam: ExpFamily,
    y,
    specs: Sequence[SegmenterSpec],
    seed: int | tuple[int, ...],
) -> CandidateSet:
    """Run every generator spec and assemble the deduplicated ensemble.

    Each spec receives an independent random stream derived from
    ``(*seed, spec index)``, so the ensemble is reproducible regardless of
    evaluation order.  A failing spec is recorded in the diagnostics and
    skipped; the ensemble never aborts as long as one generator succeeds.
    """
    if not specs:
        raise ValueError("need at least one segmenter spec")
    seed_path = (seed,) if isinstance(seed, int) else tuple(seed)
    raw: list[StepFn] = []
    spans: list[tuple[str, int, int]] = []
    diagnostics: list[tuple[str, str]] = []
    for i, (spec, label) in enumerate(zip(specs, ensemble_labels(specs))):
        try:
            cands = run_segmenter(spec, fam, y, stream(*seed_path, i))
        except Exception as exc:  # recorded, not fatal for the ensemble
            diagnostics.append((label, f"{type(exc).__name__}: {exc}"))
            continue
        cands = [StepFn(c.partition, c.values, label=label) for c in cands]
        spans.append((label, len(raw), len(raw) + len(cands)))
        raw.extend(cands)

    if not raw:
        raise ValueError(
            "no generator produced candidates; diagnostics: "
            + "; ".join(f"{lab}: {msg}" for lab, msg in diagnostics)
        )
    unique, mapping = dedupe_candidates(raw)
    groups = {
        label: tuple(sorted({mapping[i] for i in range(lo, hi)}))
        for label, lo, hi in spans
    }
    return CandidateSet(
        candidates=tuple(unique),
        groups=groups,
        diagnostics=tuple(diagnostics),
    )


# ---------------------------------------------------------------------------
# Spec (de)serialisation for config files
# ---------------------------------------------------------------------------


def spec_to_dict(spec: SegmenterSpec) -> dict:
    common = {"use_vst": spec.use_vst, "refit_mle": spec.refit_mle}
    if isinstance(spec, KSegDP):
        return {"kind": "ksegdp", "k_max": spec.k_max, **common}
    if isinstance(spec, Pelt):
        return {"kind": "pelt", "beta": spec.beta, **common}
    if isinstance(spec, BinSeg):
        return {"kind": "binseg", "k_max": spec.k_max, **common}
    if isinstance(spec, WbsSsic):
        return {
            "kind": "wbs",
            "intervals": spec.intervals,
            "ssic_alpha": spec.ssic_alpha,
            "k_max": spec.k_max,
            **common,
        }
    if isinstance(spec, RobustDP):
        loss = (
            {"loss": "huber", "delta": spec.loss.delta}
            if isinstance(spec.loss, Huber)
            else {"loss": "biweight", "c": spec.loss.c}
        )
        return {"kind": "robust", **loss, "beta": spec.beta, **common}
    raise TypeError(f"unknown segmenter spec {spec!r}")


def spec_from_dict(doc: dict) -> SegmenterSpec:
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ValueError(f"segmenter spec must be an object with a 'kind': {doc!r}")
    d = dict(doc)
    kind = d.pop("kind")
    common = {
        "use_vst": bool(d.pop("use_vst", False)),
        "refit_mle": bool(d.pop("refit_mle", False)),
    }
    try:
        if kind == "ksegdp":
            return KSegDP(k_max=int(d.pop("k_max", 20)), **common, **d)
        if kind == "pelt":
            beta = d.pop("beta", None)
            return Pelt(beta=None if beta is None else float(beta), **common, **d)
        if kind == "binseg":
            return BinSeg(k_max=int(d.pop("k_max", 10)), **common, **d)
        if kind == "wbs":
            return WbsSsic(
                intervals=int(d.pop("intervals", 5000)),
                ssic_alpha=float(d.pop("ssic_alpha", 1.01)),
                k_max=int(d.pop("k_max", 50)),
                **common,
                **d,
            )
        if kind == "robust":
            loss_name = d.pop("loss", "biweight")
            if loss_name == "huber":
                loss: RobustLoss = Huber(delta=float(d.pop("delta", HUBER_DELTA_DEFAULT)))
            elif loss_name == "biweight":
                loss = Biweight(c=float(d.pop("c", BIWEIGHT_C_DEFAULT)))
            else:
                raise ValueError(f"unknown robust loss {loss_name!r}")
            beta = d.pop("beta", None)
            return RobustDP(
                loss=loss, beta=None if beta is None else float(beta), **common, **d
            )
    except TypeError as exc:
        raise ValueError(f"bad segmenter spec {doc!r}: {exc}") from exc
    raise ValueError(f"unknown segmenter kind {kind!r}")


# ---------------------------------------------------------------------------
# Candidate file I/O
# ---------------------------------------------------------------------------

CANDIDATE_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class CandidateFile:
    family: ExpFamily
    n: int
    candidates: tuple[StepFn, ...]


def export_candidates(
    fam: ExpFamily, n: int, candidates: Sequence[StepFn], path: str | Path
) -> None:
    """Write candidates to the JSON interchange format."""
    doc = {
        "schema_version": CANDIDATE_SCHEMA_VERSION,
        "family": fam.to_string(),
        "n": int(n),
        "candidates": [
            {
                "label": c.label,
                "changepoints": list(c.partition.cps),
                "values": list(c.values),
            }
            for c in candidates
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def import_candidates(path: str | Path) -> CandidateFile:
    """Read and validate a candidate file.

    Schema: ``{"family": str, "n": int, "candidates": [{"label": str,
    "changepoints": [int], "values": [float]}]}``.  Violations raise
    :class:`CandidateFileError` naming the offending record.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CandidateFileError(f"{path}: not valid JSON ({exc})") from exc

    if not isinstance(doc, dict):
        raise CandidateFileError(f"{path}: top level must be an object")
    for key in ("family", "n", "candidates"):
        if key not in doc:
            raise CandidateFileError(f"{path}: missing field {key!r}")
    try:
        fam = family_from_string(str(doc["family"]))
    except ValueError as exc:
        raise CandidateFileError(f"{path}: {exc}") from exc
    n = doc["n"]
    if not isinstance(n, int) or n < 1:
        raise CandidateFileError(f"{path}: n must be a positive integer, got {n!r}")
    records = doc["candidates"]
    if not isinstance(records, list) or not records:
        raise CandidateFileError(f"{path}: candidates must be a nonempty list")

    out = []
    for ridx, rec in enumerate(records):
        where = f"{path}: candidate #{ridx}"
        if not isinstance(rec, dict):
            raise CandidateFileError(f"{where}: must be an object")
        for key in ("label", "changepoints", "values"):
            if key not in rec:
                raise CandidateFileError(f"{where}: missing field {key!r}")
        label = rec["label"]
        if not isinstance(label, str) or not label:
            raise CandidateFileError(f"{where}: label must be a nonempty string")
        try:
            part = Partition(n, tuple(int(c) for c in rec["changepoints"]))
            values = tuple(float(v) for v in rec["values"])
            cand = StepFn(part, values, label=label)
            fam._check_param(np.asarray(values, dtype=float))
        except (TypeError, ValueError) as exc:
            raise CandidateFileError(f"{where} ({label!r}): {exc}") from exc
        out.append(cand)
    return CandidateFile(family=fam, n=n, candidates=tuple(out))
