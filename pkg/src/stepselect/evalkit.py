"""Loss computation and Monte-Carlo report aggregation.

The loss of an estimate against a piecewise-constant truth is the summed
squared Hellinger distance between the per-index distributions,

    loss = sum_i h^2( R_truth(i), R_estimate(i) ),

evaluated in closed form segment by segment.  Replication records carry
that loss and the segment-count error per method; ``aggregate`` folds a
multiset of records into the three report tables (empirical risk with a
two-sigma uncertainty, segment-error frequencies, and how often each
generator contributed the selected estimator).  All sums use exact
rounding (``math.fsum``), so aggregation is bit-identical under any
record ordering or partial merge.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from stepselect.expfam import ExpFamily
from stepselect.selector import PenaltyConfig, penalty
from stepselect.simkit import SignalSpec
from stepselect.stepfn import StepFn

# Risk-bound constants used by the wiring check.
ORACLE_C1 = 91.4
ORACLE_C2 = 42.7
ORACLE_C3 = 12666.9
ORACLE_TAIL = 1.471


def pseudo_hellinger_risk(fam: ExpFamily, truth: SignalSpec | StepFn, estimate: StepFn) -> float:
    """Summed squared Hellinger distance between truth and estimate."""
    t = truth.truth() if isinstance(truth, SignalSpec) else truth
    if t.n != estimate.n:
        raise ValueError(f"length mismatch: truth {t.n}, estimate {estimate.n}")
    # Walk the union of both partitions; each block is constant on both sides.
    cuts = sorted({1, t.n + 1, *t.partition.cps, *estimate.partition.cps})
    starts = np.asarray(cuts[:-1], dtype=np.int64)
    lengths = np.diff(np.asarray(cuts, dtype=np.int64)).astype(float)
    tv = np.asarray([t.eval_at(int(s)) for s in starts])
    ev = np.asarray([estimate.eval_at(int(s)) for s in starts])
    h2 = np.asarray(fam.hellinger_sq(tv, ev), dtype=float)
    return float(np.dot(lengths, h2))


@dataclass(frozen=True)
class RiskReport:
    """Empirical risk of one method over the replications."""

    risk: float
    uncertainty: float  # 2 * sigma_hat / sqrt(n_r)
    replications: int
    low_sample: bool = False  # single replication: uncertainty pinned to 0


@dataclass(frozen=True)
class FreqTable:
    """Per-method frequencies of the segment-count error, binned with
    saturated tails (default: <=-2, -1, 0, 1, >=2)."""

    tail: int
    rows: dict[str, tuple[float, ...]]

    @property
    def labels(self) -> tuple[str, ...]:
        return bin_labels(self.tail)


@dataclass(frozen=True)
class ContributionTable:
    """Frequency with which each generator produced the selected estimator."""

    rows: dict[str, float]


@dataclass(frozen=True)
class ReplicationRecord:
    """Per-replication outcome: loss and segment-count error per method,
    plus which generator the selection came from."""

    losses: dict[str, float]
    segment_errors: dict[str, int]
    selected_label: str
    generator_labels: tuple[str, ...]
    oracle_ok: bool = True
    oracle_margin: float = math.inf


def bin_labels(tail: int) -> tuple[str, ...]:
    if tail < 1:
        raise ValueError(f"tail must be >= 1, got {tail}")
    inner = [str(v) for v in range(-tail + 1, tail)]
    return (f"<={-tail}", *inner, f">={tail}")


def aggregate(
    records: Sequence[ReplicationRecord], tail: int = 2
) -> tuple[dict[str, RiskReport], FreqTable, ContributionTable]:
    """Fold replication records into the three report tables.

    Records must share method and generator label sets; anything else is
    an error rather than a silent partial table.
    """
    if not records:
        raise ValueError("need at least one replication record")
    methods = list(records[0].losses)
    generators = records[0].generator_labels
    for rec in records:
        if list(rec.losses) != methods or list(rec.segment_errors) != methods:
            raise ValueError("replication records disagree on method labels")
        if rec.generator_labels != generators:
            raise ValueError("replication records disagree on generator labels")

    n_r = len(records)
    reports: dict[str, RiskReport] = {}
    freq_rows: dict[str, tuple[float, ...]] = {}
    labels = bin_labels(tail)
    for method in methods:
        losses = [rec.losses[method] for rec in records]
        mean = math.fsum(losses) / n_r
        if n_r >= 2:
            var = math.fsum((x - mean) ** 2 for x in losses) / (n_r - 1)
            unc = 2.0 * math.sqrt(var) / math.sqrt(n_r)
            low = False
        else:
            unc, low = 0.0, True
        reports[method] = RiskReport(mean, unc, n_r, low)

        counts = [0] * len(labels)
        for rec in records:
            err = rec.segment_errors[method]
            counts[min(max(err, -tail), tail) + tail] += 1
        freq_rows[method] = tuple(c / n_r for c in counts)

    contrib = {
        label: sum(1 for rec in records if rec.selected_label == label) / n_r
        for label in generators
    }
    return reports, FreqTable(tail, freq_rows), ContributionTable(contrib)


def oracle_bound_check(
    fam: ExpFamily,
    truth: SignalSpec | StepFn,
    candidates: Sequence[StepFn],
    chosen: StepFn,
    cfg: PenaltyConfig,
    xi: float,
) -> tuple[bool, float]:
    """Wiring check of the selection risk bound.

    Verifies  loss(chosen) <= min_c [ c1 * loss(c) + c2 * pen(c) ]
    + c3 * (1.471 + xi)  with c1 = 91.4, c2 = 42.7, c3 = 12666.9.  The
    constants are deliberately loose; this asserts the plumbing, not
    sharpness.  Returns (satisfied, slack margin).
    """
    if not candidates:
        raise ValueError("need at least one candidate")
    n = chosen.n
    lhs = pseudo_hellinger_risk(fam, truth, chosen)
    rhs_min = min(
        ORACLE_C1 * pseudo_hellinger_risk(fam, truth, cand)
        + ORACLE_C2 * penalty(cfg, n, cand.segment_count)
        for cand in candidates
    )
    rhs = rhs_min + ORACLE_C3 * (ORACLE_TAIL + xi)
    return lhs <= rhs, rhs - lhs


# ---------------------------------------------------------------------------
# CSV emission
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return f"{x:.12g}"


def write_risk_csv(path: str | Path, reports: dict[str, RiskReport]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", "risk", "uncertainty", "replications"])
        for method, rep in reports.items():
            writer.writerow([method, _fmt(rep.risk), _fmt(rep.uncertainty), rep.replications])


def write_freq_csv(path: str | Path, table: FreqTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["method", *table.labels])
        for method, freqs in table.rows.items():
            writer.writerow([method, *(_fmt(f) for f in freqs)])


def write_contribution_csv(path: str | Path, table: ContributionTable) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["generator", "contribution"])
        for label, freq in table.rows.items():
            writer.writerow([label, _fmt(freq)])
