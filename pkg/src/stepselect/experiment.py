"""Monte-Carlo experiment and calibration drivers.

``run_experiment`` replays the full pipeline per replication: sample the
truth, optionally plant outliers, run the candidate generators, select,
and score.  Every generator is reported as a method of its own:
single-candidate generators by their candidate, multi-candidate
generators (k-segment DP, binary segmentation) by the selection
restricted to their own candidates.  The headline estimator ("ES") is
then the selection over those per-method choices, mirroring comparative
benchmarks where each competitor contributes exactly one estimator; the
pairwise statistic matrix is computed once and shared by both stages.

``run_calibration`` sweeps the penalty multiplier kappa over a grid: per
replication the candidates and the pairwise statistic matrix are computed
once (neither depends on kappa) and only the penalties are rescaled, so a
30-point grid costs barely more than a single run.

Replication r of an experiment draws its randomness from the streams
``(seed, r, role)`` with roles for sampling, outlier placement and the
generators; calibration prepends the setting index.  Results are
therefore independent of worker count and scheduling.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from stepselect._rng import ROLE_GENERATORS, ROLE_OUTLIERS, ROLE_SAMPLE, stream
from stepselect.evalkit import (
    ContributionTable,
    FreqTable,
    ReplicationRecord,
    RiskReport,
    aggregate,
    oracle_bound_check,
    pseudo_hellinger_risk,
)
from stepselect.segmenters import (
    SegmenterSpec,
    default_ensemble,
    ensemble_labels,
    generate_candidates,
    k_segment_dp,
)
from stepselect.selector import PenaltyConfig, select_among, upsilon_scores
from stepselect.simkit import OutlierSpec, SignalSpec, inject_outliers, sample_series

ES_LABEL = "ES"


@dataclass(frozen=True)
class ExperimentConfig:
    signal: SignalSpec
    segmenters: tuple[SegmenterSpec, ...] = field(
        default_factory=lambda: tuple(default_ensemble())
    )
    kappa: float = 0.08
    replications: int = 100
    seed: int = 0
    outliers: OutlierSpec | None = None
    oracle_xi: float = 5.0
    nhat_tail: int = 2
    workers: int = 1

    def __post_init__(self):
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")
        if not self.segmenters:
            raise ValueError("need at least one segmenter spec")
        if self.workers < 1:
            raise ValueError(f"workers must be >= 1, got {self.workers}")


@dataclass(frozen=True)
class ExperimentResult:
    records: tuple[ReplicationRecord, ...]
    risk: dict[str, RiskReport]
    freq: FreqTable
    contribution: ContributionTable
    oracle_all_ok: bool
    dropped_methods: tuple[str, ...]
    diagnostics: tuple[tuple[int, str, str], ...]  # (replication, label, message)


def replicate(cfg: ExperimentConfig, rep: int) -> tuple[ReplicationRecord, tuple]:
    """Run one replication; returns its record and generator diagnostics."""
    fam = cfg.signal.family
    y = sample_series(cfg.signal, stream(cfg.seed, rep, ROLE_SAMPLE))
    if cfg.outliers is not None:
        y, _ = inject_outliers(y, cfg.outliers, stream(cfg.seed, rep, ROLE_OUTLIERS))

    cset = generate_candidates(fam, y, cfg.segmenters, (cfg.seed, rep, ROLE_GENERATORS))
    pen_cfg = PenaltyConfig(kappa=cfg.kappa)
    scores = upsilon_scores(fam, y, cset.candidates, pen_cfg)

    loss_cache: dict[int, float] = {}

    def loss_of(idx: int) -> float:
        if idx not in loss_cache:
            loss_cache[idx] = pseudo_hellinger_risk(
                fam, cfg.signal, cset.candidates[idx]
            )
        return loss_cache[idx]

    truth_segments = cfg.signal.segment_count
    losses: dict[str, float] = {}
    seg_errors: dict[str, int] = {}
    method_choice: dict[str, int] = {}
    for label, indices in cset.groups.items():
        sub_chosen, _ = select_among(scores, indices)
        method_choice[label] = sub_chosen
        losses[label] = loss_of(sub_chosen)
        seg_errors[label] = (
            cset.candidates[sub_chosen].segment_count - truth_segments
        )

    pool = sorted(set(method_choice.values()))
    es_idx, _ = select_among(scores, pool)
    losses = {ES_LABEL: loss_of(es_idx), **losses}
    seg_errors = {
        ES_LABEL: cset.candidates[es_idx].segment_count - truth_segments,
        **seg_errors,
    }

    ok, margin = oracle_bound_check(
        fam,
        cfg.signal,
        [cset.candidates[i] for i in pool],
        cset.candidates[es_idx],
        pen_cfg,
        cfg.oracle_xi,
    )
    record = ReplicationRecord(
        losses=losses,
        segment_errors=seg_errors,
        selected_label=cset.candidates[es_idx].label,
        generator_labels=tuple(cset.groups),
        oracle_ok=ok,
        oracle_margin=margin,
    )
    return record, cset.diagnostics


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all replications and aggregate the report tables."""
    outputs: list[tuple[ReplicationRecord, tuple]] = []
    if cfg.workers == 1:
        for rep in range(cfg.replications):
            outputs.append(replicate(cfg, rep))
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outputs = list(pool.map(replicate, [cfg] * cfg.replications, range(cfg.replications)))

    records = [out[0] for out in outputs]
    diagnostics = tuple(
        (rep, label, msg)
        for rep, (_, diags) in enumerate(outputs)
        for label, msg in diags
    )

    # A generator that failed in some replication has no estimate there;
    # its method row is dropped entirely (and reported) rather than
    # averaged over an inconsistent subset.
    kept = set(records[0].losses)
    for rec in records:
        kept &= set(rec.losses)
    configured = {ES_LABEL, *ensemble_labels(list(cfg.segmenters))}
    dropped = sorted(configured - kept)
    if dropped:
        records = [
            ReplicationRecord(
                losses={k: rec.losses[k] for k in rec.losses if k in kept},
                segment_errors={
                    k: rec.segment_errors[k] for k in rec.segment_errors if k in kept
                },
                selected_label=rec.selected_label,
                generator_labels=tuple(
                    lab for lab in rec.generator_labels if lab in kept
                ),
                oracle_ok=rec.oracle_ok,
                oracle_margin=rec.oracle_margin,
            )
            for rec in records
        ]

    risk, freq, contribution = aggregate(records, tail=cfg.nhat_tail)
    return ExperimentResult(
        records=tuple(records),
        risk=risk,
        freq=freq,
        contribution=contribution,
        oracle_all_ok=all(rec.oracle_ok for rec in records),
        dropped_methods=tuple(dropped),
        diagnostics=diagnostics,
    )


# ---------------------------------------------------------------------------
# Kappa calibration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationConfig:
    signals: tuple[SignalSpec, ...]
    kappas: tuple[float, ...]
    k_max: int = 30
    replications: int = 100
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if not self.signals:
            raise ValueError("need at least one calibration signal")
        if not self.kappas:
            raise ValueError("need at least one kappa value")
        if any(k < 0 for k in self.kappas):
            raise ValueError("kappa grid must be nonnegative")
        if self.replications < 1:
            raise ValueError(f"replications must be >= 1, got {self.replications}")


@dataclass(frozen=True)
class CalibrationResult:
    kappas: tuple[float, ...]
    # risk[setting name][kappa index] = empirical mean risk
    risk: dict[str, tuple[float, ...]]
    argmin_kappa: dict[str, float]
    recommended_kappa: float
    oracle_all_ok: bool


def _calibration_setting(
    cfg: CalibrationConfig, setting_index: int
) -> tuple[str, tuple[float, ...], bool]:
    signal = cfg.signals[setting_index]
    fam = signal.family
    kappas = np.asarray(cfg.kappas, dtype=float)
    totals = np.zeros(kappas.size)
    oracle_ok = True

    for rep in range(cfg.replications):
        y = sample_series(signal, stream(cfg.seed, setting_index, rep, ROLE_SAMPLE))
        candidates = k_segment_dp(fam, y, cfg.k_max)
        # The pairwise matrix does not depend on kappa; penalties scale
        # linearly in it, so score at kappa=1 and rescale.
        base = upsilon_scores(fam, y, candidates, PenaltyConfig(kappa=1.0))
        loss_cache: dict[int, float] = {}
        for ki, kappa in enumerate(kappas):
            pens = kappa * base.penalties
            ups = (base.t_matrix - pens[None, :]).max(axis=1) + pens
            chosen = int(np.argmin(ups))
            if chosen not in loss_cache:
                loss_cache[chosen] = pseudo_hellinger_risk(
                    fam, signal, candidates[chosen]
                )
            totals[ki] += loss_cache[chosen]
            ok, _ = oracle_bound_check(
                fam, signal, candidates, candidates[chosen], PenaltyConfig(kappa=float(kappa)), xi=5.0
            )
            oracle_ok = oracle_ok and ok
    risks = tuple(float(t) / cfg.replications for t in totals)
    return signal.name or f"setting-{setting_index}", risks, oracle_ok


def run_calibration(cfg: CalibrationConfig) -> CalibrationResult:
    """Sweep kappa over the grid for every calibration setting."""
    indices = range(len(cfg.signals))
    if cfg.workers == 1:
        rows = [_calibration_setting(cfg, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            rows = list(pool.map(_calibration_setting, [cfg] * len(cfg.signals), indices))

    risk = {name: risks for name, risks, _ in rows}
    argmin = {
        name: float(cfg.kappas[int(np.argmin(risks))]) for name, risks, _ in rows
    }
    # Recommend the largest per-setting minimiser: the safest choice
    # against overfitting among the settings' optima.
    recommended = max(argmin.values())
    return CalibrationResult(
        kappas=tuple(float(k) for k in cfg.kappas),
        risk=risk,
        argmin_kappa=argmin,
        recommended_kappa=recommended,
        oracle_all_ok=all(ok for _, _, ok in rows),
    )


def calibration_grid(start: float = 0.01, stop: float = 0.30, step: float = 0.01) -> tuple[float, ...]:
    """Inclusive kappa grid, rounded to the step's precision."""
    count = int(round((stop - start) / step)) + 1
    return tuple(round(start + i * step, 10) for i in range(count))
