import math

import numpy as np
import pytest

from stepselect._rng import stream
from stepselect.expfam import GaussianKnownSigma, Poisson
from stepselect.selector import (
    PenaltyConfig,
    penalty,
    psi,
    select,
    select_among,
    t_statistic,
    upsilon_scores,
)
from stepselect.stepfn import Partition, StepFn, delta_weight, dn_complexity

from conftest import random_params, random_series


def random_candidates(fam, rng, n, count, max_segments=5):
    out = []
    for _ in range(count):
        k = int(rng.integers(1, max_segments + 1))
        cps = tuple(
            sorted(rng.choice(np.arange(2, n + 1), size=k - 1, replace=False))
        )
        vals = tuple(float(v) for v in random_params(fam, rng, k))
        out.append(StepFn(Partition(n, cps), vals, label=f"rand{len(out)}"))
    return out


class TestPsi:
    def test_fixed_points(self):
        assert psi(1.0) == 0.0
        assert psi(0.0) == -1.0
        assert psi(math.inf) == 1.0
        assert psi(3.0) == 0.5

    def test_strictly_increasing(self):
        xs = np.linspace(0, 50, 400)
        vals = psi(xs)
        assert np.all(np.diff(vals) > 0)
        assert np.all((vals >= -1) & (vals <= 1))

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            psi(-0.5)


class TestTStatistic:
    def test_self_comparison_zero(self, family):
        rng = stream(31)
        y = random_series(family, rng, 25)
        f = StepFn.constant(25, float(random_params(family, rng, 1)[0]))
        assert t_statistic(family, y, f, f) == 0.0

    def test_poisson_frozen_example(self):
        fam = Poisson()
        a = StepFn.constant(2, math.log(1))
        b = StepFn.constant(2, math.log(3))
        expected = math.tanh(-0.5) + math.tanh((3 * math.log(3) - 2) / 4)
        assert t_statistic(fam, [0, 3], a, b) == pytest.approx(expected, abs=1e-12)

    def test_antisymmetry_exact(self, family):
        rng = stream(32)
        for _ in range(20):
            n = int(rng.integers(5, 40))
            y = random_series(family, rng, n)
            a, b = random_candidates(family, rng, n, 2)
            fwd = t_statistic(family, y, a, b)
            assert fwd == -t_statistic(family, y, b, a)
            assert abs(fwd) <= n

    def test_tanh_matches_literal_psi(self, family):
        # psi(sqrt(ratio)) composed literally, wherever the ratio is finite.
        rng = stream(33)
        total = 0
        while total < 2500:
            g1, g2 = random_params(family, rng, 2)
            y = family.sample(g1, rng)
            log_ratio = family.log_density_ratio(g1, g2, y)
            if abs(log_ratio) > 500:
                continue
            literal = psi(math.sqrt(math.exp(log_ratio)))
            assert math.tanh(0.25 * log_ratio) == pytest.approx(literal, abs=1e-12)
            total += 1

    def test_length_mismatch(self):
        fam = Poisson()
        with pytest.raises(ValueError):
            t_statistic(fam, [1, 2], StepFn.constant(2, 0.0), StepFn.constant(3, 0.0))


class TestPenalty:
    def test_zero_kappa(self):
        assert penalty(PenaltyConfig(kappa=0.0), 100, 7) == 0.0

    def test_frozen_values(self):
        cfg = PenaltyConfig(kappa=0.08)
        assert penalty(cfg, 500, 1) == pytest.approx(0.08 * (10.11 + math.log(500)), abs=1e-12)
        assert penalty(cfg, 500, 5) == pytest.approx(7.619, abs=1e-3)

    def test_equals_complexity_plus_weight(self):
        cfg = PenaltyConfig(kappa=0.13)
        for n, k in [(10, 1), (100, 7), (500, 30), (497, 497)]:
            expected = cfg.kappa * (dn_complexity(n, k) + delta_weight(n, k))
            assert penalty(cfg, n, k) == pytest.approx(expected, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            PenaltyConfig(kappa=-1.0)
        with pytest.raises(ValueError):
            PenaltyConfig(alpha=0.5)
        with pytest.raises(ValueError):
            penalty(PenaltyConfig(), 10, 11)


class TestUpsilonAndSelect:
    def test_single_candidate_upsilon_zero(self, family):
        rng = stream(34)
        y = random_series(family, rng, 20)
        (cand,) = random_candidates(family, rng, 20, 1)
        res = select(family, y, [cand])
        assert res.upsilon[0] == pytest.approx(0.0, abs=1e-12)
        assert res.chosen == 0 and res.ties == (0,)

    def test_identical_candidates_equal_upsilon(self):
        fam = Poisson()
        y = fam.sample(np.full(30, 1.0), stream(35))
        cand = StepFn.constant(30, 1.0)
        res = select(fam, y, [cand, cand])
        assert res.upsilon[0] == res.upsilon[1]
        assert res.chosen == 0
        assert res.ties == (0, 1)

    def test_two_candidate_hand_expansion(self):
        # Recompute upsilon for two candidates from scalar pieces.
        fam = GaussianKnownSigma(1.0)
        rng = stream(36)
        y = random_series(fam, rng, 15)
        a, b = random_candidates(fam, rng, 15, 2)
        cfg = PenaltyConfig(kappa=0.3)
        res = upsilon_scores(fam, y, [a, b], cfg)
        t_ab = t_statistic(fam, y, a, b)
        pen_a = penalty(cfg, 15, a.segment_count)
        pen_b = penalty(cfg, 15, b.segment_count)
        ups_a = max(0.0 - pen_a, t_ab - pen_b) + pen_a
        ups_b = max(-t_ab - pen_a, 0.0 - pen_b) + pen_b
        assert res.upsilon[0] == pytest.approx(ups_a, abs=1e-12)
        assert res.upsilon[1] == pytest.approx(ups_b, abs=1e-12)
        assert res.t_matrix[0, 1] == t_ab
        assert res.t_matrix[1, 0] == -t_ab

    def test_matrix_invariants(self, family):
        rng = stream(37)
        n = 30
        y = random_series(family, rng, n)
        cands = random_candidates(family, rng, n, 6)
        res = select(family, y, cands)
        tm = res.t_matrix
        assert np.array_equal(tm, -tm.T)
        assert np.all(np.diag(tm) == 0.0)
        assert np.all(np.abs(tm) <= n)
        assert res.chosen in res.ties

    def test_duplicate_winner_tie_break(self, family):
        rng = stream(38)
        n = 25
        y = random_series(family, rng, n)
        cands = random_candidates(family, rng, n, 5)
        res = select(family, y, cands)
        winner = cands[res.chosen]
        res2 = select(family, y, cands + [winner])
        assert res2.chosen == res.chosen
        assert len(cands) in res2.ties
        assert res2.upsilon[res2.chosen] == pytest.approx(
            res2.upsilon[len(cands)], abs=1e-12
        )

    def test_permutation_equivariance(self, family):
        rng = stream(39)
        n = 30
        y = random_series(family, rng, n)
        cands = random_candidates(family, rng, n, 6)
        res = select(family, y, cands)
        perm = list(rng.permutation(len(cands)))
        res_p = select(family, y, [cands[i] for i in perm])
        assert np.allclose(res_p.upsilon, res.upsilon[perm], atol=1e-12)
        if len(res.ties) == 1:
            assert [cands[i] for i in perm][res_p.chosen] == cands[res.chosen]

    def test_adding_candidate_screening_bound(self, family):
        rng = stream(40)
        for _ in range(20):
            n = int(rng.integers(8, 40))
            y = random_series(family, rng, n)
            cands = random_candidates(family, rng, n, int(rng.integers(1, 6)))
            extra = random_candidates(family, rng, n, 1)[0]
            cfg = PenaltyConfig(kappa=float(rng.uniform(0.02, 0.8)))
            before = upsilon_scores(family, y, cands, cfg).upsilon.min()
            after = upsilon_scores(family, y, cands + [extra], cfg).upsilon.min()
            assert after <= before + penalty(cfg, n, extra.segment_count) + 1e-9

    def test_select_among_full_set_matches(self, family):
        rng = stream(41)
        n = 20
        y = random_series(family, rng, n)
        cands = random_candidates(family, rng, n, 5)
        res = select(family, y, cands)
        chosen, ups = select_among(res, range(len(cands)))
        assert chosen == res.chosen
        assert np.allclose(ups, res.upsilon)

    def test_select_among_subset(self, family):
        rng = stream(42)
        n = 20
        y = random_series(family, rng, n)
        cands = random_candidates(family, rng, n, 5)
        res = select(family, y, cands)
        sub = [1, 3]
        chosen, _ = select_among(res, sub)
        direct = select(family, y, [cands[i] for i in sub])
        assert chosen == sub[direct.chosen]

    def test_empty_candidates(self, family):
        with pytest.raises(ValueError):
            select(family, [1.0], [])
