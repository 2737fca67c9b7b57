import math

import numpy as np
import pytest

from psbayes.estimands import (
    CovariateDistribution,
    EstimandError,
    QuantileSummary,
    derived_cell_draws,
    marginalize,
    numerator_bounds,
    risk_ratio_summary,
    strata_proportions_identified,
)
from psbayes.model import CellCounts, PrincipalStratum, softmax_strata

I, D, B, H = (
    PrincipalStratum.IMMUNE,
    PrincipalStratum.DOOMED,
    PrincipalStratum.BENEFITER,
    PrincipalStratum.HARMED,
)


def counts_from_rates(n_control, n_active, event_rate, outcome_split):
    """Synthetic complete-case counts with exact per-arm event rates."""
    n = np.zeros((2, 2, 2), dtype=np.int64)
    for z, total in ((0, n_control), (1, n_active)):
        events = int(round(total * event_rate[z]))
        free = total - events
        e1 = int(round(events * outcome_split[z][1]))
        f1 = int(round(free * outcome_split[z][0]))
        n[z, 1, 1], n[z, 1, 0] = e1, events - e1
        n[z, 0, 1], n[z, 0, 0] = f1, free - f1
    return CellCounts(n=n)


class TestIdentifiedProportions:
    def test_example_trial_pooled_values(self, example_counts):
        props = strata_proportions_identified(example_counts)
        # pooled: 70 events / 865 available active, 48 / 418 control
        assert props.pi_doomed == pytest.approx(70 / 865, abs=1e-12)
        assert props.pi_immune == pytest.approx(370 / 418, abs=1e-12)
        assert props.pi_benefiter == pytest.approx(1 - 370 / 418 - 70 / 865, abs=1e-12)
        assert not props.monotonicity_violated

    def test_no_events_anywhere(self):
        n = np.zeros((2, 2, 2), dtype=np.int64)
        n[0, 0, 0] = 40
        n[1, 0, 0] = 80
        props = strata_proportions_identified(CellCounts(n=n))
        assert (props.pi_doomed, props.pi_immune, props.pi_benefiter) == (0.0, 1.0, 0.0)

    def test_violation_flag(self):
        # control arm event-free more often than active arm
        counts = counts_from_rates(200, 400, event_rate={0: 0.05, 1: 0.30},
                                   outcome_split={0: (0.2, 0.4), 1: (0.2, 0.4)})
        props = strata_proportions_identified(counts)
        assert props.pi_benefiter < 0
        assert props.monotonicity_violated

    @pytest.mark.parametrize("z,arm", [(0, "control"), (1, "active")])
    def test_empty_arm_named_in_error(self, z, arm):
        n = np.zeros((2, 2, 2), dtype=np.int64)
        n[1 - z, 0, 0] = 10
        with pytest.raises(EstimandError, match=arm):
            strata_proportions_identified(CellCounts(n=n))


def transcribed_numerator(q1, w_immune, w_benefit, p_b):
    """Independent transcription: invert the two-component mixture directly."""
    return (q1 - w_benefit * p_b) / w_immune


class TestNumeratorBounds:
    def test_matches_independent_transcription(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            counts = CellCounts(n=np.asarray(rng.integers(1, 400, (2, 2, 2)), dtype=np.int64))
            props = strata_proportions_identified(counts)
            if props.pi_immune <= 0 or props.monotonicity_violated:
                continue
            res = numerator_bounds(counts)
            q1 = counts.n[1, 0, 1] / counts.n[1, 0, :].sum()
            w_i = props.pi_immune / (props.pi_immune + props.pi_benefiter)
            w_b = 1.0 - w_i
            lo = min(max(transcribed_numerator(q1, w_i, w_b, 1.0), 0.0), 1.0)
            hi = min(max(transcribed_numerator(q1, w_i, w_b, 0.0), 0.0), 1.0)
            assert res.numerator_low == pytest.approx(lo, abs=1e-12)
            assert res.numerator_high == pytest.approx(hi, abs=1e-12)
            if res.denominator > 0:
                assert res.rr_low == pytest.approx(lo / res.denominator, abs=1e-12)
                assert res.rr_high == pytest.approx(hi / res.denominator, abs=1e-12)

    def test_zero_benefiter_collapses_to_point(self):
        # equal event rates in both arms make the benefiter remainder exactly 0
        counts = counts_from_rates(400, 800, event_rate={0: 0.1, 1: 0.1},
                                   outcome_split={0: (0.2, 0.35), 1: (0.18, 0.35)})
        res = numerator_bounds(counts)
        assert res.proportions.pi_benefiter == pytest.approx(0.0, abs=1e-12)
        q1 = counts.n[1, 0, 1] / counts.n[1, 0, :].sum()
        assert res.numerator_low == pytest.approx(res.numerator_high, abs=1e-12)
        assert res.numerator_low == pytest.approx(q1, abs=1e-12)

    def test_sensitivity_curve_affine_decreasing(self, example_counts):
        res = numerator_bounds(example_counts)
        assert res.p_benefiter_grid.shape == (101,)
        diffs = np.diff(res.numerator_curve)
        assert np.all(diffs <= 1e-15)
        # affine where unclipped: second differences vanish
        inner = res.numerator_curve[(res.numerator_curve > 0) & (res.numerator_curve < 1)]
        if inner.size > 2:
            np.testing.assert_allclose(np.diff(inner, 2), 0.0, atol=1e-12)

    def test_bounds_clipped_to_unit_interval(self):
        counts = counts_from_rates(100, 100, event_rate={0: 0.5, 1: 0.1},
                                   outcome_split={0: (0.9, 0.9), 1: (0.95, 0.9)})
        res = numerator_bounds(counts)
        assert 0.0 <= res.numerator_low <= res.numerator_high <= 1.0

    def test_zero_denominator_sentinel(self):
        counts = counts_from_rates(200, 300, event_rate={0: 0.2, 1: 0.1},
                                   outcome_split={0: (0.0, 0.3), 1: (0.2, 0.3)})
        res = numerator_bounds(counts)
        assert res.denominator == 0.0
        assert res.rr_low == 0.0 and math.isinf(res.rr_high)
        assert any("risk-ratio bounds" in w for w in res.warnings)

    def test_restricted_benefiter_range(self, example_counts):
        full = numerator_bounds(example_counts)
        tight = numerator_bounds(example_counts, p_b_range=(0.2, 0.4))
        assert tight.numerator_low >= full.numerator_low
        assert tight.numerator_high <= full.numerator_high

    def test_violated_data_sets_flag_and_warns(self):
        counts = counts_from_rates(200, 400, event_rate={0: 0.05, 1: 0.30},
                                   outcome_split={0: (0.2, 0.4), 1: (0.2, 0.4)})
        res = numerator_bounds(counts)
        assert res.proportions.monotonicity_violated
        assert any("monotonicity" in w for w in res.warnings)


class TestCovariateDistribution:
    def test_weights_must_sum_to_one(self):
        with pytest.raises(EstimandError):
            CovariateDistribution({"a": 0.5, "b": 0.5 + 1e-9})

    def test_from_counts_available_vs_randomized(self):
        n = np.zeros((2, 2, 2), dtype=np.int64)
        n[0, 0, 0] = 30
        n[1, 0, 0] = 50
        a = CellCounts(n=n, n_missing=[10, 10])
        b = CellCounts(n=n * 2, n_missing=[0, 0])
        counts = {"x": a, "y": b}
        avail = CovariateDistribution.from_counts(counts, "available")
        rand = CovariateDistribution.from_counts(counts, "randomized")
        assert avail.weights["x"] == pytest.approx(80 / 240)
        assert rand.weights["x"] == pytest.approx(100 / 260)
        with pytest.raises(EstimandError):
            CovariateDistribution.from_counts(counts, "bogus")


class TestMarginalize:
    def test_single_cell_is_identity(self):
        rng = np.random.default_rng(1)
        draws = rng.normal(0, 1.5, (200, 11))
        marg = marginalize({"only": draws}, CovariateDistribution({"only": 1.0}))
        pi, risk = derived_cell_draws(draws)
        np.testing.assert_allclose(marg.pi, pi, rtol=1e-12)
        np.testing.assert_allclose(marg.risk, risk, rtol=1e-12)

    def test_equal_cells_average_risks(self):
        rng = np.random.default_rng(2)
        base = rng.normal(0, 1, (150, 11))
        other = base.copy()
        other[:, 3:] = rng.normal(0, 1, (150, 8))  # same alphas, different risks
        marg = marginalize({"a": base, "b": other}, CovariateDistribution({"a": 0.5, "b": 0.5}))
        _, risk_a = derived_cell_draws(base)
        _, risk_b = derived_cell_draws(other)
        np.testing.assert_allclose(marg.risk, 0.5 * (risk_a + risk_b), rtol=1e-10)

    def test_four_cell_standardization_oracle(self):
        # weights from the bundled trial's available-case totals
        weights = {"c1": 248 / 1283, "c2": 362 / 1283, "c3": 219 / 1283, "c4": 454 / 1283}
        rng = np.random.default_rng(3)
        draws = {c: rng.normal(0, 1, (100, 11)) for c in weights}
        marg = marginalize(draws, CovariateDistribution(weights))
        # direct transcription of the standardization formulas, one draw at a time
        for m in (0, 17, 99):
            for g in range(4):
                pi_sum = 0.0
                num = np.zeros(2)
                for c, w in weights.items():
                    vec = draws[c][m]
                    pi = softmax_strata(vec[0], vec[1], vec[2])[g]
                    pi_sum += w * pi
                    for z in (0, 1):
                        risk = 1.0 / (1.0 + math.exp(-(vec[3 + g] + z * vec[7 + g])))
                        num[z] += w * pi * risk
                assert marg.pi[m, g] == pytest.approx(pi_sum, abs=1e-12)
                np.testing.assert_allclose(marg.risk[m, g], num / pi_sum, atol=1e-12)

    def test_marginal_pi_stays_on_simplex(self):
        rng = np.random.default_rng(4)
        weights = {"a": 0.3, "b": 0.7}
        draws = {c: rng.normal(0, 2, (300, 11)) for c in weights}
        marg = marginalize(draws, CovariateDistribution(weights))
        np.testing.assert_allclose(marg.pi.sum(axis=1), 1.0, atol=1e-12)

    def test_relabeling_invariance(self):
        rng = np.random.default_rng(5)
        d1 = rng.normal(size=(50, 11))
        d2 = rng.normal(size=(50, 11))
        m1 = marginalize({"a": d1, "b": d2}, CovariateDistribution({"a": 0.4, "b": 0.6}))
        m2 = marginalize({"b": d2, "a": d1}, CovariateDistribution({"b": 0.6, "a": 0.4}))
        np.testing.assert_allclose(m1.pi, m2.pi, rtol=1e-12)
        np.testing.assert_allclose(m1.risk, m2.risk, rtol=1e-12)

    def test_mismatches_rejected(self):
        rng = np.random.default_rng(6)
        with pytest.raises(EstimandError, match="draws"):
            marginalize(
                {"a": rng.normal(size=(50, 11)), "b": rng.normal(size=(60, 11))},
                CovariateDistribution({"a": 0.5, "b": 0.5}),
            )
        with pytest.raises(EstimandError, match="cells"):
            marginalize({"a": rng.normal(size=(50, 11))}, CovariateDistribution({"z": 1.0}))


class TestRiskRatioSummary:
    def test_identically_distributed_arms(self):
        rng = np.random.default_rng(7)
        draws = np.zeros((4000, 11))
        draws[:, 0:3] = rng.normal(0, 1, (4000, 3))
        draws[:, 3:7] = rng.normal(-1, 0.5, (4000, 4))
        draws[:, 7:11] = rng.normal(0, 0.7, (4000, 4))
        # swap-symmetric construction: delta has mean zero, so per-draw RRs
        # scatter symmetrically around 1
        marg = marginalize({"c": draws}, CovariateDistribution({"c": 1.0}))
        summary = risk_ratio_summary(marg)
        assert summary.risk_ratio.median == pytest.approx(1.0, abs=0.05)
        assert summary.prob_rr_below_1 == pytest.approx(0.5, abs=0.03)

    def test_rr_computed_per_draw_not_ratio_of_summaries(self):
        # construct draws where the ratio of medians differs from the median ratio
        draws = np.zeros((3, 11))
        draws[:, 3:7] = np.array([[-2.0], [0.0], [2.0]]) @ np.ones((1, 4))
        draws[:, 7:11] = np.array([[3.0], [0.0], [-1.0]]) @ np.ones((1, 4))
        marg = marginalize({"c": draws}, CovariateDistribution({"c": 1.0}))
        rr = marg.risk_ratio()
        expected = np.sort(rr)[1]
        ratio_of_medians = np.median(marg.risk[:, 0, 1]) / np.median(marg.risk[:, 0, 0])
        assert abs(expected - ratio_of_medians) > 0.1  # the two notions genuinely differ here
        summary = risk_ratio_summary(marg)
        assert summary.risk_ratio.median == pytest.approx(expected, rel=1e-12)

    def test_split_probabilities_sum_to_one(self):
        rng = np.random.default_rng(8)
        draws = rng.normal(0, 1, (999, 11))
        marg = marginalize({"c": draws}, CovariateDistribution({"c": 1.0}))
        summary = risk_ratio_summary(marg)
        rr = marg.risk_ratio()
        below = int(np.count_nonzero(rr < 1))
        assert summary.prob_rr_below_1 * 999 == pytest.approx(below, abs=1e-9)

    def test_metadata_passthrough(self):
        rng = np.random.default_rng(9)
        marg = marginalize({"c": rng.normal(size=(100, 11))}, CovariateDistribution({"c": 1.0}))
        s = risk_ratio_summary(marg, monotonicity_mode="weak", horizon="t12")
        assert s.monotonicity_mode == "weak"
        assert s.horizon == "t12"
        assert s.n_draws == 100
        d = s.to_dict()
        assert d["strata"]["immune"]["ci95"][0] <= d["strata"]["immune"]["median"]


class TestHardMonotonicityPosterior:
    def test_harmed_share_pinned_in_every_draw(self):
        from conftest import simulate_cell_counts
        from psbayes.model import PriorConfig, cell_mixture, CellParams
        from psbayes.sampler import SamplerConfig, run_chains

        counts = simulate_cell_counts(
            (0.8, 0.1, 0.1, 0.0),
            ((0.25, 0.20), (0.35, 0.30), (0.30, 0.25), (0.30, 0.30)),
            400,
            seed=19,
        )
        fit = run_chains(counts, PriorConfig(), SamplerConfig(n_chains=2, n_warmup=200, n_sampling=200, seed=23))
        draws = fit.stacked()
        pi, _ = derived_cell_draws(draws)
        assert pi[:, H.value].max() < 1e-10
        # hence the no-event control row is effectively pure immune
        worst = min(
            cell_mixture(0, 0, CellParams.from_vector(draws[i])).weights[0]
            for i in range(0, draws.shape[0], 25)
        )
        assert worst > 1.0 - 1e-9


class TestQuantileSummary:
    def test_type7_quantiles(self):
        x = np.arange(1, 101, dtype=float)
        q = QuantileSummary.from_draws(x)
        assert q.median == pytest.approx(np.quantile(x, 0.5))
        assert q.lo95 == pytest.approx(np.quantile(x, 0.025))
        assert q.hi50 == pytest.approx(np.quantile(x, 0.75))

    def test_ordering_enforced(self):
        with pytest.raises(EstimandError):
            QuantileSummary(median=1.0, lo50=2.0, hi50=3.0, lo95=0.0, hi95=4.0)
