import numpy as np
import pytest
from scipy import stats

from psbayes.data_io import aggregate
from psbayes.estimands import numerator_bounds
from psbayes.model import PriorConfig
from psbayes.simulate import (
    EXAMPLE_TRIAL_T12,
    ArmSummary,
    CellTruth,
    GroundTruth,
    complete_counts_from_summary,
    counts_from_params,
    example_trial_records,
    example_trial_truth,
    gen_dataset,
    single_cell_truth,
)

RISKS = ((0.25, 0.20), (0.35, 0.30), (0.30, 0.25), (0.30, 0.30))


class TestGroundTruthValidation:
    def test_simplex_enforced(self):
        with pytest.raises(ValueError):
            CellTruth(strata_probs=(0.5, 0.5, 0.1, 0.0), risks=RISKS)

    def test_risks_must_be_interior(self):
        bad = ((0.0, 0.2), (0.3, 0.3), (0.3, 0.3), (0.3, 0.3))
        with pytest.raises(ValueError):
            CellTruth(strata_probs=(0.7, 0.1, 0.1, 0.1), risks=bad)

    def test_weights_and_labels_must_match(self):
        cell = CellTruth(strata_probs=(0.7, 0.1, 0.1, 0.1), risks=RISKS)
        with pytest.raises(ValueError):
            GroundTruth(cells={"a": cell}, cell_weights={"b": 1.0})

    def test_allocation_probability(self):
        truth = single_cell_truth((0.7, 0.1, 0.1, 0.1), RISKS, treat_ratio=2.0)
        assert truth.p_active == pytest.approx(2 / 3)


class TestGenDataset:
    def test_all_immune_never_events(self):
        truth = single_cell_truth((1.0, 0.0, 0.0, 0.0), RISKS)
        trial = gen_dataset(truth, 500, seed=0)
        assert not any(r.s for r in trial.records)
        assert trial.latent["s0"].sum() == 0 and trial.latent["s1"].sum() == 0

    def test_deterministic_given_seed(self):
        truth = example_trial_truth()
        a = gen_dataset(truth, 400, seed=9)
        b = gen_dataset(truth, 400, seed=9)
        assert a.records == b.records
        for key in a.latent:
            np.testing.assert_array_equal(a.latent[key], b.latent[key])
        c = gen_dataset(truth, 400, seed=10)
        assert a.records != c.records

    def test_consistency_by_construction(self):
        truth = example_trial_truth()
        trial = gen_dataset(truth, 2000, seed=3)
        lat = trial.latent
        np.testing.assert_array_equal(lat["s"], np.where(lat["z"] == 1, lat["s1"], lat["s0"]))
        np.testing.assert_array_equal(lat["y"], np.where(lat["z"] == 1, lat["y1"], lat["y0"]))

    def test_missingness_masks_pair_jointly(self):
        truth = single_cell_truth((0.8, 0.1, 0.1, 0.0), RISKS, missingness=(0.5, 0.5))
        trial = gen_dataset(truth, 3000, seed=5)
        for rec, miss in zip(trial.records, trial.latent["m"]):
            if miss:
                assert rec.s is None and rec.y is None
            else:
                assert rec.s is not None and rec.y is not None
        assert 0.45 < trial.latent["m"].mean() < 0.55

    def test_large_sample_identification(self):
        # the plug-in pipeline recovers the identified truths at large n
        truth = single_cell_truth((0.85, 0.08, 0.07, 0.0), RISKS, treat_ratio=2.0)
        trial = gen_dataset(truth, 100_000, seed=12)
        counts = aggregate(trial.records)["cell_1"]
        p_event_active = counts.n_events(1) / counts.n_available(1)
        p_eventfree_control = 1 - counts.n_events(0) / counts.n_available(0)
        assert p_event_active == pytest.approx(0.08, abs=0.01)
        assert p_eventfree_control == pytest.approx(0.85, abs=0.01)
        bounds = numerator_bounds(counts)
        assert bounds.numerator_low - 1e-9 <= 0.20 <= bounds.numerator_high + 1e-9
        assert bounds.denominator == pytest.approx(0.25, abs=0.01)

    def test_stratum_frequencies_match_multinomial(self):
        probs = (0.6, 0.2, 0.15, 0.05)
        truth = single_cell_truth(probs, RISKS)
        n = 10_000
        for seed in range(20):
            trial = gen_dataset(truth, n, seed=seed)
            observed = np.bincount(trial.latent["stratum"], minlength=4)
            p = stats.chisquare(observed, f_exp=np.array(probs) * n).pvalue
            assert p > 0.001, f"seed {seed}: goodness-of-fit p={p}"

    def test_allocation_ratio_respected(self):
        truth = single_cell_truth((0.8, 0.1, 0.1, 0.0), RISKS, treat_ratio=2.0)
        trial = gen_dataset(truth, 30_000, seed=7)
        assert trial.latent["z"].mean() == pytest.approx(2 / 3, abs=0.01)

    def test_input_validation(self):
        truth = example_trial_truth()
        with pytest.raises(ValueError):
            gen_dataset(truth, 0, seed=1)


class TestCountsFromParams:
    def test_shapes_and_determinism(self):
        prior = PriorConfig()
        vec = prior.mean_vector()
        a = counts_from_params(vec, 500, 2.0, np.random.default_rng(4))
        b = counts_from_params(vec, 500, 2.0, np.random.default_rng(4))
        np.testing.assert_array_equal(a.n, b.n)
        assert a.n.sum() == 500

    def test_pinned_harmed_stratum_absent(self):
        vec = np.zeros(11)
        vec[2] = -50.0
        counts = counts_from_params(vec, 20_000, 2.0, np.random.default_rng(8))
        # harmed would be the only way to see events on active but not control
        # beyond the doomed share; with alpha pinned the active event rate
        # cannot exceed the control one systematically
        p1 = counts.n[1, 1, :].sum() / counts.n[1].sum()
        p0 = counts.n[0, 1, :].sum() / counts.n[0].sum()
        assert p1 < p0 + 0.02


class TestExampleTrial:
    def test_completion_reproduces_every_marginal(self):
        completed = complete_counts_from_summary()
        for cell, arms in EXAMPLE_TRIAL_T12.items():
            counts = completed[cell]
            for z, arm in arms.items():
                assert counts.n_available(z) == arm.n_available
                assert counts.n_events(z) == arm.n_events
                assert counts.n_outcomes(z) == arm.n_outcomes
                assert int(counts.n_randomized[z]) == arm.n_randomized

    def test_records_roundtrip_to_same_counts(self):
        records = example_trial_records()
        counts = aggregate(records)
        completed = complete_counts_from_summary()
        assert set(counts) == set(completed)
        for cell in counts:
            np.testing.assert_array_equal(counts[cell].n, completed[cell].n)
            np.testing.assert_array_equal(counts[cell].n_missing, completed[cell].n_missing)

    def test_event_risk_weight_shifts_joint_split(self):
        flat = complete_counts_from_summary(event_risk_weight=1.0)
        steep = complete_counts_from_summary(event_risk_weight=5.0)
        # a higher weight allocates more outcomes to the event group
        assert steep["cell_1"].n[1, 1, 1] >= flat["cell_1"].n[1, 1, 1]

    def test_arm_summary_validation(self):
        with pytest.raises(ValueError):
            ArmSummary(n_randomized=10, n_available=12, n_events=1, n_outcomes=1)
        with pytest.raises(ValueError):
            ArmSummary(n_randomized=10, n_available=8, n_events=9, n_outcomes=1)

    def test_example_truth_structure(self):
        truth = example_trial_truth()
        assert set(truth.cells) == set(EXAMPLE_TRIAL_T12)
        total = sum(truth.cell_weights.values())
        assert total == pytest.approx(1.0, abs=1e-12)
        assert truth.cell_weights["cell_1"] == pytest.approx(248 / 1283)
