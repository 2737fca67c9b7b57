import time

import numpy as np
import pytest

from psbayes.data_io import aggregate
from psbayes.model import CellCounts
from psbayes.pipeline import resolve_settings, run_fit
from psbayes.simulate import example_trial_records, gen_dataset, single_cell_truth


@pytest.fixture(scope="session")
def example_records():
    return example_trial_records()


@pytest.fixture(scope="session")
def example_counts(example_records):
    return aggregate(example_records)


@pytest.fixture(scope="session")
def sensitivity_fit(example_records):
    """Full three-mode analysis of the bundled trial data at default settings.

    Shared by the reproduction and sensitivity acceptance criteria; returns
    (document, elapsed seconds).
    """
    settings = resolve_settings({}, sensitivity=True, seed=20240808)
    t0 = time.perf_counter()
    doc = run_fit(example_records, settings)
    return doc, time.perf_counter() - t0


def simulate_cell_counts(
    strata_probs, risks, n, seed, treat_ratio=2.0, missingness=(0.0, 0.0)
) -> CellCounts:
    """Single-cell synthetic counts from an explicit ground truth."""
    truth = single_cell_truth(strata_probs, risks, missingness=missingness, treat_ratio=treat_ratio)
    trial = gen_dataset(truth, n, seed)
    return aggregate(trial.records)["cell_1"]


def random_counts(rng, max_count=300) -> CellCounts:
    """Arbitrary complete-case counts for gradient/likelihood property tests."""
    return CellCounts(n=np.asarray(rng.integers(0, max_count, size=(2, 2, 2)), dtype=np.int64))
