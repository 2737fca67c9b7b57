"""Synthetic-trial generation from known ground truth.

Each subject gets a covariate cell, a latent stratum, a randomized arm,
deterministic potential event indicators implied by the stratum, and
Bernoulli potential outcomes under both arms; the realized values are the
potential ones under the assigned arm (consistency holds by construction).
Missingness masks the (event, outcome) pair jointly with a probability
depending only on cell and arm.

The module also ships the 12-month summary counts of a published phase-3
multiple-sclerosis trial (2:1 active:control; events are relapses,
outcomes confirmed disability progression) as a worked example, together
with a deterministic completion of the joint event-by-outcome split those
published marginals leave open.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .data_io import SubjectRecord
from .model import CellCounts, N_PARAMS

#: potential event indicators (control, active) by stratum order I, D, B, H
_S_CONTROL = np.array([0, 1, 1, 0])
_S_ACTIVE = np.array([0, 1, 0, 1])


@dataclass(frozen=True)
class CellTruth:
    """Ground truth of one covariate cell."""

    strata_probs: tuple[float, float, float, float]
    risks: tuple  # ((p_g(0), p_g(1)) for g in I, D, B, H)
    missingness: tuple[float, float] = (0.0, 0.0)  # per arm (control, active)

    def __post_init__(self):
        p = np.asarray(self.strata_probs, dtype=float)
        if p.shape != (4,) or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"strata_probs must be a 4-simplex, got {self.strata_probs}")
        r = np.asarray(self.risks, dtype=float)
        if r.shape != (4, 2) or np.any(r <= 0) or np.any(r >= 1):
            raise ValueError("risks must be a 4x2 array of probabilities in (0,1)")
        m = np.asarray(self.missingness, dtype=float)
        if m.shape != (2,) or np.any(m < 0) or np.any(m >= 1):
            raise ValueError("missingness must be two probabilities in [0,1)")


@dataclass(frozen=True)
class GroundTruth:
    """Full-trial ground truth: cells, their weights, and the allocation ratio."""

    cells: Mapping[str, CellTruth]
    cell_weights: Mapping[str, float]
    treat_ratio: float = 2.0  # active:control

    def __post_init__(self):
        if set(self.cells) != set(self.cell_weights):
            raise ValueError("cells and cell_weights must cover the same labels")
        w = np.array([self.cell_weights[c] for c in self.cells], dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("cell weights must be a simplex")
        if not self.treat_ratio > 0:
            raise ValueError("treat_ratio must be positive")

    @property
    def p_active(self) -> float:
        return self.treat_ratio / (1.0 + self.treat_ratio)


def single_cell_truth(
    strata_probs, risks, missingness=(0.0, 0.0), treat_ratio: float = 2.0, cell: str = "cell_1"
) -> GroundTruth:
    """Convenience constructor for one-cell simulations."""
    return GroundTruth(
        cells={cell: CellTruth(tuple(strata_probs), tuple(map(tuple, risks)), tuple(missingness))},
        cell_weights={cell: 1.0},
        treat_ratio=treat_ratio,
    )


@dataclass
class SimulatedTrial:
    """Observed records plus the latent table retained for oracle checks."""

    records: list[SubjectRecord]
    latent: dict[str, np.ndarray]  # cell_index, stratum, z, s0, s1, y0, y1, s, y, m
    cell_labels: tuple[str, ...]


def gen_dataset(truth: GroundTruth, n: int, seed: int) -> SimulatedTrial:
    """Generate ``n`` subjects; deterministic given the seed.

    Draw order per subject is fixed (cell, stratum, arm, both potential
    outcomes, missingness), so a given seed always produces byte-identical
    records.
    """
    if n <= 0:
        raise ValueError("n must be positive")
    rng = np.random.default_rng(seed)
    labels = tuple(sorted(truth.cells))
    weights = np.array([truth.cell_weights[c] for c in labels])
    probs = np.array([truth.cells[c].strata_probs for c in labels])  # (cells, 4)
    risks = np.array([truth.cells[c].risks for c in labels])  # (cells, 4, 2)
    missing = np.array([truth.cells[c].missingness for c in labels])  # (cells, 2)

    cell_idx = rng.choice(len(labels), size=n, p=weights)
    cum = np.cumsum(probs, axis=1)[cell_idx]  # (n, 4)
    g = (rng.random(n)[:, None] >= cum[:, :3]).sum(axis=1)
    z = (rng.random(n) < truth.p_active).astype(np.int64)
    s0 = _S_CONTROL[g]
    s1 = _S_ACTIVE[g]
    s = np.where(z == 1, s1, s0)
    y0 = (rng.random(n) < risks[cell_idx, g, 0]).astype(np.int64)
    y1 = (rng.random(n) < risks[cell_idx, g, 1]).astype(np.int64)
    y = np.where(z == 1, y1, y0)
    m = (rng.random(n) < missing[cell_idx, z]).astype(np.int64)

    records = [
        SubjectRecord(
            z=int(z[i]),
            s=None if m[i] else int(s[i]),
            y=None if m[i] else int(y[i]),
            cell=labels[cell_idx[i]],
        )
        for i in range(n)
    ]
    latent = {
        "cell_index": cell_idx,
        "stratum": g,
        "z": z,
        "s0": s0,
        "s1": s1,
        "y0": y0,
        "y1": y1,
        "s": s,
        "y": y,
        "m": m,
    }
    return SimulatedTrial(records=records, latent=latent, cell_labels=labels)


def counts_from_params(vec: np.ndarray, n: int, treat_ratio: float, rng) -> CellCounts:
    """Single-cell dataset drawn directly from a raw parameter vector.

    Used by simulation-based calibration, where the truth is a prior draw of
    the 11 free parameters rather than a hand-specified GroundTruth.  No
    missingness.
    """
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (N_PARAMS,):
        raise ValueError(f"expected parameter vector of length {N_PARAMS}")
    alpha = np.array([vec[0], vec[1], 0.0, vec[2]])
    ex = np.exp(alpha - alpha.max())
    pi = ex / ex.sum()
    cum = np.cumsum(pi)
    g = (rng.random(n)[:, None] >= cum[None, :3]).sum(axis=1)
    z = (rng.random(n) < treat_ratio / (1.0 + treat_ratio)).astype(np.int64)
    s = np.where(z == 1, _S_ACTIVE[g], _S_CONTROL[g])
    theta = vec[3 + g] + z * vec[7 + g]
    with np.errstate(over="ignore"):
        risk = 1.0 / (1.0 + np.exp(-theta))
    y = (rng.random(n) < risk).astype(np.int64)
    counts = np.zeros((2, 2, 2), dtype=np.int64)
    np.add.at(counts, (z, s, y), 1)
    return CellCounts(n=counts)


# ---------------------------------------------------------------------------
# Bundled example trial (12-month horizon)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArmSummary:
    """Published per-(cell, arm) marginals: the joint event/outcome split is not."""

    n_randomized: int
    n_available: int
    n_events: int
    n_outcomes: int

    def __post_init__(self):
        ok = (
            0 <= self.n_available <= self.n_randomized
            and 0 <= self.n_events <= self.n_available
            and 0 <= self.n_outcomes <= self.n_available
        )
        if not ok:
            raise ValueError(f"inconsistent arm summary {self}")


#: 12-month counts by covariate cell and arm (1=active drug, 0=placebo).
EXAMPLE_TRIAL_T12: dict[str, dict[int, ArmSummary]] = {
    "cell_1": {1: ArmSummary(208, 167, 22, 30), 0: ArmSummary(107, 81, 13, 22)},
    "cell_2": {1: ArmSummary(300, 236, 15, 51), 0: ArmSummary(155, 126, 17, 35)},
    "cell_3": {1: ArmSummary(180, 145, 20, 20), 0: ArmSummary(95, 74, 11, 18)},
    "cell_4": {1: ArmSummary(408, 317, 13, 61), 0: ArmSummary(188, 137, 7, 20)},
}


def complete_counts_from_summary(
    summary: Mapping[str, Mapping[int, ArmSummary]] | None = None,
    event_risk_weight: float = 2.0,
) -> dict[str, CellCounts]:
    """Deterministic joint event-by-outcome completion of published marginals.

    The summaries pin the available count, the event count and the outcome
    count per cell and arm but not how many subjects had both.  Outcomes are
    allocated to the event group proportional to ``event_risk_weight`` (the
    assumed risk multiplier for subjects with the event, default 2: an
    intercurrent event goes with elevated outcome risk), rounded and clipped
    to feasibility, so the completed counts reproduce every published
    marginal exactly.
    """
    if event_risk_weight <= 0:
        raise ValueError("event_risk_weight must be positive")
    summary = EXAMPLE_TRIAL_T12 if summary is None else summary
    out: dict[str, CellCounts] = {}
    for cell in sorted(summary):
        n = np.zeros((2, 2, 2), dtype=np.int64)
        miss = np.zeros(2, dtype=np.int64)
        for z, arm in summary[cell].items():
            n_event = arm.n_events
            n_free = arm.n_available - n_event
            share = event_risk_weight * n_event / (event_risk_weight * n_event + n_free)
            n11 = int(round(arm.n_outcomes * share))
            n11 = min(max(n11, arm.n_outcomes - n_free), n_event, arm.n_outcomes)
            n11 = max(n11, 0)
            n[z, 1, 1] = n11
            n[z, 1, 0] = n_event - n11
            n[z, 0, 1] = arm.n_outcomes - n11
            n[z, 0, 0] = n_free - (arm.n_outcomes - n11)
            miss[z] = arm.n_randomized - arm.n_available
        out[cell] = CellCounts(n=n, n_missing=miss)
    return out


def records_from_counts(counts_by_cell: Mapping[str, CellCounts]) -> list[SubjectRecord]:
    """Expand aggregated counts into an equivalent subject-level record list."""
    records: list[SubjectRecord] = []
    for cell in sorted(counts_by_cell):
        c = counts_by_cell[cell]
        for z in (0, 1):
            for s in (0, 1):
                for y in (0, 1):
                    records.extend(
                        SubjectRecord(z=z, s=s, y=y, cell=cell) for _ in range(int(c.n[z, s, y]))
                    )
            records.extend(
                SubjectRecord(z=z, s=None, y=None, cell=cell) for _ in range(int(c.n_missing[z]))
            )
    return records


def example_trial_records(event_risk_weight: float = 2.0) -> list[SubjectRecord]:
    """Subject-level dataset matching the bundled trial marginals exactly."""
    return records_from_counts(complete_counts_from_summary(event_risk_weight=event_risk_weight))


def example_trial_truth(missingness: bool = True) -> GroundTruth:
    """A plausible ground truth resembling the bundled trial.

    Strata probabilities and risks are round numbers on the scale of the
    example data (immune-dominant population, active-arm immune risk ratio
    0.8); cell weights mirror the example's available-case proportions.
    """
    avail = {c: sum(a.n_available for a in arms.values()) for c, arms in EXAMPLE_TRIAL_T12.items()}
    rand = {c: sum(a.n_randomized for a in arms.values()) for c, arms in EXAMPLE_TRIAL_T12.items()}
    total = sum(avail.values())
    risks = ((0.25, 0.20), (0.35, 0.30), (0.30, 0.25), (0.30, 0.30))
    cells = {}
    for c in EXAMPLE_TRIAL_T12:
        miss_rate = 1.0 - avail[c] / rand[c]
        cells[c] = CellTruth(
            strata_probs=(0.85, 0.08, 0.07, 0.0),
            risks=risks,
            missingness=(miss_rate, miss_rate) if missingness else (0.0, 0.0),
        )
    return GroundTruth(
        cells=cells,
        cell_weights={c: avail[c] / total for c in EXAMPLE_TRIAL_T12},
        treat_ratio=2.0,
    )
