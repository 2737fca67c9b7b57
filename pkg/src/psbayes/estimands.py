"""Scientific quantities derived from data and posterior draws.

Three layers:

* plug-in identification: under monotonicity the event rate on the active
  arm identifies the doomed proportion, the event-free rate on the control
  arm the immune proportion, and the benefiter proportion is the remainder
  (a negative remainder empirically refutes monotonicity);
* nonparametric bounds: the immune-stratum outcome risk under active
  treatment is only set-identified; sweeping the unidentified benefiter
  risk over [0, 1] in the mixture decomposition gives a feasible interval
  for the numerator and hence for the risk ratio;
* posterior transformation: per-draw covariate standardization of the
  cell-level strata probabilities and risks, and per-draw risk ratios
  summarized by equal-tailed quantile intervals (never ratios of
  summaries).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .model import CellCounts, PrincipalStratum, STRATA

WEIGHT_TOL = 1e-12


class EstimandError(ValueError):
    """Inputs cannot support the requested estimand computation."""


# ---------------------------------------------------------------------------
# Covariate standardization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovariateDistribution:
    """Discrete covariate-cell weights used for marginalization."""

    weights: Mapping[str, float]

    def __post_init__(self):
        if not self.weights:
            raise EstimandError("covariate distribution needs at least one cell")
        vals = np.array(list(self.weights.values()), dtype=float)
        if np.any(vals < 0):
            raise EstimandError("covariate weights must be non-negative")
        if abs(vals.sum() - 1.0) > WEIGHT_TOL:
            raise EstimandError(f"covariate weights must sum to 1, got {vals.sum()!r}")

    @classmethod
    def from_counts(
        cls, counts_by_cell: Mapping[str, CellCounts], mode: str = "available"
    ) -> "CovariateDistribution":
        """Empirical cell weights from complete-case or randomized totals."""
        if mode == "available":
            totals = {c: float(k.n.sum()) for c, k in counts_by_cell.items()}
        elif mode == "randomized":
            totals = {c: float(k.n_randomized.sum()) for c, k in counts_by_cell.items()}
        else:
            raise EstimandError(f"unknown weight mode {mode!r}; use 'available' or 'randomized'")
        grand = sum(totals.values())
        if grand <= 0:
            raise EstimandError("cannot build covariate weights from empty data")
        return cls(weights={c: t / grand for c, t in totals.items()})


def derived_cell_draws(draws: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Map raw parameter draws (n, 11) to strata probabilities and risks.

    Returns ``pi`` of shape (n, 4) in stratum order (immune, doomed,
    benefiter, harmed) and ``risk`` of shape (n, 4, 2) indexed by stratum and
    arm.
    """
    draws = np.asarray(draws, dtype=float)
    n = draws.shape[0]
    alpha = np.column_stack([draws[:, 0], draws[:, 1], np.zeros(n), draws[:, 2]])
    shifted = alpha - alpha.max(axis=1, keepdims=True)
    ex = np.exp(shifted)
    pi = ex / ex.sum(axis=1, keepdims=True)

    theta0 = draws[:, 3:7]
    theta1 = theta0 + draws[:, 7:11]
    risk = np.empty((n, 4, 2))
    with np.errstate(over="ignore"):
        risk[:, :, 0] = 1.0 / (1.0 + np.exp(-theta0))
        risk[:, :, 1] = 1.0 / (1.0 + np.exp(-theta1))
    return pi, risk


@dataclass
class MarginalDraws:
    """Covariate-standardized per-draw strata probabilities and risks."""

    pi: np.ndarray  # (n_draws, 4)
    risk: np.ndarray  # (n_draws, 4, 2)

    def risk_ratio(self, stratum: PrincipalStratum = PrincipalStratum.IMMUNE) -> np.ndarray:
        g = stratum.value
        return self.risk[:, g, 1] / self.risk[:, g, 0]


def marginalize(
    draws_by_cell: Mapping[str, np.ndarray], covdist: CovariateDistribution
) -> MarginalDraws:
    """Standardize cell-level draws over the covariate distribution.

    Draw m of every cell is treated as one joint posterior draw (cells are
    fitted independently, so index pairing is valid).  The marginal stratum
    probability is the weight-mixture of cell probabilities; the marginal
    risk is the pi-weighted mixture of cell risks renormalized by the
    marginal pi.
    """
    if set(draws_by_cell) != set(covdist.weights):
        raise EstimandError(
            f"cells {sorted(draws_by_cell)} do not match weight cells {sorted(covdist.weights)}"
        )
    sizes = {np.asarray(d).shape[0] for d in draws_by_cell.values()}
    if len(sizes) != 1:
        raise EstimandError(f"cells disagree on number of draws: {sorted(sizes)}")

    pi_m = None
    num = None
    for cell, draws in draws_by_cell.items():
        w = covdist.weights[cell]
        pi, risk = derived_cell_draws(draws)
        contrib_pi = w * pi
        contrib_num = contrib_pi[:, :, None] * risk
        if pi_m is None:
            pi_m, num = contrib_pi, contrib_num
        else:
            pi_m += contrib_pi
            num += contrib_num
    risk_m = num / pi_m[:, :, None]
    return MarginalDraws(pi=pi_m, risk=risk_m)


# ---------------------------------------------------------------------------
# Posterior summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantileSummary:
    """Median with equal-tailed 50% and 95% intervals (type-7 quantiles)."""

    median: float
    lo50: float
    hi50: float
    lo95: float
    hi95: float

    def __post_init__(self):
        if not (self.lo95 <= self.lo50 <= self.median <= self.hi50 <= self.hi95):
            raise EstimandError(f"interval endpoints out of order: {self}")

    @classmethod
    def from_draws(cls, x: np.ndarray) -> "QuantileSummary":
        q = np.quantile(np.asarray(x, dtype=float), [0.025, 0.25, 0.5, 0.75, 0.975])
        return cls(median=float(q[2]), lo50=float(q[1]), hi50=float(q[3]), lo95=float(q[0]), hi95=float(q[4]))

    def to_dict(self) -> dict:
        return {
            "median": self.median,
            "ci50": [self.lo50, self.hi50],
            "ci95": [self.lo95, self.hi95],
        }


@dataclass(frozen=True)
class EstimandSummary:
    """Posterior summaries of the immune-stratum risk ratio and its inputs."""

    strata: Mapping[PrincipalStratum, QuantileSummary]
    immune_risk_control: QuantileSummary
    immune_risk_active: QuantileSummary
    risk_ratio: QuantileSummary
    prob_rr_below_1: float
    monotonicity_mode: str = ""
    horizon: str = ""
    n_draws: int = 0

    def __post_init__(self):
        if not 0.0 <= self.prob_rr_below_1 <= 1.0:
            raise EstimandError(f"prob_rr_below_1 out of [0,1]: {self.prob_rr_below_1}")
        if self.risk_ratio.lo95 <= 0.0:
            raise EstimandError("risk ratio must be strictly positive")

    def to_dict(self) -> dict:
        return {
            "monotonicity_mode": self.monotonicity_mode,
            "horizon": self.horizon,
            "n_draws": self.n_draws,
            "strata": {g.name.lower(): s.to_dict() for g, s in self.strata.items()},
            "immune_risk": {
                "control": self.immune_risk_control.to_dict(),
                "active": self.immune_risk_active.to_dict(),
            },
            "risk_ratio": self.risk_ratio.to_dict(),
            "prob_rr_below_1": self.prob_rr_below_1,
        }


def risk_ratio_summary(
    marginal: MarginalDraws, monotonicity_mode: str = "", horizon: str = ""
) -> EstimandSummary:
    """Summarize marginal draws; the risk ratio is computed per draw."""
    rr = marginal.risk_ratio()
    n = rr.shape[0]
    imm = PrincipalStratum.IMMUNE.value
    return EstimandSummary(
        strata={g: QuantileSummary.from_draws(marginal.pi[:, g.value]) for g in STRATA},
        immune_risk_control=QuantileSummary.from_draws(marginal.risk[:, imm, 0]),
        immune_risk_active=QuantileSummary.from_draws(marginal.risk[:, imm, 1]),
        risk_ratio=QuantileSummary.from_draws(rr),
        prob_rr_below_1=float(np.count_nonzero(rr < 1.0)) / n,
        monotonicity_mode=monotonicity_mode,
        horizon=horizon,
        n_draws=n,
    )


# ---------------------------------------------------------------------------
# Plug-in identification and nonparametric bounds
# ---------------------------------------------------------------------------


def _pool(counts) -> CellCounts:
    if isinstance(counts, CellCounts):
        return counts
    cells = list(counts.values())
    if not cells:
        raise EstimandError("no covariate cells to pool")
    n = np.zeros((2, 2, 2), dtype=np.int64)
    miss = np.zeros(2, dtype=np.int64)
    for c in cells:
        n += c.n
        miss += c.n_missing
    return CellCounts(n=n, n_missing=miss)


@dataclass(frozen=True)
class IdentifiedProportions:
    """Plug-in strata proportions under monotonicity, with the empirical check."""

    pi_doomed: float
    pi_immune: float
    pi_benefiter: float
    monotonicity_violated: bool

    def to_dict(self) -> dict:
        return {
            "pi_doomed": self.pi_doomed,
            "pi_immune": self.pi_immune,
            "pi_benefiter": self.pi_benefiter,
            "monotonicity_violated": self.monotonicity_violated,
        }


def strata_proportions_identified(counts) -> IdentifiedProportions:
    """Empirical strata proportions from pooled complete-case counts.

    The benefiter proportion is the simplex remainder; a negative remainder
    means the control arm is event-free more often than the active arm, which
    rules out monotonicity and raises the violation flag.
    """
    pooled = _pool(counts)
    for z, arm in ((0, "control"), (1, "active")):
        if pooled.n_available(z) == 0:
            raise EstimandError(f"the {arm} arm has no complete cases")
    pi_d = pooled.n_events(1) / pooled.n_available(1)
    pi_i = 1.0 - pooled.n_events(0) / pooled.n_available(0)
    # the remainder equals the gap between the arms' event-free rates;
    # computing it as a single difference avoids cancellation noise when
    # the rates coincide exactly
    eventfree_active = 1.0 - pi_d
    pi_b = eventfree_active - pi_i
    return IdentifiedProportions(
        pi_doomed=pi_d,
        pi_immune=pi_i,
        pi_benefiter=pi_b,
        monotonicity_violated=pi_b < -WEIGHT_TOL,
    )


@dataclass
class BoundsResult:
    """Feasible interval for the unidentified numerator and the risk ratio."""

    proportions: IdentifiedProportions
    denominator: float
    numerator_low: float
    numerator_high: float
    rr_low: float
    rr_high: float
    p_benefiter_grid: np.ndarray
    numerator_curve: np.ndarray
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "proportions": self.proportions.to_dict(),
            "denominator": self.denominator,
            "numerator": [self.numerator_low, self.numerator_high],
            "risk_ratio": [self.rr_low, None if math.isinf(self.rr_high) else self.rr_high],
            "p_benefiter_grid": self.p_benefiter_grid.tolist(),
            "numerator_curve": self.numerator_curve.tolist(),
            "warnings": list(self.warnings),
        }


def numerator_bounds(
    counts, p_b_range: tuple[float, float] = (0.0, 1.0), grid_points: int = 101
) -> BoundsResult:
    """Feasibility bounds for the active-arm immune risk and the risk ratio.

    The event-free active-arm outcome rate is a mixture of the immune and
    benefiter risks; solving for the immune risk and sweeping the benefiter
    risk over ``p_b_range`` (the full unit interval by default) traces an
    affine, decreasing sensitivity curve whose endpoints, clipped to [0, 1],
    bound the numerator.  Dividing by the identified control-arm immune risk
    bounds the risk ratio; a zero denominator yields the sentinel
    [0, inf) with a warning instead of an error.
    """
    lo_pb, hi_pb = float(p_b_range[0]), float(p_b_range[1])
    if not 0.0 <= lo_pb <= hi_pb <= 1.0:
        raise EstimandError(f"benefiter-risk range must be ordered within [0,1], got {p_b_range}")
    if grid_points < 2:
        raise EstimandError("grid needs at least 2 points")
    props = strata_proportions_identified(counts)
    if props.pi_immune <= 0.0:
        raise EstimandError("identified immune proportion is zero; the estimand is undefined")
    pooled = _pool(counts)

    warnings: list[str] = []
    if props.monotonicity_violated:
        warnings.append(
            "monotonicity violated empirically: control event-free rate exceeds "
            "active event-free rate (negative benefiter remainder)"
        )

    n_eventfree_active = pooled.n[1, 0, :].sum()
    if n_eventfree_active == 0:
        raise EstimandError("no event-free complete cases on the active arm")
    q1 = pooled.n[1, 0, 1] / n_eventfree_active  # P[Y=1 | S=0, Z=1]

    n_eventfree_control = pooled.n[0, 0, :].sum()
    if n_eventfree_control == 0:
        raise EstimandError("no event-free complete cases on the control arm")
    denominator = pooled.n[0, 0, 1] / n_eventfree_control  # P[Y=1 | S=0, Z=0]

    w_immune = props.pi_immune / (props.pi_immune + props.pi_benefiter)
    w_benefit = 1.0 - w_immune

    def numerator(p_b):
        return q1 / w_immune - (w_benefit / w_immune) * p_b

    grid = np.linspace(lo_pb, hi_pb, grid_points)
    curve = np.clip(numerator(grid), 0.0, 1.0)
    end_a, end_b = float(numerator(hi_pb)), float(numerator(lo_pb))
    num_lo = min(max(min(end_a, end_b), 0.0), 1.0)
    num_hi = min(max(max(end_a, end_b), 0.0), 1.0)

    if denominator == 0.0:
        warnings.append(
            "control-arm immune risk is exactly zero; risk-ratio bounds reported as [0, inf)"
        )
        rr_lo, rr_hi = 0.0, math.inf
    else:
        rr_lo, rr_hi = num_lo / denominator, num_hi / denominator

    return BoundsResult(
        proportions=props,
        denominator=float(denominator),
        numerator_low=num_lo,
        numerator_high=num_hi,
        rr_low=rr_lo,
        rr_high=rr_hi,
        p_benefiter_grid=grid,
        numerator_curve=curve,
        warnings=warnings,
    )
