"""Core probability model for a trial with a binary intercurrent event.

Subjects belong to one of four latent strata defined by the pair of
potential intercurrent-event indicators (event under control, event under
active treatment):

    immune      (0, 0)   never experiences the event
    doomed      (1, 1)   always experiences the event
    benefiter   (1, 0)   event only under control
    harmed      (0, 1)   event only under active treatment

Stratum probabilities are parameterized on the log-odds scale through a
softmax with the benefiter coordinate pinned at zero, and outcome risks on
the logit scale with an additive arm effect:

    pi = softmax(alpha_immune, alpha_doomed, 0, alpha_harmed)
    P[outcome = 1 | stratum g, arm z] = expit(theta0_g + z * delta_g)

Observing the event indicator S together with the arm Z narrows latent
membership to exactly two strata, so the outcome density given (S, Z) is a
two-component Bernoulli mixture:

    (S,Z) = (0,0): immune  or harmed       (0,1): immune or benefiter
    (S,Z) = (1,0): doomed  or benefiter    (1,1): doomed or harmed

while the event itself follows Bernoulli(pi_benefiter + pi_doomed) on the
control arm and Bernoulli(pi_doomed + pi_harmed) on the active arm.

The likelihood of one covariate cell depends on the data only through the
eight complete-case counts n[z][s][y].  All mixture arithmetic is done in
log space so the log posterior and its analytic gradient stay finite even
when a strongly informative prior pins a stratum probability at
essentially zero (alpha_harmed near -50 gives pi_harmed near exp(-50)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping

import numpy as np


class PrincipalStratum(Enum):
    """Latent subgroup defined by the pair of potential event indicators."""

    IMMUNE = 0
    DOOMED = 1
    BENEFITER = 2
    HARMED = 3


STRATA: tuple[PrincipalStratum, ...] = tuple(PrincipalStratum)

#: Free parameter vector layout used throughout the package.
PARAM_NAMES: tuple[str, ...] = (
    "alpha_immune",
    "alpha_doomed",
    "alpha_harmed",
    "theta0_immune",
    "theta0_doomed",
    "theta0_benefiter",
    "theta0_harmed",
    "delta_immune",
    "delta_doomed",
    "delta_benefiter",
    "delta_harmed",
)

N_PARAMS = len(PARAM_NAMES)  # 3 alphas + 4 theta0 + 4 delta = 11

LOGIT_03 = math.log(0.3 / 0.7)  # default baseline-risk prior mean


# ---------------------------------------------------------------------------
# Link functions
# ---------------------------------------------------------------------------


def expit(x):
    """Inverse logit, stable for |x| well beyond 700 (saturates smoothly)."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    if out.ndim == 0:
        return float(out)
    return out


def logit(p):
    """Log odds of ``p``; requires 0 < p < 1 elementwise."""
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError(f"logit requires p in (0, 1), got {p!r}")
    out = np.log(p) - np.log1p(-p)
    if out.ndim == 0:
        return float(out)
    return out


def softmax_strata(
    alpha_immune: float, alpha_doomed: float, alpha_harmed: float
) -> np.ndarray:
    """Strata probabilities (immune, doomed, benefiter, harmed).

    The benefiter log-odds is pinned at zero; the softmax is computed with
    max-subtraction so the components are positive and sum to one for any
    finite inputs.
    """
    alpha = np.array([alpha_immune, alpha_doomed, 0.0, alpha_harmed], dtype=float)
    if not np.all(np.isfinite(alpha)):
        raise ValueError(f"softmax inputs must be finite, got {alpha!r}")
    shifted = alpha - alpha.max()
    ex = np.exp(shifted)
    return ex / ex.sum()


def _log_pi_full(alpha_free: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """log strata probabilities and probabilities for free alphas (I, D, H)."""
    alpha = np.array([alpha_free[0], alpha_free[1], 0.0, alpha_free[2]])
    m = alpha.max()
    shifted = alpha - m
    ex = np.exp(shifted)
    log_norm = m + math.log(ex.sum())
    log_pi = alpha - log_norm
    return log_pi, np.exp(log_pi)


# ---------------------------------------------------------------------------
# Parameters, counts, priors
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CellParams:
    """Unconstrained parameters of one covariate cell (11 free values).

    ``alpha_benefiter`` is fixed at 0 for identifiability and is not a free
    parameter.  ``theta0[g]`` is the control-arm outcome log odds of stratum
    ``g`` and ``delta[g]`` the active-vs-control log odds ratio, so the
    active-arm log odds is ``theta0[g] + delta[g]``.
    """

    alpha_immune: float
    alpha_doomed: float
    alpha_harmed: float
    theta0: Mapping[PrincipalStratum, float]
    delta: Mapping[PrincipalStratum, float]

    ALPHA_BENEFITER = 0.0

    def __post_init__(self):
        for name, mapping in (("theta0", self.theta0), ("delta", self.delta)):
            missing = [g for g in STRATA if g not in mapping]
            if missing:
                raise ValueError(f"{name} must cover all four strata, missing {missing}")

    @classmethod
    def from_vector(cls, vec) -> "CellParams":
        vec = np.asarray(vec, dtype=float)
        if vec.shape != (N_PARAMS,):
            raise ValueError(f"expected parameter vector of shape ({N_PARAMS},), got {vec.shape}")
        return cls(
            alpha_immune=float(vec[0]),
            alpha_doomed=float(vec[1]),
            alpha_harmed=float(vec[2]),
            theta0={g: float(vec[3 + g.value]) for g in STRATA},
            delta={g: float(vec[7 + g.value]) for g in STRATA},
        )

    def to_vector(self) -> np.ndarray:
        vec = np.empty(N_PARAMS)
        vec[0] = self.alpha_immune
        vec[1] = self.alpha_doomed
        vec[2] = self.alpha_harmed
        for g in STRATA:
            vec[3 + g.value] = self.theta0[g]
            vec[7 + g.value] = self.delta[g]
        return vec

    def strata_probs(self) -> np.ndarray:
        """Derived (pi_immune, pi_doomed, pi_benefiter, pi_harmed)."""
        return softmax_strata(self.alpha_immune, self.alpha_doomed, self.alpha_harmed)

    def outcome_logit(self, g: PrincipalStratum, z: int) -> float:
        return self.theta0[g] + z * self.delta[g]

    def outcome_risk(self, g: PrincipalStratum, z: int) -> float:
        return expit(self.outcome_logit(g, z))


@dataclass
class CellCounts:
    """Sufficient statistics of one covariate cell.

    ``n[z][s][y]`` counts complete cases by arm, event and outcome;
    ``n_missing[z]`` counts subjects with the (event, outcome) pair missing
    and ``n_randomized[z]`` everyone randomized, so per arm
    ``n[z].sum() + n_missing[z] == n_randomized[z]``.
    """

    n: np.ndarray
    n_missing: np.ndarray = field(default=None)  # type: ignore[assignment]
    n_randomized: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.n = np.asarray(self.n, dtype=np.int64)
        if self.n.shape != (2, 2, 2):
            raise ValueError(f"counts must have shape (2, 2, 2), got {self.n.shape}")
        if np.any(self.n < 0):
            raise ValueError("counts must be non-negative")
        if self.n_missing is None:
            self.n_missing = np.zeros(2, dtype=np.int64)
        self.n_missing = np.asarray(self.n_missing, dtype=np.int64)
        if self.n_randomized is None:
            self.n_randomized = self.n.sum(axis=(1, 2)) + self.n_missing
        self.n_randomized = np.asarray(self.n_randomized, dtype=np.int64)
        for arr, name in ((self.n_missing, "n_missing"), (self.n_randomized, "n_randomized")):
            if arr.shape != (2,):
                raise ValueError(f"{name} must have shape (2,), got {arr.shape}")
            if np.any(arr < 0):
                raise ValueError(f"{name} must be non-negative")
        avail = self.n.sum(axis=(1, 2))
        if np.any(avail + self.n_missing != self.n_randomized):
            raise ValueError(
                "per-arm bookkeeping broken: available + missing must equal randomized, "
                f"got {avail} + {self.n_missing} != {self.n_randomized}"
            )

    @classmethod
    def zeros(cls) -> "CellCounts":
        return cls(n=np.zeros((2, 2, 2), dtype=np.int64))

    def n_available(self, z: int) -> int:
        return int(self.n[z].sum())

    def n_events(self, z: int) -> int:
        """Complete cases with the intercurrent event by arm."""
        return int(self.n[z, 1, :].sum())

    def n_outcomes(self, z: int) -> int:
        """Complete cases with the outcome by arm."""
        return int(self.n[z, :, 1].sum())


class MonotonicityMode(Enum):
    """How strongly the prior rules out the harmed stratum."""

    HARD = "hard"
    WEAK = "weak"
    NONE = "none"


#: alpha_harmed prior (mean, sd) selected by each monotonicity mode.
HARD_HARMED_PRIOR = (-50.0, 0.1)
WEAK_HARMED_PRIOR = (-2.0, 0.5)


@dataclass(frozen=True)
class PriorConfig:
    """Independent normal priors for the 11 free parameters.

    ``alpha_prior`` applies to alpha_immune and alpha_doomed.  The
    monotonicity mode is a convenience selector for ``harmed_prior``: hard
    pins pi_harmed at essentially zero via (-50, 0.1), weak allows a small
    harmed stratum via (-2, 0.5), none treats alpha_harmed like the other
    strata log-odds.  Passing ``harmed_prior`` explicitly overrides the mode.
    """

    alpha_prior: tuple[float, float] = (0.0, 2.0)
    theta0_prior: tuple[float, float] = (LOGIT_03, 2.0)
    delta_prior: tuple[float, float] = (0.0, 2.0)
    monotonicity_mode: MonotonicityMode = MonotonicityMode.HARD
    harmed_prior: tuple[float, float] | None = None

    def __post_init__(self):
        if self.harmed_prior is None:
            if self.monotonicity_mode is MonotonicityMode.HARD:
                resolved = HARD_HARMED_PRIOR
            elif self.monotonicity_mode is MonotonicityMode.WEAK:
                resolved = WEAK_HARMED_PRIOR
            else:
                resolved = self.alpha_prior
            object.__setattr__(self, "harmed_prior", resolved)
        for name in ("alpha_prior", "theta0_prior", "harmed_prior", "delta_prior"):
            mean, sd = getattr(self, name)
            if not (math.isfinite(mean) and math.isfinite(sd)):
                raise ValueError(f"{name} must be finite, got {(mean, sd)}")
            if sd <= 0:
                raise ValueError(f"{name} sd must be strictly positive, got {sd}")

    @classmethod
    def for_mode(cls, mode: MonotonicityMode | str, **kwargs) -> "PriorConfig":
        if isinstance(mode, str):
            mode = MonotonicityMode(mode.lower())
        return cls(monotonicity_mode=mode, **kwargs)

    def mean_vector(self) -> np.ndarray:
        a, h, t, d = self.alpha_prior[0], self.harmed_prior[0], self.theta0_prior[0], self.delta_prior[0]
        return np.array([a, a, h, t, t, t, t, d, d, d, d])

    def sd_vector(self) -> np.ndarray:
        a, h, t, d = self.alpha_prior[1], self.harmed_prior[1], self.theta0_prior[1], self.delta_prior[1]
        return np.array([a, a, h, t, t, t, t, d, d, d, d])


# ---------------------------------------------------------------------------
# Mixture structure
# ---------------------------------------------------------------------------

#: stratum pair implied by each observed (event, arm) combination
MIXTURE_PAIRS: dict[tuple[int, int], tuple[PrincipalStratum, PrincipalStratum]] = {
    (0, 0): (PrincipalStratum.IMMUNE, PrincipalStratum.HARMED),
    (0, 1): (PrincipalStratum.IMMUNE, PrincipalStratum.BENEFITER),
    (1, 0): (PrincipalStratum.DOOMED, PrincipalStratum.BENEFITER),
    (1, 1): (PrincipalStratum.DOOMED, PrincipalStratum.HARMED),
}

# Row layout used by the vectorized likelihood: rows are (z, s) pairs in the
# order (0,0), (0,1), (1,0), (1,1); _G1/_G2 the corresponding stratum pair.
_ROW_ARM = np.array([0, 0, 1, 1])
_ROW_S = np.array([0, 1, 0, 1])
_G1 = np.array([0, 1, 0, 1])  # immune, doomed, immune, doomed
_G2 = np.array([3, 2, 2, 3])  # harmed, benefiter, benefiter, harmed


@dataclass(frozen=True)
class MixtureRow:
    """Two-component outcome mixture implied by one (event, arm) pair."""

    strata: tuple[PrincipalStratum, PrincipalStratum]
    weights: np.ndarray
    success_probs: np.ndarray


def cell_mixture(s: int, z: int, params: CellParams) -> MixtureRow:
    """Outcome mixture for subjects with event ``s`` on arm ``z``.

    Weights are the conditional strata probabilities given the pair, computed
    in log space so a pinned stratum (pi near exp(-50)) yields a weight of
    exactly the right magnitude rather than 0/0 noise.
    """
    if s not in (0, 1) or z not in (0, 1):
        raise ValueError(f"s and z must be binary, got s={s}, z={z}")
    g1, g2 = MIXTURE_PAIRS[(s, z)]
    log_pi, _ = _log_pi_full(
        np.array([params.alpha_immune, params.alpha_doomed, params.alpha_harmed])
    )
    l1, l2 = log_pi[g1.value], log_pi[g2.value]
    norm = np.logaddexp(l1, l2)
    weights = np.array([math.exp(l1 - norm), math.exp(l2 - norm)])
    probs = np.array([params.outcome_risk(g1, z), params.outcome_risk(g2, z)])
    return MixtureRow(strata=(g1, g2), weights=weights, success_probs=probs)


# ---------------------------------------------------------------------------
# Log posterior
# ---------------------------------------------------------------------------


def _log_norm_alpha(v: list[float]) -> float:
    """log sum of exp over the four stratum log-odds (benefiter pinned at 0)."""
    m = max(v[0], v[1], 0.0, v[2])
    return m + math.log(
        math.exp(v[0] - m) + math.exp(v[1] - m) + math.exp(-m) + math.exp(v[2] - m)
    )


def _log_bern(th: float) -> tuple[float, float, float]:
    """(log P[y=0], log P[y=1], expit) for outcome logit ``th``, all stable."""
    if th >= 0.0:
        sp = math.log1p(math.exp(-th))  # softplus(-th)
        return -th - sp, -sp, 1.0 / (1.0 + math.exp(-th))
    sp = math.log1p(math.exp(th))  # softplus(th)
    ex = math.exp(th)
    return -sp, th - sp, ex / (1.0 + ex)


def _mixture_core(v: list[float], rows, want_grad: bool):
    """Mixture log likelihood and per-group gradient accumulators.

    ``rows`` lists (count_y0, count_y1, arm, g1, g2) per observed (arm, event)
    combination.  Returns (loglik, alpha responsibility sums by stratum,
    theta0 gradient by stratum, delta gradient by stratum); the responsibility
    arithmetic runs entirely in log space.
    """
    log_norm = _log_norm_alpha(v)
    log_pi = (v[0] - log_norm, v[1] - log_norm, -log_norm, v[2] - log_norm)
    ll = 0.0
    accum = [0.0, 0.0, 0.0, 0.0]
    g_theta = [0.0, 0.0, 0.0, 0.0]
    g_delta = [0.0, 0.0, 0.0, 0.0]
    for c0, c1, z, g1, g2 in rows:
        if c0 == 0.0 and c1 == 0.0:
            continue
        lb1_0, lb1_1, p1 = _log_bern(v[3 + g1] + z * v[7 + g1])
        lb2_0, lb2_1, p2 = _log_bern(v[3 + g2] + z * v[7 + g2])
        lp1, lp2 = log_pi[g1], log_pi[g2]
        for c, l1, l2, y in ((c0, lp1 + lb1_0, lp2 + lb2_0, 0.0), (c1, lp1 + lb1_1, lp2 + lb2_1, 1.0)):
            if c == 0.0:
                continue
            hi, lo = (l1, l2) if l1 >= l2 else (l2, l1)
            lmix = hi + math.log1p(math.exp(lo - hi))
            ll += c * lmix
            if want_grad:
                w1 = c * math.exp(l1 - lmix)
                w2 = c - w1
                accum[g1] += w1
                accum[g2] += w2
                t1 = w1 * (y - p1)
                t2 = w2 * (y - p2)
                g_theta[g1] += t1
                g_theta[g2] += t2
                if z:
                    g_delta[g1] += t1
                    g_delta[g2] += t2
    return ll, accum, g_theta, g_delta


class CellPosterior:
    """Log posterior density of one covariate cell, with analytic gradient.

    Precomputes the count layout so repeated evaluation inside a sampler is
    cheap (scalar arithmetic; the arrays here have at most 8 entries and
    vectorizing them costs more than it saves).  The density is the
    complete-case mixture likelihood plus independent normal log priors
    (normalizing constants included).
    """

    def __init__(self, counts: CellCounts, prior: PriorConfig):
        if np.any(counts.n < 0):
            raise ValueError("counts must be non-negative")
        # rows (z,s) in the order (0,0), (0,1), (1,0), (1,1); columns y=0,1
        counts_ry = counts.n[_ROW_ARM, _ROW_S, :].astype(float)
        self._rows = tuple(
            (counts_ry[r, 0], counts_ry[r, 1], int(_ROW_ARM[r]), int(_G1[r]), int(_G2[r]))
            for r in range(4)
        )
        self._total = float(counts_ry.sum())
        self._prior_mean = prior.mean_vector()
        self._prior_sd = prior.sd_vector()
        self._prior_var = self._prior_sd**2
        self._prior_norm = -float(np.sum(np.log(self._prior_sd)) + 0.5 * N_PARAMS * math.log(2 * math.pi))

    def log_likelihood(self, vec: np.ndarray) -> float:
        if self._total == 0:
            return 0.0
        v = [float(x) for x in vec]
        ll, _, _, _ = _mixture_core(v, self._rows, want_grad=False)
        return ll

    def log_prior(self, vec: np.ndarray) -> float:
        z = (vec - self._prior_mean) / self._prior_sd
        return self._prior_norm - 0.5 * float(z @ z)

    def log_density(self, vec: np.ndarray) -> float:
        return self.log_likelihood(vec) + self.log_prior(np.asarray(vec, dtype=float))

    def log_density_and_gradient(self, vec: np.ndarray) -> tuple[float, np.ndarray]:
        vec = np.asarray(vec, dtype=float)
        grad = -(vec - self._prior_mean) / self._prior_var
        value = self.log_prior(vec)
        if self._total == 0:
            return value, grad

        v = [float(x) for x in vec]
        ll, accum, g_theta, g_delta = _mixture_core(v, self._rows, want_grad=True)
        value += ll

        # d log pi_g / d alpha_k = 1{g==k} - pi_k; responsibilities sum to the
        # count per row, so the softmax pullback is accum_k - total * pi_k
        log_norm = _log_norm_alpha(v)
        grad[0] += accum[0] - self._total * math.exp(v[0] - log_norm)
        grad[1] += accum[1] - self._total * math.exp(v[1] - log_norm)
        grad[2] += accum[3] - self._total * math.exp(v[2] - log_norm)
        for g in range(4):
            grad[3 + g] += g_theta[g]
            grad[7 + g] += g_delta[g]
        return value, grad


def log_likelihood(params: CellParams, counts: CellCounts) -> float:
    """Complete-case log likelihood of one covariate cell."""
    # prior settings are irrelevant here; any valid config works
    return CellPosterior(counts, PriorConfig()).log_likelihood(params.to_vector())


def log_prior(params: CellParams, prior: PriorConfig) -> float:
    """Sum of the 11 normal log densities, normalizing constants included."""
    return CellPosterior(CellCounts.zeros(), prior).log_prior(params.to_vector())


def log_posterior_and_gradient(
    params: CellParams, counts: CellCounts, prior: PriorConfig
) -> tuple[float, np.ndarray]:
    """Unnormalized log posterior and its exact gradient (length 11)."""
    return CellPosterior(counts, prior).log_density_and_gradient(params.to_vector())
