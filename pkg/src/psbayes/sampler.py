"""Gradient-based MCMC for the cell posterior.

The main sampler is dynamic Hamiltonian Monte Carlo with multinomial state
selection over doubling trajectories and a no-U-turn termination criterion,
warmed up by dual-averaging step-size adaptation and windowed estimation of
a diagonal mass matrix.  A deliberately simple adaptive random-walk
Metropolis sampler on the identical log posterior serves as an independent
cross-check; the two must agree within Monte-Carlo error.

Determinism: every chain draws from its own counter-derived RNG stream
(seed, chain index), so results are bitwise reproducible and unaffected by
how chains are scheduled or how many of them run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diagnostics import ess_per_param, rhat_per_param
from .model import CellCounts, CellPosterior, N_PARAMS, PARAM_NAMES, PriorConfig

#: A leapfrog state whose energy exceeds the trajectory start by more than
#: this is a divergent transition (the integrator left the typical set).
DIVERGENCE_THRESHOLD = 1000.0

RHAT_WARN = 1.01
DIVERGENCE_WARN_FRACTION = 0.01


class SamplingError(RuntimeError):
    """The sampler could not move at all; the posterior is likely broken."""


@dataclass(frozen=True)
class SamplerConfig:
    """Settings for one posterior run (all chains)."""

    n_chains: int = 4
    n_warmup: int = 1000
    n_sampling: int = 1000
    seed: int = 0
    target_accept: float = 0.8
    max_leapfrog: int = 1024

    def __post_init__(self):
        if self.n_chains < 1:
            raise ValueError("n_chains must be positive")
        if self.n_warmup < 100:
            raise ValueError("n_warmup must be at least 100")
        if self.n_sampling < 1:
            raise ValueError("n_sampling must be positive")
        if not 0.5 < self.target_accept < 0.99:
            raise ValueError("target_accept must lie in (0.5, 0.99)")
        if self.max_leapfrog < 1:
            raise ValueError("max_leapfrog must be positive")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")

    @property
    def max_depth(self) -> int:
        return max(1, int(math.floor(math.log2(self.max_leapfrog))))


@dataclass
class ChainResult:
    """Saved draws and adaptation outcome of a single chain."""

    draws: np.ndarray  # (n_sampling, N_PARAMS)
    divergences: int
    mean_accept: float
    step_size: float
    inv_mass_diag: np.ndarray
    mean_energy_error: float


@dataclass
class PosteriorDraws:
    """Per-chain draws plus cross-chain diagnostics."""

    chains: list[ChainResult]
    rhat: np.ndarray
    ess: np.ndarray
    warnings: list[str] = field(default_factory=list)
    method: str = "hmc"

    def stacked(self) -> np.ndarray:
        """All post-warmup draws, chains concatenated: (C*N, P)."""
        return np.vstack([c.draws for c in self.chains])

    def by_chain(self) -> np.ndarray:
        """Draws as a (C, N, P) array."""
        return np.stack([c.draws for c in self.chains])

    @property
    def n_divergences(self) -> int:
        return sum(c.divergences for c in self.chains)


# ---------------------------------------------------------------------------
# Hamiltonian dynamics
# ---------------------------------------------------------------------------


def leapfrog(q, p, grad, eps, inv_mass, logp_and_grad):
    """One leapfrog step of size ``eps``; returns (q, p, logp, grad).

    The integrator is symplectic and time-reversible: stepping with ``-eps``
    from the result recovers the start point to floating-point accuracy.
    """
    p = p + 0.5 * eps * grad
    q = q + eps * (inv_mass * p)
    lp, grad = logp_and_grad(q)
    p = p + 0.5 * eps * grad
    return q, p, lp, grad


def _hamiltonian(lp: float, p: np.ndarray, inv_mass: np.ndarray) -> float:
    return -lp + 0.5 * float(p @ (inv_mass * p))


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    hi, lo = (a, b) if a >= b else (b, a)
    return hi + math.log1p(math.exp(lo - hi))


def _is_turning(q_minus, p_minus, q_plus, p_plus, inv_mass) -> bool:
    dq = q_plus - q_minus
    return float(dq @ (inv_mass * p_minus)) < 0.0 or float(dq @ (inv_mass * p_plus)) < 0.0


@dataclass(slots=True)
class _Tree:
    q_minus: np.ndarray
    p_minus: np.ndarray
    g_minus: np.ndarray
    q_plus: np.ndarray
    p_plus: np.ndarray
    g_plus: np.ndarray
    q_prop: np.ndarray
    lp_prop: float
    g_prop: np.ndarray
    h_prop: float
    log_sum_w: float
    sum_accept: float
    n_leapfrog: int
    divergent: bool
    turning: bool


def _build_tree(depth, q, p, grad, direction, eps, h0, post, inv_mass, rng) -> _Tree:
    """Subtree of 2**depth leapfrog states beyond (q, p) in ``direction``."""
    if depth == 0:
        q1, p1, lp1, g1 = leapfrog(q, p, grad, direction * eps, inv_mass, post.log_density_and_gradient)
        h = _hamiltonian(lp1, p1, inv_mass)
        delta = h - h0 if math.isfinite(h) else math.inf
        divergent = delta > DIVERGENCE_THRESHOLD
        log_w = -delta if not divergent else -math.inf
        accept = math.exp(min(0.0, -delta)) if not divergent else 0.0
        return _Tree(
            q_minus=q1, p_minus=p1, g_minus=g1,
            q_plus=q1, p_plus=p1, g_plus=g1,
            q_prop=q1, lp_prop=lp1, g_prop=g1, h_prop=h,
            log_sum_w=log_w, sum_accept=accept, n_leapfrog=1,
            divergent=divergent, turning=False,
        )

    inner = _build_tree(depth - 1, q, p, grad, direction, eps, h0, post, inv_mass, rng)
    if inner.divergent or inner.turning:
        return inner

    if direction > 0:
        start = (inner.q_plus, inner.p_plus, inner.g_plus)
    else:
        start = (inner.q_minus, inner.p_minus, inner.g_minus)
    outer = _build_tree(depth - 1, *start, direction, eps, h0, post, inv_mass, rng)

    inner.sum_accept += outer.sum_accept
    inner.n_leapfrog += outer.n_leapfrog
    if outer.divergent or outer.turning:
        inner.divergent = outer.divergent
        inner.turning = outer.turning
        return inner

    total = _logaddexp(inner.log_sum_w, outer.log_sum_w)
    if math.log(rng.uniform()) < outer.log_sum_w - total:
        inner.q_prop = outer.q_prop
        inner.lp_prop = outer.lp_prop
        inner.g_prop = outer.g_prop
        inner.h_prop = outer.h_prop
    inner.log_sum_w = total

    if direction > 0:
        inner.q_plus, inner.p_plus, inner.g_plus = outer.q_plus, outer.p_plus, outer.g_plus
    else:
        inner.q_minus, inner.p_minus, inner.g_minus = outer.q_minus, outer.p_minus, outer.g_minus
    inner.turning = _is_turning(inner.q_minus, inner.p_minus, inner.q_plus, inner.p_plus, inv_mass)
    return inner


@dataclass
class _TransitionStats:
    accept_stat: float
    divergent: bool
    n_leapfrog: int
    energy_error: float
    depth: int


def _transition(q, lp, grad, eps, inv_mass, mom_scale, rng, max_depth, post):
    """One dynamic-HMC iteration; returns (q, lp, grad, stats)."""
    p0 = rng.standard_normal(q.shape[0]) * mom_scale
    h0 = _hamiltonian(lp, p0, inv_mass)

    q_minus = q_plus = q
    p_minus = p_plus = p0
    g_minus = g_plus = grad
    q_prop, lp_prop, g_prop, h_prop = q, lp, grad, h0
    log_sum_w = 0.0
    sum_accept = 0.0
    n_leapfrog = 0
    divergent = False
    depth = 0

    while depth < max_depth:
        direction = 1 if rng.integers(0, 2) == 1 else -1
        if direction > 0:
            sub = _build_tree(depth, q_plus, p_plus, g_plus, direction, eps, h0, post, inv_mass, rng)
        else:
            sub = _build_tree(depth, q_minus, p_minus, g_minus, direction, eps, h0, post, inv_mass, rng)
        sum_accept += sub.sum_accept
        n_leapfrog += sub.n_leapfrog
        if sub.divergent:
            divergent = True
            break
        if sub.turning:
            break

        # biased progressive sampling: the freshly built half of the
        # trajectory is accepted with min(1, w_new/w_old), which favors
        # states far from the current point and reduces autocorrelation
        if math.log(rng.uniform()) < sub.log_sum_w - log_sum_w:
            q_prop, lp_prop, g_prop, h_prop = sub.q_prop, sub.lp_prop, sub.g_prop, sub.h_prop
        log_sum_w = _logaddexp(log_sum_w, sub.log_sum_w)

        if direction > 0:
            q_plus, p_plus, g_plus = sub.q_plus, sub.p_plus, sub.g_plus
        else:
            q_minus, p_minus, g_minus = sub.q_minus, sub.p_minus, sub.g_minus
        depth += 1
        if _is_turning(q_minus, p_minus, q_plus, p_plus, inv_mass):
            break

    stats = _TransitionStats(
        accept_stat=sum_accept / max(1, n_leapfrog),
        divergent=divergent,
        n_leapfrog=n_leapfrog,
        energy_error=h_prop - h0,
        depth=depth,
    )
    return q_prop, lp_prop, g_prop, stats


# ---------------------------------------------------------------------------
# Adaptation
# ---------------------------------------------------------------------------


class _DualAveraging:
    """Nesterov dual averaging of log step size toward a target acceptance."""

    def __init__(self, initial_step, target, gamma=0.05, t0=10.0, kappa=0.75):
        self.mu = math.log(10.0 * initial_step)
        self.target = target
        self.gamma = gamma
        self.t0 = t0
        self.kappa = kappa
        self.log_eps = math.log(initial_step)
        self.log_eps_bar = math.log(initial_step)
        self.h_bar = 0.0
        self.t = 0

    def update(self, accept_stat: float) -> float:
        self.t += 1
        eta = 1.0 / (self.t + self.t0)
        self.h_bar = (1.0 - eta) * self.h_bar + eta * (self.target - accept_stat)
        self.log_eps = self.mu - math.sqrt(self.t) / self.gamma * self.h_bar
        w = self.t ** (-self.kappa)
        self.log_eps_bar = w * self.log_eps + (1.0 - w) * self.log_eps_bar
        return math.exp(self.log_eps)

    @property
    def averaged_step(self) -> float:
        return math.exp(self.log_eps_bar)


def _find_reasonable_step(post, q, lp, grad, inv_mass, mom_scale, rng) -> float:
    """Double/halve a unit step until one leapfrog crosses 50% acceptance."""
    eps = 1.0
    p = rng.standard_normal(q.shape[0]) * mom_scale
    h0 = _hamiltonian(lp, p, inv_mass)

    def log_ratio(step):
        _, p1, lp1, _ = leapfrog(q, p, grad, step, inv_mass, post.log_density_and_gradient)
        h1 = _hamiltonian(lp1, p1, inv_mass)
        return h0 - h1 if math.isfinite(h1) else -math.inf

    r = log_ratio(eps)
    direction = 1.0 if r > math.log(0.5) else -1.0
    for _ in range(60):
        if direction * r <= -direction * math.log(2.0):
            break
        eps *= 2.0**direction
        if not 1e-10 < eps < 1e7:
            break
        r = log_ratio(eps)
    return eps


def _estimate_windows(span: int, base: int = 25) -> list[int]:
    """Doubling sub-window sizes covering ``span`` iterations exactly."""
    windows: list[int] = []
    w, pos = base, 0
    while pos < span:
        size = min(w, span - pos)
        if span - (pos + size) < base:
            size = span - pos
        windows.append(size)
        pos += size
        w *= 2
    return windows


def _initial_point(prior: PriorConfig, rng) -> np.ndarray:
    """Prior draw truncated to two sd around the mean; alpha_harmed at its mean.

    A hard-monotonicity prior puts alpha_harmed near -50 where the likelihood
    carries no gradient information, so that coordinate starts exactly at the
    prior mean instead of a random tail value.
    """
    mean = prior.mean_vector()
    sd = prior.sd_vector()
    draw = np.empty(N_PARAMS)
    for i in range(N_PARAMS):
        while True:
            x = rng.normal(mean[i], sd[i])
            if abs(x - mean[i]) <= 2.0 * sd[i]:
                draw[i] = x
                break
    draw[2] = mean[2]
    return draw


def _chain_rng(seed: int, namespace: int, chain: int):
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(namespace, chain)))


# ---------------------------------------------------------------------------
# Main sampler
# ---------------------------------------------------------------------------


def _run_hmc_chain(post: CellPosterior, prior: PriorConfig, cfg: SamplerConfig, chain: int) -> ChainResult:
    rng = _chain_rng(cfg.seed, 0, chain)
    q = _initial_point(prior, rng)
    lp, grad = post.log_density_and_gradient(q)

    prior_var = prior.sd_vector() ** 2
    inv_mass = prior_var.copy()  # sensible starting scales; re-estimated below
    mom_scale = 1.0 / np.sqrt(inv_mass)

    eps = _find_reasonable_step(post, q, lp, grad, inv_mass, mom_scale, rng)
    da = _DualAveraging(eps, cfg.target_accept)

    settle = max(1, int(round(0.15 * cfg.n_warmup)))
    final = max(1, int(round(0.10 * cfg.n_warmup)))
    windows = _estimate_windows(cfg.n_warmup - settle - final)
    boundaries = set()
    pos = settle
    for w in windows:
        pos += w
        boundaries.add(pos)

    moved = False
    window_draws: list[np.ndarray] = []
    for i in range(1, cfg.n_warmup + 1):
        q_new, lp, grad, stats = _transition(q, lp, grad, eps, inv_mass, mom_scale, rng, cfg.max_depth, post)
        if not np.array_equal(q_new, q):
            moved = True
        q = q_new
        eps = da.update(stats.accept_stat)
        if i > settle:
            window_draws.append(q)
        if i in boundaries and len(window_draws) >= 5:
            draws = np.asarray(window_draws)
            n = draws.shape[0]
            var = draws.var(axis=0, ddof=1)
            # shrink toward the prior scales; keeps tiny windows sane
            inv_mass = (n / (n + 5.0)) * var + (5.0 / (n + 5.0)) * prior_var
            mom_scale = 1.0 / np.sqrt(inv_mass)
            window_draws = []
            # keep the current step size, restart the averaging around it
            da = _DualAveraging(eps, cfg.target_accept)

    if not moved:
        raise SamplingError(
            f"chain {chain}: no proposal was accepted during the entire warmup; "
            "the posterior is likely degenerate or misspecified"
        )

    eps = da.averaged_step
    draws = np.empty((cfg.n_sampling, N_PARAMS))
    divergences = 0
    accept_sum = 0.0
    energy_sum = 0.0
    for i in range(cfg.n_sampling):
        q, lp, grad, stats = _transition(q, lp, grad, eps, inv_mass, mom_scale, rng, cfg.max_depth, post)
        draws[i] = q
        divergences += int(stats.divergent)
        accept_sum += stats.accept_stat
        energy_sum += stats.energy_error

    return ChainResult(
        draws=draws,
        divergences=divergences,
        mean_accept=accept_sum / cfg.n_sampling,
        step_size=eps,
        inv_mass_diag=inv_mass,
        mean_energy_error=energy_sum / cfg.n_sampling,
    )


def _diagnose(chains: list[ChainResult], n_sampling: int) -> tuple[np.ndarray, np.ndarray, list[str]]:
    by_chain = np.stack([c.draws for c in chains])
    rhat = rhat_per_param(by_chain)
    ess_vals = ess_per_param(by_chain)
    warnings: list[str] = []
    total_div = sum(c.divergences for c in chains)
    if total_div > DIVERGENCE_WARN_FRACTION * len(chains) * n_sampling:
        warnings.append(
            f"{total_div} divergent transitions "
            f"({total_div / (len(chains) * n_sampling):.1%} of sampling iterations)"
        )
    bad = np.flatnonzero(rhat > RHAT_WARN)
    if bad.size:
        names = ", ".join(f"{PARAM_NAMES[j]}={rhat[j]:.3f}" for j in bad)
        warnings.append(f"split R-hat above {RHAT_WARN}: {names}")
    return rhat, ess_vals, warnings


def run_chains(counts: CellCounts, prior: PriorConfig, cfg: SamplerConfig) -> PosteriorDraws:
    """Posterior draws for one covariate cell.

    Chains are initialized from independent truncated prior draws and run
    sequentially; results depend only on (counts, prior, cfg).  Diagnostic
    problems (divergences over 1%, R-hat above 1.01) are reported in
    ``warnings`` rather than raised; the only fatal condition is a warmup in
    which no proposal is ever accepted.
    """
    post = CellPosterior(counts, prior)
    chains = [_run_hmc_chain(post, prior, cfg, c) for c in range(cfg.n_chains)]
    rhat, ess_vals, warnings = _diagnose(chains, cfg.n_sampling)
    return PosteriorDraws(chains=chains, rhat=rhat, ess=ess_vals, warnings=warnings, method="hmc")


# ---------------------------------------------------------------------------
# Random-walk Metropolis reference sampler
# ---------------------------------------------------------------------------


def _run_rwm_chain(post, prior, n_iters, n_warmup, seed, chain) -> ChainResult:
    rng = _chain_rng(seed, 1, chain)
    q = _initial_point(prior, rng)
    lp = post.log_density(q)

    prior_sd = prior.sd_vector()
    sd_est = prior_sd.copy()
    log_scale = math.log(2.38 / math.sqrt(N_PARAMS))
    recent: list[np.ndarray] = []

    n_keep = n_iters - n_warmup
    draws = np.empty((n_keep, N_PARAMS))
    accept_sum = 0.0
    for t in range(1, n_iters + 1):
        step = math.exp(log_scale) * sd_est
        proposal = q + rng.standard_normal(N_PARAMS) * step
        lp_new = post.log_density(proposal)
        log_alpha = min(0.0, lp_new - lp)
        alpha = math.exp(log_alpha)
        if rng.uniform() < alpha:
            q, lp = proposal, lp_new
        if t <= n_warmup:
            log_scale += (alpha - 0.234) * t**-0.6
            recent.append(q)
            if t % 200 == 0:
                window = np.asarray(recent[-200:])
                sd = window.std(axis=0, ddof=1)
                sd_est = np.clip(sd, 0.05 * prior_sd, 10.0 * prior_sd)
        else:
            draws[t - n_warmup - 1] = q
            accept_sum += alpha

    return ChainResult(
        draws=draws,
        divergences=0,
        mean_accept=accept_sum / max(1, n_keep),
        step_size=math.exp(log_scale),
        inv_mass_diag=sd_est**2,
        mean_energy_error=float("nan"),
    )


def rwm_reference(
    counts: CellCounts,
    prior: PriorConfig,
    n_iters: int,
    seed: int,
    n_chains: int = 1,
    n_warmup: int | None = None,
) -> PosteriorDraws:
    """Adaptive random-walk Metropolis on the same log posterior.

    Exists solely to cross-validate the gradient-based sampler.  ``n_iters``
    counts total iterations per chain; the first half (by default) adapts the
    proposal and is discarded.
    """
    if n_iters < 4:
        raise ValueError("n_iters too small")
    if n_warmup is None:
        n_warmup = n_iters // 2
    if not 0 < n_warmup < n_iters:
        raise ValueError("n_warmup must lie strictly inside (0, n_iters)")
    post = CellPosterior(counts, prior)
    chains = [_run_rwm_chain(post, prior, n_iters, n_warmup, seed, c) for c in range(n_chains)]
    rhat, ess_vals, warnings = _diagnose(chains, n_iters - n_warmup)
    return PosteriorDraws(chains=chains, rhat=rhat, ess=ess_vals, warnings=warnings, method="rwm")
