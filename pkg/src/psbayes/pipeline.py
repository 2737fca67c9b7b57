"""End-to-end orchestration: records -> counts -> posteriors -> summaries.

Configuration comes from an optional JSON file; command-line overrides win
over the file, which wins over defaults.  Every analysis is deterministic
given the resolved master seed: each covariate cell gets its own derived
seed (stable under cell relabeling because cells are processed in sorted
order), and each mode of the monotonicity sensitivity analysis reuses the
same seeds so mode comparisons are paired.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from ._version import SCHEMA_VERSION, __version__
from .data_io import SubjectRecord, aggregate, summarize
from .estimands import (
    CovariateDistribution,
    EstimandSummary,
    MarginalDraws,
    marginalize,
    numerator_bounds,
    risk_ratio_summary,
)
from .model import LOGIT_03, PARAM_NAMES, CellCounts, MonotonicityMode, PriorConfig
from .sampler import PosteriorDraws, SamplerConfig, run_chains

DEFAULT_SEED = 20240808
ALL_MODES = ("hard", "weak", "none")


def load_config(path) -> dict:
    """Read a JSON config file; ``None`` means all defaults."""
    if path is None:
        return {}
    with Path(path).open(encoding="utf-8") as fh:
        cfg = json.load(fh)
    if not isinstance(cfg, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    return cfg


def _pair(d: Mapping, key: str, default: tuple[float, float]) -> tuple[float, float]:
    sub = d.get(key)
    if sub is None:
        return default
    mean = sub.get("mean", default[0])
    if mean is None:
        mean = default[0]
    return float(mean), float(sub.get("sd", default[1]))


def build_prior(config: Mapping | None, mode: str) -> PriorConfig:
    """PriorConfig from the config file's ``prior`` section plus a mode."""
    config = config or {}
    harmed = config.get("harmed")
    return PriorConfig(
        alpha_prior=_pair(config, "alpha", (0.0, 2.0)),
        theta0_prior=_pair(config, "theta0", (LOGIT_03, 2.0)),
        delta_prior=_pair(config, "delta", (0.0, 2.0)),
        monotonicity_mode=MonotonicityMode(mode),
        harmed_prior=None if harmed is None else (float(harmed["mean"]), float(harmed["sd"])),
    )


def build_sampler_config(config: Mapping | None, seed_override: int | None = None) -> SamplerConfig:
    config = config or {}
    seed = seed_override if seed_override is not None else config.get("seed", DEFAULT_SEED)
    return SamplerConfig(
        n_chains=int(config.get("chains", 4)),
        n_warmup=int(config.get("warmup", 1000)),
        n_sampling=int(config.get("sampling", 1000)),
        seed=int(seed),
        target_accept=float(config.get("target_accept", 0.8)),
        max_leapfrog=int(config.get("max_leapfrog", 1024)),
    )


@dataclass(frozen=True)
class RunSettings:
    """Fully resolved analysis settings."""

    config: dict
    modes: tuple[str, ...]
    sampler: SamplerConfig
    weights_mode: str
    horizon: str
    p_b_range: tuple[float, float]
    p_b_points: int

    def prior_for(self, mode: str) -> PriorConfig:
        return build_prior(self.config.get("prior"), mode)


def resolve_settings(
    config: dict,
    mode: str | None = None,
    seed: int | None = None,
    weights: str | None = None,
    sensitivity: bool = False,
) -> RunSettings:
    if sensitivity:
        modes = ALL_MODES
    else:
        modes = (mode or config.get("prior", {}).get("mode", "hard"),)
    for m in modes:
        MonotonicityMode(m)  # validate early
    pb = config.get("p_benefiter", {})
    rng_lo, rng_hi = pb.get("range", (0.0, 1.0))
    return RunSettings(
        config=config,
        modes=tuple(modes),
        sampler=build_sampler_config(config.get("sampler"), seed_override=seed),
        weights_mode=weights or config.get("weights", "available"),
        horizon=str(config.get("horizon", "")),
        p_b_range=(float(rng_lo), float(rng_hi)),
        p_b_points=int(pb.get("points", 101)),
    )


def cell_seed(base_seed: int, cell_index: int) -> int:
    """Stable per-cell sampler seed derived from the master seed."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(2, cell_index))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class ModeAnalysis:
    """One monotonicity mode fitted across all covariate cells."""

    mode: str
    prior: PriorConfig
    per_cell: dict[str, PosteriorDraws]
    cell_seeds: dict[str, int]
    marginal: MarginalDraws
    summary: EstimandSummary

    @property
    def warnings(self) -> list[str]:
        out = []
        for cell, fit in self.per_cell.items():
            out.extend(f"[{cell}] {w}" for w in fit.warnings)
        return out


def analyze_mode(
    counts_by_cell: Mapping[str, CellCounts],
    mode: str,
    settings: RunSettings,
) -> ModeAnalysis:
    prior = settings.prior_for(mode)
    per_cell: dict[str, PosteriorDraws] = {}
    seeds: dict[str, int] = {}
    draws_by_cell: dict[str, np.ndarray] = {}
    for i, cell in enumerate(sorted(counts_by_cell)):
        seed = cell_seed(settings.sampler.seed, i)
        seeds[cell] = seed
        cfg = SamplerConfig(
            n_chains=settings.sampler.n_chains,
            n_warmup=settings.sampler.n_warmup,
            n_sampling=settings.sampler.n_sampling,
            seed=seed,
            target_accept=settings.sampler.target_accept,
            max_leapfrog=settings.sampler.max_leapfrog,
        )
        fit = run_chains(counts_by_cell[cell], prior, cfg)
        per_cell[cell] = fit
        draws_by_cell[cell] = fit.stacked()
    covdist = CovariateDistribution.from_counts(counts_by_cell, mode=settings.weights_mode)
    marginal = marginalize(draws_by_cell, covdist)
    summary = risk_ratio_summary(marginal, monotonicity_mode=mode, horizon=settings.horizon)
    return ModeAnalysis(
        mode=mode,
        prior=prior,
        per_cell=per_cell,
        cell_seeds=seeds,
        marginal=marginal,
        summary=summary,
    )


def _cell_diagnostics(fit: PosteriorDraws, seed: int) -> dict:
    return {
        "seed": seed,
        "rhat": {name: fit.rhat[j] for j, name in enumerate(PARAM_NAMES)},
        "ess": {name: fit.ess[j] for j, name in enumerate(PARAM_NAMES)},
        "divergences": [c.divergences for c in fit.chains],
        "step_size": [c.step_size for c in fit.chains],
        "mean_accept": [c.mean_accept for c in fit.chains],
        "mean_energy_error": [c.mean_energy_error for c in fit.chains],
        "warnings": list(fit.warnings),
    }


def _prior_echo(prior: PriorConfig) -> dict:
    return {
        "alpha": list(prior.alpha_prior),
        "theta0": list(prior.theta0_prior),
        "delta": list(prior.delta_prior),
        "harmed": list(prior.harmed_prior),
        "mode": prior.monotonicity_mode.value,
    }


def _document_header(settings: RunSettings, records: Sequence[SubjectRecord], counts) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "tool": {"name": "psbayes", "version": __version__},
        "config": {
            "horizon": settings.horizon,
            "modes": list(settings.modes),
            "weights_mode": settings.weights_mode,
            "seed": settings.sampler.seed,
            "sampler": {
                "chains": settings.sampler.n_chains,
                "warmup": settings.sampler.n_warmup,
                "sampling": settings.sampler.n_sampling,
                "target_accept": settings.sampler.target_accept,
                "max_leapfrog": settings.sampler.max_leapfrog,
            },
            "p_benefiter": {"range": list(settings.p_b_range), "points": settings.p_b_points},
        },
        "data": {
            "n_records": len(records),
            "n_complete": sum(1 for r in records if r.m == 0),
            "cells": sorted(counts),
            "summary": [row.to_dict() for row in summarize(counts)],
        },
    }


def run_fit(records: Sequence[SubjectRecord], settings: RunSettings) -> dict:
    """Full analysis document: bounds plus one posterior analysis per mode."""
    counts = aggregate(records)
    doc = _document_header(settings, records, counts)
    bounds = numerator_bounds(counts, p_b_range=settings.p_b_range, grid_points=settings.p_b_points)
    doc["bounds"] = bounds.to_dict()
    analyses = []
    for mode in settings.modes:
        result = analyze_mode(counts, mode, settings)
        analyses.append(
            {
                "mode": mode,
                "prior": _prior_echo(result.prior),
                "cells": {
                    cell: _cell_diagnostics(result.per_cell[cell], result.cell_seeds[cell])
                    for cell in sorted(result.per_cell)
                },
                "estimands": result.summary.to_dict(),
                "warnings": result.warnings,
            }
        )
    doc["analyses"] = analyses
    return doc


def run_bounds(records: Sequence[SubjectRecord], settings: RunSettings) -> dict:
    """Identification-bounds document (no sampling)."""
    counts = aggregate(records)
    doc = _document_header(settings, records, counts)
    bounds = numerator_bounds(counts, p_b_range=settings.p_b_range, grid_points=settings.p_b_points)
    doc["bounds"] = bounds.to_dict()
    return doc
