import math

import numpy as np
import pytest

from psbayes.diagnostics import ESS_CAP_FACTOR, ess, ess_per_param, rhat_per_param, split_rhat


class TestSplitRhat:
    def test_distinct_constant_chains_flagged(self):
        chains = np.vstack([np.zeros(100), np.ones(100)])
        r = split_rhat(chains)
        assert r > 1.2  # non-mixing must be detected
        assert math.isinf(r)

    def test_constant_chains_give_inf_sentinel_not_nan(self):
        chains = np.ones((3, 50))
        r = split_rhat(chains)
        assert math.isinf(r) and not math.isnan(r)

    def test_iid_normal_band(self):
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            chains = rng.standard_normal((4, 1000))
            assert 0.999 <= split_rhat(chains) <= 1.01

    def test_within_chain_trend_detected(self):
        rng = np.random.default_rng(7)
        drift = np.linspace(0, 4, 1000)
        chains = rng.standard_normal((4, 1000)) + drift
        assert split_rhat(chains) > 1.2

    def test_requires_enough_draws(self):
        with pytest.raises(ValueError):
            split_rhat(np.zeros((2, 3)))

    def test_single_chain_supported_via_split(self):
        rng = np.random.default_rng(3)
        assert 0.99 < split_rhat(rng.standard_normal((1, 2000))) < 1.01


class TestEss:
    def test_iid_normal_band(self):
        for seed in (0, 1, 2):
            rng = np.random.default_rng(seed)
            chains = rng.standard_normal((4, 1000))
            assert 2800 <= ess(chains) <= 4400

    def test_autocorrelated_chain_shrinks(self):
        # AR(1) with rho = 0.9 has true ESS factor (1-rho)/(1+rho) ~ 1/19
        rng = np.random.default_rng(5)
        rho = 0.9
        chains = np.empty((4, 1000))
        for c in range(4):
            x = rng.standard_normal(1000)
            for t in range(1, 1000):
                x[t] = rho * x[t - 1] + math.sqrt(1 - rho**2) * x[t]
            chains[c] = x
        estimate = ess(chains)
        assert 100 <= estimate <= 500  # around 4000/19 ~ 210

    def test_antithetic_chain_hits_cap(self):
        chains = np.tile([1.0, -1.0], 500)[None, :]
        assert ess(chains) == ESS_CAP_FACTOR * 1000

    def test_constant_chain_returns_cap(self):
        assert ess(np.ones((2, 100))) == ESS_CAP_FACTOR * 200

    def test_requires_enough_draws(self):
        with pytest.raises(ValueError):
            ess(np.zeros((1, 3)))


class TestPerParamHelpers:
    def test_shapes_and_consistency(self):
        rng = np.random.default_rng(11)
        draws = rng.standard_normal((4, 500, 3))
        r = rhat_per_param(draws)
        e = ess_per_param(draws)
        assert r.shape == (3,) and e.shape == (3,)
        assert r[0] == split_rhat(draws[:, :, 0])
        assert e[2] == ess(draws[:, :, 2])
