import math

import numpy as np
import pytest
from scipy.special import ndtr

from blpp_lab import GridSpec, TruncationPolicy, ks_distance, sample_brownian
from blpp_lab.busemann import increment_atom
from blpp_lab.cgm import (DiscreteQueuePair, cgm_scaled_pair, d_discrete,
                          departures_walk, phi_k, phi_map, reflect_path,
                          reflection_identity_check, rescaled_drift,
                          rescaled_path_drift_fit, sh_correspondence_check)
from blpp_lab.env import ROLE_SEED, RngPolicy
from blpp_lab.errors import ConfigurationError, TruncationError


class TestDiscreteQueue:
    def test_zero_service_returns_arrivals(self):
        rng = np.random.default_rng(1)
        I = rng.exponential(1.0, 500)
        pair = DiscreteQueuePair(I, np.zeros(500))
        out = d_discrete(pair, require_stability=False)
        assert np.allclose(out, I, rtol=0, atol=1e-12)

    def test_constant_hand_case(self):
        pair = DiscreteQueuePair(np.full(400, 2.0), np.full(400, 1.0))
        out = d_discrete(pair)
        assert np.allclose(out, 2.0, rtol=0, atol=1e-12)

    def test_nonnegative_and_stability_guard(self):
        rng = np.random.default_rng(2)
        I = rng.exponential(2.0, 2000)
        om = rng.exponential(1.0, 2000)
        out = d_discrete(DiscreteQueuePair(I, om))
        assert out.min() >= -1e-12
        with pytest.raises(ConfigurationError):
            d_discrete(DiscreteQueuePair(om, I))

    def test_exponential_output_mean(self):
        """Departures of an Exp(alpha) arrival stream against Exp(1) services
        keep the arrival mean 1/alpha."""
        alpha = 0.5
        rng = np.random.default_rng(3)
        means = []
        for _ in range(40):
            I = rng.exponential(1.0 / alpha, 4000)
            om = rng.exponential(1.0, 4000)
            out = d_discrete(DiscreteQueuePair(I, om))
            means.append(out[:2000].mean())
        m = float(np.mean(means))
        se = float(np.std(means, ddof=1) / math.sqrt(len(means)))
        assert abs(m - 1.0 / alpha) < 4 * se

    def test_walk_sticking_is_exact(self):
        rng = np.random.default_rng(4)
        I2 = rng.exponential(1.0 / 0.4, 3000)
        I1 = rng.exponential(1.0 / 1.2, 3000)
        pair = DiscreteQueuePair(arrivals=I2, services=I1)
        walk_out = departures_walk(pair)
        walk_in = np.concatenate([[0.0], np.cumsum(I1)])
        ties = walk_out == walk_in
        assert ties.any()          # genuine sticking stretch near the origin
        assert not ties.all()


class TestScaledBridge:
    def test_equal_drifts_coincide(self, policy):
        pair = cgm_scaled_pair(1.0, 1.0, 100, policy, trial=0)
        assert np.array_equal(pair.first, pair.second)

    def test_first_coordinate_donsker(self, policy):
        """Scaled first coordinate at t = 1 approaches N(lam1, 1)."""
        k = 2500
        lam1 = 0.0
        vals = np.array([
            cgm_scaled_pair(lam1, 1.0, k, policy, trial=tr,
                            horizon_exponent=20.0).increment(1.0)[0]
            for tr in range(800)
        ])
        ks = ks_distance(vals, lambda z: ndtr(z - lam1))
        assert ks < 0.06

    def test_sticking_frequency_approaches_atom(self, policy):
        """Exact-tie frequency at t = 1 approaches the continuum atom as k grows."""
        freqs = []
        for k in (100, 2000):
            stick = [
                cgm_scaled_pair(0.0, 1.0, k, policy, trial=tr,
                                horizon_exponent=20.0).sticking_at(1.0)
                for tr in range(600)
            ]
            freqs.append(float(np.mean(stick)))
        target = increment_atom(1.0, 1.0)
        assert abs(freqs[1] - target) < abs(freqs[0] - target) + 0.05
        assert abs(freqs[1] - target) < 0.08

    def test_window_guard(self, policy):
        with pytest.raises(ConfigurationError):
            cgm_scaled_pair(1.0, 0.5, 100, policy)  # lam1 > lam2
        with pytest.raises(ConfigurationError):
            cgm_scaled_pair(0.0, 1.0, 10, policy)   # k too small


class TestReflectedMaps:
    def test_reflection_is_involution(self, small_grid, policy):
        p = sample_brownian(small_grid, 0.7, 1.0, policy, 5)
        q = reflect_path(reflect_path(p))
        assert np.array_equal(q.values, p.values)
        assert q.grid == p.grid

    def test_phi_pins_at_zero(self, small_grid, policy, trunc):
        Z = sample_brownian(small_grid, 0.8, 1.0, policy, 6)
        B = sample_brownian(small_grid, 0.0, 1.0, policy, 7)
        f, g = reflect_path(B), reflect_path(Z)
        out = phi_map(f, g, trunc)
        assert out.values[out.grid.zero_index] == 0.0

    def test_reflection_identity_exact(self, small_grid, policy, trunc):
        Z = sample_brownian(small_grid, 0.8, 1.0, policy, 8)
        B = sample_brownian(small_grid, 0.0, 1.0, policy, 9)
        assert reflection_identity_check(Z, B, trunc) <= 1e-13

    def test_phi_k_matches_iterated_transform(self, small_grid, policy, trunc):
        rep = sh_correspondence_check((0.7, 1.5, 2.4), small_grid, trunc, policy, trials=3)
        assert rep.max_rel_discrepancy <= 1e-12

    def test_single_component_is_identity(self, small_grid, policy, trunc):
        Z = sample_brownian(small_grid, 0.9, 1.0, policy, 10)
        f = reflect_path(Z)
        out = phi_k([f], trunc)
        assert len(out) == 1
        assert np.array_equal(out[0].values, f.values)


class TestRescaling:
    def test_rescaled_drift_converges(self):
        for alpha in (0.25, 0.5, 1.0):
            errs = [abs(rescaled_drift(alpha, n) - alpha) for n in (1e2, 1e3, 1e4)]
            assert errs[0] > errs[1] > errs[2]
            assert errs[2] / alpha < 0.1

    def test_drift_fit_oracle(self, policy):
        alpha = 0.5
        fit = rescaled_path_drift_fit(alpha, 1e4, policy, trials=64)
        assert abs(fit - alpha) / alpha < 0.1
