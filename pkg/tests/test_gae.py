"""Advantage estimation against a brute-force double-sum oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from canrl.errors import DimensionError
from canrl.ppo import compute_gae, normalize_advantages


def gae_oracle(rewards, values, dones, gamma, lam, last_value=0.0):
    """A_t = sum_l (gamma*lam)^l * delta_{t+l}, truncated at episode ends."""
    n = len(rewards)
    nxt = np.empty(n)
    for t in range(n):
        nxt[t] = values[t + 1] if t + 1 < n else last_value
    delta = rewards + gamma * nxt * (1 - dones) - values
    adv = np.zeros(n)
    for t in range(n):
        acc, w = 0.0, 1.0
        for l in range(t, n):
            acc += w * delta[l]
            if dones[l]:
                break
            w *= gamma * lam
        adv[t] = acc
    return adv


def random_rollout(rng, max_len=30):
    n = int(rng.integers(1, max_len + 1))
    rewards = rng.normal(size=n)
    values = rng.normal(size=n)
    dones = (rng.uniform(size=n) < 0.15).astype(float)
    dones[-1] = float(rng.uniform() < 0.7)  # sometimes truncated
    last_value = float(rng.normal())
    return rewards, values, dones, last_value


class TestAgainstOracle:
    def test_many_random_rollouts(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            rewards, values, dones, last_value = random_rollout(rng)
            gamma = float(rng.uniform(0.9, 1.0))
            lam = float(rng.uniform(0.8, 1.0))
            adv, ret = compute_gae(rewards, values, dones, gamma, lam, last_value)
            want = gae_oracle(rewards, values, dones, gamma, lam, last_value)
            assert np.max(np.abs(adv - want)) < 1e-10
            assert np.allclose(ret, adv + values, atol=1e-12)

    @given(st.integers(0, 10_000))
    @settings(max_examples=60, deadline=None)
    def test_property_matches_oracle(self, seed):
        rng = np.random.default_rng(seed)
        rewards, values, dones, last_value = random_rollout(rng, max_len=12)
        adv, _ = compute_gae(rewards, values, dones, 0.99, 0.95, last_value)
        want = gae_oracle(rewards, values, dones, 0.99, 0.95, last_value)
        assert np.max(np.abs(adv - want)) < 1e-10


class TestSpecialCases:
    def test_lambda_zero_is_td_error(self):
        rewards = np.array([1.0, 0.5, -0.2, 2.0])
        values = np.array([0.3, 0.1, 0.7, -0.4])
        dones = np.array([0.0, 0.0, 0.0, 1.0])
        adv, _ = compute_gae(rewards, values, dones, 0.9, 0.0)
        delta = np.array(
            [
                1.0 + 0.9 * 0.1 - 0.3,
                0.5 + 0.9 * 0.7 - 0.1,
                -0.2 + 0.9 * (-0.4) - 0.7,
                2.0 - (-0.4),
            ]
        )
        assert np.allclose(adv, delta, atol=1e-12)

    def test_undiscounted_montecarlo_limit(self):
        # gamma = lam = 1, zero values: advantage is reward-to-go
        rewards = np.array([1.0, 2.0, 3.0, 4.0])
        values = np.zeros(4)
        dones = np.array([0.0, 0.0, 0.0, 1.0])
        adv, ret = compute_gae(rewards, values, dones, 1.0, 1.0)
        assert np.allclose(adv, [10.0, 9.0, 7.0, 4.0], atol=1e-12)
        assert np.allclose(ret, adv, atol=1e-12)

    def test_done_blocks_leakage_across_episodes(self):
        rewards = np.array([0.0, 0.0, 5.0, 0.0])
        values = np.array([0.0, 0.0, 0.0, 0.0])
        dones = np.array([0.0, 1.0, 0.0, 1.0])
        adv, _ = compute_gae(rewards, values, dones, 0.99, 0.95)
        # the second episode's big reward cannot reach the first episode
        assert adv[0] == pytest.approx(0.0)
        assert adv[1] == pytest.approx(0.0)
        assert adv[2] > 4.0

    def test_bootstrap_only_when_truncated(self):
        rewards = np.array([0.0])
        values = np.array([0.0])
        ended, _ = compute_gae(rewards, values, np.array([1.0]), 0.9, 0.95, last_value=10.0)
        cut, _ = compute_gae(rewards, values, np.array([0.0]), 0.9, 0.95, last_value=10.0)
        assert ended[0] == pytest.approx(0.0)
        assert cut[0] == pytest.approx(9.0)

    def test_shape_mismatch_raises(self):
        with pytest.raises(DimensionError):
            compute_gae(np.zeros(3), np.zeros(4), np.zeros(3), 0.99, 0.95)


class TestNormalization:
    def test_zero_mean_unit_std(self):
        rng = np.random.default_rng(1)
        adv = rng.normal(2.0, 3.0, size=512)
        out = normalize_advantages(adv)
        assert abs(out.mean()) < 1e-9
        assert abs(out.std() - 1.0) < 1e-6
