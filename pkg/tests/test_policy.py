"""Gaussian policy: densities, sampling, squashing, persistence."""

import numpy as np
import pytest

from fema.agents.policy import (
    LOGSTD_MIN,
    SQUASH_EPS,
    GaussianPolicy,
    policy_init,
)
from fema.errors import ConfigError, ShapeError

from oracles import gaussian_logpdf


def make_clip_policy(seed=0, d_s=3, d_a=2, init_logstd=-0.5):
    return policy_init(d_s, d_a, scale=1.0, squash="clip",
                       state_dependent_std=False, seed=seed, hidden=16,
                       init_logstd=init_logstd)


def make_tanh_policy(seed=0, d_s=3, d_a=2, scale=2.0):
    return policy_init(d_s, d_a, scale=scale, squash="tanh",
                       state_dependent_std=True, seed=seed, hidden=16)


class TestDensities:
    def test_clip_logprob_matches_closed_form(self):
        policy = make_clip_policy(seed=3)
        rng = np.random.default_rng(10)
        for _ in range(20):
            s = rng.standard_normal(3)
            a = rng.standard_normal(2)
            mu, sigma = policy.mean_std(s)
            want = sum(
                gaussian_logpdf(a[d], mu[d], sigma[d]) for d in range(2)
            )
            np.testing.assert_allclose(policy.log_prob(s, a), want, atol=1e-12)

    def test_tanh_logprob_matches_change_of_variables(self):
        policy = make_tanh_policy(seed=4)
        rng = np.random.default_rng(11)
        for _ in range(20):
            s = rng.standard_normal(3)
            u = rng.standard_normal(2) * 0.8
            a = policy.scale * np.tanh(u)
            mu, sigma = policy.mean_std(s)
            base = sum(
                gaussian_logpdf(u[d], mu[d], sigma[d]) for d in range(2)
            )
            corr = float(np.sum(
                np.log(policy.scale * (1.0 - np.tanh(u) ** 2) + SQUASH_EPS)
            ))
            np.testing.assert_allclose(policy.log_prob(s, a), base - corr,
                                       rtol=1e-9, atol=1e-9)

    def test_logprob_batched_matches_rowwise(self):
        policy = make_clip_policy(seed=5)
        rng = np.random.default_rng(12)
        s = rng.standard_normal((6, 3))
        a = rng.standard_normal((6, 2))
        batch = policy.log_prob(s, a)
        rows = np.array([policy.log_prob(s[i], a[i]) for i in range(6)])
        np.testing.assert_allclose(batch, rows, atol=1e-12)

    def test_logprob_shape_mismatch_rejected(self):
        policy = make_clip_policy()
        with pytest.raises(ShapeError):
            policy.log_prob(np.zeros(3), np.zeros(5))

    def test_entropy_formula(self):
        policy = make_clip_policy(seed=6, init_logstd=0.3)
        s = np.zeros(3)
        _, sigma = policy.mean_std(s)
        want = float(np.sum(np.log(sigma) + 0.5 * (np.log(2 * np.pi) + 1.0)))
        np.testing.assert_allclose(policy.entropy(s), want, atol=1e-12)


class TestSampling:
    def test_sample_consumes_one_normal_draw(self):
        policy = make_clip_policy(seed=7)
        s = np.array([0.3, -0.2, 0.5])
        a = policy.sample(s, np.random.default_rng(99))
        mu, sigma = policy.mean_std(s)
        eps = np.random.default_rng(99).standard_normal(mu.shape)
        np.testing.assert_allclose(a, mu + sigma * eps, atol=1e-15)

    def test_tanh_samples_stay_inside_scale(self):
        policy = make_tanh_policy(seed=8, scale=1.5)
        rng = np.random.default_rng(13)
        for _ in range(200):
            a = policy.sample(rng.standard_normal(3), rng)
            assert np.all(np.abs(a) < 1.5)

    def test_sample_statistics(self):
        policy = make_clip_policy(seed=9, init_logstd=-0.3)
        s = np.array([0.1, 0.2, -0.4])
        mu, sigma = policy.mean_std(s)
        rng = np.random.default_rng(14)
        draws = np.stack([policy.sample(s, rng) for _ in range(4000)])
        np.testing.assert_allclose(draws.mean(axis=0), mu,
                                   atol=4 * sigma.max() / np.sqrt(4000))
        np.testing.assert_allclose(draws.std(axis=0), sigma, rtol=0.1)

    def test_det_action_clip_variant(self):
        policy = make_clip_policy(seed=10)
        policy.mean_head.layers[0].b[:] = 100.0
        s = np.zeros(3)
        mu, _ = policy.mean_std(s)
        assert mu.max() > 1.0
        np.testing.assert_allclose(policy.det_action(s), np.clip(mu, -1, 1))

    def test_det_action_tanh_variant(self):
        policy = make_tanh_policy(seed=11, scale=2.0)
        s = np.array([0.5, -0.1, 0.2])
        mu, _ = policy.mean_std(s)
        np.testing.assert_allclose(policy.det_action(s), 2.0 * np.tanh(mu))

    def test_logstd_clamp_floors_sigma(self):
        policy = make_clip_policy(seed=12, init_logstd=-30.0)
        _, sigma = policy.mean_std(np.zeros(3))
        np.testing.assert_allclose(sigma, np.exp(LOGSTD_MIN), atol=1e-15)


class TestLifecycle:
    def test_round_trip_state_dependent(self):
        policy = make_tanh_policy(seed=20)
        back = GaussianPolicy.from_bytes(policy.to_bytes())
        s = np.random.default_rng(0).standard_normal((4, 3))
        a = np.tanh(np.random.default_rng(1).standard_normal((4, 2)))
        np.testing.assert_allclose(back.log_prob(s, a), policy.log_prob(s, a),
                                   atol=0.0)
        assert back.squash == "tanh"
        assert back.logstd_head is not None

    def test_round_trip_shared_logstd(self):
        policy = make_clip_policy(seed=21, init_logstd=-0.7)
        back = GaussianPolicy.from_bytes(policy.to_bytes())
        np.testing.assert_allclose(back.logstd_vec, policy.logstd_vec, atol=0.0)
        assert back.logstd_head is None
        s = np.random.default_rng(2).standard_normal(3)
        np.testing.assert_allclose(back.det_action(s), policy.det_action(s),
                                   atol=0.0)

    def test_copy_is_independent(self):
        policy = make_clip_policy(seed=22)
        dup = policy.copy()
        dup.logstd_vec += 1.0
        dup.trunk.layers[0].w += 1.0
        assert not np.allclose(dup.logstd_vec, policy.logstd_vec)
        assert not np.allclose(dup.trunk.layers[0].w, policy.trunk.layers[0].w)

    def test_params_order_and_count(self):
        shared = make_clip_policy()
        dependent = make_tanh_policy()
        # trunk: 2 layers -> 4 arrays; mean head: 2; tail: vec (1) or head (2)
        assert len(shared.params()) == 7
        assert shared.params()[-1] is shared.logstd_vec
        assert len(dependent.params()) == 8

    def test_init_rejects_bad_args(self):
        with pytest.raises(ConfigError):
            policy_init(3, 2, 1.0, "softmax", False, seed=0)
        with pytest.raises(ConfigError):
            policy_init(3, 2, 0.0, "tanh", True, seed=0)
        with pytest.raises(ConfigError):
            policy_init(3, 2, [1.0, -1.0], "clip", False, seed=0)

    def test_init_deterministic_in_seed(self):
        a = make_tanh_policy(seed=33)
        b = make_tanh_policy(seed=33)
        s = np.random.default_rng(3).standard_normal(3)
        np.testing.assert_allclose(a.det_action(s), b.det_action(s), atol=0.0)

    def test_heads_broadcast_shared_logstd(self):
        policy = make_clip_policy(seed=34)
        mu, ls, _ = policy.heads(np.zeros((5, 3)))
        assert mu.shape == (5, 2)
        assert ls.shape == (5, 2)
        np.testing.assert_allclose(ls, -0.5, atol=0.0)
