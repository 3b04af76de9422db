import numpy as np
import pytest

from quantcap.capacity import ba_capacity_power_constrained
from quantcap.channel import ChannelEnv, ReceiverConfig, transition_matrix
from quantcap.mi import (SampleBatch, create_estimator, draw_channel_samples,
                         estimate_capacity_sampled, neural_mi_lower_bound,
                         plugin_mi)
from quantcap.policy import init_environment


def siso_env(snr_db=10.0):
    return ChannelEnv(n_t=1, n_r=1, n_q=1, levels=2, H=[[1.0]], snr_db=snr_db)


def correlated_batch(n=4000, seed=0):
    x = np.random.default_rng(seed).integers(0, 2, n)
    return SampleBatch(n=n, x_idx=x, w_idx=x.copy(), snr_db=0.0, seed=seed,
                       n_inputs=2, n_outputs=2)


class TestDrawChannelSamples:
    def test_degenerate_distribution(self):
        env = siso_env()
        state = init_environment(env, 0, seed=0)
        batch = draw_channel_samples(state, [1.0, 0.0], env, 500, seed=1)
        assert (batch.x_idx == 0).all()

    def test_noiseless_hook_gives_deterministic_outputs(self):
        env = siso_env()
        state = init_environment(env, 0, seed=0)
        batch = draw_channel_samples(state, [0.5, 0.5], env, 2000, seed=2,
                                     noise_scale=0.0)
        # distinct cells: each input index always lands in its own cell
        for j in (0, 1):
            w = batch.w_idx[batch.x_idx == j]
            assert np.unique(w).size == 1

    def test_empirical_frequencies_concentrate(self):
        env = siso_env()
        state = init_environment(env, 0, seed=0)
        p = np.array([0.3, 0.7])
        n = 40_000
        batch = draw_channel_samples(state, p, env, n, seed=3)
        for j, pj in enumerate(p):
            freq = (batch.x_idx == j).mean()
            assert abs(freq - pj) <= 3 * np.sqrt(pj * (1 - pj) / n)

    def test_deterministic(self):
        env = siso_env()
        state = init_environment(env, 0, seed=0)
        a = draw_channel_samples(state, [0.5, 0.5], env, 100, seed=9)
        b = draw_channel_samples(state, [0.5, 0.5], env, 100, seed=9)
        np.testing.assert_array_equal(a.w_idx, b.w_idx)


class TestPluginMi:
    def test_constant_input_gives_zero(self):
        batch = SampleBatch(n=100, x_idx=np.zeros(100, dtype=int),
                            w_idx=np.random.default_rng(0).integers(0, 2, 100),
                            snr_db=0.0, seed=0, n_inputs=2, n_outputs=2)
        assert plugin_mi(batch) == 0.0

    def test_perfect_correlation_approaches_one_bit(self):
        assert plugin_mi(correlated_batch(n=20_000)) == pytest.approx(
            1.0, abs=0.01)

    def test_consistent_with_exact_solver(self):
        env = siso_env()
        state = init_environment(env, 0, seed=0)
        T = transition_matrix(state, env)
        res = ba_capacity_power_constrained(T, state.costs(), env.power)
        batch = draw_channel_samples(state, res.p_star, env, 100_000, seed=4)
        assert plugin_mi(batch) == pytest.approx(res.capacity_bits, abs=0.02)

    def test_non_negative(self, rng):
        for _ in range(10):
            n = 300
            batch = SampleBatch(
                n=n, x_idx=rng.integers(0, 3, n), w_idx=rng.integers(0, 4, n),
                snr_db=0.0, seed=0, n_inputs=3, n_outputs=4)
            assert plugin_mi(batch) >= 0.0


class TestNeuralBound:
    def test_independent_pair_near_zero(self):
        rng = np.random.default_rng(5)
        n = 4000
        batch = SampleBatch(n=n, x_idx=rng.integers(0, 2, n),
                            w_idx=rng.integers(0, 2, n), snr_db=0.0, seed=6,
                            n_inputs=2, n_outputs=2)
        est = create_estimator(2, 2, hidden=(32, 32, 32), seed=1)
        assert neural_mi_lower_bound(est, batch, train_steps=250) <= 0.02

    def test_correlated_pair_close_to_one_bit(self):
        batch = correlated_batch(n=4000, seed=7)
        est = create_estimator(2, 2, hidden=(32, 32, 32), seed=2)
        bound = neural_mi_lower_bound(est, batch, train_steps=400)
        assert bound >= 0.9
        assert bound <= plugin_mi(batch) + 0.05

    def test_degenerate_batch_returns_zero(self):
        batch = SampleBatch(n=50, x_idx=np.zeros(50, dtype=int),
                            w_idx=np.zeros(50, dtype=int), snr_db=0.0, seed=0,
                            n_inputs=2, n_outputs=2)
        est = create_estimator(2, 2, seed=3)
        assert neural_mi_lower_bound(est, batch, train_steps=10) == 0.0

    def test_bounded_by_plugin_on_random_states(self, rng):
        env = siso_env(snr_db=8.0)
        for k in range(3):
            state = ReceiverConfig(v=[[1.0]], t=[[float(rng.uniform(-1, 1))]],
                                   alphabet=rng.uniform(-4, 4, (2, 1)))
            batch = draw_channel_samples(state, [0.5, 0.5], env, 8000,
                                         seed=50 + k)
            est = create_estimator(2, env.n_outputs, hidden=(32, 32, 32),
                                   seed=60 + k)
            bound = neural_mi_lower_bound(est, batch, train_steps=300)
            assert bound <= plugin_mi(batch) + 0.05


class TestEstimateCapacitySampled:
    def test_single_point_alphabet(self):
        env = siso_env()
        state = ReceiverConfig(v=[[1.0]], t=[[0.0]], alphabet=[[1.0]])
        res = estimate_capacity_sampled(state, env, outer_steps=3, seed=0)
        assert res.capacity_bits == 0.0

    def test_symmetric_state_matches_solver(self):
        env = siso_env()
        state = init_environment(env, 0, seed=0)
        T = transition_matrix(state, env)
        exact = ba_capacity_power_constrained(T, state.costs(), env.power)
        res = estimate_capacity_sampled(state, env, mode="plugin",
                                        outer_steps=15, seed=1,
                                        samples_per_step=4096)
        assert res.capacity_bits == pytest.approx(exact.capacity_bits,
                                                  abs=0.03)
        np.testing.assert_allclose(res.p_star.p, 0.5, atol=0.1)

    def test_deterministic(self):
        env = siso_env()
        state = init_environment(env, 0, seed=0)
        a = estimate_capacity_sampled(state, env, outer_steps=5, seed=4)
        b = estimate_capacity_sampled(state, env, outer_steps=5, seed=4)
        assert a.capacity_bits == b.capacity_bits
        np.testing.assert_array_equal(a.p_star.p, b.p_star.p)

    def test_power_penalty_reported(self):
        env = siso_env(snr_db=0.0)
        state = ReceiverConfig(v=[[1.0]], t=[[0.0]],
                               alphabet=np.array([[-2.0], [2.0]]))
        res = estimate_capacity_sampled(state, env, outer_steps=4, seed=2)
        assert res.power_penalty > 0.0
