import math

import numpy as np
import pytest

from quantcap.neural import (CheckpointFormatError, GaussianPolicyOutput,
                             adam_step, gaussian_log_prob_grad,
                             init_adam, init_mlp, kl_diag_gaussian_grad,
                             load_checkpoint, mlp_backward, mlp_forward,
                             save_checkpoint)


def small_net(head="gaussian_policy", seed=0, sizes=(5, 8, 7, 6)):
    out = 6 if head == "gaussian_policy" else 1
    return init_mlp([*sizes, out], head=head, seed=seed)


def flatten_params(params):
    return np.concatenate([w.ravel() for w in params.weights]
                          + [b.ravel() for b in params.biases])


def set_flat_params(params, flat):
    out = params.copy()
    pos = 0
    for i, w in enumerate(out.weights):
        out.weights[i] = flat[pos:pos + w.size].reshape(w.shape)
        pos += w.size
    for i, b in enumerate(out.biases):
        out.biases[i] = flat[pos:pos + b.size]
        pos += b.size
    return out


class TestForward:
    def test_zero_parameters_give_zero_outputs(self):
        net = small_net()
        for i in range(len(net.weights)):
            net.weights[i] = np.zeros_like(net.weights[i])
        out = mlp_forward(net, np.zeros(5))
        np.testing.assert_array_equal(out.mean, 0.0)
        np.testing.assert_array_equal(out.log_std, 0.0)

    def test_single_linear_unit(self):
        net = init_mlp([1, 1, 1], head="scalar", seed=0)
        net.weights[0][:] = 1.0
        net.weights[1][:] = 1.0
        net.biases[0][:] = 0.0
        net.biases[1][:] = 0.0
        assert mlp_forward(net, np.array([0.0])) == 0.0  # tanh(0) = 0
        assert mlp_forward(net, np.array([0.3])) == pytest.approx(
            math.tanh(0.3))

    def test_deterministic(self):
        net = small_net(seed=7)
        x = np.linspace(-1, 1, 5)
        a = mlp_forward(net, x)
        b = mlp_forward(net, x)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.log_std, b.log_std)

    def test_batch_matches_single(self, rng):
        net = small_net(seed=3)
        xs = rng.normal(size=(4, 5))
        batch = mlp_forward(net, xs)
        for i in range(4):
            single = mlp_forward(net, xs[i])
            np.testing.assert_allclose(batch.mean[i], single.mean, atol=0)
            np.testing.assert_allclose(batch.log_std[i], single.log_std, atol=0)

    def test_log_std_clamped(self):
        net = small_net(seed=1)
        net.biases[-1][3:] = 50.0  # push log-std raw outputs far out
        out = mlp_forward(net, np.zeros(5))
        assert np.all(out.log_std <= 1.0)
        assert np.all(out.log_std >= -5.0)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            mlp_forward(small_net(), np.zeros(4))


class TestGaussianLogProb:
    def test_at_mean_unit_std(self):
        out = GaussianPolicyOutput(mean=np.array([0.7]),
                                   log_std=np.array([0.0]))
        lp, (d_mu, d_ls) = gaussian_log_prob_grad(out, np.array([0.7]))
        assert lp == pytest.approx(-0.5 * math.log(2 * math.pi))
        assert d_mu[0] == 0.0
        assert d_ls[0] == -1.0

    def test_one_sigma_away(self):
        out = GaussianPolicyOutput(mean=np.array([0.0]),
                                   log_std=np.array([0.5]))
        sigma = math.exp(0.5)
        lp, (d_mu, d_ls) = gaussian_log_prob_grad(out, np.array([sigma]))
        assert d_mu[0] == pytest.approx(1.0 / sigma)
        assert d_ls[0] == pytest.approx(0.0, abs=1e-12)

    def test_gradients_match_finite_differences(self, rng):
        h = 1e-5
        for _ in range(100):
            dim = int(rng.integers(1, 5))
            mean = rng.normal(size=dim)
            log_std = rng.uniform(-1.0, 0.5, size=dim)
            action = mean + np.exp(log_std) * rng.normal(size=dim)
            _, (d_mu, d_ls) = gaussian_log_prob_grad(
                GaussianPolicyOutput(mean, log_std), action)
            for i in range(dim):
                for arr, grad in ((mean, d_mu), (log_std, d_ls)):
                    up, dn = arr.copy(), arr.copy()
                    up[i] += h
                    dn[i] -= h
                    if arr is mean:
                        lp_up, _ = gaussian_log_prob_grad(
                            GaussianPolicyOutput(up, log_std), action)
                        lp_dn, _ = gaussian_log_prob_grad(
                            GaussianPolicyOutput(dn, log_std), action)
                    else:
                        lp_up, _ = gaussian_log_prob_grad(
                            GaussianPolicyOutput(mean, up), action)
                        lp_dn, _ = gaussian_log_prob_grad(
                            GaussianPolicyOutput(mean, dn), action)
                    fd = (lp_up - lp_dn) / (2 * h)
                    scale = max(1.0, abs(fd))
                    assert abs(grad[i] - fd) / scale < 1e-4


class TestKlDiagGaussian:
    def test_identical_distributions(self):
        out = GaussianPolicyOutput(np.array([1.0, -2.0]),
                                   np.array([0.3, -0.7]))
        kl, (d_mu, d_ls) = kl_diag_gaussian_grad(out, out)
        assert kl == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(d_mu, 0.0, atol=1e-12)
        np.testing.assert_allclose(d_ls, 0.0, atol=1e-12)

    def test_unit_mean_shift(self):
        old = GaussianPolicyOutput(np.array([0.0]), np.array([0.0]))
        new = GaussianPolicyOutput(np.array([1.0]), np.array([0.0]))
        kl, _ = kl_diag_gaussian_grad(old, new)
        assert kl == pytest.approx(0.5)

    def test_gradients_match_finite_differences(self, rng):
        h = 1e-5
        for _ in range(100):
            dim = int(rng.integers(1, 5))
            old = GaussianPolicyOutput(rng.normal(size=dim),
                                       rng.uniform(-1, 0.5, size=dim))
            mean_n = rng.normal(size=dim)
            ls_n = rng.uniform(-1, 0.5, size=dim)
            _, (d_mu, d_ls) = kl_diag_gaussian_grad(
                old, GaussianPolicyOutput(mean_n, ls_n))
            for i in range(dim):
                up, dn = mean_n.copy(), mean_n.copy()
                up[i] += h
                dn[i] -= h
                fd = (kl_diag_gaussian_grad(old, GaussianPolicyOutput(up, ls_n))[0]
                      - kl_diag_gaussian_grad(old, GaussianPolicyOutput(dn, ls_n))[0]) / (2 * h)
                assert abs(d_mu[i] - fd) / max(1.0, abs(fd)) < 1e-4
                up, dn = ls_n.copy(), ls_n.copy()
                up[i] += h
                dn[i] -= h
                fd = (kl_diag_gaussian_grad(old, GaussianPolicyOutput(mean_n, up))[0]
                      - kl_diag_gaussian_grad(old, GaussianPolicyOutput(mean_n, dn))[0]) / (2 * h)
                assert abs(d_ls[i] - fd) / max(1.0, abs(fd)) < 1e-4


class TestBackward:
    def test_zero_upstream_gives_zero_grads(self, rng):
        net = small_net(seed=5)
        x = rng.normal(size=5)
        zero = np.zeros(net.action_dim)
        w_g, b_g = mlp_backward(net, x, (zero, zero))
        assert all(np.all(g == 0) for g in w_g)
        assert all(np.all(g == 0) for g in b_g)

    def test_linear_single_weight(self):
        # scalar net 1 -> 1 with identity-ish path: d(out)/dW_last = hidden act
        net = init_mlp([1, 1, 1], head="scalar", seed=0)
        net.weights[0][:] = 1.0
        net.weights[1][:] = 1.0
        net.biases[0][:] = 0.0
        net.biases[1][:] = 0.0
        x = np.array([0.4])
        w_g, b_g = mlp_backward(net, x, np.array([1.0]))
        assert w_g[1][0, 0] == pytest.approx(math.tanh(0.4))
        assert b_g[1][0] == 1.0

    @pytest.mark.parametrize("head", ["gaussian_policy", "scalar"])
    def test_gradients_match_finite_differences(self, head, rng):
        h = 1e-5
        for trial in range(100):
            net = small_net(head=head, seed=trial, sizes=(3, 4, 4, 3))
            x = rng.normal(size=3)
            if head == "gaussian_policy":
                up = (rng.normal(size=net.action_dim),
                      rng.normal(size=net.action_dim))

                def value(p):
                    out = mlp_forward(p, x)
                    return float(up[0] @ out.mean + up[1] @ out.log_std)
            else:
                up = float(rng.normal())

                def value(p):
                    return up * mlp_forward(p, x)

            w_g, b_g = mlp_backward(net, x, up)
            analytic = np.concatenate([g.ravel() for g in w_g]
                                      + [g.ravel() for g in b_g])
            flat0 = flatten_params(net)
            idx = rng.choice(flat0.size, size=min(12, flat0.size),
                             replace=False)
            for i in idx:
                hi, lo = flat0.copy(), flat0.copy()
                hi[i] += h
                lo[i] -= h
                fd = (value(set_flat_params(net, hi))
                      - value(set_flat_params(net, lo))) / (2 * h)
                assert abs(analytic[i] - fd) / max(1.0, abs(fd)) < 1e-4


class TestAdam:
    def test_zero_gradient_keeps_parameters(self):
        net = small_net(seed=2)
        state = init_adam(net, lr=1e-3)
        grads = ([np.zeros_like(w) for w in net.weights],
                 [np.zeros_like(b) for b in net.biases])
        new_net, new_state = adam_step(state, net, grads)
        assert new_state.step == 1
        for a, b in zip(net.weights, new_net.weights):
            np.testing.assert_array_equal(a, b)

    def test_first_step_magnitude(self):
        # bias-corrected first step moves each coordinate by ~lr
        net = small_net(seed=2)
        state = init_adam(net, lr=1e-3)
        grads = ([np.full_like(w, 0.37) for w in net.weights],
                 [np.full_like(b, 0.37) for b in net.biases])
        new_net, _ = adam_step(state, net, grads)
        delta = new_net.weights[0] - net.weights[0]
        np.testing.assert_allclose(delta, 1e-3, rtol=1e-6)

    def test_ascent_direction(self):
        net = small_net(seed=2)
        state = init_adam(net, lr=1e-2)
        grads = ([np.ones_like(w) for w in net.weights],
                 [np.ones_like(b) for b in net.biases])
        new_net, _ = adam_step(state, net, grads)
        assert np.all(new_net.weights[0] > net.weights[0])

    def test_deterministic(self):
        net = small_net(seed=4)
        grads = ([np.full_like(w, 0.1) for w in net.weights],
                 [np.full_like(b, 0.1) for b in net.biases])
        a, _ = adam_step(init_adam(net, 1e-3), net, grads)
        b, _ = adam_step(init_adam(net, 1e-3), net, grads)
        for wa, wb in zip(a.weights, b.weights):
            np.testing.assert_array_equal(wa, wb)


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, rng):
        net = small_net(seed=9)
        state = init_adam(net, lr=1e-3)
        grads = ([rng.normal(size=w.shape) for w in net.weights],
                 [rng.normal(size=b.shape) for b in net.biases])
        net, state = adam_step(state, net, grads)
        path = tmp_path / "net.json"
        save_checkpoint(path, net, state)
        loaded, adam = load_checkpoint(path)
        x = rng.normal(size=5)
        a = mlp_forward(net, x)
        b = mlp_forward(loaded, x)
        np.testing.assert_array_equal(a.mean, b.mean)
        np.testing.assert_array_equal(a.log_std, b.log_std)
        assert adam.step == state.step

    def test_version_mismatch_names_both(self, tmp_path):
        net = small_net()
        path = tmp_path / "net.json"
        save_checkpoint(path, net)
        text = path.read_text().replace('"version": 1', '"version": 99')
        path.write_text(text)
        with pytest.raises(CheckpointFormatError, match="99.*1|1.*99"):
            load_checkpoint(path)

    def test_truncated_file_rejected(self, tmp_path):
        net = small_net()
        path = tmp_path / "net.json"
        save_checkpoint(path, net)
        path.write_text(path.read_text()[:100])
        with pytest.raises(CheckpointFormatError):
            load_checkpoint(path)
