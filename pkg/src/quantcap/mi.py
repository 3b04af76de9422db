"""Sample-based mutual-information backends.

Both estimators operate on paired draws of (alphabet index, flat quantizer
output): a plug-in estimate from the empirical joint distribution, and a
trained variational lower bound (difference-of-expectations form with
shuffled-marginal negatives) for settings where a differentiable surrogate is
preferred. A softmax-parameterized input distribution can be ascended against
either estimate to approximate the channel capacity from samples alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .capacity import CapacityResult, InputDistribution
from .channel import ChannelEnv, ReceiverConfig, level_weights
from .neural import (MlpParams, adam_step, init_adam, init_mlp, mlp_backward,
                     mlp_forward)
from .seeding import derive_seed

LN2 = math.log(2.0)


@dataclass
class SampleBatch:
    """Paired channel samples: input indices and flat quantizer outputs."""

    n: int
    x_idx: np.ndarray
    w_idx: np.ndarray
    snr_db: float
    seed: int
    n_inputs: int
    n_outputs: int

    def __post_init__(self):
        self.x_idx = np.asarray(self.x_idx, dtype=np.int64)
        self.w_idx = np.asarray(self.w_idx, dtype=np.int64)
        if self.x_idx.size != self.n or self.w_idx.size != self.n:
            raise ValueError("index vectors must have length n")
        if self.x_idx.min(initial=0) < 0 or self.x_idx.max(initial=0) >= self.n_inputs:
            raise ValueError("x_idx out of range")
        if self.w_idx.min(initial=0) < 0 or self.w_idx.max(initial=0) >= self.n_outputs:
            raise ValueError("w_idx out of range")


def draw_channel_samples(state: ReceiverConfig, p, env: ChannelEnv, n: int,
                         seed: int, noise_scale: float = 1.0) -> SampleBatch:
    """Draw n i.i.d. (input index, quantized output) pairs under ``p``.

    ``noise_scale`` scales the receiver noise and exists for noiseless-limit
    tests.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    pv = p.p if isinstance(p, InputDistribution) else InputDistribution(p).p
    rng = np.random.default_rng(seed)
    x_idx = rng.choice(pv.size, size=n, p=pv)
    y = state.alphabet[x_idx] @ env.H.T
    y = y + noise_scale * rng.standard_normal((n, env.n_r))
    w = y @ state.v.T
    lv = np.empty((n, state.n_q), dtype=np.int64)
    for i in range(state.n_q):
        lv[:, i] = np.searchsorted(state.t[i], w[:, i], side="right")
    w_idx = lv @ level_weights(state.n_q, state.levels)
    return SampleBatch(n=n, x_idx=x_idx, w_idx=w_idx, snr_db=env.snr_db,
                       seed=seed, n_inputs=pv.size, n_outputs=env.n_outputs)


def _empirical_joint(batch: SampleBatch) -> np.ndarray:
    flat = batch.x_idx * batch.n_outputs + batch.w_idx
    counts = np.bincount(flat, minlength=batch.n_inputs * batch.n_outputs)
    return counts.reshape(batch.n_inputs, batch.n_outputs) / batch.n


def plugin_mi(batch: SampleBatch) -> float:
    """Mutual information of the empirical joint distribution, in bits."""
    joint = _empirical_joint(batch)
    px = joint.sum(axis=1, keepdims=True)
    pw = joint.sum(axis=0, keepdims=True)
    mask = joint > 0
    ratio = joint[mask] / (px @ pw)[mask]
    return max(0.0, float((joint[mask] * np.log(ratio)).sum()) / LN2)


@dataclass
class EstimatorParams:
    """Discriminator network plus its training hyperparameters.

    The input encoding is one-hot(input index) || one-hot(output index), so
    the discriminator input width is n_inputs + n_outputs.
    """

    discriminator: MlpParams
    n_inputs: int
    n_outputs: int
    batch_size: int = 512
    train_steps: int = 500
    lr: float = 1e-3

    def __post_init__(self):
        if self.discriminator.layer_sizes[0] != self.n_inputs + self.n_outputs:
            raise ValueError("discriminator input width must be n_inputs + n_outputs")
        if self.discriminator.head != "scalar":
            raise ValueError("discriminator must have a scalar head")


def create_estimator(n_inputs: int, n_outputs: int, hidden=(64, 64, 64),
                     seed: int = 0, batch_size: int = 512,
                     train_steps: int = 500, lr: float = 1e-3) -> EstimatorParams:
    net = init_mlp([n_inputs + n_outputs, *hidden, 1], head="scalar", seed=seed)
    return EstimatorParams(net, n_inputs, n_outputs, batch_size=batch_size,
                           train_steps=train_steps, lr=lr)


def _one_hot_pairs(x_idx, w_idx, n_inputs, n_outputs) -> np.ndarray:
    n = x_idx.size
    enc = np.zeros((n, n_inputs + n_outputs))
    enc[np.arange(n), x_idx] = 1.0
    enc[np.arange(n), n_inputs + w_idx] = 1.0
    return enc


def _degenerate(batch: SampleBatch) -> bool:
    return np.unique(batch.x_idx).size < 2 or np.unique(batch.w_idx).size < 2


def _dv_train(params: EstimatorParams, adam, batch: SampleBatch,
              train_steps: int, rng: np.random.Generator):
    """Ascend E_joint[f] - log E_shuffled[exp f] for ``train_steps`` minibatch
    steps; returns the updated (discriminator, adam)."""
    disc = params.discriminator
    bsz = min(params.batch_size, batch.n)
    for _ in range(train_steps):
        idx = rng.integers(0, batch.n, size=bsz)
        perm = rng.permutation(bsz)
        enc_joint = _one_hot_pairs(batch.x_idx[idx], batch.w_idx[idx],
                                   params.n_inputs, params.n_outputs)
        enc_marg = _one_hot_pairs(batch.x_idx[idx], batch.w_idx[idx][perm],
                                  params.n_inputs, params.n_outputs)
        f_m = mlp_forward(disc, enc_marg)
        soft = np.exp(f_m - logsumexp(f_m))
        gw_j, gb_j = mlp_backward(disc, enc_joint, np.full(bsz, 1.0 / bsz))
        gw_m, gb_m = mlp_backward(disc, enc_marg, -soft)
        grads = ([a + b for a, b in zip(gw_j, gw_m)],
                 [a + b for a, b in zip(gb_j, gb_m)])
        disc, adam = adam_step(adam, disc, grads)
    params.discriminator = disc
    return params, adam


def _dv_evaluate(params: EstimatorParams, batch: SampleBatch) -> float:
    """Bound value on the full batch.

    Both variables are discrete, so the two expectations are taken exactly
    under the empirical joint and the product of empirical marginals by
    tabulating the discriminator over the whole symbol grid; this removes the
    shuffle noise a sampled negative set would add.
    """
    joint = _empirical_joint(batch)
    px = joint.sum(axis=1)
    pw = joint.sum(axis=0)
    xs, ws = np.meshgrid(np.arange(params.n_inputs),
                         np.arange(params.n_outputs), indexing="ij")
    enc = _one_hot_pairs(xs.ravel(), ws.ravel(),
                         params.n_inputs, params.n_outputs)
    f = mlp_forward(params.discriminator, enc).reshape(params.n_inputs,
                                                       params.n_outputs)
    joint_term = float((joint * f).sum())
    prod = np.outer(px, pw)
    marg_term = float(logsumexp(f.ravel(), b=prod.ravel()))
    return (joint_term - marg_term) / LN2


def neural_mi_lower_bound(params: EstimatorParams, batch: SampleBatch,
                          train_steps: int | None = None) -> float:
    """Train the discriminator on the batch and return the variational lower
    bound in bits. Degenerate batches (a single input or output symbol)
    return 0."""
    if _degenerate(batch):
        return 0.0
    steps = params.train_steps if train_steps is None else train_steps
    rng = np.random.default_rng(derive_seed(batch.seed, "dv-train"))
    adam = init_adam(params.discriminator, params.lr)
    params, _ = _dv_train(params, adam, batch, steps, rng)
    return _dv_evaluate(params, batch)


def estimate_capacity_sampled(state: ReceiverConfig, env: ChannelEnv,
                              mode: str = "plugin", outer_steps: int = 30,
                              seed: int = 0, samples_per_step: int = 4096,
                              step_size: float = 1.0,
                              power_weight: float = 10.0,
                              neural_train_steps: int = 100) -> CapacityResult:
    """Approximate max_p I(X; output) from samples alone.

    The input distribution is parameterized by softmax logits and ascended
    with a score-function gradient built from per-sample pointwise information
    contributions; the power budget enters as a weighted penalty on the mean
    alphabet cost. Returns the best penalized estimate seen.
    """
    if mode not in ("plugin", "neural"):
        raise ValueError(f"unknown mode {mode!r}")
    xi = state.n_points
    costs = state.costs()
    if xi == 1:
        return CapacityResult(0.0, InputDistribution(np.ones(1)), 0, True, 0.0,
                              float(costs[0]), max(0.0, float(costs[0]) - env.power))

    logits = np.zeros(xi)
    estimator = None
    adam = None
    if mode == "neural":
        estimator = create_estimator(xi, env.n_outputs,
                                     seed=derive_seed(seed, "disc"))
        adam = init_adam(estimator.discriminator, estimator.lr)
        dv_rng = np.random.default_rng(derive_seed(seed, "disc-train"))

    best = None  # (objective, capacity, p, mean_power)
    history = []
    for step in range(outer_steps):
        z = logits - logits.max()
        p = np.exp(z)
        p /= p.sum()
        batch = draw_channel_samples(state, p, env, samples_per_step,
                                     derive_seed(seed, "draw", step))
        if mode == "plugin" or _degenerate(batch):
            estimate = plugin_mi(batch)
        else:
            estimator, adam = _dv_train(estimator, adam, batch,
                                        neural_train_steps, dv_rng)
            estimate = _dv_evaluate(estimator, batch)

        mean_power = float(p @ costs)
        penalty = max(0.0, mean_power - env.power)
        objective = estimate - power_weight * penalty
        history.append(objective)
        if best is None or objective > best[0]:
            best = (objective, estimate, p.copy(), mean_power)

        # score-function ascent on the plug-in pointwise contributions
        joint = _empirical_joint(batch)
        px = joint.sum(axis=1, keepdims=True)
        pw = joint.sum(axis=0, keepdims=True)
        safe = np.where(joint > 0, joint / np.maximum(px @ pw, 1e-300), 1.0)
        pointwise = np.log(safe)[batch.x_idx, batch.w_idx] / LN2
        grad = (np.bincount(batch.x_idx, weights=pointwise, minlength=xi)
                / batch.n - pointwise.mean() * p)
        if mean_power > env.power:
            grad -= power_weight * p * (costs - mean_power)
        logits += step_size * grad

    _, capacity, p_best, mean_power = best
    tail = max(1, outer_steps // 4)
    converged = (len(history) <= tail
                 or best[0] <= max(history[:-tail]) + 1e-3)
    return CapacityResult(
        capacity_bits=max(0.0, capacity),
        p_star=InputDistribution(p_best),
        iterations=outer_steps,
        converged=converged,
        lagrange_s=0.0,
        mean_power=mean_power,
        power_penalty=max(0.0, mean_power - env.power),
    )
