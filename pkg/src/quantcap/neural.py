"""Minimal fully-connected network stack with hand-written gradients.

Tanh hidden layers feed either a scalar head or a diagonal-Gaussian policy
head whose final affine output is split into mean and log-std halves (log-std
clamped to [-5, 1]). Reverse-mode gradients of a weighted sum of head outputs
are exact, and an Adam optimizer performs ascent steps. Checkpoints are
versioned JSON.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

LOG_STD_MIN = -5.0
LOG_STD_MAX = 1.0
CHECKPOINT_VERSION = 1
LOG_2PI = math.log(2.0 * math.pi)


class CheckpointFormatError(ValueError):
    """Checkpoint file is unreadable or from an incompatible version."""


@dataclass
class GaussianPolicyOutput:
    """Mean and clamped log standard deviation of a diagonal Gaussian."""

    mean: np.ndarray
    log_std: np.ndarray

    @property
    def std(self) -> np.ndarray:
        return np.exp(self.log_std)


@dataclass
class MlpParams:
    """Weights and biases of a fully connected network.

    ``layer_sizes`` runs input -> hidden widths -> raw output width. For the
    gaussian head the raw output width must be even (mean || log_std).
    """

    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "tanh"
    head: str = "gaussian_policy"

    @property
    def action_dim(self) -> int:
        out = self.layer_sizes[-1]
        return out // 2 if self.head == "gaussian_policy" else out

    def copy(self) -> "MlpParams":
        return MlpParams(
            layer_sizes=list(self.layer_sizes),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            activation=self.activation,
            head=self.head,
        )


def init_mlp(layer_sizes, head: str = "gaussian_policy", seed: int = 0) -> MlpParams:
    """Xavier-uniform weights, zero biases, seeded."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 2:
        raise ValueError("need at least an input and an output layer")
    if head == "gaussian_policy" and sizes[-1] % 2 != 0:
        raise ValueError("gaussian head needs an even raw output width")
    if head not in ("gaussian_policy", "scalar"):
        raise ValueError(f"unknown head {head!r}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    if head == "gaussian_policy":
        # a near-zero head makes the initial policy an unbiased unit-variance
        # random walk instead of a fixed arbitrary drift
        weights[-1] *= 0.01
    return MlpParams(sizes, weights, biases, head=head)


def _forward_raw(params: MlpParams, x: np.ndarray):
    a = np.asarray(x, dtype=float)
    single = a.ndim == 1
    a = np.atleast_2d(a)
    if a.shape[1] != params.layer_sizes[0]:
        raise ValueError(
            f"input width {a.shape[1]} != expected {params.layer_sizes[0]}")
    acts = [a]
    for W, b in zip(params.weights[:-1], params.biases[:-1]):
        a = np.tanh(a @ W + b)
        acts.append(a)
    raw = a @ params.weights[-1] + params.biases[-1]
    return raw, acts, single


def mlp_forward(params: MlpParams, x: np.ndarray):
    """Forward pass; returns a GaussianPolicyOutput or scalar values.

    Accepts a single input vector or a (batch, dim) matrix.
    """
    raw, _, single = _forward_raw(params, x)
    if params.head == "gaussian_policy":
        a_dim = params.action_dim
        mean = raw[:, :a_dim]
        log_std = np.clip(raw[:, a_dim:], LOG_STD_MIN, LOG_STD_MAX)
        if single:
            return GaussianPolicyOutput(mean[0], log_std[0])
        return GaussianPolicyOutput(mean, log_std)
    out = raw[:, 0]
    return float(out[0]) if single else out


def mlp_backward(params: MlpParams, x: np.ndarray, upstream):
    """Gradients of sum(upstream * head outputs) w.r.t. every weight and bias.

    ``upstream`` is (d_mean, d_log_std) for the gaussian head or an array of
    per-sample scalars for the scalar head; batch dimensions must match ``x``.
    Returns (weight_grads, bias_grads) summed over the batch.
    """
    raw, acts, _ = _forward_raw(params, x)
    n = raw.shape[0]
    if params.head == "gaussian_policy":
        a_dim = params.action_dim
        d_mean, d_log_std = upstream
        d_mean = np.atleast_2d(np.asarray(d_mean, dtype=float))
        d_log_std = np.atleast_2d(np.asarray(d_log_std, dtype=float))
        if d_mean.shape != (n, a_dim) or d_log_std.shape != (n, a_dim):
            raise ValueError("upstream gradient shape mismatch")
        z = raw[:, a_dim:]
        inside = (z > LOG_STD_MIN) & (z < LOG_STD_MAX)
        delta = np.concatenate([d_mean, d_log_std * inside], axis=1)
    else:
        up = np.asarray(upstream, dtype=float).reshape(-1, 1)
        if up.shape[0] != n:
            raise ValueError("upstream gradient shape mismatch")
        delta = up

    w_grads = [np.empty(0)] * len(params.weights)
    b_grads = [np.empty(0)] * len(params.biases)
    for layer in range(len(params.weights) - 1, -1, -1):
        w_grads[layer] = acts[layer].T @ delta
        b_grads[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ params.weights[layer].T) * (1.0 - acts[layer] ** 2)
    return w_grads, b_grads


def gaussian_log_prob_grad(out: GaussianPolicyOutput, action: np.ndarray):
    """Log density of ``action`` under the diagonal Gaussian, plus gradients
    with respect to the mean and log-std head outputs."""
    mean = np.asarray(out.mean, dtype=float)
    log_std = np.asarray(out.log_std, dtype=float)
    a = np.asarray(action, dtype=float)
    if a.shape != mean.shape:
        raise ValueError("action shape does not match the policy output")
    std = np.exp(log_std)
    z = (a - mean) / std
    log_prob = (-0.5 * z ** 2 - log_std - 0.5 * LOG_2PI).sum(axis=-1)
    d_mean = z / std
    d_log_std = z ** 2 - 1.0
    return log_prob, (d_mean, d_log_std)


def kl_diag_gaussian_grad(p_old: GaussianPolicyOutput,
                          p_new: GaussianPolicyOutput):
    """KL(old || new) for diagonal Gaussians and its gradient in the new
    distribution's (mean, log_std) only."""
    mu_o = np.asarray(p_old.mean, dtype=float)
    ls_o = np.asarray(p_old.log_std, dtype=float)
    mu_n = np.asarray(p_new.mean, dtype=float)
    ls_n = np.asarray(p_new.log_std, dtype=float)
    if mu_o.shape != mu_n.shape:
        raise ValueError("old/new dimensions differ")
    var_o = np.exp(2.0 * ls_o)
    var_n = np.exp(2.0 * ls_n)
    ratio = (var_o + (mu_o - mu_n) ** 2) / var_n
    kl = (ls_n - ls_o + 0.5 * ratio - 0.5).sum(axis=-1)
    d_mean_new = (mu_n - mu_o) / var_n
    d_log_std_new = 1.0 - ratio
    return kl, (d_mean_new, d_log_std_new)


@dataclass
class AdamState:
    """First/second moment accumulators matching an MlpParams instance."""

    lr: float
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m_w: list = field(default_factory=list)
    v_w: list = field(default_factory=list)
    m_b: list = field(default_factory=list)
    v_b: list = field(default_factory=list)

    def copy(self) -> "AdamState":
        return AdamState(
            lr=self.lr, step=self.step, beta1=self.beta1, beta2=self.beta2,
            eps=self.eps,
            m_w=[a.copy() for a in self.m_w], v_w=[a.copy() for a in self.v_w],
            m_b=[a.copy() for a in self.m_b], v_b=[a.copy() for a in self.v_b],
        )


def init_adam(params: MlpParams, lr: float = 1e-3) -> AdamState:
    return AdamState(
        lr=lr,
        m_w=[np.zeros_like(w) for w in params.weights],
        v_w=[np.zeros_like(w) for w in params.weights],
        m_b=[np.zeros_like(b) for b in params.biases],
        v_b=[np.zeros_like(b) for b in params.biases],
    )


def adam_step(state: AdamState, params: MlpParams, grads) -> tuple[MlpParams, AdamState]:
    """One Adam ascent step (gradients are added). Inputs are not mutated."""
    w_grads, b_grads = grads
    new_p = params.copy()
    new_s = state.copy()
    new_s.step += 1
    t = new_s.step
    c1 = 1.0 - new_s.beta1 ** t
    c2 = 1.0 - new_s.beta2 ** t

    def _update(val, m, v, g):
        m[:] = new_s.beta1 * m + (1.0 - new_s.beta1) * g
        v[:] = new_s.beta2 * v + (1.0 - new_s.beta2) * g * g
        return val + new_s.lr * (m / c1) / (np.sqrt(v / c2) + new_s.eps)

    for i in range(len(new_p.weights)):
        if w_grads[i].shape != new_p.weights[i].shape:
            raise ValueError("weight gradient shape mismatch")
        new_p.weights[i] = _update(new_p.weights[i], new_s.m_w[i],
                                   new_s.v_w[i], w_grads[i])
        new_p.biases[i] = _update(new_p.biases[i], new_s.m_b[i],
                                  new_s.v_b[i], b_grads[i])
    return new_p, new_s


def save_checkpoint(path, params: MlpParams, adam: AdamState | None = None) -> None:
    doc = {
        "version": CHECKPOINT_VERSION,
        "layer_sizes": list(params.layer_sizes),
        "activation": params.activation,
        "head": params.head,
        "weights": [w.ravel().tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
        "adam": None,
    }
    if adam is not None:
        doc["adam"] = {
            "step": adam.step, "lr": adam.lr, "beta1": adam.beta1,
            "beta2": adam.beta2, "eps": adam.eps,
            "m_w": [a.ravel().tolist() for a in adam.m_w],
            "v_w": [a.ravel().tolist() for a in adam.v_w],
            "m_b": [a.tolist() for a in adam.m_b],
            "v_b": [a.tolist() for a in adam.v_b],
        }
    with open(path, "w") as f:
        f.write(json.dumps(doc))  # dumps hits the C encoder; dump does not


def load_checkpoint(path) -> tuple[MlpParams, AdamState | None]:
    try:
        with open(path) as f:
            doc = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"cannot read checkpoint {path}: {exc}") from exc
    version = doc.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointFormatError(
            f"checkpoint version {version} != supported {CHECKPOINT_VERSION}")
    sizes = [int(s) for s in doc["layer_sizes"]]
    shapes = list(zip(sizes[:-1], sizes[1:]))
    try:
        weights = [np.asarray(w, dtype=float).reshape(shape)
                   for w, shape in zip(doc["weights"], shapes, strict=True)]
        biases = [np.asarray(b, dtype=float) for b in doc["biases"]]
        params = MlpParams(sizes, weights, biases,
                           activation=doc["activation"], head=doc["head"])
        adam_doc = doc.get("adam")
        adam = None
        if adam_doc is not None:
            adam = AdamState(
                lr=float(adam_doc["lr"]), step=int(adam_doc["step"]),
                beta1=float(adam_doc["beta1"]), beta2=float(adam_doc["beta2"]),
                eps=float(adam_doc["eps"]),
                m_w=[np.asarray(a, dtype=float).reshape(shape)
                     for a, shape in zip(adam_doc["m_w"], shapes, strict=True)],
                v_w=[np.asarray(a, dtype=float).reshape(shape)
                     for a, shape in zip(adam_doc["v_w"], shapes, strict=True)],
                m_b=[np.asarray(a, dtype=float) for a in adam_doc["m_b"]],
                v_b=[np.asarray(a, dtype=float) for a in adam_doc["v_b"]],
            )
    except (KeyError, ValueError) as exc:
        raise CheckpointFormatError(f"malformed checkpoint {path}: {exc}") from exc
    return params, adam
