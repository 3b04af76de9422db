"""Receiver-tuning agent.

The state is the receiver configuration (v, t, alphabet); actions are additive
updates sampled from two diagonal-Gaussian policy networks, one for (v, t) and
one for the alphabet; the transition adds the action and re-sorts threshold
rows; the reward is the power-constrained capacity of the resulting channel
minus a penalty on the power overshoot. Training follows a score-function
gradient with a KL penalty toward the pre-update policy, and inference rolls
the policy while tracking the best configuration seen.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, replace

import numpy as np

from . import mi as mi_estimator
from .capacity import (CapacityResult, InfeasiblePowerError, InputDistribution,
                       ba_capacity, ba_capacity_power_constrained)
from .channel import (ChannelEnv, ReceiverConfig, level_weights,
                      make_strictly_increasing, max_alphabet_size,
                      transition_matrix)
from .neural import (AdamState, GaussianPolicyOutput, MlpParams, adam_step,
                     gaussian_log_prob_grad, init_adam, init_mlp,
                     kl_diag_gaussian_grad, mlp_backward, mlp_forward)
from .seeding import derive_seed

BANDS: tuple[tuple[float, float], ...] = ((-10.0, 0.0), (0.0, 10.0), (10.0, 40.0))
STATE_CLAMP = 1e3
HIDDEN_VT = (192, 192, 192)
HIDDEN_X = (384, 384, 384)


def band_index(snr_db: float) -> int:
    """SNR band lookup; a value on a shared endpoint routes to the lower band."""
    if snr_db < BANDS[0][0] or snr_db > BANDS[-1][1]:
        raise ValueError(f"snr_db {snr_db} outside [{BANDS[0][0]}, {BANDS[-1][1]}]")
    for i, (_, hi) in enumerate(BANDS):
        if snr_db <= hi:
            return i
    return len(BANDS) - 1


@dataclass
class ActionDelta:
    """Additive update to every receiver parameter block."""

    dv: np.ndarray
    dt: np.ndarray
    d_alphabet: np.ndarray


@dataclass
class TrajectoryStep:
    state: ReceiverConfig
    action: ActionDelta
    reward: float
    next_state: ReceiverConfig


@dataclass
class Trajectory:
    steps: list[TrajectoryStep]
    snr_db: float
    env_id: int

    def __len__(self) -> int:
        return len(self.steps)


@dataclass
class TrainConfig:
    """Hyperparameters of the training loop.

    ``reward_backend`` selects how the per-step capacity estimate is obtained:
    power-constrained alternating maximization (default), its penalized
    unconstrained variant, or the sample-based estimators.
    """

    iterations: int = 5
    traj_per_batch: int = 10
    max_steps: int = 2000
    update_epochs: int = 4
    learning_rate: float = 1e-3
    kl_weight: float = 1.0
    power_weight: float = 0.05
    discount: float = 0.9
    snr_min: float = -10.0
    snr_max: float = 40.0
    patience: int = 100
    reward_backend: str = "ba_constrained"
    seed: int = 0
    return_mode: str = "per_step"
    mc_samples: int = 200_000
    eval_mc_samples: int | None = None
    mi_outer_steps: int = 8
    mi_samples: int = 2048

    def __post_init__(self):
        if min(self.iterations, self.traj_per_batch, self.max_steps,
               self.update_epochs) < 1:
            raise ValueError("iteration counts must be >= 1")
        if not 0.0 <= self.discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        if self.snr_min >= self.snr_max:
            raise ValueError("snr_min must be below snr_max")
        if self.reward_backend not in ("ba_constrained", "ba_penalized",
                                       "mi_plugin", "mi_neural"):
            raise ValueError(f"unknown reward_backend {self.reward_backend!r}")
        if self.return_mode not in ("per_step", "reward_to_go"):
            raise ValueError(f"unknown return_mode {self.return_mode!r}")


@dataclass
class PolicyBank:
    """Per-band policy pairs: one net for (v, t) actions, one for alphabet
    actions, each with its own optimizer state."""

    dims: tuple[int, int, int, int, int]  # (n_r, n_q, levels, n_points, n_t)
    nets_vt: list[MlpParams]
    nets_x: list[MlpParams]
    adam_vt: list[AdamState]
    adam_x: list[AdamState]

    # per-band initial action scales (combiner, thresholds, alphabet): the
    # combiner rows are unit-scale at every SNR, while threshold and alphabet
    # moves should track each band's signal amplitude
    INIT_STD = (
        (0.10, 0.10, 0.10),   # [-10, 0] dB
        (0.10, 0.40, 0.40),   # (0, 10] dB
        (0.10, 1.00, 1.00),   # (10, 40] dB
    )

    @classmethod
    def create(cls, env: ChannelEnv, n_points: int | None = None,
               seed: int = 0, lr: float = 1e-3,
               init_std: tuple = INIT_STD,
               hidden_vt=HIDDEN_VT, hidden_x=HIDDEN_X) -> "PolicyBank":
        xi = n_points if n_points is not None else max_alphabet_size(
            env.n_r, env.n_q, env.levels)
        dims = (env.n_r, env.n_q, env.levels, xi, env.n_t)
        in_dim = env.n_q * env.n_r + env.n_q * (env.levels - 1) + xi * env.n_t
        v_dim = env.n_q * env.n_r
        vt_dim = v_dim + env.n_q * (env.levels - 1)
        x_dim = xi * env.n_t
        nets_vt, nets_x, adam_vt, adam_x = [], [], [], []
        for b in range(len(BANDS)):
            net_vt = init_mlp([in_dim, *hidden_vt, 2 * vt_dim],
                              head="gaussian_policy",
                              seed=derive_seed(seed, "net-vt", b))
            net_x = init_mlp([in_dim, *hidden_x, 2 * x_dim],
                             head="gaussian_policy",
                             seed=derive_seed(seed, "net-x", b))
            sig_v, sig_t, sig_x = init_std[b]
            net_vt.biases[-1][vt_dim:vt_dim + v_dim] = math.log(sig_v)
            net_vt.biases[-1][vt_dim + v_dim:] = math.log(sig_t)
            net_x.biases[-1][x_dim:] = math.log(sig_x)
            nets_vt.append(net_vt)
            nets_x.append(net_x)
            adam_vt.append(init_adam(net_vt, lr))
            adam_x.append(init_adam(net_x, lr))
        return cls(dims, nets_vt, nets_x, adam_vt, adam_x)

    def state_dim(self) -> int:
        n_r, n_q, levels, xi, n_t = self.dims
        return n_q * n_r + n_q * (levels - 1) + xi * n_t


def init_environment(env: ChannelEnv, env_id: int, seed: int) -> ReceiverConfig:
    """Starting receiver: combiner rows spread over half the circle with a
    small per-environment rotation, thresholds placed symmetrically in
    [-1, 1], and the alphabet at quantization-region centroids rescaled so the
    uniform distribution meets the power budget exactly."""
    rng = np.random.default_rng(derive_seed(seed, "init-env", env_id))
    n_q, n_r, levels, n_t = env.n_q, env.n_r, env.levels, env.n_t

    if n_r == 1:
        v = np.ones((n_q, 1))
    else:
        offset = rng.uniform(-0.5, 0.5) * math.pi / (2 * n_q)
        v = np.zeros((n_q, n_r))
        for i in range(n_q):
            angle = math.pi * i / n_q + offset
            v[i, 0] = math.cos(angle)
            v[i, 1] = math.sin(angle)

    n_cuts = n_q * (levels - 1)
    flat_t = np.array([0.0]) if n_cuts == 1 else np.linspace(-1.0, 1.0, n_cuts)
    t = flat_t.reshape(n_q, levels - 1)

    xi = max_alphabet_size(n_r, n_q, levels)
    if n_r == 1:
        taus = np.sort(flat_t)
        edge = np.abs(taus).max() + 1.0
        if taus.size == 1:
            centers = np.array([taus[0] - 1.0, taus[0] + 1.0])
        else:
            mids = 0.5 * (taus[1:] + taus[:-1])
            centers = np.concatenate([[-edge], mids, [edge]])
        # map representative outputs back through the channel row
        h = env.H[0]
        h_norm2 = float(h @ h)
        if h_norm2 > 0:
            alphabet = centers[:, None] * (h / h_norm2)[None, :]
        else:
            alphabet = np.zeros((centers.size, n_t))
    else:
        samples = rng.uniform(-3.0, 3.0, size=(10_000, n_t))
        w = (samples @ env.H.T) @ v.T
        lv = np.empty_like(w, dtype=np.int64)
        for i in range(n_q):
            lv[:, i] = np.searchsorted(t[i], w[:, i], side="right")
        flat = lv @ level_weights(n_q, levels)
        cells, counts = np.unique(flat, return_counts=True)
        if cells.size > xi:
            keep = np.sort(np.argsort(-counts, kind="stable")[:xi])
            cells = cells[keep]
        alphabet = np.zeros((xi, n_t))
        for k, cell in enumerate(cells):
            alphabet[k] = samples[flat == cell].mean(axis=0)

    mean_power = float((alphabet ** 2).sum(axis=1).mean())
    if mean_power > 0:
        alphabet = alphabet * math.sqrt(env.power / mean_power)
    return ReceiverConfig(v=v, t=t, alphabet=alphabet)


def _sample_with_nets(net_vt: MlpParams, net_x: MlpParams,
                      state: ReceiverConfig, rng: np.random.Generator):
    x = state.flatten()
    out_vt = mlp_forward(net_vt, x)
    out_x = mlp_forward(net_x, x)
    a_vt = out_vt.mean + out_vt.std * rng.standard_normal(out_vt.mean.shape)
    a_x = out_x.mean + out_x.std * rng.standard_normal(out_x.mean.shape)
    lp_vt, _ = gaussian_log_prob_grad(out_vt, a_vt)
    lp_x, _ = gaussian_log_prob_grad(out_x, a_x)
    n_vt = state.v.size
    action = ActionDelta(
        dv=a_vt[:n_vt].reshape(state.v.shape),
        dt=a_vt[n_vt:].reshape(state.t.shape),
        d_alphabet=a_x.reshape(state.alphabet.shape),
    )
    return action, float(lp_vt + lp_x), (out_vt, out_x)


def sample_action(bank: PolicyBank, state: ReceiverConfig, snr_db: float,
                  rng: int | np.random.Generator):
    """Sample an additive update from the band selected by ``snr_db``."""
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    if state.flatten().size != bank.state_dim():
        raise ValueError("state dimensions do not match the policy bank")
    b = band_index(snr_db)
    return _sample_with_nets(bank.nets_vt[b], bank.nets_x[b], state, rng)


def transition(state: ReceiverConfig, action: ActionDelta) -> ReceiverConfig:
    """Add the action, re-sort each threshold row (ties separated by 1e-9
    steps), and clamp every entry to +/- 1e3."""
    v = np.clip(state.v + action.dv, -STATE_CLAMP, STATE_CLAMP)
    alphabet = np.clip(state.alphabet + action.d_alphabet,
                       -STATE_CLAMP, STATE_CLAMP)
    t_raw = np.clip(np.sort(state.t + action.dt, axis=-1),
                    -STATE_CLAMP, STATE_CLAMP)
    return ReceiverConfig(v=v, t=make_strictly_increasing(t_raw),
                          alphabet=alphabet)


def _would_clamp(state: ReceiverConfig, action: ActionDelta) -> bool:
    return bool(
        np.any(np.abs(state.v + action.dv) > STATE_CLAMP)
        or np.any(np.abs(state.t + action.dt) > STATE_CLAMP)
        or np.any(np.abs(state.alphabet + action.d_alphabet) > STATE_CLAMP))


def compute_reward(state: ReceiverConfig, env: ChannelEnv, cfg: TrainConfig,
                   mc_seed: int = 0) -> tuple[float, CapacityResult]:
    """Capacity estimate for the state minus the weighted power overshoot."""
    if cfg.reward_backend in ("ba_constrained", "ba_penalized"):
        T = transition_matrix(state, env, backend="auto",
                              mc_samples=cfg.mc_samples, seed=mc_seed)
        costs = state.costs()
        # sampled matrices carry statistical error far above 1e-6 bits, so
        # the solver may run at a matching tolerance
        tol = 1e-6 if env.n_r == 1 else 1e-4
        if cfg.reward_backend == "ba_constrained":
            try:
                result = ba_capacity_power_constrained(T, costs, env.power,
                                                       tol=tol)
            except InfeasiblePowerError:
                # keep training alive: zero rate, full penalty at the
                # least-violating point
                j = int(np.argmin(costs))
                p = np.zeros(costs.size)
                p[j] = 1.0
                result = CapacityResult(
                    capacity_bits=0.0, p_star=InputDistribution(p),
                    iterations=0, converged=False, lagrange_s=0.0,
                    mean_power=float(costs[j]),
                    power_penalty=float(costs[j] - env.power))
        else:
            result = ba_capacity(T, tol=tol)
            mean_power = float(result.p_star.p @ costs)
            result.mean_power = mean_power
            result.power_penalty = max(0.0, mean_power - env.power)
    elif cfg.reward_backend in ("mi_plugin", "mi_neural"):
        mode = "plugin" if cfg.reward_backend == "mi_plugin" else "neural"
        result = mi_estimator.estimate_capacity_sampled(
            state, env, mode=mode, outer_steps=cfg.mi_outer_steps,
            seed=mc_seed, samples_per_step=cfg.mi_samples,
            power_weight=cfg.power_weight)
    else:  # pragma: no cover - guarded by TrainConfig
        raise ValueError(cfg.reward_backend)
    reward = result.capacity_bits - cfg.power_weight * result.power_penalty
    return reward, result


def _rollout(net_vt: MlpParams, net_x: MlpParams, env: ChannelEnv,
             cfg: TrainConfig, env_id: int, seed: int,
             max_steps: int, patience: int) -> tuple[Trajectory, int]:
    rng = np.random.default_rng(derive_seed(seed, "steps"))
    mc_seed = derive_seed(seed, "mc")
    state = init_environment(env, env_id, derive_seed(seed, "init"))
    steps: list[TrajectoryStep] = []
    best = -math.inf
    since_best = 0
    clamp_events = 0
    for _ in range(max_steps):
        action, _, _ = _sample_with_nets(net_vt, net_x, state, rng)
        if _would_clamp(state, action):
            clamp_events += 1
        nxt = transition(state, action)
        reward, _ = compute_reward(nxt, env, cfg, mc_seed)
        steps.append(TrajectoryStep(state, action, reward, nxt))
        state = nxt
        if reward > best + 1e-12:
            best = reward
            since_best = 0
        else:
            since_best += 1
        if patience > 0 and since_best >= patience:
            break
    return Trajectory(steps, env.snr_db, env_id), clamp_events


def _step_weights(trajs: list[Trajectory], cfg: TrainConfig):
    """Per-step policy coefficients gamma^i * w_i / n_traj and per-step KL
    coefficients beta / (n_traj * len(traj))."""
    n_traj = len(trajs)
    coef_pol, coef_kl = [], []
    for traj in trajs:
        rewards = np.array([s.reward for s in traj.steps])
        n = rewards.size
        gammas = cfg.discount ** np.arange(n)
        if cfg.return_mode == "per_step":
            w = rewards
        else:
            w = np.empty(n)
            acc = 0.0
            for i in range(n - 1, -1, -1):
                acc = rewards[i] + cfg.discount * acc
                w[i] = acc
        coef_pol.append(gammas * w / n_traj)
        coef_kl.append(np.full(n, cfg.kl_weight / (n_traj * n)))
    return np.concatenate(coef_pol), np.concatenate(coef_kl)


def _net_gradients(net: MlpParams, states: np.ndarray, actions: np.ndarray,
                   old_out: GaussianPolicyOutput, coef_pol: np.ndarray,
                   coef_kl: np.ndarray):
    out = mlp_forward(net, states)
    _, (d_mu, d_ls) = gaussian_log_prob_grad(out, actions)
    _, (k_mu, k_ls) = kl_diag_gaussian_grad(old_out, out)
    up_mu = coef_pol[:, None] * d_mu - coef_kl[:, None] * k_mu
    up_ls = coef_pol[:, None] * d_ls - coef_kl[:, None] * k_ls
    return mlp_backward(net, states, (up_mu, up_ls))


def _grads_finite(grads) -> bool:
    w_g, b_g = grads
    return all(np.isfinite(g).all() for g in w_g) and \
        all(np.isfinite(g).all() for g in b_g)


def _mean_kl(old_vt, old_x, net_vt, net_x, states) -> float:
    kl_vt, _ = kl_diag_gaussian_grad(old_vt, mlp_forward(net_vt, states))
    kl_x, _ = kl_diag_gaussian_grad(old_x, mlp_forward(net_x, states))
    return float((kl_vt + kl_x).mean())


def train(bank: PolicyBank, envs: list[ChannelEnv],
          cfg: TrainConfig) -> tuple[PolicyBank, list[dict]]:
    """Train every band whose SNR interval intersects [snr_min, snr_max].

    Each iteration snapshots the policy, collects ``traj_per_batch``
    trajectories under it (one uniformly drawn SNR per trajectory), then runs
    ``update_epochs`` ascent steps on the discounted score-function gradient
    minus the weighted KL-to-snapshot gradient. Returns the bank and a log
    with one row per (band, iteration).
    """
    if not envs:
        raise ValueError("need at least one environment")
    log: list[dict] = []
    for b, (band_lo, band_hi) in enumerate(BANDS):
        lo, hi = max(band_lo, cfg.snr_min), min(band_hi, cfg.snr_max)
        if lo >= hi:
            continue
        band_rng = np.random.default_rng(derive_seed(cfg.seed, "train-band", b))
        for j in range(1, cfg.iterations + 1):
            t_start = time.perf_counter()
            old_vt = bank.nets_vt[b].copy()
            old_x = bank.nets_x[b].copy()
            adam_vt_snap = bank.adam_vt[b].copy()
            adam_x_snap = bank.adam_x[b].copy()

            trajs: list[Trajectory] = []
            clamp_events = 0
            for m in range(cfg.traj_per_batch):
                snr = float(band_rng.uniform(lo, hi))
                env_id = m % len(envs)
                env_m = replace(envs[env_id], snr_db=snr)
                traj, clamps = _rollout(
                    old_vt, old_x, env_m, cfg, env_id,
                    derive_seed(cfg.seed, "rollout", b, j, m),
                    cfg.max_steps, cfg.patience)
                trajs.append(traj)
                clamp_events += clamps

            states = np.stack([s.state.flatten()
                               for traj in trajs for s in traj.steps])
            n_vt = bank.dims[1] * bank.dims[0] + bank.dims[1] * (bank.dims[2] - 1)
            acts = np.stack([np.concatenate([s.action.dv.ravel(),
                                             s.action.dt.ravel(),
                                             s.action.d_alphabet.ravel()])
                             for traj in trajs for s in traj.steps])
            acts_vt, acts_x = acts[:, :n_vt], acts[:, n_vt:]
            coef_pol, coef_kl = _step_weights(trajs, cfg)
            old_out_vt = mlp_forward(old_vt, states)
            old_out_x = mlp_forward(old_x, states)

            aborted = False
            for _ in range(cfg.update_epochs):
                g_vt = _net_gradients(bank.nets_vt[b], states, acts_vt,
                                      old_out_vt, coef_pol, coef_kl)
                g_x = _net_gradients(bank.nets_x[b], states, acts_x,
                                     old_out_x, coef_pol, coef_kl)
                if not (_grads_finite(g_vt) and _grads_finite(g_x)):
                    bank.nets_vt[b] = old_vt
                    bank.nets_x[b] = old_x
                    bank.adam_vt[b] = adam_vt_snap
                    bank.adam_x[b] = adam_x_snap
                    aborted = True
                    break
                bank.nets_vt[b], bank.adam_vt[b] = adam_step(
                    bank.adam_vt[b], bank.nets_vt[b], g_vt)
                bank.nets_x[b], bank.adam_x[b] = adam_step(
                    bank.adam_x[b], bank.nets_x[b], g_x)

            rewards = np.array([s.reward for traj in trajs for s in traj.steps])
            log.append({
                "iteration": j,
                "band": b,
                "mean_reward": float(rewards.mean()),
                "mean_kl": _mean_kl(old_out_vt, old_out_x,
                                    bank.nets_vt[b], bank.nets_x[b], states),
                "best_reward": float(rewards.max()),
                "wall_ms": (time.perf_counter() - t_start) * 1e3,
                "clamp_events": clamp_events,
                "aborted": aborted,
            })
    return bank, log


def infer(bank: PolicyBank, env: ChannelEnv, snr_db: float, cfg: TrainConfig,
          max_steps: int = 1000, patience: int | float = 100, seed: int = 0,
          env_id: int = 0) -> tuple[ReceiverConfig, CapacityResult, list[float]]:
    """Roll the policy from the standard initial state and return the best
    configuration visited (argmax reward over the whole trace), its capacity
    evaluation, and the reward trace.

    With a Monte Carlo reward backend the selected state is re-evaluated on a
    fresh seed (and ``eval_mc_samples`` if configured) so the reported
    capacity is free of selection bias.
    """
    env = replace(env, snr_db=float(snr_db))
    b = band_index(snr_db)
    net_vt, net_x = bank.nets_vt[b], bank.nets_x[b]
    rng = np.random.default_rng(derive_seed(seed, "infer-steps"))
    mc_seed = derive_seed(seed, "infer-mc")

    state = init_environment(env, env_id, derive_seed(seed, "infer-init"))
    reward, result = compute_reward(state, env, cfg, mc_seed)
    best_reward, best_state, best_result = reward, state, result
    trace = [reward]
    since_best = 0
    steps = 0
    while steps < max_steps and since_best < patience:
        action, _, _ = _sample_with_nets(net_vt, net_x, state, rng)
        state = transition(state, action)
        reward, result = compute_reward(state, env, cfg, mc_seed)
        trace.append(reward)
        steps += 1
        if reward > best_reward + 1e-12:
            best_reward, best_state, best_result = reward, state, result
            since_best = 0
        else:
            since_best += 1

    if env.n_r > 1 and cfg.reward_backend in ("ba_constrained", "ba_penalized"):
        eval_cfg = replace(cfg, mc_samples=cfg.eval_mc_samples or cfg.mc_samples)
        _, best_result = compute_reward(best_state, env, eval_cfg,
                                        derive_seed(seed, "infer-eval"))
    return best_state, best_result, trace


def write_training_log(rows: list[dict], path) -> None:
    """CSV with one row per training iteration."""
    cols = ["iteration", "band", "mean_reward", "mean_kl", "best_reward",
            "wall_ms"]
    with open(path, "w", newline="") as f:
        f.write(",".join(cols) + "\n")
        for row in rows:
            f.write(",".join(repr(row[c]) if isinstance(row[c], float)
                             else str(row[c]) for c in cols) + "\n")
