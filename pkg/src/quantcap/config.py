"""Experiment configuration: a single TOML file covering the channel, the
training hyperparameters, the sweep protocol, and the output location."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .channel import ChannelEnv
from .policy import TrainConfig

SCENARIOS = ("siso_sweep", "mimo_sweep", "noisy_csi", "theory_check", "train",
             "baseline")


class ConfigError(ValueError):
    """Malformed experiment configuration (message carries the location)."""


@dataclass
class ExperimentConfig:
    scenario: str
    env: ChannelEnv
    train: TrainConfig
    seed: int = 0
    out_dir: str = "results"
    snr_grid: list[float] = field(default_factory=lambda: list(np.arange(-10.0, 41.0, 2.0)))
    inference_runs: int = 10
    inference_steps: int = 1000
    inference_patience: int = 100
    n_envs: int = 30
    policy_dir: str | None = None
    # brute-force / discretization grids, in units of sqrt(power)
    grid_m_factor: float = 4.0
    grid_delta_factor: float = 0.25
    grid_m_list: list[float] = field(default_factory=lambda: [1.0, 2.0, 4.0])
    grid_delta_list: list[float] = field(default_factory=lambda: [0.4, 0.2, 0.1])
    # fixed-constellation baselines
    qam_orders: list[int] = field(default_factory=lambda: [4])
    psk_orders: list[int] = field(default_factory=lambda: [4, 8])
    # noisy channel knowledge
    csi_variances: list[float] = field(default_factory=lambda: [0.01, 0.05, 0.1])

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"scenario must be one of {SCENARIOS}, "
                              f"got {self.scenario!r}")
        if self.inference_runs < 1:
            raise ConfigError("inference_runs must be >= 1")
        for snr in self.snr_grid:
            if not -10.0 <= snr <= 40.0:
                raise ConfigError(
                    f"snr_grid value {snr} outside the policy bands [-10, 40]")


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def _build_env(doc: dict, path: str) -> ChannelEnv:
    sec = _section(doc, "channel")
    try:
        n_t = int(sec.get("n_t", 1))
        n_r = int(sec.get("n_r", 1))
        H = sec.get("H")
        H = np.eye(n_r, n_t) if H is None else np.asarray(H, dtype=float)
        return ChannelEnv(
            n_t=n_t, n_r=n_r,
            n_q=int(sec.get("n_q", 1)),
            levels=int(sec.get("levels", 2)),
            H=H.reshape(n_r, n_t),
            snr_db=float(sec.get("snr_db", 10.0)),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: [channel]: {exc}") from exc


_TRAIN_KEYS = {
    "iterations", "traj_per_batch", "max_steps", "update_epochs",
    "learning_rate", "kl_weight", "power_weight", "discount", "snr_min",
    "snr_max", "patience", "reward_backend", "return_mode", "mc_samples",
    "eval_mc_samples", "mi_outer_steps", "mi_samples",
}


def load_config(path) -> ExperimentConfig:
    """Parse and validate a TOML experiment file.

    Raises ConfigError with the file location (and the parser's line/column
    for syntax problems).
    """
    try:
        with open(path, "rb") as f:
            doc = tomllib.load(f)
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    if "scenario" not in doc:
        raise ConfigError(f"{path}: missing required key 'scenario'")

    env = _build_env(doc, str(path))
    seed = int(doc.get("seed", 0))

    tr = _section(doc, "train")
    unknown = set(tr) - _TRAIN_KEYS
    if unknown:
        raise ConfigError(f"{path}: [train]: unknown keys {sorted(unknown)}")
    try:
        train = TrainConfig(seed=seed, **tr)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: [train]: {exc}") from exc

    sweep = _section(doc, "sweep")
    grid = _section(doc, "grid")
    baseline = _section(doc, "baseline")
    csi = _section(doc, "csi")

    snr_grid = sweep.get("snr_grid")
    if snr_grid is None:
        start = float(sweep.get("snr_start", -10.0))
        stop = float(sweep.get("snr_stop", 40.0))
        step = float(sweep.get("snr_step", 2.0))
        snr_grid = list(np.arange(start, stop + 1e-9, step))
    try:
        cfg = ExperimentConfig(
            scenario=str(doc["scenario"]),
            env=env,
            train=train,
            seed=seed,
            out_dir=str(doc.get("out_dir", "results")),
            snr_grid=[float(s) for s in snr_grid],
            inference_runs=int(sweep.get("runs", 10)),
            inference_steps=int(sweep.get("max_steps", 1000)),
            inference_patience=int(sweep.get("patience", 100)),
            n_envs=int(doc.get("n_envs", 30)),
            policy_dir=doc.get("policy_dir"),
            grid_m_factor=float(grid.get("m_factor", 4.0)),
            grid_delta_factor=float(grid.get("delta_factor", 0.25)),
            grid_m_list=[float(x) for x in grid.get("m_list", [1.0, 2.0, 4.0])],
            grid_delta_list=[float(x) for x in grid.get("delta_list",
                                                        [0.4, 0.2, 0.1])],
            qam_orders=[int(x) for x in baseline.get("qam", [4])],
            psk_orders=[int(x) for x in baseline.get("psk", [4, 8])],
            csi_variances=[float(x) for x in csi.get("variances",
                                                     [0.01, 0.05, 0.1])],
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg
