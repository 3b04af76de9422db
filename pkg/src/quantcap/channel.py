"""Quantized-MIMO channel model.

A transmit vector x passes through a real gain matrix H plus unit-variance
Gaussian noise, an analog combiner v mixes the received vector onto n_q ADCs,
and each ADC maps its scalar input to one of `levels` output symbols through a
strictly increasing threshold row. Over a finite input alphabet this induces a
discrete memoryless channel whose transition matrix is computed here, exactly
in the scalar-receiver case and by seeded Monte Carlo otherwise.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

TIE_STEP = 1e-9


class DegenerateCombinerWarning(UserWarning):
    """A combiner row is exactly zero, so its ADC emits one constant level."""


def snr_to_power(snr_db: float) -> float:
    """Average input power for a given SNR in dB (noise variance is 1)."""
    return float(10.0 ** (snr_db / 10.0))


def make_strictly_increasing(rows: np.ndarray) -> np.ndarray:
    """Sort threshold rows ascending and separate ties by 1e-9 steps.

    The k-th member of any equal run is shifted up by k * 1e-9, which keeps
    quantizer boundaries well defined after additive updates or grid
    projection.
    """
    out = np.sort(np.asarray(rows, dtype=float), axis=-1).copy()
    flat = out.reshape(-1, out.shape[-1])
    for row in flat:
        for k in range(1, row.size):
            if row[k] <= row[k - 1]:
                row[k] = row[k - 1] + TIE_STEP
    return out


@dataclass
class ChannelEnv:
    """Fixed channel-side quantities: antenna counts, ADC geometry, gains, SNR."""

    n_t: int
    n_r: int
    n_q: int
    levels: int
    H: np.ndarray
    snr_db: float

    def __post_init__(self):
        self.H = np.atleast_2d(np.asarray(self.H, dtype=float))
        if min(self.n_t, self.n_r, self.n_q) < 1:
            raise ValueError("n_t, n_r and n_q must all be >= 1")
        if self.levels < 2:
            raise ValueError("ADCs need at least 2 output levels")
        if self.H.shape != (self.n_r, self.n_t):
            raise ValueError(f"H must be {self.n_r}x{self.n_t}, got {self.H.shape}")
        if not np.isfinite(self.H).all():
            raise ValueError("H must be finite")

    @property
    def power(self) -> float:
        return snr_to_power(self.snr_db)

    @property
    def n_outputs(self) -> int:
        return self.levels ** self.n_q


@dataclass
class ReceiverConfig:
    """Tunable receiver state: combiner rows, ADC thresholds, input alphabet.

    ``v`` is (n_q, n_r), ``t`` is (n_q, levels-1) with strictly increasing
    rows, and ``alphabet`` is (n_points, n_t), one input point per row.
    """

    v: np.ndarray
    t: np.ndarray
    alphabet: np.ndarray

    def __post_init__(self):
        self.v = np.atleast_2d(np.asarray(self.v, dtype=float))
        self.t = np.atleast_2d(np.asarray(self.t, dtype=float))
        self.alphabet = np.atleast_2d(np.asarray(self.alphabet, dtype=float))
        if self.v.shape[0] != self.t.shape[0]:
            raise ValueError("v and t must have one row per ADC")
        for arr, name in ((self.v, "v"), (self.t, "t"), (self.alphabet, "alphabet")):
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")

    @property
    def n_q(self) -> int:
        return self.v.shape[0]

    @property
    def n_r(self) -> int:
        return self.v.shape[1]

    @property
    def levels(self) -> int:
        return self.t.shape[1] + 1

    @property
    def n_points(self) -> int:
        return self.alphabet.shape[0]

    @property
    def n_t(self) -> int:
        return self.alphabet.shape[1]

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return (self.n_r, self.n_q, self.levels, self.n_points)

    def flatten(self) -> np.ndarray:
        """Row-major concatenation v || t || alphabet (the policy input)."""
        return np.concatenate(
            [self.v.ravel(), self.t.ravel(), self.alphabet.ravel()])

    def costs(self) -> np.ndarray:
        """Squared norm of each alphabet point."""
        return (self.alphabet ** 2).sum(axis=1)

    def copy(self) -> "ReceiverConfig":
        return ReceiverConfig(self.v.copy(), self.t.copy(), self.alphabet.copy())


@dataclass
class QuantizerOutput:
    """Joint ADC output: per-ADC levels and their little-endian flat index."""

    levels: np.ndarray
    flat_index: int


def adc_quantize(w: float, thresholds: np.ndarray) -> int:
    """Quantize a scalar: 0 below the first threshold, i on [t_i, t_{i+1}),
    and levels-1 from the last threshold up (all intervals left-closed)."""
    t = np.asarray(thresholds, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ValueError("thresholds must be a non-empty 1-D vector")
    if np.any(np.diff(t) <= 0):
        raise ValueError("thresholds must be strictly increasing")
    if not np.isfinite(w):
        raise ValueError("sample must be finite")
    return int(np.searchsorted(t, w, side="right"))


def level_weights(n_q: int, levels: int) -> np.ndarray:
    """Little-endian flat-index weights levels**i over the ADC index."""
    return levels ** np.arange(n_q, dtype=np.int64)


def quantize_received(y: np.ndarray, config: ReceiverConfig) -> QuantizerOutput:
    """Combine y with v and quantize each component with its threshold row."""
    y = np.asarray(y, dtype=float).ravel()
    if y.size != config.n_r:
        raise ValueError(f"y has length {y.size}, expected {config.n_r}")
    w = config.v @ y
    lv = np.array([adc_quantize(w[i], config.t[i]) for i in range(config.n_q)])
    flat = int(lv @ level_weights(config.n_q, config.levels))
    return QuantizerOutput(levels=lv, flat_index=flat)


@dataclass
class TransitionMatrix:
    """Row-stochastic matrix P(flat output = k | input point j)."""

    p: np.ndarray
    method: str
    mc_samples: int = 0
    seed: int = 0
    degenerate_adcs: tuple[int, ...] = field(default=())

    @property
    def rows(self) -> int:
        return self.p.shape[0]

    @property
    def cols(self) -> int:
        return self.p.shape[1]


def _check_dims(config: ReceiverConfig, env: ChannelEnv) -> None:
    if config.n_r != env.n_r or config.n_q != env.n_q:
        raise ValueError("receiver and channel disagree on n_r/n_q")
    if config.levels != env.levels:
        raise ValueError("receiver and channel disagree on ADC levels")
    if config.n_t != env.n_t:
        raise ValueError("alphabet dimension does not match n_t")


def _exact_scalar_matrix(config: ReceiverConfig, env: ChannelEnv) -> np.ndarray:
    # One receive antenna: every ADC sees v_i * y for the same scalar
    # y ~ N(Hx, 1), so the joint output is a deterministic function of y and
    # cell probabilities are differences of the normal CDF over the partition
    # induced by the effective thresholds t_ik / v_i.
    v = config.v[:, 0]
    zero_rows = np.flatnonzero(v == 0.0)
    if zero_rows.size:
        warnings.warn(
            f"combiner rows {zero_rows.tolist()} are zero; those ADCs are constant",
            DegenerateCombinerWarning,
            stacklevel=3,
        )
    eff = [config.t[i] / v[i] for i in range(config.n_q) if v[i] != 0.0]
    breaks = np.unique(np.concatenate(eff)) if eff else np.empty(0)

    if breaks.size:
        mids = 0.5 * (breaks[1:] + breaks[:-1])
        reps = np.concatenate([[breaks[0] - 1.0], mids, [breaks[-1] + 1.0]])
    else:
        reps = np.array([0.0])

    weights = level_weights(config.n_q, config.levels)
    flats = np.empty(reps.size, dtype=np.int64)
    for r, y in enumerate(reps):
        lv = [adc_quantize(v[i] * y if v[i] != 0.0 else 0.0, config.t[i])
              for i in range(config.n_q)]
        flats[r] = int(np.asarray(lv) @ weights)

    means = config.alphabet @ env.H[0]
    edges = np.concatenate([[-np.inf], breaks, [np.inf]])
    cdf = ndtr(edges[None, :] - means[:, None])
    region_p = cdf[:, 1:] - cdf[:, :-1]

    p = np.zeros((config.n_points, env.n_outputs))
    for r in range(reps.size):
        p[:, flats[r]] += region_p[:, r]
    return p


def _monte_carlo_matrix(config: ReceiverConfig, env: ChannelEnv,
                        mc_samples: int, seed: int) -> np.ndarray:
    # Noise draws are shared across alphabet rows (common random numbers).
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((mc_samples, env.n_r))
    base = noise @ config.v.T
    proj = (config.alphabet @ env.H.T) @ config.v.T
    weights = level_weights(config.n_q, config.levels)

    p = np.empty((config.n_points, env.n_outputs))
    lv = np.empty((mc_samples, config.n_q), dtype=np.int64)
    for j in range(config.n_points):
        w = base + proj[j]
        for i in range(config.n_q):
            lv[:, i] = np.searchsorted(config.t[i], w[:, i], side="right")
        flat = lv @ weights
        counts = np.bincount(flat, minlength=env.n_outputs)
        row = counts / mc_samples
        # empirical frequencies: force the float row sum to exactly 1
        row[np.argmax(counts)] += 1.0 - row.sum()
        p[j] = row
    return p


def transition_matrix(config: ReceiverConfig, env: ChannelEnv,
                      backend: str = "auto", mc_samples: int = 200_000,
                      seed: int = 0) -> TransitionMatrix:
    """Transition matrix of the induced discrete channel.

    ``exact_scalar`` requires n_r == 1; ``monte_carlo`` draws ``mc_samples``
    noise vectors once and shares them across all alphabet rows. ``auto``
    picks exact for n_r == 1 and Monte Carlo otherwise.
    """
    _check_dims(config, env)
    if backend == "auto":
        backend = "exact_scalar" if env.n_r == 1 else "monte_carlo"
    if backend == "exact_scalar":
        if env.n_r != 1:
            raise ValueError("exact_scalar backend requires n_r == 1")
        p = _exact_scalar_matrix(config, env)
        degenerate = tuple(np.flatnonzero(config.v[:, 0] == 0.0).tolist())
        return TransitionMatrix(p=p, method="exact_scalar", mc_samples=0,
                                seed=seed, degenerate_adcs=degenerate)
    if backend == "monte_carlo":
        if mc_samples < 1:
            raise ValueError("monte_carlo needs mc_samples >= 1")
        p = _monte_carlo_matrix(config, env, int(mc_samples), seed)
        return TransitionMatrix(p=p, method="monte_carlo",
                                mc_samples=int(mc_samples), seed=seed)
    raise ValueError(f"unknown backend {backend!r}")


def max_alphabet_size(n_r: int, n_q: int, levels: int) -> int:
    """Number of regions that (levels-1)*n_q affine cuts can carve in R^{n_r}:
    sum_{i=0}^{n_r} C((levels-1)*n_q, i). Used as the default alphabet size."""
    if min(n_r, n_q) < 1 or levels < 2:
        raise ValueError("need n_r, n_q >= 1 and levels >= 2")
    cuts = (levels - 1) * n_q
    return int(sum(math.comb(cuts, i) for i in range(n_r + 1)))


def apply_csi_noise(H: np.ndarray, variance: float, seed: int) -> np.ndarray:
    """Add i.i.d. zero-mean Gaussian perturbations to every channel gain."""
    if variance < 0:
        raise ValueError("variance must be >= 0")
    H = np.atleast_2d(np.asarray(H, dtype=float))
    rng = np.random.default_rng(seed)
    return H + math.sqrt(variance) * rng.standard_normal(H.shape)


def to_json_doc(env: ChannelEnv, config: ReceiverConfig) -> dict:
    """Combined on-disk document for a channel/receiver pair.

    Field names and the row-major flattening of H, v and t are part of the
    file contract.
    """
    return {
        "n_t": env.n_t,
        "n_r": env.n_r,
        "n_q": env.n_q,
        "levels": env.levels,
        "H": env.H.ravel().tolist(),
        "snr_db": float(env.snr_db),
        "v": config.v.ravel().tolist(),
        "t": config.t.ravel().tolist(),
        "alphabet": [point.tolist() for point in config.alphabet],
    }


def from_json_doc(doc: dict) -> tuple[ChannelEnv, ReceiverConfig]:
    n_t, n_r, n_q = int(doc["n_t"]), int(doc["n_r"]), int(doc["n_q"])
    levels = int(doc["levels"])
    env = ChannelEnv(
        n_t=n_t, n_r=n_r, n_q=n_q, levels=levels,
        H=np.asarray(doc["H"], dtype=float).reshape(n_r, n_t),
        snr_db=float(doc["snr_db"]),
    )
    config = ReceiverConfig(
        v=np.asarray(doc["v"], dtype=float).reshape(n_q, n_r),
        t=np.asarray(doc["t"], dtype=float).reshape(n_q, levels - 1),
        alphabet=np.asarray(doc["alphabet"], dtype=float).reshape(-1, n_t),
    )
    return env, config


def save_json_doc(env: ChannelEnv, config: ReceiverConfig, path) -> None:
    with open(path, "w") as f:
        json.dump(to_json_doc(env, config), f, indent=1)


def load_json_doc(path) -> tuple[ChannelEnv, ReceiverConfig]:
    with open(path) as f:
        return from_json_doc(json.load(f))
