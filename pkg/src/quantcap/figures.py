"""SVG figure emission from persisted results.

``capacity_vs_snr.svg`` draws one mean line per method with a shaded one-
standard-deviation band; ``constellation_<snr>.svg`` shows the best learned
alphabet at that SNR with point opacity proportional to the optimizing input
probability, plus the threshold lines (1-D) or decision-boundary traces (2-D)
of the learned receiver.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

MIN_ALPHA = 0.08
FAINT_MASS = 1e-3


def _read_results(path: Path) -> list[dict]:
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def _capacity_plot(rows: list[dict], out_dir: Path) -> Path:
    series: dict[str, dict[float, list[float]]] = {}
    for row in rows:
        method = row["method"]
        if method.startswith("train_band"):
            continue
        snr = float(row["snr_db"])
        series.setdefault(method, {}).setdefault(snr, []).append(
            float(row["capacity_bits"]))

    fig, ax = plt.subplots(figsize=(7, 4.5))
    for method in sorted(series):
        pts = sorted(series[method].items())
        snrs = np.array([p[0] for p in pts])
        means = np.array([np.mean(p[1]) for p in pts])
        stds = np.array([np.std(p[1]) for p in pts])
        ax.plot(snrs, means, marker="o", markersize=3, label=method)
        ax.fill_between(snrs, means - stds, means + stds, alpha=0.2)
    ax.set_xlabel("SNR (dB)")
    ax.set_ylabel("capacity (bits)")
    ax.grid(True, linestyle=":")
    ax.legend()
    fig.tight_layout()
    path = out_dir / "capacity_vs_snr.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


def _point_alphas(p_star: np.ndarray) -> np.ndarray:
    peak = p_star.max() if p_star.size and p_star.max() > 0 else 1.0
    alphas = np.clip(p_star / peak, MIN_ALPHA, 1.0)
    return np.where(p_star < FAINT_MASS, MIN_ALPHA, alphas)


def _constellation_plot(doc: dict, snr: float, out_dir: Path) -> Path:
    alphabet = np.asarray(doc["alphabet"], dtype=float)
    p_star = np.asarray(doc.get("p_star", np.ones(len(alphabet))), dtype=float)
    n_q = int(doc["n_q"])
    levels = int(doc["levels"])
    n_r = int(doc["n_r"])
    v = np.asarray(doc["v"], dtype=float).reshape(n_q, n_r)
    t = np.asarray(doc["t"], dtype=float).reshape(n_q, levels - 1)
    H = np.asarray(doc["H"], dtype=float).reshape(n_r, int(doc["n_t"]))
    alphas = _point_alphas(p_star)

    fig, ax = plt.subplots(figsize=(5.5, 4.5) if alphabet.shape[1] > 1
                           else (6, 2.2))
    if alphabet.shape[1] == 1:
        for x, a in zip(alphabet[:, 0], alphas):
            ax.scatter([x], [0.0], s=70, color="tab:blue", alpha=float(a),
                       zorder=3)
        # effective scalar thresholds where the combiner row is non-zero
        for i in range(n_q):
            if v[i, 0] == 0:
                continue
            for tau in t[i] / v[i, 0]:
                ax.axvline(tau, color="tab:red", linestyle="--", lw=1)
        ax.set_yticks([])
        ax.set_xlabel("input value")
    else:
        for (x, y), a in zip(alphabet[:, :2], alphas):
            ax.scatter([x], [y], s=70, color="tab:blue", alpha=float(a),
                       zorder=3)
        span = 1.1 * max(1.0, np.abs(alphabet).max())
        grid = np.linspace(-span, span, 2)
        for i in range(n_q):
            normal = v[i] @ H  # boundary v_i H x = tau in the input plane
            for tau in t[i]:
                if abs(normal[1]) > 1e-12:
                    xs = grid
                    ys = (tau - normal[0] * xs) / normal[1]
                elif abs(normal[0]) > 1e-12:
                    xs = np.full(2, tau / normal[0])
                    ys = np.array([-span, span])
                else:
                    continue
                ax.plot(xs, ys, color="tab:red", linestyle="--", lw=1)
        ax.set_xlim(-span, span)
        ax.set_ylim(-span, span)
        ax.set_xlabel("input dimension 1")
        ax.set_ylabel("input dimension 2")
    ax.set_title(f"SNR {snr:g} dB (opacity = input probability)")
    ax.grid(True, linestyle=":", alpha=0.4)
    fig.tight_layout()
    path = out_dir / f"constellation_{snr:g}.svg"
    fig.savefig(path)
    plt.close(fig)
    return path


def emit_figures(results_dir) -> list[Path]:
    """Render figures for a finished run; returns the written paths."""
    results_dir = Path(results_dir)
    results_csv = results_dir / "results.csv"
    if not results_csv.exists():
        raise FileNotFoundError(f"{results_csv} not found")
    rows = _read_results(results_csv)
    written = [_capacity_plot(rows, results_dir)]

    # one constellation per SNR, using the best learned configuration
    best: dict[float, tuple[float, dict]] = {}
    for snap in sorted(results_dir.glob("config_rl_snr*_run*.json")):
        with open(snap) as f:
            doc = json.load(f)
        snr = float(doc["snr_db"])
        cap = float(doc.get("capacity_bits", 0.0))
        if snr not in best or cap > best[snr][0]:
            best[snr] = (cap, doc)
    for snr, (_, doc) in sorted(best.items()):
        written.append(_constellation_plot(doc, snr, results_dir))
    return written
