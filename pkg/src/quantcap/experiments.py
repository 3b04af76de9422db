"""Experiment orchestration: scenario execution, result persistence, and
policy-bank checkpointing.

Every run is reproducible byte-for-byte from (config file, master seed):
sub-seeds derive from labelled splitmix paths, rows are written in a fixed
sort order, and floats are serialized with repr (shortest round-trip).
Wall-clock timings are inherently non-deterministic, so results.csv carries a
zeroed wall_ms column and the measured times live in timings.csv, which is
outside the determinism contract.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import figures
from .baselines import (GridSpec, brute_force_search, evaluate_baseline,
                        fixed_constellation, noisy_csi_experiment,
                        theory_check)
from .capacity import onebit_awgn_oracle
from .channel import ChannelEnv, to_json_doc
from .config import ConfigError, ExperimentConfig, load_config
from .neural import (CheckpointFormatError, init_adam, load_checkpoint,
                     save_checkpoint)
from .policy import (BANDS, PolicyBank, infer, train,
                     write_training_log)
from .seeding import derive_seed

RESULT_COLUMNS = ("scenario", "snr_db", "method", "run_index",
                  "capacity_bits", "power", "steps_used", "wall_ms", "seed")
BANK_VERSION = 1


@dataclass
class ResultRow:
    scenario: str
    snr_db: float
    method: str
    run_index: int
    capacity_bits: float
    power: float
    steps_used: int
    seed: int
    wall_ms: float = 0.0


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results_csv(rows: list[ResultRow], path) -> None:
    rows = sorted(rows, key=lambda r: (r.scenario, r.method, r.snr_db,
                                       r.run_index))
    with open(path, "w", newline="") as f:
        f.write(",".join(RESULT_COLUMNS) + "\n")
        for r in rows:
            f.write(",".join([
                r.scenario, _fmt(r.snr_db), r.method, str(r.run_index),
                _fmt(r.capacity_bits), _fmt(r.power), str(r.steps_used),
                _fmt(0.0), str(r.seed),
            ]) + "\n")


def write_timings_csv(rows: list[ResultRow], path) -> None:
    ordered = sorted(rows, key=lambda r: (r.scenario, r.method, r.snr_db,
                                          r.run_index))
    with open(path, "w", newline="") as f:
        f.write("scenario,snr_db,method,run_index,wall_ms\n")
        for r in ordered:
            f.write(f"{r.scenario},{_fmt(r.snr_db)},{r.method},"
                    f"{r.run_index},{r.wall_ms:.3f}\n")


def write_summary(rows: list[ResultRow], scenario: str, seed: int, path) -> None:
    groups: dict[tuple, list[float]] = {}
    for r in rows:
        groups.setdefault((r.method, r.snr_db), []).append(r.capacity_bits)
    summary = {
        "scenario": scenario,
        "seed": seed,
        "groups": [
            {
                "method": method,
                "snr_db": snr,
                "mean": float(np.mean(vals)),
                "std": float(np.std(vals)),
                "n": len(vals),
            }
            for (method, snr), vals in sorted(groups.items())
        ],
    }
    with open(path, "w") as f:
        json.dump(summary, f, indent=1)


def thread_count() -> int:
    env = os.environ.get("QUANTCAP_THREADS")
    if env:
        return max(1, int(env))
    return min(4, os.cpu_count() or 1)


def parallel_map(fn, items):
    """Ordered map over a worker pool capped by QUANTCAP_THREADS."""
    n = thread_count()
    if n <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# policy bank checkpointing (one file per band and net, plus a manifest)
# ---------------------------------------------------------------------------

def save_bank(bank: PolicyBank, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"version": BANK_VERSION, "dims": list(bank.dims),
                "bands": [list(b) for b in BANDS]}
    with open(directory / "bank.json", "w") as f:
        json.dump(manifest, f)
    for b in range(len(BANDS)):
        save_checkpoint(directory / f"band{b}_vt.json", bank.nets_vt[b],
                        bank.adam_vt[b])
        save_checkpoint(directory / f"band{b}_x.json", bank.nets_x[b],
                        bank.adam_x[b])


def load_bank(directory) -> PolicyBank:
    directory = Path(directory)
    try:
        with open(directory / "bank.json") as f:
            manifest = json.load(f)
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointFormatError(f"cannot read bank manifest: {exc}") from exc
    version = manifest.get("version")
    if version != BANK_VERSION:
        raise CheckpointFormatError(
            f"bank version {version} != supported {BANK_VERSION}")
    nets_vt, nets_x, adam_vt, adam_x = [], [], [], []
    for b in range(len(BANDS)):
        net, adam = load_checkpoint(directory / f"band{b}_vt.json")
        nets_vt.append(net)
        adam_vt.append(adam if adam is not None else init_adam(net))
        net, adam = load_checkpoint(directory / f"band{b}_x.json")
        nets_x.append(net)
        adam_x.append(adam if adam is not None else init_adam(net))
    return PolicyBank(tuple(manifest["dims"]), nets_vt, nets_x, adam_vt, adam_x)


# ---------------------------------------------------------------------------
# scenario pieces
# ---------------------------------------------------------------------------

def _prepare_bank(cfg: ExperimentConfig, out: Path) -> PolicyBank:
    if cfg.policy_dir:
        return load_bank(cfg.policy_dir)
    bank = PolicyBank.create(cfg.env, seed=derive_seed(cfg.seed, "bank"),
                             lr=cfg.train.learning_rate)
    envs = [cfg.env] * cfg.n_envs
    bank, log = train(bank, envs, cfg.train)
    write_training_log(log, out / "training_log.csv")
    save_bank(bank, out / "policy")
    return bank


def _snapshot(path: Path, env: ChannelEnv, config, capacity_bits: float,
              p_star) -> None:
    doc = to_json_doc(env, config)
    doc["capacity_bits"] = capacity_bits
    doc["p_star"] = np.asarray(p_star, dtype=float).tolist()
    with open(path, "w") as f:
        json.dump(doc, f, indent=1)


def _rl_rows(cfg: ExperimentConfig, bank: PolicyBank, out: Path) -> list[ResultRow]:
    tasks = [(snr, run) for snr in cfg.snr_grid
             for run in range(cfg.inference_runs)]

    def one(task):
        snr, run = task
        t0 = time.perf_counter()
        seed = derive_seed(cfg.seed, "infer", snr, run)
        best_cfg, best_res, trace = infer(
            bank, cfg.env, snr, cfg.train, max_steps=cfg.inference_steps,
            patience=cfg.inference_patience, seed=seed,
            env_id=run % cfg.n_envs)
        return (snr, run, best_cfg, best_res, len(trace) - 1,
                (time.perf_counter() - t0) * 1e3)

    rows = []
    for snr, run, best_cfg, best_res, steps, ms in parallel_map(one, tasks):
        rows.append(ResultRow(
            scenario=cfg.scenario, snr_db=float(snr), method="rl",
            run_index=run, capacity_bits=best_res.capacity_bits,
            power=best_res.mean_power, steps_used=steps, seed=cfg.seed,
            wall_ms=ms))
        _snapshot(out / f"config_rl_snr{snr:g}_run{run}.json",
                  replace(cfg.env, snr_db=float(snr)), best_cfg,
                  best_res.capacity_bits, best_res.p_star.p)
    return rows


def run_siso_sweep(cfg: ExperimentConfig, out: Path) -> list[ResultRow]:
    bank = _prepare_bank(cfg, out)
    rows = _rl_rows(cfg, bank, out)
    for snr in cfg.snr_grid:
        env = replace(cfg.env, snr_db=float(snr))
        if cfg.env.n_q == 1 and cfg.env.levels == 2:
            rows.append(ResultRow(
                scenario=cfg.scenario, snr_db=float(snr), method="oracle",
                run_index=0, capacity_bits=onebit_awgn_oracle(env.power),
                power=env.power, steps_used=0, seed=cfg.seed))
        t0 = time.perf_counter()
        root = math.sqrt(env.power)
        bf = brute_force_search(env, GridSpec(
            m=cfg.grid_m_factor * root, delta=cfg.grid_delta_factor * root))
        rows.append(ResultRow(
            scenario=cfg.scenario, snr_db=float(snr), method="brute_force",
            run_index=0, capacity_bits=bf.capacity_bits, power=env.power,
            steps_used=0, seed=cfg.seed,
            wall_ms=(time.perf_counter() - t0) * 1e3))
        _snapshot(out / f"config_brute_force_snr{snr:g}_run0.json", env,
                  bf.config, bf.capacity_bits, bf.p_star)
    return rows


def _baseline_rows(cfg: ExperimentConfig) -> list[ResultRow]:
    rows = []
    for snr in cfg.snr_grid:
        env = replace(cfg.env, snr_db=float(snr))
        specs = ([("qam", o) for o in cfg.qam_orders]
                 + [("psk", o) for o in cfg.psk_orders])
        for kind, order in specs:
            label = f"{kind}{order}"
            t0 = time.perf_counter()
            alphabet = fixed_constellation(kind, order, env.power,
                                           n_t=env.n_t)
            res = evaluate_baseline(alphabet, env, label=label,
                                    seed=derive_seed(cfg.seed, "baseline",
                                                     label, snr))
            rows.append(ResultRow(
                scenario=cfg.scenario, snr_db=float(snr), method=label,
                run_index=0, capacity_bits=res.capacity_bits, power=env.power,
                steps_used=0, seed=cfg.seed,
                wall_ms=(time.perf_counter() - t0) * 1e3))
    return rows


def run_mimo_sweep(cfg: ExperimentConfig, out: Path) -> list[ResultRow]:
    bank = _prepare_bank(cfg, out)
    return _rl_rows(cfg, bank, out) + _baseline_rows(cfg)


def run_baseline_only(cfg: ExperimentConfig, out: Path) -> list[ResultRow]:
    return _baseline_rows(cfg)


def run_noisy_csi(cfg: ExperimentConfig, out: Path) -> list[ResultRow]:
    bank = _prepare_bank(cfg, out)
    rows = []
    variances = [0.0] + list(cfg.csi_variances)
    for snr in cfg.snr_grid:
        env = replace(cfg.env, snr_db=float(snr))
        seeds = [derive_seed(cfg.seed, "csi-run", snr, k)
                 for k in range(cfg.inference_runs)]
        t0 = time.perf_counter()
        report = noisy_csi_experiment(env, bank, variances, seeds, cfg.train,
                                      max_steps=cfg.inference_steps,
                                      patience=cfg.inference_patience)
        ms = (time.perf_counter() - t0) * 1e3 / max(1, len(report))
        for row in report:
            run = seeds.index(row["seed"])
            rows.append(ResultRow(
                scenario=cfg.scenario, snr_db=float(snr),
                method=f"rl_csi_v{row['variance']:g}", run_index=run,
                capacity_bits=row["capacity_bits"], power=env.power,
                steps_used=row["steps_used"], seed=cfg.seed, wall_ms=ms))
    return rows


def run_theory_check(cfg: ExperimentConfig, out: Path) -> list[ResultRow]:
    env = cfg.env
    root = math.sqrt(env.power)
    m_list = [f * root for f in cfg.grid_m_list]
    delta_list = [f * root for f in cfg.grid_delta_list]
    t0 = time.perf_counter()
    table = theory_check(env, m_list, delta_list)
    ms = (time.perf_counter() - t0) * 1e3 / max(1, len(table["rows"]))
    rows = []
    for entry in table["rows"]:
        rows.append(ResultRow(
            scenario=cfg.scenario, snr_db=env.snr_db,
            method=f"grid_m{entry['m'] / root:g}_d{entry['delta'] / root:g}",
            run_index=0, capacity_bits=entry["capacity_bits"],
            power=env.power, steps_used=0, seed=cfg.seed, wall_ms=ms))
    if env.n_q == 1 and env.levels == 2:
        rows.append(ResultRow(
            scenario=cfg.scenario, snr_db=env.snr_db, method="oracle",
            run_index=0, capacity_bits=onebit_awgn_oracle(env.power),
            power=env.power, steps_used=0, seed=cfg.seed))
    with open(out / "theory_check.csv", "w", newline="") as f:
        f.write("m,delta,capacity_bits\n")
        for entry in table["rows"]:
            f.write(f"{_fmt(entry['m'])},{_fmt(entry['delta'])},"
                    f"{_fmt(entry['capacity_bits'])}\n")
    return rows


def run_train_only(cfg: ExperimentConfig, out: Path) -> list[ResultRow]:
    bank = PolicyBank.create(cfg.env, seed=derive_seed(cfg.seed, "bank"),
                             lr=cfg.train.learning_rate)
    envs = [cfg.env] * cfg.n_envs
    t0 = time.perf_counter()
    bank, log = train(bank, envs, cfg.train)
    ms = (time.perf_counter() - t0) * 1e3
    write_training_log(log, out / "training_log.csv")
    save_bank(bank, out / "policy")
    rows = []
    for entry in log:
        band_hi = BANDS[entry["band"]][1]
        rows.append(ResultRow(
            scenario=cfg.scenario, snr_db=band_hi,
            method=f"train_band{entry['band']}",
            run_index=entry["iteration"],
            capacity_bits=entry["best_reward"], power=0.0,
            steps_used=0, seed=cfg.seed, wall_ms=ms / max(1, len(log))))
    return rows


_SCENARIOS = {
    "siso_sweep": run_siso_sweep,
    "mimo_sweep": run_mimo_sweep,
    "noisy_csi": run_noisy_csi,
    "theory_check": run_theory_check,
    "train": run_train_only,
    "baseline": run_baseline_only,
}


def run_experiment(config_path, seed_override: int | None = None,
                   out_override: str | None = None,
                   scenario_override: str | None = None) -> int:
    """Execute a scenario end to end; returns the process exit status.

    Exit 2 marks a malformed configuration, exit 1 a runtime failure (partial
    results are preserved), 0 success.
    """
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"config error: {exc}")
        return 2
    if scenario_override is not None:
        cfg.scenario = scenario_override
    if seed_override is not None:
        cfg.seed = int(seed_override)
        cfg.train = replace(cfg.train, seed=int(seed_override))
    if out_override is not None:
        cfg.out_dir = out_override

    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows: list[ResultRow] = []
    try:
        rows = _SCENARIOS[cfg.scenario](cfg, out)
        write_results_csv(rows, out / "results.csv")
        write_timings_csv(rows, out / "timings.csv")
        write_summary(rows, cfg.scenario, cfg.seed, out / "summary.json")
        if cfg.scenario in ("siso_sweep", "mimo_sweep", "noisy_csi"):
            figures.emit_figures(out)
        return 0
    except Exception as exc:  # noqa: BLE001 - report and preserve partials
        if rows:
            write_results_csv(rows, out / "results.csv")
        print(f"runtime failure: {type(exc).__name__}: {exc}")
        return 1
