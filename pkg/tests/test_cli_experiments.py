import json

import numpy as np
import pytest

from quantcap.cli import main
from quantcap.config import ConfigError, load_config
from quantcap.experiments import load_bank, run_experiment, save_bank
from quantcap.channel import ChannelEnv
from quantcap.neural import CheckpointFormatError
from quantcap.policy import PolicyBank, TrainConfig, infer

TINY_SISO = """
scenario = "siso_sweep"
seed = 101
out_dir = "{out}"
n_envs = 2

[channel]
n_t = 1
n_r = 1
n_q = 1
levels = 2
H = [[1.0]]

[train]
iterations = 1
traj_per_batch = 2
max_steps = 6
update_epochs = 1
patience = 0

[sweep]
snr_grid = [0.0, 10.0, 20.0]
runs = 2
max_steps = 8
patience = 4

[grid]
m_factor = 2.0
delta_factor = 1.0
"""


def write_config(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


@pytest.fixture
def siso_run(tmp_path):
    out = tmp_path / "run"
    cfg_path = write_config(tmp_path, TINY_SISO.format(out=out))
    status = run_experiment(cfg_path)
    assert status == 0
    return cfg_path, out


class TestConfigParsing:
    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "nope.toml")

    def test_syntax_error_carries_location(self, tmp_path):
        path = write_config(tmp_path, "scenario = [unclosed")
        with pytest.raises(ConfigError, match=r"exp\.toml"):
            load_config(path)

    def test_unknown_scenario(self, tmp_path):
        path = write_config(tmp_path, 'scenario = "warp_drive"')
        with pytest.raises(ConfigError, match="warp_drive"):
            load_config(path)

    def test_unknown_train_key(self, tmp_path):
        path = write_config(
            tmp_path, 'scenario = "train"\n[train]\nbogus = 3\n')
        with pytest.raises(ConfigError, match="bogus"):
            load_config(path)

    def test_defaults(self, tmp_path):
        path = write_config(tmp_path, 'scenario = "train"\n')
        cfg = load_config(path)
        assert cfg.inference_runs == 10
        assert cfg.snr_grid[0] == -10.0
        assert cfg.snr_grid[-1] == 40.0


class TestRunExperiment:
    def test_artifacts_exist(self, siso_run):
        _, out = siso_run
        for name in ("results.csv", "summary.json", "timings.csv",
                     "capacity_vs_snr.svg", "training_log.csv"):
            assert (out / name).exists(), name
        assert list(out.glob("constellation_*.svg"))
        assert list(out.glob("config_rl_snr*.json"))

    def test_row_counts(self, siso_run):
        _, out = siso_run
        lines = (out / "results.csv").read_text().strip().splitlines()
        header, rows = lines[0], lines[1:]
        assert header.split(",")[0] == "scenario"
        methods = [r.split(",")[2] for r in rows]
        assert methods.count("rl") == 6  # 3 SNRs x 2 runs
        assert methods.count("oracle") == 3
        assert methods.count("brute_force") == 3

    def test_byte_identical_rerun(self, siso_run, tmp_path):
        cfg_path, out = siso_run
        first = (out / "results.csv").read_bytes()
        out2 = tmp_path / "run2"
        assert run_experiment(cfg_path, out_override=str(out2)) == 0
        assert (out2 / "results.csv").read_bytes() == first

    def test_summary_recomputes_from_results(self, siso_run):
        _, out = siso_run
        lines = (out / "results.csv").read_text().strip().splitlines()[1:]
        groups = {}
        for line in lines:
            parts = line.split(",")
            groups.setdefault((parts[2], float(parts[1])), []).append(
                float(parts[4]))
        summary = json.loads((out / "summary.json").read_text())
        for entry in summary["groups"]:
            vals = groups[(entry["method"], entry["snr_db"])]
            assert entry["mean"] == pytest.approx(float(np.mean(vals)),
                                                  abs=1e-15)
            assert entry["std"] == pytest.approx(float(np.std(vals)),
                                                 abs=1e-15)
            assert entry["n"] == len(vals)

    def test_malformed_config_exits_2(self, tmp_path):
        path = write_config(tmp_path, "scenario = [broken")
        assert run_experiment(path) == 2

    def test_wall_ms_zeroed_in_results(self, siso_run):
        _, out = siso_run
        lines = (out / "results.csv").read_text().strip().splitlines()[1:]
        wall_col = 7
        assert all(line.split(",")[wall_col] == "0.0" for line in lines)


class TestCli:
    def test_sweep_command(self, tmp_path):
        out = tmp_path / "cli_run"
        cfg_path = write_config(tmp_path, TINY_SISO.format(out=out))
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        assert (out / "results.csv").exists()

    def test_seed_override_changes_rows(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg_path = write_config(tmp_path, TINY_SISO.format(out=out1))
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        assert main(["sweep", "--config", str(cfg_path), "--seed", "999",
                     "--out", str(out2)]) == 0
        a = (out1 / "results.csv").read_text()
        b = (out2 / "results.csv").read_text()
        assert a != b

    def test_plot_command(self, tmp_path):
        out = tmp_path / "plot_run"
        cfg_path = write_config(tmp_path, TINY_SISO.format(out=out))
        assert main(["sweep", "--config", str(cfg_path)]) == 0
        (out / "capacity_vs_snr.svg").unlink()
        assert main(["plot", "--out", str(out)]) == 0
        assert (out / "capacity_vs_snr.svg").exists()

    def test_plot_missing_results_exits_2(self, tmp_path):
        assert main(["plot", "--out", str(tmp_path / "empty")]) == 2


class TestBankCheckpoint:
    def test_round_trip_preserves_inference(self, tmp_path):
        env = ChannelEnv(n_t=1, n_r=1, n_q=1, levels=2, H=[[1.0]],
                         snr_db=10.0)
        bank = PolicyBank.create(env, seed=5, hidden_vt=(8, 8, 8),
                                 hidden_x=(8, 8, 8))
        save_bank(bank, tmp_path / "bank")
        loaded = load_bank(tmp_path / "bank")
        cfg = TrainConfig()
        _, res1, trace1 = infer(bank, env, 10.0, cfg, max_steps=10,
                                patience=5, seed=3)
        _, res2, trace2 = infer(loaded, env, 10.0, cfg, max_steps=10,
                                patience=5, seed=3)
        assert trace1 == trace2
        assert res1.capacity_bits == res2.capacity_bits

    def test_version_mismatch_refused(self, tmp_path):
        env = ChannelEnv(n_t=1, n_r=1, n_q=1, levels=2, H=[[1.0]],
                         snr_db=10.0)
        bank = PolicyBank.create(env, seed=5, hidden_vt=(8, 8, 8),
                                 hidden_x=(8, 8, 8))
        save_bank(bank, tmp_path / "bank")
        manifest = tmp_path / "bank" / "bank.json"
        doc = json.loads(manifest.read_text())
        doc["version"] = 7
        manifest.write_text(json.dumps(doc))
        with pytest.raises(CheckpointFormatError, match="7"):
            load_bank(tmp_path / "bank")

    def test_truncated_net_refused(self, tmp_path):
        env = ChannelEnv(n_t=1, n_r=1, n_q=1, levels=2, H=[[1.0]],
                         snr_db=10.0)
        bank = PolicyBank.create(env, seed=5, hidden_vt=(8, 8, 8),
                                 hidden_x=(8, 8, 8))
        save_bank(bank, tmp_path / "bank")
        net_file = tmp_path / "bank" / "band1_x.json"
        net_file.write_text(net_file.read_text()[:50])
        with pytest.raises(CheckpointFormatError):
            load_bank(tmp_path / "bank")
