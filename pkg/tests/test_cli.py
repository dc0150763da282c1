"""CLI commands, config validation, and output file contracts."""

import json

import numpy as np
import pytest
import yaml

from rdqpinn import cli, config as cfgmod
from rdqpinn.errors import ConfigurationError


def write_config(path, text):
    path.write_text(text)
    return str(path)


BASE = """
seed: 3
problem:
  dimension: 1
model:
  variant: fnn-te-qpinn
training:
  epochs: 2
  collocation: {{interior: [5, 4], boundary: 3, initial: 6}}
  reference_mse: {ref_mse}
reference:
  nodes: [64]
  snapshots: [0.0, 0.5, 1.0]
outputs:
  dir: {out}
"""


class TestConfigValidation:
    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError) as exc:
            cfgmod.resolve_config({"problem": {"dimensions": 1}})
        assert "dimensions" in str(exc.value)

    def test_unknown_nested_key_rejected(self):
        with pytest.raises(ConfigurationError):
            cfgmod.resolve_config({"training": {"adam": {"gamma": 0.5}}})

    def test_defaults_made_explicit(self):
        cfg = cfgmod.resolve_config({})
        assert cfg["training"]["lbfgs"]["c2"] == 0.9
        assert cfg["training"]["collocation"]["interior"] == [32, 32]
        assert cfg["reference"]["nodes"] == [512]
        assert len(cfg["reference"]["snapshots"]) == 21

    def test_2d_defaults(self):
        cfg = cfgmod.resolve_config({"problem": {"dimension": 2}})
        assert cfg["training"]["collocation"]["interior"] == [16, 16, 8]
        assert cfg["reference"]["nodes"] == [128, 128]
        assert cfg["reference"]["snapshots"] == [0.0, 0.330, 0.5, 0.665, 1.0]

    def test_variant_enum(self):
        with pytest.raises(ConfigurationError):
            cfgmod.resolve_config({"model": {"variant": "cnn"}})

    def test_qubit_range_for_quantum_variants(self):
        with pytest.raises(ConfigurationError):
            cfgmod.resolve_config({"model": {"variant": "qnn-te-qpinn",
                                             "n_qubits": 9}})

    def test_type_errors(self):
        with pytest.raises(ConfigurationError):
            cfgmod.resolve_config({"seed": "zero"})

    def test_nonpositive_beta_rejected(self):
        cfg = cfgmod.resolve_config(
            {"problem": {"beta": {"kappa1": 0.0}}})
        with pytest.raises(ConfigurationError):
            cfgmod.make_beta(cfg)


class TestReferenceCommand:
    def test_steady_state_rows(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
problem:
  initial_condition: {{kind: steady_state}}
reference:
  nodes: [64]
  snapshots: [0.0, 1.0]
outputs:
  dir: {tmp_path / 'out'}
""")
        assert cli.main(["reference", "--config", cfg_path]) == 0
        rows = (tmp_path / "out" / "reference.csv").read_text().splitlines()
        assert rows[0] == "x,t,c_A,c_S"
        for row in rows[1:5]:
            cols = row.split(",")
            assert float(cols[2]) == pytest.approx(1e-3, rel=1e-6)
            assert float(cols[3]) == pytest.approx(1000.0, rel=1e-6)
        assert (tmp_path / "out" / "reference_meta.json").exists()
        assert (tmp_path / "out" / "reference_fields.png").exists()

    def test_rerun_identical_files(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
reference:
  nodes: [64]
  snapshots: [0.0, 1.0]
outputs:
  dir: {tmp_path / 'out'}
  figures: false
""")
        cli.main(["reference", "--config", cfg_path])
        first = (tmp_path / "out" / "reference.csv").read_bytes()
        cli.main(["reference", "--config", cfg_path])
        assert (tmp_path / "out" / "reference.csv").read_bytes() == first

    def test_2d_snapshot_blocks(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
problem:
  dimension: 2
  initial_condition: {{kind: gaussian, width: 0.25}}
reference:
  nodes: [8, 8]
  rtol: 1.0e-6
  atol: 1.0e-8
  snapshots: [0.0, 0.330, 0.665, 1.0]
outputs:
  dir: {tmp_path / 'out'}
  figures: false
""")
        assert cli.main(["reference", "--config", cfg_path]) == 0
        rows = (tmp_path / "out" / "reference.csv").read_text().splitlines()
        assert rows[0] == "x,y,t,c_A,c_S"
        times = {row.split(",")[2] for row in rows[1:]}
        assert len(times) == 4
        assert len(rows) - 1 == 4 * 8 * 8


class TestTrainCommand:
    def test_single_epoch_single_row(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
model: {{variant: pinn}}
training:
  epochs: 1
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        assert cli.main(["train", "--config", cfg_path]) == 0
        rows = (tmp_path / "out" / "history.csv").read_text().splitlines()
        assert rows[0] == ",".join(cli.HISTORY_COLUMNS)
        assert len(rows) == 2

    def test_pinn_zero_circuit_evals(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
model: {{variant: pinn}}
training:
  epochs: 2
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        cli.main(["train", "--config", cfg_path])
        rows = (tmp_path / "out" / "history.csv").read_text().splitlines()[1:]
        assert all(row.split(",")[-1] == "0" for row in rows)

    def test_seed_sweep_three_files(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
model: {{variant: pinn}}
training:
  epochs: 1
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
  seeds: [0, 1, 2]
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        cli.main(["train", "--config", cfg_path])
        for s in (0, 1, 2):
            assert (tmp_path / "out" / f"history_seed{s}.csv").exists()

    def test_byte_identical_reruns(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
training:
  epochs: 2
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        cli.main(["train", "--config", cfg_path])
        first = (tmp_path / "out" / "history.csv").read_bytes()
        cli.main(["train", "--config", cfg_path])
        assert (tmp_path / "out" / "history.csv").read_bytes() == first

    def test_resolved_config_echo(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
model: {{variant: pinn}}
training:
  epochs: 1
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        cli.main(["train", "--config", cfg_path])
        echoed = yaml.safe_load(
            (tmp_path / "out" / "resolved_config.yaml").read_text())
        assert echoed["training"]["lbfgs"]["c1"] == 1e-4
        assert echoed["training"]["tolerance"] == 1e-9


class TestInferCommand:
    def test_final_mse_reproduced(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
seed: 4
training:
  epochs: 2
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
reference:
  nodes: [32]
  snapshots: [0.0, 0.5, 1.0]
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        cli.main(["train", "--config", cfg_path])
        rows = (tmp_path / "out" / "history.csv").read_text().splitlines()
        header = rows[0].split(",")
        last = rows[-1].split(",")
        hist_mse_a = float(last[header.index("mse_A")])
        hist_mse_s = float(last[header.index("mse_S")])

        assert cli.main(["infer", "--config", cfg_path, "--checkpoint",
                         str(tmp_path / "out" / "checkpoint.npz"),
                         "--out", str(tmp_path / "inf")]) == 0
        report = (tmp_path / "inf" / "error_report.csv").read_text().splitlines()
        vals = {}
        for row in report[1:]:
            variant, species, metric, value = row.split(",")
            vals[(species, metric)] = float(value)
        assert abs(vals[("A", "mse")] - hist_mse_a) < 1e-12
        assert abs(vals[("S", "mse")] - hist_mse_s) < 1e-12

    def test_incompatible_checkpoint_fails(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
seed: 4
training:
  epochs: 1
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        cli.main(["train", "--config", cfg_path])
        other_cfg = write_config(tmp_path / "c2.yaml", f"""
model: {{variant: qnn-te-qpinn}}
training:
  epochs: 1
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
outputs: {{dir: {tmp_path / 'out2'}, figures: false}}
""")
        code = cli.main(["infer", "--config", other_cfg, "--checkpoint",
                         str(tmp_path / "out" / "checkpoint.npz"),
                         "--out", str(tmp_path / "inf2")])
        assert code != 0
        err = capsys.readouterr().err.strip().splitlines()[-1]
        payload = json.loads(err)
        assert payload["error"] == "CheckpointError"


class TestSweepCommand:
    def test_epochs_axis_rows(self, tmp_path):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
training:
  epochs: 1
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
sweep:
  axis: epochs
  values: [1, 2]
  variants: [pinn, fnn-te-qpinn]
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        assert cli.main(["sweep", "--config", cfg_path]) == 0
        rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()
        assert rows[0] == "axis,value,variant,final_total,status"
        assert len(rows) == 5
        assert all(row.endswith("ok") for row in rows[1:])

    def test_qubit_value_out_of_range(self, tmp_path, capsys):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
training:
  epochs: 1
  reference_mse: false
sweep: {{axis: qubits, values: [10]}}
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        assert cli.main(["sweep", "--config", cfg_path]) != 0

    def test_failed_run_recorded_as_row(self, tmp_path, monkeypatch):
        cfg_path = write_config(tmp_path / "c.yaml", f"""
training:
  epochs: 1
  collocation: {{interior: [4, 3], boundary: 2, initial: 4}}
  reference_mse: false
sweep:
  axis: epochs
  values: [1]
  variants: [pinn, fnn-te-qpinn]
outputs: {{dir: {tmp_path / 'out'}, figures: false}}
""")
        calls = {"n": 0}
        real = cli._run_training

        def flaky(cfg, seed, out, tag=""):
            calls["n"] += 1
            if calls["n"] == 1:
                raise RuntimeError("synthetic failure")
            return real(cfg, seed, out, tag)

        monkeypatch.setattr(cli, "_run_training", flaky)
        assert cli.main(["sweep", "--config", cfg_path]) == 0
        rows = (tmp_path / "out" / "sweep.csv").read_text().splitlines()[1:]
        statuses = [row.split(",")[-1] for row in rows]
        assert any(s.startswith("failed") for s in statuses)
        assert any(s == "ok" for s in statuses)


class TestCsvFormat:
    def test_seventeen_significant_digits(self, tmp_path):
        path = tmp_path / "t.csv"
        cli.write_csv(path, ("a",), [(1 / 3,)])
        text = path.read_text().splitlines()[1]
        assert text == format(1 / 3, ".17g")

    def test_error_line_is_json(self, tmp_path, capsys):
        bad = write_config(tmp_path / "bad.yaml", "problem: {dimension: 5}\n")
        code = cli.main(["reference", "--config", bad])
        assert code == 1
        err = capsys.readouterr().err.strip().splitlines()[-1]
        payload = json.loads(err)
        assert payload["error"] == "ConfigurationError"
