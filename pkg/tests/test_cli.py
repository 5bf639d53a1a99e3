import csv
import json
import shutil
import subprocess
import sys

import pytest
import yaml

from qse import checkpoint
from qse.cli import main


def write_cfg(path, doc):
    path.write_text(yaml.safe_dump(doc, sort_keys=False), encoding="utf-8")
    return path


def run(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as f:
        return list(csv.DictReader(f))


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


SMALL_DATA = {"n_classes": 3, "samples_per_class_train": 12, "samples_per_class_test": 6, "feature_dim": 4,
              "separation": 4.0}


class TestGenData:
    def test_shipped_config(self, configs_dir, tmp_path, capsys):
        assert run("gen-data", "--config", configs_dir / "gen_data.yaml", "--out", tmp_path) == 0
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        assert (manifest["n_train"], manifest["n_test"]) == (2000, 500)
        assert manifest["spec"]["seed"] == 7
        assert "2000 train / 500 test" in capsys.readouterr().out

    def test_seed_flag_overrides(self, tmp_path):
        cfg = write_cfg(tmp_path / "g.yaml", {"version": 1, "seed": 1, "dataset": SMALL_DATA})
        assert run("gen-data", "--config", cfg, "--seed", 9, "--out", tmp_path / "o") == 0
        assert json.loads((tmp_path / "o" / "manifest.json").read_text())["spec"]["seed"] == 9

    def test_byte_identical_reruns(self, tmp_path):
        cfg = write_cfg(tmp_path / "g.yaml", {"version": 1, "seed": 3, "dataset": SMALL_DATA})
        run("gen-data", "--config", cfg, "--out", tmp_path / "a")
        run("gen-data", "--config", cfg, "--out", tmp_path / "b")
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")


class TestTrain:
    def test_classical_from_generated_dir(self, tmp_path):
        gen = write_cfg(tmp_path / "g.yaml", {"version": 1, "seed": 2, "dataset": SMALL_DATA})
        run("gen-data", "--config", gen, "--out", tmp_path / "data")
        cfg = write_cfg(tmp_path / "t.yaml", {
            "version": 1, "seed": 0, "dataset_dir": str(tmp_path / "data"),
            "model": {"family": "classical", "n_qubits": 3}, "training": {"epochs": 3}})
        assert run("train", "--config", cfg, "--out", tmp_path / "a") == 0
        history = read_csv(tmp_path / "a" / "history.csv")
        assert [int(r["epoch"]) for r in history] == [1, 2, 3]
        summary = json.loads((tmp_path / "a" / "summary.json").read_text())
        assert summary["family"] == "classical" and summary["width"] == 3
        assert summary["final_test_error"] == float(history[-1]["test_error"])
        model = checkpoint.load(tmp_path / "a" / "model.qsec")
        assert model.width == 3
        run("train", "--config", cfg, "--out", tmp_path / "b")
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_hybrid_in_memory_dataset(self, tmp_path):
        cfg = write_cfg(tmp_path / "t.yaml", {
            "version": 1, "seed": 1, "dataset": SMALL_DATA,
            "model": {"family": "hybrid", "n_qubits": 2, "depth": 2, "use_skip": True},
            "training": {"epochs": 2, "batch_size": 8}})
        assert run("train", "--config", cfg, "--out", tmp_path) == 0
        assert checkpoint.load(tmp_path / "model.qsec").use_skip is True

    def test_comparison_table(self, tmp_path):
        cfg = write_cfg(tmp_path / "t.yaml", {
            "version": 1, "seed": 0, "dataset": SMALL_DATA, "model": {"depth": 1},
            "training": {"epochs": 1, "grad_method": "adjoint"}, "compare": {"qubits": [2, 3], "seeds": [0, 1]}})
        assert run("train", "--config", cfg, "--out", tmp_path) == 0
        table = read_csv(tmp_path / "comparison.csv")
        assert list(table[0]) == ["qubits", "top1_err_c", "top1_err_h", "top1_err_h_res"]
        assert [int(r["qubits"]) for r in table] == [2, 3]
        assert len(read_csv(tmp_path / "comparison_runs.csv")) == 2 * 3 * 2

    def test_missing_dataset_dir(self, tmp_path):
        cfg = write_cfg(tmp_path / "t.yaml", {"version": 1, "seed": 0, "dataset_dir": str(tmp_path / "nope")})
        assert run("train", "--config", cfg, "--out", tmp_path / "o") == 2

    @pytest.mark.parametrize("doc", [
        {"version": 1, "dataset": SMALL_DATA},                                      # seed missing
        {"version": 1, "seed": 0},                                                  # no dataset
        {"version": 1, "seed": 0, "dataset": SMALL_DATA, "model": {"n_qubits": 8}},  # feature_dim < width
        {"version": 1, "seed": 0, "dataset": SMALL_DATA, "training": {"epochs": 0}},
        {"version": 1, "seed": 0, "dataset": SMALL_DATA, "optimizer": "sgd"},
        {"version": 2, "seed": 0, "dataset": SMALL_DATA},
    ])
    def test_schema_errors_before_side_effects(self, tmp_path, doc, capsys):
        cfg = write_cfg(tmp_path / "t.yaml", doc)
        assert run("train", "--config", cfg, "--out", tmp_path / "o") == 2
        assert not (tmp_path / "o").exists()
        assert "config error" in capsys.readouterr().err


class TestGradcheck:
    def test_passes(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "g.yaml", {"version": 1, "seed": 0, "instances": 4, "qubits": [2], "depths": [1]})
        assert run("gradcheck", "--config", cfg, "--out", tmp_path) == 0
        rows = read_csv(tmp_path / "gradcheck.csv")
        assert len(rows) == 4 and all(r["passed"] == "1" for r in rows)
        assert "gradcheck PASS" in capsys.readouterr().out

    def test_fault_injection_fails(self, configs_dir, tmp_path, capsys):
        assert run("gradcheck", "--config", configs_dir / "gradcheck_fault.yaml", "--out", tmp_path) == 1
        assert "gradcheck FAIL" in capsys.readouterr().out

    def test_unknown_fault_is_config_error(self, tmp_path):
        cfg = write_cfg(tmp_path / "g.yaml", {"version": 1, "seed": 0, "inject_fault": "flip"})
        assert run("gradcheck", "--config", cfg, "--out", tmp_path) == 2


class TestCutVerify:
    def test_small_suite(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path / "c.yaml", {"version": 1, "seed": 4, "wire_instances": 5, "wire_gate_instances": 3})
        assert run("cut-verify", "--config", cfg, "--out", tmp_path / "a", "--parallelism", 3) == 0
        rows = read_csv(tmp_path / "a" / "cutverify.csv")
        assert len(rows) == 8
        assert all(r["combinations"] == r["expected_combinations"] for r in rows)
        assert all(float(r["abs_deviation"]) < 1e-9 for r in rows)
        out = capsys.readouterr().out
        assert "cut-verify PASS" in out and "empty plan exact: True" in out
        run("cut-verify", "--config", cfg, "--out", tmp_path / "b")
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")

    def test_bad_parallelism(self, tmp_path):
        cfg = write_cfg(tmp_path / "c.yaml", {"version": 1, "seed": 0, "wire_instances": 1, "wire_gate_instances": 0})
        assert run("cut-verify", "--config", cfg, "--out", tmp_path, "--parallelism", 0) == 2


class TestSimulate:
    def test_scenario_c1(self, configs_dir, golden_dir, tmp_path):
        assert run("simulate", "--config", configs_dir / "scenario_c1.yaml", "--out", tmp_path) == 0
        lines = (tmp_path / "trace.jsonl").read_text().splitlines()
        assert lines == (golden_dir / "scenario_c1.jsonl").read_text().splitlines()
        steps = [json.loads(x) for x in lines]
        executed = [e["node"] for e in steps if e["event"] == "service-complete"]
        assert executed == ["fog-qpu-0", "cloud-qpu-0"]

    def test_quantum_free(self, configs_dir, tmp_path):
        assert run("simulate", "--config", configs_dir / "quantum_free.yaml", "--out", tmp_path) == 0
        metrics = {r["metric"]: r["value"] for r in read_csv(tmp_path / "metrics.csv")}
        assert metrics["failed"] == "0" and metrics["classified"] == "1000"

    def test_pinned_latency(self, configs_dir, tmp_path):
        assert run("simulate", "--config", configs_dir / "pinned_single.yaml", "--out", tmp_path) == 0
        metrics = {r["metric"]: r["value"] for r in read_csv(tmp_path / "metrics.csv")}
        assert float(metrics["latency_max_ms"]) == 40.0

    def test_seed_override_and_determinism(self, configs_dir, tmp_path):
        cfg = configs_dir / "continuum_topology.yaml"
        run("simulate", "--config", cfg, "--out", tmp_path / "a", "--seed", 5)
        run("simulate", "--config", cfg, "--out", tmp_path / "b", "--seed", 5)
        run("simulate", "--config", cfg, "--out", tmp_path / "c", "--seed", 6)
        assert tree_bytes(tmp_path / "a") == tree_bytes(tmp_path / "b")
        assert tree_bytes(tmp_path / "a") != tree_bytes(tmp_path / "c")

    def test_invalid_topology(self, configs_dir, tmp_path, capsys):
        doc = yaml.safe_load((configs_dir / "pinned_single.yaml").read_text())
        doc["nodes"][2].pop("max_qubits")
        cfg = write_cfg(tmp_path / "s.yaml", doc)
        assert run("simulate", "--config", cfg, "--out", tmp_path / "o") == 2
        assert "nodes.2" in capsys.readouterr().err
        assert not (tmp_path / "o").exists()


class TestEntryPoint:
    def test_missing_config_file(self, tmp_path):
        assert run("simulate", "--config", tmp_path / "none.yaml", "--out", tmp_path) == 2

    def test_usage_error(self):
        with pytest.raises(SystemExit) as info:
            main(["bogus"])
        assert info.value.code == 2

    def test_console_script(self, configs_dir, tmp_path):
        exe = shutil.which("qse")
        cmd = [exe] if exe else [sys.executable, "-m", "qse.cli"]
        proc = subprocess.run(cmd + ["simulate", "--config", str(configs_dir / "pinned_single.yaml"),
                                     "--out", str(tmp_path)],
                              capture_output=True, text=True, env={"QSE_LOG_LEVEL": "debug", "PATH": ""})
        assert proc.returncode == 0, proc.stderr
        assert "simulated 1 requests" in proc.stdout
        assert "DEBUG" in proc.stderr or "INFO" in proc.stderr
