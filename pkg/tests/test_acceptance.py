"""End-to-end acceptance checks. Each test prints one PASS/FAIL line; run with
``pytest tests/test_acceptance.py -s`` to see them."""
import csv
import json
import time

import numpy as np
import pytest
import yaml

from qse.cli import main
from qse.model import forward_hybrid, init_hybrid
from qse.statevector import CNOT, RY, RZ, Circuit, Gate, H, Statevector, run_circuit
from qse.verify import cut_suite, gradcheck_suite


def report(label, ok, detail):
    print(f"\n[{'PASS' if ok else 'FAIL'}] {label}: {detail}")


def run_cli(*argv):
    return main([str(a) for a in argv])


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def metrics_of(out):
    with open(out / "metrics.csv", newline="") as f:
        return {r["metric"]: r["value"] for r in csv.DictReader(f)}


def inverse(gate: Gate) -> Gate:
    if gate.kind in ("RY", "RZ"):
        return Gate(gate.kind, gate.qubits, -gate.theta)
    return gate  # H and CNOT are self-inverse


def test_gradient_oracle():
    start = time.perf_counter()
    rep = gradcheck_suite(50, seed=0, qubits=(2, 4, 6), depths=(1, 2, 4), h=1e-5, tol_abs=1e-7, tol_rel=1e-5)
    elapsed = time.perf_counter() - start
    skips = {r.use_skip for r in rep.records}
    ok = rep.passed and elapsed < 60 and skips == {False, True} and len(rep.records) == 50
    report("1 gradient oracle", ok, f"50 instances, max |analytic - fd| {rep.max_abs:.2e}, {elapsed:.1f} s")
    assert ok


def test_cut_oracle():
    start = time.perf_counter()
    rep = cut_suite(100, 50, seed=0, max_qubits=6, max_depth=4, tolerance=1e-9)
    elapsed = time.perf_counter() - start
    kinds = [r.kind for r in rep.records]
    ok = rep.passed and elapsed < 120 and kinds.count("wire") == 100 and kinds.count("wire+gate") == 50
    report("2 cut vs uncut", ok,
           f"150 circuits, max deviation {rep.max_deviation:.2e}, counts exact {rep.counts_ok}, {elapsed:.1f} s")
    assert ok


def test_statevector_integrity():
    rng = np.random.default_rng(2024)
    n = 10
    gates = []
    for _ in range(1000):
        kind = rng.integers(4)
        q = int(rng.integers(n))
        if kind == 0:
            gates.append(H(q))
        elif kind == 1:
            gates.append(RY(q, rng.uniform(-np.pi, np.pi)))
        elif kind == 2:
            gates.append(RZ(q, rng.uniform(-np.pi, np.pi)))
        else:
            gates.append(CNOT(q, int((q + 1 + rng.integers(n - 1)) % n)))
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    start = Statevector(n, amps / np.linalg.norm(amps))
    forward, _ = run_circuit(Circuit(n, gates), start)
    back, _ = run_circuit(Circuit(n, [inverse(g) for g in reversed(gates)]), forward)
    norm_err = abs(forward.norm() - 1.0)
    round_trip = float(np.max(np.abs(back.amplitudes - start.amplitudes)))
    ok = norm_err <= 1e-10 and round_trip <= 1e-12
    report("3 statevector integrity", ok, f"norm drift {norm_err:.1e}, G G^dagger round trip {round_trip:.1e}")
    assert ok


@pytest.mark.slow
def test_ordering_analogue(configs_dir, tmp_path):
    start = time.perf_counter()
    assert run_cli("train", "--config", configs_dir / "train_compare.yaml", "--out", tmp_path) == 0
    elapsed = time.perf_counter() - start
    with open(tmp_path / "comparison.csv", newline="") as f:
        rows = {int(r["qubits"]): {k: float(v) for k, v in r.items() if k != "qubits"} for r in csv.DictReader(f)}
    c4, h4, r4 = rows[4]["top1_err_c"], rows[4]["top1_err_h"], rows[4]["top1_err_h_res"]
    c8, r8 = rows[8]["top1_err_c"], rows[8]["top1_err_h_res"]
    ok = r4 <= h4 + 0.005 and r4 <= c4 + 0.02 and r8 <= c8 + 0.02 and elapsed < 15 * 60
    report("4 ordering analogue", ok,
           f"4q C/H/Hres {c4:.3f}/{h4:.3f}/{r4:.3f}, 8q C/H/Hres {c8:.3f}/{rows[8]['top1_err_h']:.3f}/{r8:.3f}, "
           f"{elapsed:.0f} s")
    trend = rows[8]["top1_err_h"] <= h4
    print(f"[INFO] hybrid without skip non-increasing from 4 to 8 qubits: {trend}")
    assert ok


def test_scenario_conformance(configs_dir, golden_dir, tmp_path):
    results = {}
    for name in ("c1", "c2", "c3"):
        out = tmp_path / name
        assert run_cli("simulate", "--config", configs_dir / f"scenario_{name}.yaml", "--out", out) == 0
        produced = (out / "trace.jsonl").read_text()
        results[name] = produced == (golden_dir / f"scenario_{name}.jsonl").read_text()
    ok = all(results.values())
    report("5 scenario conformance", ok, ", ".join(f"{k.upper()} {'exact' if v else 'MISMATCH'}"
                                                   for k, v in results.items()))
    assert ok


def test_quantum_free_liveness(configs_dir, tmp_path):
    assert run_cli("simulate", "--config", configs_dir / "quantum_free.yaml", "--out", tmp_path) == 0
    metrics = metrics_of(tmp_path)
    events = [json.loads(line) for line in (tmp_path / "trace.jsonl").read_text().splitlines()]
    skips = {e["request"] for e in events if e["event"] == "skip-qnn"}
    ok = (metrics["arrivals"] == "1000" and metrics["failed"] == "0" and len(skips) == 1000
          and metrics["qnn_skipped"] == "1000")
    report("6 quantum-free liveness", ok,
           f"{metrics['arrivals']} requests, {metrics['failed']} failed, {len(skips)} skip decisions")
    assert ok


def random_command(rng, tmp_path, i, configs_dir):
    """One randomized (command, config path) pair for the determinism sweep."""
    seed = int(rng.integers(2**31))
    data = {"n_classes": int(rng.integers(2, 5)), "samples_per_class_train": int(rng.integers(5, 20)),
            "samples_per_class_test": int(rng.integers(2, 8)), "feature_dim": int(rng.integers(4, 9)),
            "separation": float(rng.uniform(0, 5))}
    kind = ["gen-data", "train", "gradcheck", "cut-verify", "simulate"][i % 5]
    if kind == "gen-data":
        doc = {"version": 1, "seed": seed, "dataset": data}
    elif kind == "train":
        family = ["classical", "hybrid"][int(rng.integers(2))]
        doc = {"version": 1, "seed": seed, "dataset": data,
               "model": {"family": family, "n_qubits": int(rng.integers(2, 4)), "depth": int(rng.integers(1, 3)),
                         "use_skip": bool(rng.integers(2))},
               "training": {"epochs": int(rng.integers(1, 4)), "batch_size": int(rng.integers(4, 17)),
                            "grad_method": ["parameter-shift", "adjoint"][int(rng.integers(2))]}}
    elif kind == "gradcheck":
        doc = {"version": 1, "seed": seed, "instances": int(rng.integers(1, 5)), "qubits": [2, 3], "depths": [1, 2]}
    elif kind == "cut-verify":
        doc = {"version": 1, "seed": seed, "wire_instances": int(rng.integers(1, 6)),
               "wire_gate_instances": int(rng.integers(0, 4)), "max_qubits": int(rng.integers(2, 6))}
    else:
        doc = yaml.safe_load((configs_dir / "continuum_topology.yaml").read_text())
        doc["seed"] = seed
        doc["workload"]["generator"]["count"] = int(rng.integers(10, 120))
        doc["simulation"]["trace_sample_rate"] = float(rng.choice([0.3, 1.0]))
    path = tmp_path / f"cfg{i}.yaml"
    path.write_text(yaml.safe_dump(doc, sort_keys=False))
    return kind, path


def test_determinism(configs_dir, tmp_path):
    rng = np.random.default_rng(77)
    outcomes = []
    for i in range(10):
        kind, cfg = random_command(rng, tmp_path, i, configs_dir)
        a, b = tmp_path / f"run{i}a", tmp_path / f"run{i}b"
        codes = (run_cli(kind, "--config", cfg, "--out", a), run_cli(kind, "--config", cfg, "--out", b))
        same = codes[0] == codes[1] == 0 and tree_bytes(a) == tree_bytes(b) and len(tree_bytes(a)) > 0
        outcomes.append((kind, same))
    ok = all(s for _, s in outcomes)
    report("7 determinism", ok, f"{sum(s for _, s in outcomes)}/10 randomized config pairs byte-identical "
                                f"({', '.join(sorted({k for k, _ in outcomes}))})")
    assert ok


def test_zero_parameter_skip_identity():
    rng = np.random.default_rng(8)
    worst = 0.0
    for n in (2, 3, 4, 6):
        model = init_hybrid(8, n, 5, depth=4, use_skip=True, first_rotation="Y", seed=n)
        model = type(model)(model.projection, model.ansatz_spec, np.zeros_like(model.ansatz_params),
                            model.readout, True)
        X = rng.normal(size=(25, 8))
        reference = model.readout(model.projection(X))
        worst = max(worst, float(np.max(np.abs(forward_hybrid(model, X) - reference))))
    ok = worst <= 1e-12
    report("8 zero-parameter skip identity", ok, f"100 inputs, max |delta| {worst:.1e}")
    assert ok
