"""Command-line front door: ``qse <command> --config FILE [--seed N] [--out DIR]``.

Exit status: 0 on success, 1 when a verification fails, 2 for configuration
or usage errors, 3 for any other runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
from pathlib import Path
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import checkpoint, verify
from .config import load_config
from .continuum import ContinuumConfig, simulate
from .datagen import SyntheticDatasetSpec, generate, read_dataset, write_dataset
from .errors import ConfigError, QseError
from .model import TrainConfig, evaluate_top1, init_classical, init_hybrid, train

log = logging.getLogger("qse")

EXIT_OK, EXIT_VERIFY, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Section):
    n_classes: int = Field(10, ge=2)
    samples_per_class_train: int = Field(200, ge=1)
    samples_per_class_test: int = Field(50, ge=1)
    feature_dim: int = Field(16, ge=1)
    separation: float = Field(4.0, ge=0.0)

    def spec(self, seed: int) -> SyntheticDatasetSpec:
        return SyntheticDatasetSpec(**self.model_dump(), seed=seed)


class ModelSection(_Section):
    family: Literal["hybrid", "classical"] = "hybrid"
    n_qubits: int = Field(4, ge=1)      # width of the classical baseline too
    depth: int = Field(8, ge=1)
    use_skip: bool = True
    first_rotation: Literal["Y", "Z"] = "Y"


class TrainingSection(_Section):
    epochs: int = Field(100, ge=1)
    batch_size: int = Field(32, ge=1)
    learning_rate: float = Field(1e-3, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    epsilon: float = Field(1e-8, gt=0)
    grad_method: Literal["parameter-shift", "adjoint"] = "parameter-shift"


class CompareSection(_Section):
    qubits: list[int] = Field(default_factory=lambda: [4, 8])
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2])


class GenDataConfig(_Section):
    version: Literal[1]
    seed: int
    dataset: DatasetSection = DatasetSection()


class TrainExperiment(_Section):
    version: Literal[1]
    seed: int
    dataset: Optional[DatasetSection] = None
    dataset_dir: Optional[str] = None
    model: ModelSection = ModelSection()
    training: TrainingSection = TrainingSection()
    compare: Optional[CompareSection] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.dataset is None) == (self.dataset_dir is None):
            raise ValueError("give exactly one of 'dataset' (generated in memory) or 'dataset_dir'")
        if self.dataset is not None:
            widths = [self.model.n_qubits] + (self.compare.qubits if self.compare else [])
            if self.dataset.feature_dim < max(widths):
                raise ValueError(f"feature_dim {self.dataset.feature_dim} is smaller than model width {max(widths)}")
        return self


class GradcheckConfig(_Section):
    version: Literal[1]
    seed: int
    instances: int = Field(50, ge=1)
    qubits: list[int] = Field(default_factory=lambda: [2, 4, 6])
    depths: list[int] = Field(default_factory=lambda: [1, 2, 4])
    step: float = Field(1e-5, gt=0)
    tol_abs: float = Field(1e-7, gt=0)
    tol_rel: float = Field(1e-5, gt=0)
    inject_fault: Optional[Literal["wrong_sign_shift"]] = None


class CutVerifyConfig(_Section):
    version: Literal[1]
    seed: int
    wire_instances: int = Field(100, ge=0)
    wire_gate_instances: int = Field(50, ge=0)
    max_qubits: int = Field(6, ge=2)
    max_depth: int = Field(4, ge=1)
    tolerance: float = Field(1e-9, gt=0)


def _num(v: float) -> str:
    return repr(float(v))


def _write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue(), encoding="utf-8")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _seeded(cfg, seed):
    return cfg if seed is None else cfg.model_copy(update={"seed": seed})


# -- commands -----------------------------------------------------------------

def cmd_gen_data(args) -> int:
    cfg = _seeded(load_config(args.config, GenDataConfig), args.seed)
    manifest = write_dataset(args.out, cfg.dataset.spec(cfg.seed))
    print(f"wrote {manifest['n_train']} train / {manifest['n_test']} test samples to {args.out}")
    return EXIT_OK


def _build_model(m: ModelSection, family: str, use_skip: bool, n_qubits: int, feature_dim: int,
                 n_classes: int, seed: int):
    if family == "classical":
        return init_classical(feature_dim, n_qubits, n_classes, seed=seed)
    return init_hybrid(feature_dim, n_qubits, n_classes, depth=m.depth, use_skip=use_skip,
                       first_rotation=m.first_rotation, seed=seed)


def cmd_train(args) -> int:
    cfg = _seeded(load_config(args.config, TrainExperiment), args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def data_for(seed):
        if cfg.dataset_dir is not None:
            path = Path(cfg.dataset_dir)
            if not (path / "manifest.json").exists():
                raise ConfigError(f"dataset missing: no manifest.json in {path}")
            return read_dataset(path)
        return generate(cfg.dataset.spec(seed))

    tc = cfg.training

    def run(model, data, seed):
        return train(model, data, TrainConfig(epochs=tc.epochs, batch_size=tc.batch_size, seed=seed,
                                              learning_rate=tc.learning_rate, beta1=tc.beta1, beta2=tc.beta2,
                                              epsilon=tc.epsilon, grad_method=tc.grad_method))

    if cfg.compare is not None:
        return _train_compare(cfg, out, data_for, run)

    data = data_for(cfg.seed)
    m = cfg.model
    model = _build_model(m, m.family, m.use_skip, m.n_qubits, data.train.feature_dim, data.train.n_classes, cfg.seed)
    model, history = run(model, data, cfg.seed)
    _write_csv(out / "history.csv", ["epoch", "train_loss", "test_error"],
               [[h.epoch, _num(h.train_loss), _num(h.test_error)] for h in history])
    checkpoint.save(model, out / "model.qsec")
    summary = {"family": model.family, "use_skip": getattr(model, "use_skip", None), "width": model.width,
               "epochs": len(history), "seed": cfg.seed,
               "final_train_loss": history[-1].train_loss, "final_test_error": history[-1].test_error,
               "train_error": evaluate_top1(model, data.train)}
    _write_json(out / "summary.json", summary)
    print(f"{model.family} width={model.width}: final Top-1 error {history[-1].test_error:.4f}")
    return EXIT_OK


def _train_compare(cfg: TrainExperiment, out: Path, data_for, run) -> int:
    """Classical / hybrid / hybrid-with-skip at each width, median over seeds."""
    families = [("c", "classical", False), ("h", "hybrid", False), ("h_res", "hybrid", True)]
    runs = []
    table = []
    for n in cfg.compare.qubits:
        med = {}
        for tag, family, skip in families:
            errs = []
            for seed in cfg.compare.seeds:
                data = data_for(seed)
                model = _build_model(cfg.model, family, skip, n, data.train.feature_dim, data.train.n_classes, seed)
                model, history = run(model, data, seed)
                errs.append(history[-1].test_error)
                runs.append([n, tag, seed, _num(history[-1].train_loss), _num(history[-1].test_error)])
                log.info("qubits=%d %s seed=%d err=%.4f", n, tag, seed, history[-1].test_error)
            med[tag] = float(np.median(errs))
        table.append([n, _num(med["c"]), _num(med["h"]), _num(med["h_res"])])
        print(f"qubits={n}: C {med['c']:.4f}  H {med['h']:.4f}  H.Res {med['h_res']:.4f}")
    _write_csv(out / "comparison_runs.csv", ["qubits", "family", "seed", "final_train_loss", "top1_err"], runs)
    _write_csv(out / "comparison.csv", ["qubits", "top1_err_c", "top1_err_h", "top1_err_h_res"], table)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    cfg = _seeded(load_config(args.config, GradcheckConfig), args.seed)
    rep = verify.gradcheck_suite(cfg.instances, cfg.seed, tuple(cfg.qubits), tuple(cfg.depths), h=cfg.step,
                                 tol_abs=cfg.tol_abs, tol_rel=cfg.tol_rel, fault=cfg.inject_fault)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "gradcheck.csv",
               ["instance", "n_qubits", "depth", "use_skip", "max_abs_loss_grad", "max_abs_jacobian", "passed"],
               [[r.index, r.n_qubits, r.depth, int(r.use_skip), _num(r.max_abs_loss), _num(r.max_abs_jacobian),
                 int(r.passed)] for r in rep.records])
    status = "PASS" if rep.passed else "FAIL"
    print(f"gradcheck {status}: {len(rep.records)} instances, max |analytic - finite difference| = "
          f"{rep.max_abs:.3e}, one-qubit closed form error = {rep.closed_form_error:.3e}")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def cmd_cut_verify(args) -> int:
    cfg = _seeded(load_config(args.config, CutVerifyConfig), args.seed)
    rep = verify.cut_suite(cfg.wire_instances, cfg.wire_gate_instances, cfg.seed, cfg.max_qubits, cfg.max_depth,
                           cfg.tolerance, parallelism=args.parallelism)
    bell, bell_ref = verify.bell_gate_cut()
    empty, empty_ref = verify.empty_plan_case(cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_csv(out / "cutverify.csv",
               ["instance", "kind", "n_qubits", "depth", "wire_cuts", "gate_cuts", "combinations",
                "expected_combinations", "reconstructed", "uncut", "abs_deviation"],
               [[r.index, r.kind, r.n_qubits, r.depth, r.n_wire, r.n_gate, r.combinations,
                 r.expected_combinations, _num(r.reconstructed), _num(r.uncut), _num(r.deviation)]
                for r in rep.records])
    bell_ok = abs(bell - 1.0) < cfg.tolerance and abs(bell_ref - 1.0) < cfg.tolerance
    ok = rep.passed and bell_ok and empty == empty_ref
    print(f"cut-verify {'PASS' if ok else 'FAIL'}: {len(rep.records)} circuits, max deviation "
          f"{rep.max_deviation:.3e}, combination counts {'ok' if rep.counts_ok else 'WRONG'}; "
          f"Bell gate cut <ZZ> = {bell:.12f}; empty plan exact: {empty == empty_ref}")
    return EXIT_OK if ok else EXIT_VERIFY


def cmd_simulate(args) -> int:
    cfg = load_config(args.config, ContinuumConfig)
    result = simulate(cfg, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    result.write_trace(out / "trace.jsonl")
    result.write_metrics(out / "metrics.csv")
    m = result.metrics
    print(f"simulated {m['arrivals']} requests: {m['classified']} classified, {m['rejected']} rejected, "
          f"{m['failed']} failed, {m['slo_violations']} SLO violations, p95 latency {m['latency_p95_ms']:.3f} ms")
    return EXIT_OK


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "gradcheck": cmd_gradcheck,
            "cut-verify": cmd_cut_verify, "simulate": cmd_simulate}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qse", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML or JSON config file (version: 1)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out", default="out", help="output directory (default: ./out)")
        p.add_argument("--parallelism", type=int, default=1, help="worker threads for cut execution")
    return parser


def _configure_logging() -> None:
    raw = os.environ.get("QSE_LOG_LEVEL", "warn").strip().lower()
    level = LOG_LEVELS.get(raw)
    logging.basicConfig(level=level or logging.WARNING, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)
    if level is None:
        log.warning("ignoring unknown QSE_LOG_LEVEL %r; use one of %s", raw, sorted(LOG_LEVELS))


def main(argv: list[str] | None = None) -> int:
    _configure_logging()
    args = build_parser().parse_args(argv)
    if args.parallelism < 1:
        print("error: --parallelism must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (QseError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
