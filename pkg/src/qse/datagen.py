"""Synthetic Gaussian-cluster datasets standing in for backbone features."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .model import DatasetSplits, LabeledDataset

FORMAT_VERSION = 1


class SyntheticDatasetSpec(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_classes: int = Field(10, ge=2)
    samples_per_class_train: int = Field(200, ge=1)
    samples_per_class_test: int = Field(50, ge=1)
    feature_dim: int = Field(16, ge=1)
    separation: float = Field(4.0, ge=0.0)
    seed: int = 0


def generate(spec: SyntheticDatasetSpec) -> DatasetSplits:
    """Class ``c`` ~ N(center_c, I) with centers uniform on a sphere of radius ``separation``.

    Features are standardized with train-split statistics; the same affine
    map is applied to the test split. Samples are ordered class by class.
    """
    rng = np.random.default_rng(spec.seed)
    centers = rng.standard_normal((spec.n_classes, spec.feature_dim))
    centers *= spec.separation / np.linalg.norm(centers, axis=1, keepdims=True)

    def draw(per_class):
        X = np.concatenate([c + rng.standard_normal((per_class, spec.feature_dim)) for c in centers])
        y = np.repeat(np.arange(spec.n_classes), per_class)
        return X, y

    X_tr, y_tr = draw(spec.samples_per_class_train)
    X_te, y_te = draw(spec.samples_per_class_test)
    mean = X_tr.mean(axis=0)
    std = X_tr.std(axis=0)
    std[std == 0] = 1.0
    return DatasetSplits(
        LabeledDataset((X_tr - mean) / std, y_tr, spec.n_classes, "train"),
        LabeledDataset((X_te - mean) / std, y_te, spec.n_classes, "test"),
    )


def _write_csv(path: Path, ds: LabeledDataset) -> None:
    header = "label," + ",".join(f"f{i}" for i in range(ds.feature_dim))
    lines = [header]
    for label, row in zip(ds.labels, ds.features):
        lines.append(str(int(label)) + "," + ",".join(repr(float(v)) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _read_csv(path: Path, n_classes: int, split: str) -> LabeledDataset:
    lines = path.read_text(encoding="utf-8").splitlines()[1:]
    rows = [line.split(",") for line in lines if line]
    labels = np.array([int(r[0]) for r in rows], dtype=int)
    features = np.array([[float(v) for v in r[1:]] for r in rows], dtype=float)
    return LabeledDataset(features.reshape(len(rows), -1), labels, n_classes, split)


def write_dataset(out_dir, spec: SyntheticDatasetSpec, data: DatasetSplits | None = None) -> dict:
    """Write ``train.csv``, ``test.csv`` and ``manifest.json``; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data = generate(spec) if data is None else data
    _write_csv(out / "train.csv", data.train)
    _write_csv(out / "test.csv", data.test)
    manifest = {
        "format_version": FORMAT_VERSION,
        "generator": "gaussian_clusters",
        "spec": spec.model_dump(),
        "n_train": len(data.train),
        "n_test": len(data.test),
        "files": {"train": "train.csv", "test": "test.csv"},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return manifest


def read_dataset(path) -> DatasetSplits:
    root = Path(path)
    manifest = json.loads((root / "manifest.json").read_text(encoding="utf-8"))
    k = manifest["spec"]["n_classes"]
    return DatasetSplits(
        _read_csv(root / manifest["files"]["train"], k, "train"),
        _read_csv(root / manifest["files"]["test"], k, "test"),
    )
