"""Self-describing model checkpoint files.

Layout (all integers little-endian)::

    offset  size  content
    0       8     magic b"QSECKPT\\0"
    8       4     u32 format version (1)
    12      4     u32 header length H in bytes
    16      H     UTF-8 JSON header, keys sorted
    16+H    ...   parameter arrays, '<f8', C order, concatenated in header order

The header records the model family, every dimension needed to rebuild the
model, and an ``arrays`` list of ``{"name", "shape"}`` entries.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .ansatz import AnsatzSpec
from .errors import InvalidArgumentError
from .model import ClassicalBaseline, HybridClassifier, LinearLayer, Model, parameter_arrays

MAGIC = b"QSECKPT\0"
VERSION = 1
_PREFIX = struct.Struct("<8sII")


def _header(model: Model) -> dict:
    arrays = [{"name": k, "shape": list(v.shape)} for k, v in parameter_arrays(model).items()]
    if isinstance(model, HybridClassifier):
        spec = model.ansatz_spec
        dims = {"feature_dim": model.feature_dim, "n_qubits": spec.n_qubits, "depth": spec.depth,
                "n_classes": model.n_classes, "first_rotation": spec.first_rotation,
                "use_skip": bool(model.use_skip)}
    else:
        dims = {"feature_dim": model.feature_dim, "width": model.width, "n_classes": model.n_classes,
                "activation": model.activation}
    return {"family": model.family, "dims": dims, "arrays": arrays}


def dumps(model: Model) -> bytes:
    header = json.dumps(_header(model), sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in parameter_arrays(model).values())
    return _PREFIX.pack(MAGIC, VERSION, len(header)) + header + body


def loads(blob: bytes) -> Model:
    if len(blob) < _PREFIX.size:
        raise InvalidArgumentError("checkpoint truncated")
    magic, version, hlen = _PREFIX.unpack_from(blob)
    if magic != MAGIC:
        raise InvalidArgumentError("not a checkpoint file (bad magic)")
    if version != VERSION:
        raise InvalidArgumentError(f"unsupported checkpoint version {version}")
    header = json.loads(blob[_PREFIX.size:_PREFIX.size + hlen].decode("utf-8"))
    offset = _PREFIX.size + hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(blob):
            raise InvalidArgumentError(f"checkpoint truncated in array {entry['name']!r}")
        arrays[entry["name"]] = np.frombuffer(blob, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset = end
    if offset != len(blob):
        raise InvalidArgumentError("trailing bytes after checkpoint arrays")
    d = header["dims"]
    if header["family"] == "hybrid":
        return HybridClassifier(
            LinearLayer(arrays["projection.weights"], arrays["projection.bias"]),
            AnsatzSpec(d["n_qubits"], d["depth"], d["first_rotation"]),
            arrays["ansatz.angles"],
            LinearLayer(arrays["readout.weights"], arrays["readout.bias"]),
            d["use_skip"],
        )
    if header["family"] == "classical":
        return ClassicalBaseline(
            LinearLayer(arrays["hidden.weights"], arrays["hidden.bias"]),
            LinearLayer(arrays["readout.weights"], arrays["readout.bias"]),
            d["activation"],
        )
    raise InvalidArgumentError(f"unknown model family {header['family']!r}")


def save(model: Model, path) -> None:
    Path(path).write_bytes(dumps(model))


def load(path) -> Model:
    return loads(Path(path).read_bytes())
