"""Hybrid quantum-classical classifier and its width-matched classical baseline.

Hybrid:    p = projection(x);  m = <Z>(ansatz(p));  logits = readout(m + p if skip else m)
Classical: logits = readout(tanh(hidden(x)))

Parameters of either family can be flattened into one vector (fixed name
order, see :func:`parameter_arrays`) for the Adam optimizer.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

from . import ansatz
from .ansatz import AnsatzSpec
from .errors import InvalidArgumentError

log = logging.getLogger(__name__)

GRAD_METHODS = ("parameter-shift", "adjoint")


@dataclass
class LinearLayer:
    weights: np.ndarray  # (out_dim, in_dim)
    bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.bias = np.asarray(self.bias, dtype=float)
        if self.weights.ndim != 2 or self.bias.shape != (self.weights.shape[0],):
            raise InvalidArgumentError(
                f"inconsistent linear layer shapes {self.weights.shape} / {self.bias.shape}"
            )

    @property
    def in_dim(self) -> int:
        return self.weights.shape[1]

    @property
    def out_dim(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def init(cls, in_dim: int, out_dim: int, rng: np.random.Generator) -> "LinearLayer":
        bound = 1.0 / np.sqrt(in_dim)
        return cls(rng.uniform(-bound, bound, (out_dim, in_dim)), rng.uniform(-bound, bound, out_dim))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.weights.T + self.bias


@dataclass
class HybridClassifier:
    projection: LinearLayer
    ansatz_spec: AnsatzSpec
    ansatz_params: np.ndarray
    readout: LinearLayer
    use_skip: bool = True

    family = "hybrid"

    def __post_init__(self):
        n = self.ansatz_spec.n_qubits
        self.ansatz_params = np.asarray(self.ansatz_params, dtype=float).reshape(self.ansatz_spec.depth, n)
        if self.projection.out_dim != n or self.readout.in_dim != n:
            raise InvalidArgumentError(
                f"projection out ({self.projection.out_dim}) and readout in ({self.readout.in_dim}) "
                f"must equal n_qubits ({n})"
            )

    @property
    def feature_dim(self) -> int:
        return self.projection.in_dim

    @property
    def n_classes(self) -> int:
        return self.readout.out_dim

    @property
    def width(self) -> int:
        return self.ansatz_spec.n_qubits


@dataclass
class ClassicalBaseline:
    hidden: LinearLayer
    readout: LinearLayer
    activation: str = "tanh"

    family = "classical"

    def __post_init__(self):
        if self.activation != "tanh":
            raise InvalidArgumentError(f"unsupported activation {self.activation!r}")
        if self.hidden.out_dim != self.readout.in_dim:
            raise InvalidArgumentError("hidden out_dim must equal readout in_dim")

    @property
    def feature_dim(self) -> int:
        return self.hidden.in_dim

    @property
    def n_classes(self) -> int:
        return self.readout.out_dim

    @property
    def width(self) -> int:
        return self.hidden.out_dim


Model = HybridClassifier | ClassicalBaseline


def init_hybrid(feature_dim: int, n_qubits: int, n_classes: int, *, depth: int = 8,
                use_skip: bool = True, first_rotation: str = "Y", seed: int = 0) -> HybridClassifier:
    rng = np.random.default_rng(seed)
    spec = AnsatzSpec(n_qubits, depth, first_rotation)
    projection = LinearLayer.init(feature_dim, n_qubits, rng)
    angles = rng.uniform(-0.1, 0.1, (depth, n_qubits))
    readout = LinearLayer.init(n_qubits, n_classes, rng)
    return HybridClassifier(projection, spec, angles, readout, use_skip)


def init_classical(feature_dim: int, width: int, n_classes: int, *, seed: int = 0) -> ClassicalBaseline:
    rng = np.random.default_rng(seed)
    return ClassicalBaseline(LinearLayer.init(feature_dim, width, rng), LinearLayer.init(width, n_classes, rng))


def parameter_arrays(model: Model) -> dict[str, np.ndarray]:
    """Named parameter arrays in canonical order."""
    if isinstance(model, HybridClassifier):
        return {
            "projection.weights": model.projection.weights,
            "projection.bias": model.projection.bias,
            "ansatz.angles": model.ansatz_params,
            "readout.weights": model.readout.weights,
            "readout.bias": model.readout.bias,
        }
    return {
        "hidden.weights": model.hidden.weights,
        "hidden.bias": model.hidden.bias,
        "readout.weights": model.readout.weights,
        "readout.bias": model.readout.bias,
    }


def flatten(arrays: dict[str, np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays.values()])


def get_flat(model: Model) -> np.ndarray:
    return flatten(parameter_arrays(model))


def with_flat(model: Model, flat: np.ndarray) -> Model:
    """New model of the same shape carrying the parameters in ``flat``."""
    shapes = {k: v.shape for k, v in parameter_arrays(model).items()}
    total = sum(int(np.prod(s)) for s in shapes.values())
    flat = np.asarray(flat, dtype=float)
    if flat.shape != (total,):
        raise InvalidArgumentError(f"expected {total} parameters, got shape {flat.shape}")
    parts, i = {}, 0
    for k, s in shapes.items():
        size = int(np.prod(s))
        parts[k] = flat[i:i + size].reshape(s).copy()
        i += size
    if isinstance(model, HybridClassifier):
        return replace(
            model,
            projection=LinearLayer(parts["projection.weights"], parts["projection.bias"]),
            ansatz_params=parts["ansatz.angles"],
            readout=LinearLayer(parts["readout.weights"], parts["readout.bias"]),
        )
    return replace(
        model,
        hidden=LinearLayer(parts["hidden.weights"], parts["hidden.bias"]),
        readout=LinearLayer(parts["readout.weights"], parts["readout.bias"]),
    )


def _features(model: Model, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != model.feature_dim:
        raise InvalidArgumentError(f"expected features of dimension {model.feature_dim}, got shape {x.shape}")
    return X, single


def forward_hybrid(model: HybridClassifier, x) -> np.ndarray:
    """Logits for one feature vector ``(d,)`` or a batch ``(B, d)``."""
    X, single = _features(model, x)
    p = model.projection(X)
    m = ansatz.expectations_batch(model.ansatz_spec, model.ansatz_params, p)
    h = m + p if model.use_skip else m
    logits = model.readout(h)
    return logits[0] if single else logits


def forward_classical(model: ClassicalBaseline, x) -> np.ndarray:
    X, single = _features(model, x)
    logits = model.readout(np.tanh(model.hidden(X)))
    return logits[0] if single else logits


def predict_logits(model: Model, x) -> np.ndarray:
    if isinstance(model, HybridClassifier):
        return forward_hybrid(model, x)
    return forward_classical(model, x)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def cross_entropy(logits, label) -> float:
    logits = np.asarray(logits, dtype=float)
    if not (0 <= int(label) < logits.shape[-1]):
        raise InvalidArgumentError(f"label {label} out of range for {logits.shape[-1]} classes")
    return float(-_log_softmax(logits)[int(label)])


def _check_labels(model: Model, y) -> np.ndarray:
    y = np.asarray(y, dtype=int).reshape(-1)
    if y.size and (y.min() < 0 or y.max() >= model.n_classes):
        raise InvalidArgumentError(f"labels must lie in [0, {model.n_classes})")
    return y


def loss_and_grad(model: Model, X, y, grad_method: str = "parameter-shift", *,
                  _swap_shifts: bool = False) -> tuple[float, dict[str, np.ndarray]]:
    """Mean cross-entropy over the batch and its gradient for every parameter.

    ``_swap_shifts`` is a fault-injection hook for verification tooling only.
    """
    X, _ = _features(model, X)
    y = _check_labels(model, y)
    if y.size != X.shape[0]:
        raise InvalidArgumentError(f"{X.shape[0]} samples but {y.size} labels")
    if grad_method not in GRAD_METHODS:
        raise InvalidArgumentError(f"grad_method must be one of {GRAD_METHODS}, got {grad_method!r}")
    B = X.shape[0]
    onehot = np.zeros((B, model.n_classes))
    onehot[np.arange(B), y] = 1.0

    if isinstance(model, ClassicalBaseline):
        z = np.tanh(model.hidden(X))
        logits = model.readout(z)
        logp = _log_softmax(logits)
        delta = (np.exp(logp) - onehot) / B
        dz = delta @ model.readout.weights
        da = dz * (1.0 - z ** 2)
        grads = {
            "hidden.weights": da.T @ X,
            "hidden.bias": da.sum(axis=0),
            "readout.weights": delta.T @ z,
            "readout.bias": delta.sum(axis=0),
        }
        return float(-(logp * onehot).sum() / B), grads

    spec = model.ansatz_spec
    p = model.projection(X)
    m = ansatz.expectations_batch(spec, model.ansatz_params, p)
    h = m + p if model.use_skip else m
    logp = _log_softmax(model.readout(h))
    delta = (np.exp(logp) - onehot) / B
    dh = delta @ model.readout.weights

    if grad_method == "parameter-shift":
        jac = ansatz.parameter_shift_jacobian_batch(spec, model.ansatz_params, p, _swap_shifts=_swap_shifts)
        P = spec.n_params
        d_theta = np.einsum("bq,bqk->k", dh, jac[:, :, :P]).reshape(spec.depth, spec.n_qubits)
        d_p = np.einsum("bq,bqk->bk", dh, jac[:, :, P:])
    else:
        _, d_theta, d_p = ansatz.adjoint_vjp(spec, model.ansatz_params, p, dh)
    if model.use_skip:
        d_p = d_p + dh

    grads = {
        "projection.weights": d_p.T @ X,
        "projection.bias": d_p.sum(axis=0),
        "ansatz.angles": d_theta,
        "readout.weights": delta.T @ h,
        "readout.bias": delta.sum(axis=0),
    }
    return float(-(logp * onehot).sum() / B), grads


def backward(model: Model, x, label, grad_method: str = "parameter-shift") -> dict[str, np.ndarray]:
    """Gradient of ``cross_entropy(logits(x), label)`` for a single sample."""
    x = np.asarray(x, dtype=float)
    _, grads = loss_and_grad(model, x[None, :], [label], grad_method)
    return grads


@dataclass
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def zeros(cls, n_params: int, **hyper) -> "AdamState":
        return cls(np.zeros(n_params), np.zeros(n_params), **hyper)


def adam_step(params: np.ndarray, grads: np.ndarray, state: AdamState) -> tuple[np.ndarray, AdamState]:
    params = np.asarray(params, dtype=float)
    grads = np.asarray(grads, dtype=float)
    if params.shape != grads.shape or params.shape != state.first_moment.shape:
        raise InvalidArgumentError(
            f"shape mismatch: params {params.shape}, grads {grads.shape}, moments {state.first_moment.shape}"
        )
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1 - state.beta1) * grads
    v = state.beta2 * state.second_moment + (1 - state.beta2) * grads ** 2
    m_hat = m / (1 - state.beta1 ** t)
    v_hat = v / (1 - state.beta2 ** t)
    new_params = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new_params, replace(state, first_moment=m, second_moment=v, step_count=t)


@dataclass
class LabeledDataset:
    features: np.ndarray  # (N, d)
    labels: np.ndarray    # (N,)
    n_classes: int
    split: str = "train"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=float)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise InvalidArgumentError("features must be (N, d) with one label per row")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise InvalidArgumentError(f"labels must lie in [0, {self.n_classes})")
        if not np.all(np.isfinite(self.features)):
            raise InvalidArgumentError("features must be finite")

    def __len__(self) -> int:
        return self.labels.size

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]


@dataclass
class DatasetSplits:
    train: LabeledDataset
    test: LabeledDataset


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 32
    seed: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    grad_method: str = "parameter-shift"


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    test_error: float


def evaluate_top1(model: Model, dataset: LabeledDataset) -> float:
    """Fraction of misclassified samples; ties go to the lowest class index."""
    if len(dataset) == 0:
        raise InvalidArgumentError("cannot evaluate on an empty split")
    pred = np.argmax(predict_logits(model, dataset.features), axis=1)
    return float(np.mean(pred != dataset.labels))


def train(model: Model, data: DatasetSplits, config: TrainConfig = TrainConfig(),
          callback=None) -> tuple[Model, list[EpochMetrics]]:
    """Minibatch Adam on mean cross-entropy; fully determined by ``config.seed``.

    ``train_loss`` is the sample-weighted mean of batch losses seen during
    the epoch; ``test_error`` is Top-1 error on ``data.test`` after it.
    """
    if len(data.train) == 0:
        raise InvalidArgumentError("training split is empty")
    if data.train.feature_dim != model.feature_dim:
        raise InvalidArgumentError(
            f"dataset feature_dim {data.train.feature_dim} != model input {model.feature_dim}"
        )
    rng = np.random.default_rng(config.seed)
    flat = get_flat(model)
    state = AdamState.zeros(flat.size, learning_rate=config.learning_rate, beta1=config.beta1,
                            beta2=config.beta2, epsilon=config.epsilon)
    X, y = data.train.features, data.train.labels
    N = len(data.train)
    history = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(N)
        total = 0.0
        for start in range(0, N, config.batch_size):
            idx = order[start:start + config.batch_size]
            loss, grads = loss_and_grad(model, X[idx], y[idx], config.grad_method)
            flat, state = adam_step(flat, flatten(grads), state)
            model = with_flat(model, flat)
            total += loss * idx.size
        train_loss = total / N
        if not np.isfinite(train_loss):
            raise FloatingPointError(f"non-finite training loss at epoch {epoch}")
        test_error = evaluate_top1(model, data.test) if len(data.test) else float("nan")
        history.append(EpochMetrics(epoch, train_loss, test_error))
        log.debug("epoch %d loss %.6f test_err %.4f", epoch, train_loss, test_error)
        if callback is not None:
            callback(history[-1])
    return model, history
