"""Single-hidden-layer ReLU/softmax classifier trained by SGLD.

Parameters are a :class:`ModelParams` of four arrays. Gradients use the same
container, so the update is plain arithmetic over matching fields.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Sequence

import numpy as np

__all__ = [
    "ShapeError",
    "ModelParams",
    "Gradients",
    "StepSchedule",
    "init_params",
    "forward",
    "logits",
    "log_posterior",
    "log_prior_grad",
    "log_posterior_grad",
    "sgld_update",
    "step_size",
    "predict",
    "evaluate_accuracy",
    "posterior_predictive",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
]

LAYER_NAMES = ("hidden_weights", "hidden_bias", "output_weights", "output_bias")


class ShapeError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class ModelParams:
    hidden_weights: np.ndarray  # (D, H)
    hidden_bias: np.ndarray  # (H,)
    output_weights: np.ndarray  # (H, K)
    output_bias: np.ndarray  # (K,)

    def __post_init__(self):
        D, H = np.shape(self.hidden_weights)
        H2, K = np.shape(self.output_weights)
        if np.shape(self.hidden_bias) != (H,) or H2 != H or np.shape(self.output_bias) != (K,):
            raise ShapeError(
                "inconsistent parameter shapes: "
                + ", ".join(f"{n}={np.shape(a)}" for n, a in zip(LAYER_NAMES, self.layers()))
            )

    @property
    def dims(self) -> tuple[int, int, int]:
        D, H = self.hidden_weights.shape
        return D, H, self.output_weights.shape[1]

    def layers(self) -> tuple[np.ndarray, ...]:
        return tuple(getattr(self, n) for n in LAYER_NAMES)

    def __iter__(self) -> Iterator[np.ndarray]:
        return iter(self.layers())

    def map(self, fn: Callable[[np.ndarray], np.ndarray]) -> "ModelParams":
        return ModelParams(*(fn(a) for a in self.layers()))

    def zip_map(self, other: "ModelParams", fn) -> "ModelParams":
        _check_same_shapes(self, other)
        return ModelParams(*(fn(a, b) for a, b in zip(self.layers(), other.layers())))

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in self.layers()])

    @classmethod
    def from_flat(cls, vector: np.ndarray, dims: tuple[int, int, int]) -> "ModelParams":
        D, H, K = dims
        shapes = [(D, H), (H,), (H, K), (K,)]
        out, i = [], 0
        for s in shapes:
            n = int(np.prod(s))
            out.append(np.asarray(vector[i : i + n], dtype=float).reshape(s).copy())
            i += n
        if i != len(vector):
            raise ShapeError(f"vector of length {len(vector)} does not fit dims {dims}")
        return cls(*out)

    @classmethod
    def zeros(cls, d_in: int, hidden: int, classes: int) -> "ModelParams":
        return cls(
            np.zeros((d_in, hidden)), np.zeros(hidden), np.zeros((hidden, classes)), np.zeros(classes)
        )

    def allclose(self, other: "ModelParams", **kw) -> bool:
        return all(np.allclose(a, b, **kw) for a, b in zip(self.layers(), other.layers()))

    def array_equal(self, other: "ModelParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.layers(), other.layers()))


# Gradients share the container; the distinction is documentary.
Gradients = ModelParams


def _check_same_shapes(a: ModelParams, b: ModelParams):
    for name, x, y in zip(LAYER_NAMES, a.layers(), b.layers()):
        if x.shape != y.shape:
            raise ShapeError(f"{name}: shape {x.shape} does not match {y.shape}")


@dataclass(frozen=True)
class StepSchedule:
    """Learning rate ``eta0 / t**gamma``."""

    eta0: float
    gamma: float = 1.0

    def __post_init__(self):
        if not self.eta0 > 0:
            raise ValueError(f"eta0 must be > 0, got {self.eta0}")
        if not self.gamma > 0:
            raise ValueError(f"gamma must be > 0, got {self.gamma}")


def step_size(schedule: StepSchedule, t: int) -> float:
    if t < 1:
        raise ValueError(f"step index starts at 1, got {t}")
    return schedule.eta0 / t**schedule.gamma


def init_params(d_in: int, hidden: int, classes: int, seed) -> ModelParams:
    """He-style Gaussian weights (std ``sqrt(2 / fan_in)``), zero biases.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    if min(d_in, hidden, classes) < 1:
        raise ValueError("all dimensions must be >= 1")
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, hidden))
    w2 = rng.normal(0.0, np.sqrt(2.0 / hidden), size=(hidden, classes))
    return ModelParams(w1, np.zeros(hidden), w2, np.zeros(classes))


def _hidden(params: ModelParams, inputs: np.ndarray):
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != params.dims[0]:
        raise ShapeError(f"expected inputs of shape (n, {params.dims[0]}), got {x.shape}")
    pre = x @ params.hidden_weights + params.hidden_bias
    return x, pre, np.maximum(pre, 0.0)


def logits(params: ModelParams, inputs) -> np.ndarray:
    _, _, h = _hidden(params, inputs)
    return h @ params.output_weights + params.output_bias


def _softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def forward(params: ModelParams, inputs) -> np.ndarray:
    """Class probabilities, one row per input."""
    return _softmax(logits(params, inputs))


def _check_batch(inputs, labels, dataset_size):
    labels = np.asarray(labels)
    n = len(labels)
    if n == 0:
        raise ValueError("empty batch")
    if len(inputs) != n:
        raise ShapeError(f"{len(inputs)} inputs but {n} labels")
    if dataset_size < n:
        raise ValueError(f"dataset_size {dataset_size} is smaller than the batch ({n})")
    return labels.astype(np.intp)


def log_posterior(params: ModelParams, inputs, labels, dataset_size: int, prior_precision: float) -> float:
    """Minibatch estimate of the log posterior, up to an additive constant.

    ``-(lambda/2) ||theta||^2 + (N/S) sum_i log p(y_i | x_i, theta)``.
    """
    labels = _check_batch(inputs, labels, dataset_size)
    logp = _log_softmax(logits(params, inputs))
    loglik = logp[np.arange(len(labels)), labels].sum()
    sq = sum(float(np.sum(a * a)) for a in params.layers())
    return -0.5 * prior_precision * sq + dataset_size / len(labels) * loglik


def log_prior_grad(params: ModelParams, prior_precision: float) -> Gradients:
    return params.map(lambda a: -prior_precision * a)


def log_posterior_grad(
    params: ModelParams, inputs, labels, dataset_size: int, prior_precision: float
) -> Gradients:
    """Analytic gradient of :func:`log_posterior` by backpropagation."""
    labels = _check_batch(inputs, labels, dataset_size)
    x, pre, h = _hidden(params, inputs)
    p = _softmax(h @ params.output_weights + params.output_bias)
    # d log p(y|x) / d logits = onehot(y) - p
    dz = -p
    dz[np.arange(len(labels)), labels] += 1.0
    dz *= dataset_size / len(labels)
    g_w2 = h.T @ dz
    g_b2 = dz.sum(axis=0)
    dh = (dz @ params.output_weights.T) * (pre > 0)
    g_w1 = x.T @ dh
    g_b1 = dh.sum(axis=0)
    lik = ModelParams(g_w1, g_b1, g_w2, g_b2)
    return lik.zip_map(log_prior_grad(params, prior_precision), np.add)


def sgld_update(params: ModelParams, clipped_grads: Gradients, noise: Gradients, eta: float) -> ModelParams:
    """``theta + (eta / 2) (grad + noise)``: noise is scaled with the gradient."""
    if not eta > 0:
        raise ValueError(f"eta must be > 0, got {eta}")
    _check_same_shapes(params, clipped_grads)
    _check_same_shapes(params, noise)
    half = 0.5 * eta
    return ModelParams(
        *(t + half * (g + n) for t, g, n in zip(params.layers(), clipped_grads.layers(), noise.layers()))
    )


def predict(params: ModelParams, inputs) -> np.ndarray:
    # argmax already breaks ties toward the lowest class index
    return np.argmax(logits(params, inputs), axis=1)


def evaluate_accuracy(params: ModelParams, dataset) -> float:
    """Fraction of rows of ``dataset`` whose argmax prediction equals the label."""
    if dataset.n_examples == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    return float(np.mean(predict(params, dataset.features) == dataset.labels))


def posterior_predictive(param_samples: Sequence[ModelParams], inputs) -> np.ndarray:
    """Average of the predictive distributions of several parameter samples."""
    if len(param_samples) == 0:
        raise ValueError("need at least one parameter sample")
    total = forward(param_samples[0], inputs)
    for p in param_samples[1:]:
        total = total + forward(p, inputs)
    return total / len(param_samples)


# ---------------------------------------------------------------------------
# Checkpoints: magic, version, D, H, K, then float64 blocks, all little-endian.

_MAGIC = b"DPDMLP\x00\x00"
_VERSION = 1
_HEADER = struct.Struct("<8sIIII")


def save_checkpoint(path, params: ModelParams) -> None:
    D, H, K = params.dims
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, _VERSION, D, H, K))
        for a in params.layers():
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path) -> ModelParams:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise CheckpointError(f"{path}: truncated header")
    magic, version, D, H, K = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise CheckpointError(f"{path}: bad magic {magic!r}")
    if version != _VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    n = D * H + H + H * K + K
    body = raw[_HEADER.size :]
    if len(body) != 8 * n:
        raise CheckpointError(f"{path}: expected {8 * n} payload bytes, found {len(body)}")
    return ModelParams.from_flat(np.frombuffer(body, dtype="<f8").astype(float), (D, H, K))
