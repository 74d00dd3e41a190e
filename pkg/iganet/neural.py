"""
Fully connected network G -> j with sigmoid hidden layers, reverse-mode
gradients through the residual loss, and ADAM.

Layers act on row vectors (``x @ W + b``). The output holds the real and
imaginary parts of every coefficient interleaved: j_k = out[2k] + i out[2k+1].
Inputs are standardized with the affine map stored in the model.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from iganet.errors import ContractError, DivergenceError, StorageError

logger = logging.getLogger(__name__)

MODEL_MAGIC = b"IGAMLP01"
MODEL_VERSION = 1
_HEADER = np.dtype([("magic", "S8"), ("version", "<u4"), ("num_sizes", "<u4")])


@dataclass(frozen=True)
class MlpSpec:
    input_size: int
    output_size: int
    hidden: tuple[int, ...] = (50, 50)

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.input_size, *self.hidden, self.output_size)

    @classmethod
    def for_problem(cls, num_params: int, num_dofs: int, hidden: Sequence[int] = (50, 50)) -> "MlpSpec":
        return cls(int(num_params), 2 * int(num_dofs), tuple(int(h) for h in hidden))


@dataclass(frozen=True, eq=False)
class MlpModel:
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    input_mean: np.ndarray
    input_scale: np.ndarray

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.weights[0].shape[0], *(w.shape[1] for w in self.weights))

    @property
    def num_dofs(self) -> int:
        return self.sizes[-1] // 2

    @property
    def params(self) -> tuple[np.ndarray, ...]:
        return tuple(p for pair in zip(self.weights, self.biases) for p in pair)

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpModel":
        return replace(self, weights=tuple(params[0::2]), biases=tuple(params[1::2]))


class Batch(NamedTuple):
    inputs: np.ndarray  # (B, D)
    matrices: np.ndarray  # (B, K, K)
    rhs: np.ndarray  # (B, K)


@dataclass(frozen=True, eq=False)
class AdamState:
    first: tuple[np.ndarray, ...]
    second: tuple[np.ndarray, ...]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def sigmoid(z: np.ndarray) -> np.ndarray:
    # split by sign to stay finite for large |z|
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def standardization(inputs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    mean = inputs.mean(axis=0)
    scale = inputs.std(axis=0)
    scale[scale < 1e-12] = 1.0
    return mean, scale


def init(spec: MlpSpec, seed: int, inputs: np.ndarray | None = None) -> MlpModel:
    """Weights ~ N(0, 1/fan_in), zero biases; standardization fitted to ``inputs``."""
    rng = np.random.default_rng(seed)
    sizes = spec.sizes
    weights = tuple(
        rng.normal(0.0, 1.0 / np.sqrt(n_in), size=(n_in, n_out))
        for n_in, n_out in zip(sizes[:-1], sizes[1:])
    )
    biases = tuple(np.zeros(n_out) for n_out in sizes[1:])
    if inputs is None:
        mean, scale = np.zeros(spec.input_size), np.ones(spec.input_size)
    else:
        mean, scale = standardization(inputs)
        if mean.shape != (spec.input_size,):
            raise ContractError(f"inputs have {mean.shape[0]} features, expected {spec.input_size}")
    return MlpModel(weights, biases, mean, scale)


def to_complex(out: np.ndarray) -> np.ndarray:
    return out[..., 0::2] + 1j * out[..., 1::2]


def _check_inputs(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=float)
    if inputs.shape[-1] != model.sizes[0]:
        raise ContractError(f"input length {inputs.shape[-1]} does not match {model.sizes[0]}")
    return inputs


def _forward_layers(model: MlpModel, inputs: np.ndarray) -> list[np.ndarray]:
    """Activations of every layer, input (standardized) first, raw output last."""
    activations = [(inputs - model.input_mean) / model.input_scale]
    last = len(model.weights) - 1
    for n, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activations[-1] @ w + b
        activations.append(z if n == last else sigmoid(z))
    return activations


def forward_batch(model: MlpModel, inputs: np.ndarray) -> np.ndarray:
    """Complex coefficients (B, K) for a batch of geometry parameter vectors."""
    inputs = _check_inputs(model, np.atleast_2d(inputs))
    return to_complex(_forward_layers(model, inputs)[-1])


def forward(model: MlpModel, params: np.ndarray) -> np.ndarray:
    params = _check_inputs(model, params)
    if params.ndim != 1:
        raise ContractError("forward expects a single parameter vector; use forward_batch")
    return forward_batch(model, params[None, :])[0]


def _residuals(batch: Batch, j: np.ndarray) -> np.ndarray:
    return np.einsum("bmn,bn->bm", batch.matrices, j) + batch.rhs


def item_losses(model: MlpModel, batch: Batch) -> np.ndarray:
    j = forward_batch(model, batch.inputs)
    return np.mean(np.abs(_residuals(batch, j)) ** 2, axis=1)


def loss_and_gradient(model: MlpModel, batch: Batch) -> tuple[float, tuple[np.ndarray, ...]]:
    """Mean residual loss over the batch and its gradient, shaped like ``model.params``."""
    inputs = _check_inputs(model, np.atleast_2d(batch.inputs))
    size, k = batch.rhs.shape
    if batch.matrices.shape != (size, k, k) or 2 * k != model.sizes[-1]:
        raise ContractError(
            f"batch shapes {batch.matrices.shape}/{batch.rhs.shape} do not match the network output"
        )

    activations = _forward_layers(model, inputs)
    j = to_complex(activations[-1])
    residual = _residuals(batch, j)
    loss = float(np.mean(np.abs(residual) ** 2))
    if not np.isfinite(loss):
        raise DivergenceError("non-finite training loss")

    grad_j = (2.0 / (k * size)) * np.einsum("bmn,bm->bn", batch.matrices.conj(), residual)
    delta = np.empty((size, 2 * k))
    delta[:, 0::2] = grad_j.real
    delta[:, 1::2] = grad_j.imag

    grads: list[np.ndarray] = []
    for n in range(len(model.weights) - 1, -1, -1):
        a_in = activations[n]
        grads.append(delta.sum(axis=0))
        grads.append(a_in.T @ delta)
        if n > 0:
            delta = (delta @ model.weights[n].T) * a_in * (1.0 - a_in)
    return loss, tuple(reversed(grads))


def adam_init(model: MlpModel, lr: float = 1e-3, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    zeros = tuple(np.zeros_like(p) for p in model.params)
    return AdamState(zeros, tuple(np.zeros_like(p) for p in model.params), 0, lr, beta1, beta2, eps)


def adam_step(model: MlpModel, state: AdamState, grad: Sequence[np.ndarray]) -> tuple[MlpModel, AdamState]:
    params = model.params
    if len(grad) != len(params) or any(g.shape != p.shape for g, p in zip(grad, params)):
        raise ContractError("gradient does not match the model parameters")
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    first = tuple(b1 * m + (1.0 - b1) * g for m, g in zip(state.first, grad))
    second = tuple(b2 * v + (1.0 - b2) * g * g for v, g in zip(state.second, grad))
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    updated = tuple(
        p - state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        for p, m, v in zip(params, first, second)
    )
    return model.with_params(updated), replace(state, first=first, second=second, step=t)


def parameters_vector(model: MlpModel) -> np.ndarray:
    return np.concatenate([p.ravel() for p in model.params])


def with_parameters_vector(model: MlpModel, vector: np.ndarray) -> MlpModel:
    vector = np.asarray(vector, dtype=float)
    total = sum(p.size for p in model.params)
    if vector.shape != (total,):
        raise ContractError(f"expected {total} parameters, got {vector.shape}")
    params, offset = [], 0
    for p in model.params:
        params.append(vector[offset : offset + p.size].reshape(p.shape))
        offset += p.size
    return model.with_params(params)


def save_model(model: MlpModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    header = np.zeros(1, dtype=_HEADER)
    header["magic"] = MODEL_MAGIC
    header["version"] = MODEL_VERSION
    header["num_sizes"] = len(model.sizes)
    body = np.concatenate([model.input_mean, model.input_scale, parameters_vector(model)])
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(header.tobytes())
        fh.write(np.asarray(model.sizes, dtype="<u8").tobytes())
        fh.write(body.astype("<f8").tobytes())
    tmp.replace(path)
    logger.info("Model written to %s (layers %s)", path, "-".join(map(str, model.sizes)))
    return path


def load_model(path: str | Path) -> MlpModel:
    path = Path(path)
    try:
        data = path.read_bytes()
    except FileNotFoundError as exc:
        raise StorageError(f"model file not found: {path}") from exc
    if len(data) < _HEADER.itemsize:
        raise StorageError(f"model file {path} is truncated")
    header = np.frombuffer(data[: _HEADER.itemsize], dtype=_HEADER)[0]
    if header["magic"] != MODEL_MAGIC:
        raise StorageError(f"{path} is not a model file")
    if int(header["version"]) != MODEL_VERSION:
        raise StorageError(f"unsupported model version {int(header['version'])}")

    offset = _HEADER.itemsize
    count = int(header["num_sizes"])
    if len(data) < offset + 8 * count:
        raise StorageError(f"model file {path} is truncated")
    sizes = np.frombuffer(data[offset : offset + 8 * count], dtype="<u8").astype(int)
    offset += 8 * count
    body = np.frombuffer(data[offset:], dtype="<f8").astype(float)
    d = int(sizes[0])
    n_params = sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))
    if body.size != 2 * d + n_params:
        raise StorageError(f"model file {path} has {body.size} values, expected {2 * d + n_params}")

    spec = MlpSpec(d, int(sizes[-1]), tuple(int(s) for s in sizes[1:-1]))
    template = init(spec, seed=0)
    model = with_parameters_vector(template, body[2 * d :])
    return replace(model, input_mean=body[:d].copy(), input_scale=body[d : 2 * d].copy())
