"""Three-layer ReLU classifier with hand-derived gradients.

Checkpoint layout (all little-endian)::

    bytes 0-3    b"CPCF"
    u32          format version (1)
    u32          input_dim
    u32          number of layers L (3)
    u32 * L      output width of each layer (256, 128, 10 by default)
    f64 arrays   W1, b1, W2, b2, W3, b3, row-major, in that order

Optimizer state is not stored.
"""
from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Tuple

import numpy as np

from .core_math import (
    Optimizer,
    Params,
    _check_labels,
    as_matrix,
    cross_entropy,
    softmax_rows,
)
from .errors import ContractError, NumericalAbort, ParseError

HIDDEN = (256, 128)
N_CLASSES = 10
INPUT_DIMS = (784, 1024)
PARAM_NAMES = ("W1", "b1", "W2", "b2", "W3", "b3")

CHECKPOINT_MAGIC = b"CPCF"
CHECKPOINT_VERSION = 1

# (penalty value, penalty gradients) for the current parameters
PenaltyFn = Callable[["MlpModel"], Tuple[float, Params]]


@dataclass
class MlpModel:
    params: Params
    optimizer: Optional[Optimizer] = None
    overridden: bool = False

    @property
    def input_dim(self) -> int:
        return self.params["W1"].shape[0]

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.params["W1"].shape[1], self.params["W2"].shape[1], self.params["W3"].shape[1])

    def copy_params(self) -> Params:
        return {k: v.copy() for k, v in self.params.items()}

    def param_hash(self) -> str:
        h = hashlib.sha256()
        for k in PARAM_NAMES:
            h.update(np.ascontiguousarray(self.params[k]).tobytes())
        return h.hexdigest()


@dataclass
class Cache:
    x: np.ndarray
    z1: np.ndarray
    h1: np.ndarray
    z2: np.ndarray
    h2: np.ndarray
    logits: np.ndarray
    probs: np.ndarray = field(default=None)


def init_model(
    input_dim: int,
    rng: np.random.Generator,
    hidden: Sequence[int] = HIDDEN,
    allow_override: bool = False,
) -> MlpModel:
    """Glorot-uniform weights, zero biases."""
    hidden = tuple(hidden)
    overridden = input_dim not in INPUT_DIMS or hidden != HIDDEN
    if overridden and not allow_override:
        raise ContractError(
            f"input_dim={input_dim}, hidden={hidden} differ from {INPUT_DIMS} / {HIDDEN}; "
            "pass allow_override=True"
        )
    if len(hidden) != 2:
        raise ContractError(f"need exactly two hidden widths, got {hidden}")
    dims = (input_dim, *hidden, N_CLASSES)
    params: Params = {}
    for i in range(3):
        fan_in, fan_out = dims[i], dims[i + 1]
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        params[f"W{i + 1}"] = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params[f"b{i + 1}"] = np.zeros(fan_out)
    return MlpModel(params=params, overridden=overridden)


def forward(model: MlpModel, x: np.ndarray) -> Tuple[np.ndarray, Cache]:
    x = as_matrix(x)
    p = model.params
    if x.shape[1] != p["W1"].shape[0]:
        raise ContractError(f"input has {x.shape[1]} columns, model expects {p['W1'].shape[0]}")
    z1 = x @ p["W1"] + p["b1"]
    h1 = np.maximum(z1, 0.0)
    z2 = h1 @ p["W2"] + p["b2"]
    h2 = np.maximum(z2, 0.0)
    logits = h2 @ p["W3"] + p["b3"]
    return logits, Cache(x, z1, h1, z2, h2, logits)


def predict_proba(model: MlpModel, x: np.ndarray) -> np.ndarray:
    logits, _ = forward(model, x)
    return softmax_rows(logits)


def backward(model: MlpModel, cache: Cache, labels) -> Params:
    """Gradients of mean softmax cross-entropy with respect to every parameter."""
    p = model.params
    n = cache.x.shape[0]
    y = _check_labels(labels, n, N_CLASSES)
    probs = cache.probs if cache.probs is not None else softmax_rows(cache.logits)
    d3 = probs.copy()
    d3[np.arange(n), y] -= 1.0
    d3 /= n
    grads = {"W3": cache.h2.T @ d3, "b3": d3.sum(axis=0)}
    d2 = (d3 @ p["W3"].T) * (cache.z2 > 0)
    grads["W2"] = cache.h1.T @ d2
    grads["b2"] = d2.sum(axis=0)
    d1 = (d2 @ p["W2"].T) * (cache.z1 > 0)
    grads["W1"] = cache.x.T @ d1
    grads["b1"] = d1.sum(axis=0)
    return grads


def loss_and_grads(
    model: MlpModel, x: np.ndarray, y, penalty: Optional[PenaltyFn] = None
) -> Tuple[float, Params]:
    logits, cache = forward(model, x)
    cache.probs = softmax_rows(logits)
    loss = cross_entropy(cache.probs, y)
    grads = backward(model, cache, y)
    if penalty is not None:
        pen, pgrads = penalty(model)
        loss += pen
        for k in grads:
            grads[k] += pgrads[k]
    return loss, grads


def train_epoch(
    model: MlpModel,
    x: np.ndarray,
    y,
    batch_size: int,
    rng: np.random.Generator,
    penalty: Optional[PenaltyFn] = None,
) -> float:
    """One shuffled pass of minibatch updates; returns the sample-weighted mean loss.

    ``penalty`` switches the loss to the EWC form: its value and gradients are
    added to every minibatch.
    """
    x = as_matrix(x)
    y = np.asarray(y, dtype=np.int64)
    n = x.shape[0]
    if n == 0:
        raise ContractError("train_epoch on an empty dataset")
    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    if model.optimizer is None:
        raise ContractError("model has no optimizer attached")
    order = rng.permutation(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        loss, grads = loss_and_grads(model, x[idx], y[idx], penalty)
        if not np.isfinite(loss):
            raise NumericalAbort(f"non-finite loss {loss} at batch starting {start}")
        model.optimizer.step(model.params, grads)
        total += loss * idx.size
    return total / n


def evaluation_loss(model: MlpModel, x: np.ndarray, y) -> float:
    return cross_entropy(predict_proba(model, x), y)


def predict(model: MlpModel, x: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. ties go to the lowest class index
    return np.argmax(predict_proba(model, x), axis=1)


def accuracy(model: MlpModel, x: np.ndarray, y) -> float:
    y = np.asarray(y, dtype=np.int64)
    if y.size == 0:
        raise ContractError("accuracy of an empty set")
    return float(np.mean(predict(model, x) == y))


def save_checkpoint(model: MlpModel) -> bytes:
    widths = model.widths
    out = [CHECKPOINT_MAGIC, struct.pack("<III", CHECKPOINT_VERSION, model.input_dim, len(widths))]
    out.append(struct.pack(f"<{len(widths)}I", *widths))
    for k in PARAM_NAMES:
        out.append(np.ascontiguousarray(model.params[k], dtype="<f8").tobytes())
    return b"".join(out)


def load_checkpoint(blob: bytes) -> MlpModel:
    if blob[:4] != CHECKPOINT_MAGIC:
        raise ParseError(f"bad checkpoint magic {blob[:4]!r}", 0)
    if len(blob) < 16:
        raise ParseError("truncated checkpoint header", len(blob))
    version, input_dim, n_layers = struct.unpack_from("<III", blob, 4)
    if version != CHECKPOINT_VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", 4)
    if n_layers != 3:
        raise ParseError(f"expected 3 layers, found {n_layers}", 12)
    off = 16
    if len(blob) < off + 4 * n_layers:
        raise ParseError("truncated layer table", len(blob))
    widths = struct.unpack_from(f"<{n_layers}I", blob, off)
    off += 4 * n_layers
    dims = (input_dim, *widths)
    shapes = []
    for i in range(3):
        shapes += [(dims[i], dims[i + 1]), (dims[i + 1],)]
    params: Params = {}
    for name, shape in zip(PARAM_NAMES, shapes):
        count = int(np.prod(shape))
        end = off + 8 * count
        if len(blob) < end:
            raise ParseError(f"truncated parameter {name}", len(blob))
        params[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=off).astype(np.float64).reshape(shape)
        off = end
    if off != len(blob):
        raise ParseError(f"{len(blob) - off} trailing bytes", off)
    overridden = input_dim not in INPUT_DIMS or tuple(widths[:2]) != HIDDEN
    return MlpModel(params=params, overridden=overridden)

