"""Numeric kernel: matrix product, softmax, cross-entropy, optimizer steps, seeded RNG.

Matrices are plain 2-D ``float64`` numpy arrays. Random streams come from
numpy's PCG64 bit generator, which is specified bit-for-bit and therefore
reproducible across platforms for a given seed.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Sequence

import numpy as np

from .errors import ContractError

PROB_CLAMP = 1e-12

Params = Dict[str, np.ndarray]


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """Independent child streams, so consuming one never shifts another."""
    children = np.random.SeedSequence(seed).spawn(n)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim != 2:
        raise ContractError(f"expected a 2-D matrix, got shape {m.shape}")
    return m


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ContractError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def softmax_rows(z: np.ndarray) -> np.ndarray:
    z = as_matrix(z)
    shifted = z - z.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _check_labels(labels, n_rows: int, n_classes: int) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64).reshape(-1)
    if y.shape[0] != n_rows:
        raise ContractError(f"{y.shape[0]} labels for {n_rows} rows")
    if y.size and (y.min() < 0 or y.max() >= n_classes):
        bad = y[(y < 0) | (y >= n_classes)][0]
        raise ContractError(f"label {bad} outside [0, {n_classes})")
    return y


def cross_entropy(probs: np.ndarray, labels: Sequence[int]) -> float:
    """Mean negative log-likelihood of the true labels, probabilities clamped at 1e-12."""
    probs = as_matrix(probs)
    y = _check_labels(labels, probs.shape[0], probs.shape[1])
    if y.size == 0:
        raise ContractError("cross_entropy of an empty batch")
    picked = probs[np.arange(y.size), y]
    return float(-np.mean(np.log(np.maximum(picked, PROB_CLAMP))))


@dataclass
class AdamState:
    m: Params = field(default_factory=dict)
    v: Params = field(default_factory=dict)
    t: int = 0


def _check_same_shapes(params: Params, grads: Params) -> None:
    if params.keys() != grads.keys():
        raise ContractError(f"parameter names {sorted(params)} != gradient names {sorted(grads)}")
    for k in params:
        if params[k].shape != grads[k].shape:
            raise ContractError(f"{k}: parameter shape {params[k].shape} != gradient shape {grads[k].shape}")


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One bias-corrected Adam update, applied in place to ``params`` and ``state``."""
    _check_same_shapes(params, grads)
    for k, g in grads.items():
        m = state.m.get(k)
        if m is None:
            state.m[k] = np.zeros_like(params[k])
            state.v[k] = np.zeros_like(params[k])
        elif m.shape != g.shape:
            raise ContractError(f"{k}: moment shape {m.shape} != gradient shape {g.shape}")
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for k, g in grads.items():
        m = state.m[k]
        v = state.v[k]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        params[k] -= lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def sgd_step(params: Params, grads: Params, lr: float) -> None:
    _check_same_shapes(params, grads)
    for k, g in grads.items():
        params[k] -= lr * g


@dataclass
class Optimizer:
    """Adam or plain SGD behind one ``step`` call."""

    lr: float
    kind: str = "adam"
    state: AdamState = field(default_factory=AdamState)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ContractError(f"unknown optimizer {self.kind!r}")

    def step(self, params: Params, grads: Params) -> None:
        if self.kind == "adam":
            adam_step(params, grads, self.state, self.lr)
        else:
            sgd_step(params, grads, self.lr)
