"""MLP feature extractor with hand-written backprop, Adam, and the step LR schedule.

Everything is float64.  Weights are stored as ``(out, in)`` matrices, so a layer
computes ``h @ W.T + b``.  Hidden layers use ReLU; the last layer is linear and
its output is L2-normalised row-wise to give the embedding.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace

import numpy as np

from sclifd.errors import NumericalError, ShapeError


@dataclass
class EncoderParams:
    dims: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def copy(self) -> "EncoderParams":
        return EncoderParams(
            tuple(self.dims),
            [w.copy() for w in self.weights],
            [b.copy() for b in self.biases],
        )

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases]

    def checksum(self) -> str:
        h = hashlib.sha256(np.asarray(self.dims, dtype=np.int64).tobytes())
        for a in self.arrays():
            h.update(np.ascontiguousarray(a, dtype=np.float64).tobytes())
        return h.hexdigest()


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]      # input to each layer
    preacts: list[np.ndarray]     # affine output of each layer
    raw: np.ndarray
    norms: np.ndarray             # (B, 1) row norms of raw
    embeddings: np.ndarray


def init_params(dims, seed) -> EncoderParams:
    """He-style fan-in init: ``W ~ N(0, 2 / fan_in)``, biases zero."""
    dims = tuple(int(x) for x in dims)
    if len(dims) < 2:
        raise ShapeError(f"need at least input and output sizes, got dims={dims}")
    if any(x <= 0 for x in dims):
        raise ShapeError(f"zero-sized layer in dims={dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return EncoderParams(dims, weights, biases)


def encoder_forward(params: EncoderParams, batch):
    """Return ``(raw, embeddings, cache)`` for a ``(B, d)`` batch."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != params.dims[0]:
        raise ShapeError(f"batch shape {x.shape} does not match input size {params.dims[0]}")
    inputs, preacts = [], []
    h = x
    n_layers = len(params.weights)
    for layer, (w, b) in enumerate(zip(params.weights, params.biases)):
        inputs.append(h)
        with np.errstate(over="ignore", invalid="ignore"):
            a = h @ w.T + b
        if not np.all(np.isfinite(a)):
            raise NumericalError(f"non-finite activation in layer {layer}")
        preacts.append(a)
        h = np.maximum(a, 0.0) if layer < n_layers - 1 else a
    raw = h
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    if np.any(norms == 0.0):
        bad = int(np.flatnonzero(norms[:, 0] == 0.0)[0])
        raise NumericalError(f"zero-norm encoder output for batch row {bad}")
    emb = raw / norms
    return raw, emb, ForwardCache(inputs, preacts, raw, norms, emb)


def embed(params: EncoderParams, batch) -> np.ndarray:
    """Unit-norm embeddings only."""
    return encoder_forward(params, batch)[1]


def encoder_backward(params: EncoderParams, cache: ForwardCache, grad_emb):
    """Backprop ``dL/d(embeddings)`` to ``(weight_grads, bias_grads)``."""
    g = np.asarray(grad_emb, dtype=np.float64)
    if g.shape != cache.embeddings.shape:
        raise ShapeError(f"gradient shape {g.shape} != embedding shape {cache.embeddings.shape}")
    z = cache.embeddings
    # d z / d raw = (I - z z^T) / ||raw||
    g = (g - z * np.sum(g * z, axis=1, keepdims=True)) / cache.norms
    n_layers = len(params.weights)
    gw = [None] * n_layers
    gb = [None] * n_layers
    for layer in range(n_layers - 1, -1, -1):
        if layer < n_layers - 1:
            g = g * (cache.preacts[layer] > 0.0)
        gw[layer] = g.T @ cache.inputs[layer]
        gb[layer] = g.sum(axis=0)
        if layer > 0:
            g = g @ params.weights[layer]
    return gw, gb


def raw_grad(cache: ForwardCache, grad_emb) -> np.ndarray:
    """Gradient wrt the pre-normalisation output; exposed for tests."""
    z = cache.embeddings
    g = np.asarray(grad_emb, dtype=np.float64)
    return (g - z * np.sum(g * z, axis=1, keepdims=True)) / cache.norms


@dataclass(frozen=True)
class LrSchedule:
    base_lr: float = 0.01
    gamma: float = 0.2
    milestones: tuple[int, ...] = (200, 400)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        ms = tuple(self.milestones)
        if any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError(f"milestones must be strictly increasing, got {ms}")

    def lr_at(self, epoch: int) -> float:
        passed = sum(1 for m in self.milestones if epoch >= m)
        return self.base_lr * self.gamma**passed


def lr_at(epoch: int, schedule: LrSchedule | None = None) -> float:
    return (schedule or LrSchedule()).lr_at(epoch)


@dataclass(frozen=True)
class AdamState:
    m: tuple[np.ndarray, ...]
    v: tuple[np.ndarray, ...]
    step: int = 0
    base_lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-5

    @classmethod
    def zeros_like(cls, params: EncoderParams, **hyper) -> "AdamState":
        arrays = params.arrays()
        return cls(
            m=tuple(np.zeros_like(a) for a in arrays),
            v=tuple(np.zeros_like(a) for a in arrays),
            **hyper,
        )


def adam_step(state: AdamState, params: EncoderParams, grads, lr: float | None = None):
    """One Adam update with coupled L2 weight decay; returns ``(params, state)``.

    ``grads`` is the ``(weight_grads, bias_grads)`` pair from
    :func:`encoder_backward`.  Inputs are not modified.
    """
    gw, gb = grads
    flat_g = [*gw, *gb]
    flat_p = params.arrays()
    if len(flat_g) != len(flat_p) or any(g.shape != p.shape for g, p in zip(flat_g, flat_p)):
        raise ShapeError("gradient shapes do not match parameters")
    if not all(np.all(np.isfinite(g)) for g in flat_g):
        raise NumericalError("non-finite gradient passed to adam_step")
    lr = state.base_lr if lr is None else lr
    t = state.step + 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(flat_p, flat_g, state.m, state.v):
        if state.weight_decay:
            g = g + state.weight_decay * p
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        new_p.append(p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps))
        new_m.append(m)
        new_v.append(v)
    k = len(params.weights)
    out = EncoderParams(tuple(params.dims), new_p[:k], new_p[k:])
    return out, replace(state, m=tuple(new_m), v=tuple(new_v), step=t)


def save_encoder(params: EncoderParams, path) -> None:
    """JSON-of-arrays checkpoint.  Floats are written with ``repr`` precision,
    which round-trips float64 exactly."""
    doc = {
        "dims": list(params.dims),
        "weights": [w.tolist() for w in params.weights],
        "biases": [b.tolist() for b in params.biases],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)


def load_encoder(path) -> EncoderParams:
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    dims = tuple(int(x) for x in doc["dims"])
    weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
    biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
    for i, (w, b) in enumerate(zip(weights, biases)):
        if w.shape != (dims[i + 1], dims[i]) or b.shape != (dims[i + 1],):
            raise ShapeError(f"checkpoint layer {i} has shape {w.shape}/{b.shape}, dims={dims}")
    return EncoderParams(dims, weights, biases)
