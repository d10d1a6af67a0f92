"""Class prototypes and the two prototype classifiers (cosine and NME)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sclifd.errors import DataError, NumericalError
from sclifd.memory import MemoryBuffer
from sclifd.nn import EncoderParams, embed


@dataclass(frozen=True)
class Prototypes:
    classes: tuple[int, ...]     # ascending
    means: np.ndarray            # (C, e) mean of normalised embeddings
    normed: np.ndarray           # (C, e) unit-norm means

    def to_dict(self) -> dict:
        return {
            str(c): {"mean": mu.tolist(), "normed": nu.tolist()}
            for c, mu, nu in zip(self.classes, self.means, self.normed)
        }


def prototypes_from_embeddings(by_class: dict[int, np.ndarray]) -> Prototypes:
    classes = tuple(sorted(by_class))
    if not classes:
        raise DataError("no classes to build prototypes from")
    means = []
    for c in classes:
        z = np.asarray(by_class[c], dtype=np.float64)
        if z.shape[0] == 0:
            raise DataError(f"class {c} has no exemplars")
        means.append(z.mean(axis=0))
    means = np.stack(means)
    norms = np.linalg.norm(means, axis=1, keepdims=True)
    if np.any(norms == 0):
        bad = classes[int(np.flatnonzero(norms[:, 0] == 0)[0])]
        raise NumericalError(f"prototype of class {bad} has zero norm")
    return Prototypes(classes, means, means / norms)


def compute_prototypes(buffer: MemoryBuffer, encoder: EncoderParams) -> Prototypes:
    """Mean normalised embedding of each class's stored exemplars."""
    by_class = {}
    for c, exs in buffer.per_class.items():
        if not exs:
            raise DataError(f"class {c} has no exemplars")
        by_class[c] = embed(encoder, np.stack([e.features for e in exs]))
    return prototypes_from_embeddings(by_class)


def _unit(z):
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    if np.any(norms == 0):
        raise NumericalError("cannot classify a zero vector")
    return z / norms


def cosine_similarities(protos: Prototypes, z) -> np.ndarray:
    return _unit(z) @ protos.normed.T


def _softmax(sims):
    e = np.exp(sims - sims.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cosine_scores(protos: Prototypes, z) -> np.ndarray:
    """Softmax over prototype cosine similarities; one row per input."""
    return _softmax(cosine_similarities(protos, z))


def classify_cosine(protos: Prototypes, z):
    """Predict by highest cosine similarity (lowest class id on ties).

    Accepts one vector or a ``(B, e)`` batch; returns ``(labels, scores)``
    with a scalar label for a single vector.
    """
    single = np.ndim(z) == 1
    sims = cosine_similarities(protos, z)
    scores = _softmax(sims)
    pred = np.asarray(protos.classes)[np.argmax(sims, axis=1)]
    if single:
        return int(pred[0]), scores[0]
    return pred, scores


def classify_nme(protos: Prototypes, z):
    """Nearest un-normalised prototype mean by Euclidean distance."""
    single = np.ndim(z) == 1
    zz = np.atleast_2d(np.asarray(z, dtype=np.float64))
    d2 = ((zz[:, None, :] - protos.means[None, :, :]) ** 2).sum(-1)
    pred = np.asarray(protos.classes)[np.argmin(d2, axis=1)]
    return int(pred[0]) if single else pred
