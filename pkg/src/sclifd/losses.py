"""Supervised contrastive loss, similarity-distribution distillation, and their sum.

All losses take a ``(2N, e)`` matrix of embedding rows and return
``(loss, grad)`` with ``grad`` the derivative wrt those rows, treated as free
vectors.  Chaining through the normalisation happens in :mod:`sclifd.nn`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sclifd import kernels
from sclifd.errors import DataError, ShapeError

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class LossConfig:
    tau: float = 0.07
    lam: float = 0.5
    use_scl: bool = True

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if self.lam < 0:
            raise ValueError(f"lambda must be non-negative, got {self.lam}")


def pair_views(originals, augmented):
    """Stack two views into a 2N batch; row ``i`` pairs with ``(i + N) % 2N``."""
    return np.concatenate([originals, augmented], axis=0)


def _as_rows(emb, check_unit):
    z = np.ascontiguousarray(emb, dtype=np.float64)
    if z.ndim != 2 or z.shape[0] < 2:
        raise ShapeError(f"need a (2N, e) batch with 2N >= 2, got shape {z.shape}")
    if check_unit:
        norms = np.linalg.norm(z, axis=1)
        if np.any(np.abs(norms - 1.0) > UNIT_TOL):
            raise DataError("embedding rows must be unit-norm")
    return z


def scl_loss(embeddings, labels, tau, check_unit=True):
    """Summed supervised contrastive loss over all anchors.

    Every anchor needs at least one other row with its label; with paired
    views this always holds.
    """
    z = _as_rows(embeddings, check_unit)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if labels.shape != (z.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} != ({z.shape[0]},)")
    counts = np.unique(labels, return_counts=True)[1]
    if np.any(counts < 2):
        raise DataError("an anchor has an empty positive set")
    return kernels.scl_loss_grad(z, labels, float(tau))


def kd_similarity(embeddings, tau):
    """Row-stochastic ``(2N, 2N-1)`` matrix; row ``i`` lists ``P(z_i; z_a)``
    for ``a != i`` in ascending order of ``a``."""
    z = _as_rows(embeddings, check_unit=False)
    full = kernels.similarity_softmax(z, float(tau))
    n = z.shape[0]
    return full[~np.eye(n, dtype=bool)].reshape(n, n - 1)


def kd_loss(teacher_emb, student_emb, tau):
    """Cross-entropy of student similarity rows against a constant teacher."""
    s = _as_rows(student_emb, check_unit=False)
    t = np.ascontiguousarray(teacher_emb, dtype=np.float64)
    if t.shape != s.shape:
        raise ShapeError(f"teacher shape {t.shape} != student shape {s.shape}")
    return kernels.kd_loss_grad(t, s, float(tau))


def total_loss(embeddings, labels, teacher_emb, cfg: LossConfig, check_unit=True):
    """``L = L_scl + lam * L_kd`` with the KD term skipped when there is no teacher.

    Returns ``(loss, grad, parts)`` where ``parts`` holds the unweighted
    components for logging.
    """
    z = _as_rows(embeddings, check_unit)
    loss = 0.0
    grad = np.zeros_like(z)
    parts = {}
    if cfg.use_scl:
        l_scl, g_scl = scl_loss(z, labels, cfg.tau, check_unit=False)
        loss += l_scl
        grad += g_scl
        parts["scl"] = l_scl
    if teacher_emb is not None and cfg.lam > 0:
        l_kd, g_kd = kd_loss(teacher_emb, z, cfg.tau)
        loss += cfg.lam * l_kd
        grad += cfg.lam * g_kd
        parts["kd"] = l_kd
    return loss, grad, parts
