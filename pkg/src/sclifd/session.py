"""The incremental driver: train, build exemplars, evaluate, repeat per session."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from sclifd import kernels
from sclifd.classify import Prototypes, classify_cosine, classify_nme, compute_prototypes
from sclifd.dataio import Dataset, Standardizer, load_csv, make_schedule, synth_blobs
from sclifd.errors import DataError, NumericalError, SclifdError
from sclifd.losses import LossConfig, total_loss
from sclifd.memory import (
    Exemplar,
    MemoryBuffer,
    adaherding_select,
    buffer_arrays,
    herding_select,
    per_class_quota,
    random_select,
    rebalance,
)
from sclifd.nn import AdamState, EncoderParams, LrSchedule, adam_step, embed, encoder_backward, encoder_forward, init_params

log = logging.getLogger(__name__)

SELECTORS = ("herding", "adaherding", "random")
CLASSIFIERS = ("cos", "nme")


@dataclass(frozen=True)
class AugmentConfig:
    jitter_std: float = 0.05
    scale_range: tuple[float, float] = (0.9, 1.1)

    def __post_init__(self):
        lo, hi = self.scale_range
        if self.jitter_std < 0:
            raise ValueError("jitter_std must be >= 0")
        if not 0 < lo <= hi:
            raise ValueError(f"scale_range must be positive and ordered, got {self.scale_range}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 500
    batch_size: int = 64
    lr: float = 0.01
    gamma: float = 0.2
    milestones: tuple[int, ...] = (200, 400)
    weight_decay: float = 1e-5

    @property
    def schedule(self) -> LrSchedule:
        return LrSchedule(self.lr, self.gamma, tuple(self.milestones))


@dataclass
class SessionState:
    params: EncoderParams
    buffer: MemoryBuffer
    rng: np.random.Generator
    teacher: EncoderParams | None = None
    seen_classes: list[int] = field(default_factory=list)
    session_index: int = 0          # number of completed training sessions
    history: list[dict] = field(default_factory=list)
    prototypes: Prototypes | None = None


@dataclass
class SessionReport:
    session: int                    # 1-based
    classes: list[int]              # confusion row/column order
    accuracy: float
    per_class_accuracy: dict[int, float]
    confusion: np.ndarray           # rows = true class, row-normalised
    counts: np.ndarray              # raw counts, same layout
    n_test: int

    def to_dict(self) -> dict:
        return {
            "session": self.session,
            "classes": self.classes,
            "accuracy": self.accuracy,
            "per_class_accuracy": {str(c): a for c, a in self.per_class_accuracy.items()},
            "confusion": self.confusion.tolist(),
            "n_test": self.n_test,
        }


def augment(batch, cfg: AugmentConfig, rng, feature_std=None) -> np.ndarray:
    """One augmented view per row: per-sample uniform scaling plus
    per-feature Gaussian jitter of ``jitter_std * feature_std``."""
    x = np.asarray(batch, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise DataError("augment needs a non-empty (B, d) batch")
    std = np.ones(x.shape[1]) if feature_std is None else np.asarray(feature_std, dtype=np.float64)
    lo, hi = cfg.scale_range
    scale = rng.uniform(lo, hi, size=(x.shape[0], 1))
    noise = rng.normal(size=x.shape) * (cfg.jitter_std * std)
    return x * scale + noise


def _has_objective(state: SessionState, loss_cfg: LossConfig) -> bool:
    return loss_cfg.use_scl or (state.teacher is not None and loss_cfg.lam > 0)


def train_session(state: SessionState, X_new, y_new, train_cfg: TrainConfig,
                  loss_cfg: LossConfig, aug_cfg: AugmentConfig) -> SessionState:
    """Train the encoder on new data plus stored exemplars, then snapshot it
    as the next session's teacher."""
    X_buf, y_buf, _ = buffer_arrays(state.buffer, state.params.dims[0])
    X = np.concatenate([np.asarray(X_new, dtype=np.float64), X_buf])
    y = np.concatenate([np.asarray(y_new, dtype=np.int64), y_buf])
    n = X.shape[0]
    if n == 0:
        raise DataError("empty training set")
    session = state.session_index + 1
    feature_std = X.std(axis=0)
    schedule = train_cfg.schedule
    params, teacher, rng = state.params, state.teacher, state.rng
    adam = AdamState.zeros_like(params, base_lr=train_cfg.lr, weight_decay=train_cfg.weight_decay)
    history = []
    # without SCL and without a teacher there is nothing to minimise; stepping
    # Adam on the weight-decay term alone would only shrink the network
    active = _has_objective(state, loss_cfg)
    for epoch in range(train_cfg.epochs if active else 0):
        lr = schedule.lr_at(epoch)
        perm = rng.permutation(n)
        totals, scls = [], []
        for b, start in enumerate(range(0, n, train_cfg.batch_size)):
            idx = perm[start:start + train_cfg.batch_size]
            xb, yb = X[idx], y[idx]
            x2 = np.concatenate([xb, augment(xb, aug_cfg, rng, feature_std)])
            y2 = np.concatenate([yb, yb])
            _, z, cache = encoder_forward(params, x2)
            t = embed(teacher, x2) if teacher is not None else None
            loss, grad, parts = total_loss(z, y2, t, loss_cfg, check_unit=False)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss in session {session}, epoch {epoch}, batch {b}")
            params, adam = adam_step(adam, params, encoder_backward(params, cache, grad), lr)
            totals.append(loss)
            if "scl" in parts:
                scls.append(parts["scl"])
        history.append({
            "epoch": epoch,
            "loss": float(np.mean(totals)),
            "scl": float(np.mean(scls)) if scls else None,
        })
    if history:
        log.info("session %d: loss %.4f -> %.4f over %d epochs", session,
                 history[0]["loss"], history[-1]["loss"], len(history))
    return replace(state, params=params, teacher=params.copy(), rng=rng,
                   session_index=session, history=history)


def build_exemplars(state: SessionState, X_new, y_new, rows_new, new_classes, selector: str,
                    n_neighbors: int = 5, rng=None) -> MemoryBuffer:
    """Shrink old class lists to ``floor(K/t)`` and select that many for each new class.

    AdaHerding's neighbour context is every stored exemplar plus all new
    training data, embedded by the current encoder (unit-norm).
    """
    if selector not in SELECTORS:
        raise ValueError(f"unknown selector {selector!r}")
    X_new = np.asarray(X_new, dtype=np.float64)
    y_new = np.asarray(y_new, dtype=np.int64)
    rows_new = np.asarray(rows_new, dtype=np.int64)
    t = len(set(state.seen_classes) | set(new_classes))
    m = per_class_quota(state.buffer.capacity, t)
    if m < 1:
        raise DataError(f"buffer capacity {state.buffer.capacity} cannot hold one exemplar for each of {t} classes")
    emb_new = embed(state.params, X_new)
    if selector == "adaherding":
        X_old, y_old, _ = buffer_arrays(state.buffer, X_new.shape[1])
        ctx = emb_new if len(X_old) == 0 else np.concatenate([emb_new, embed(state.params, X_old)])
        ctx_y = np.concatenate([y_new, y_old])
    buffer = rebalance(state.buffer, t)
    for c in new_classes:
        members = np.flatnonzero(y_new == c)
        if len(members) == 0:
            raise DataError(f"no training data for new class {c}")
        ratios = None
        if selector == "herding":
            order = herding_select(emb_new[members], m)
        elif selector == "adaherding":
            order, ratios = adaherding_select(ctx, ctx_y, members, n_neighbors, m)
        else:
            order = random_select(len(members), m, rng if rng is not None else state.rng)
        buffer.per_class[int(c)] = [
            Exemplar(int(rows_new[members[i]]), X_new[members[i]].copy(),
                     None if ratios is None else float(ratios[i]))
            for i in order
        ]
    return buffer


def evaluate(state: SessionState, X_test, y_test, classifier: str = "cos",
             protos: Prototypes | None = None) -> SessionReport:
    """Joint accuracy and row-normalised confusion over the seen classes."""
    if classifier not in CLASSIFIERS:
        raise ValueError(f"unknown classifier {classifier!r}")
    y_test = np.asarray(y_test, dtype=np.int64)
    classes = list(state.seen_classes)
    unseen = set(np.unique(y_test).tolist()) - set(classes)
    if unseen:
        raise DataError(f"test set contains unseen classes {sorted(unseen)}")
    if protos is None:
        protos = compute_prototypes(state.buffer, state.params)
    z = embed(state.params, X_test)
    if classifier == "cos":
        pred = classify_cosine(protos, z)[0]
    else:
        pred = classify_nme(protos, z)
    pos = {c: i for i, c in enumerate(classes)}
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for true, p in zip(y_test, pred):
        counts[pos[int(true)], pos[int(p)]] += 1
    row_tot = counts.sum(axis=1, keepdims=True)
    confusion = np.divide(counts, row_tot, out=np.zeros(counts.shape), where=row_tot > 0)
    per_class = {c: float(confusion[i, i]) for i, c in enumerate(classes) if row_tot[i, 0] > 0}
    acc = float(np.trace(counts) / max(len(y_test), 1))
    return SessionReport(state.session_index, classes, acc, per_class, confusion, counts, int(len(y_test)))


def load_dataset(cfg) -> Dataset:
    if cfg.data.csv is not None:
        return load_csv(cfg.data.csv)
    if cfg.data.blobs is not None:
        return synth_blobs(cfg.data.blobs)
    raise DataError("no dataset source configured (csv path or blobs)")


def run_experiment(cfg, dataset: Dataset | None = None):
    """Run every session of ``cfg`` (a :class:`sclifd.config.RunConfig`).

    Returns ``(reports, manifest, final_state)``.
    """
    if dataset is None:
        dataset = load_dataset(cfg)
    class_order = cfg.data.class_order or sorted(dataset.classes)
    split_ss, init_ss, train_ss, select_ss = np.random.SeedSequence(cfg.seed).spawn(4)
    schedule = make_schedule(
        dataset, class_order, cfg.data.shot, cfg.data.normal_train, cfg.data.fault_train,
        cfg.data.test_per_class, np.random.default_rng(split_ss),
    )
    X = dataset.X
    standardizer = None
    if cfg.data.standardize:
        standardizer = Standardizer.fit(X[schedule.session_train(0)])
        X = standardizer.transform(X)
    dims = (dataset.d, *cfg.model.hidden, cfg.model.embed_dim)
    state = SessionState(
        params=init_params(dims, np.random.default_rng(init_ss)),
        buffer=MemoryBuffer(cfg.memory.capacity),
        rng=np.random.default_rng(train_ss),
    )
    select_rng = np.random.default_rng(select_ss)
    reports, sessions_meta = [], []
    for k, new_classes in enumerate(schedule.sessions):
        try:
            rows = schedule.session_train(k)
            X_new, y_new = X[rows], dataset.y[rows]
            train_size = len(rows) + len(state.buffer)
            state = train_session(state, X_new, y_new, cfg.train, cfg.loss, cfg.augment)
            state.buffer = build_exemplars(state, X_new, y_new, rows, new_classes,
                                           cfg.memory.selector, cfg.memory.n_neighbors, select_rng)
            state.seen_classes = state.seen_classes + list(new_classes)
            state.prototypes = compute_prototypes(state.buffer, state.params)
            test_rows = schedule.joint_test(k)
            report = evaluate(state, X[test_rows], dataset.y[test_rows], cfg.classifier, state.prototypes)
        except SclifdError as exc:
            raise type(exc)(f"session {k + 1}: {exc}") from exc
        log.info("session %d classes=%s accuracy=%.4f", k + 1, state.seen_classes, report.accuracy)
        reports.append(report)
        sessions_meta.append({
            "session": k + 1,
            "new_classes": list(new_classes),
            "train_size": train_size,
            "buffer_size": len(state.buffer),
            "buffer": state.buffer.audit(),
            "encoder_sha256": state.params.checksum(),
            "prototypes": state.prototypes.to_dict(),
            "final_loss": state.history[-1]["loss"] if state.history else None,
        })
    manifest = {
        "config": cfg.to_dict(),
        "backend": kernels.BACKEND,
        "seed": cfg.seed,
        "dataset": {"n": len(dataset), "d": dataset.d, "classes": sorted(dataset.classes)},
        "schedule": schedule.to_dict(),
        "standardizer": None if standardizer is None else {
            "mean": standardizer.mean.tolist(), "std": standardizer.std.tolist()},
        "sessions": sessions_meta,
    }
    return reports, manifest, state
