import numpy as np
import pytest

from sclifd.config import RunConfig
from sclifd.dataio import BlobConfig, synth_blobs
from sclifd.errors import DataError
from sclifd.losses import LossConfig, scl_loss
from sclifd.memory import MemoryBuffer
from sclifd.nn import embed, init_params
from sclifd.session import (
    AugmentConfig,
    SessionState,
    TrainConfig,
    augment,
    build_exemplars,
    evaluate,
    run_experiment,
    train_session,
)


def small_cfg(**overrides):
    base = {
        "data.blobs": {"num_classes": 6, "d": 10, "mean_separation": 6.0, "within_std": 1.0,
                       "samples_per_class": 120, "seed": 0},
        "data.shot": 2, "data.normal_train": 60, "data.fault_train": 20, "data.test_per_class": 30,
        "train.epochs": 5, "memory.capacity": 30,
    }
    base.update(overrides)
    return RunConfig().with_overrides(base)


def fresh_state(dims, capacity=100, seed=0):
    return SessionState(init_params(dims, np.random.default_rng(seed)), MemoryBuffer(capacity),
                        np.random.default_rng(seed + 1))


def two_blobs(n=40, d=4, sep=4.0, seed=0):
    r = np.random.default_rng(seed)
    X = np.concatenate([r.normal(size=(n, d)), r.normal(size=(n, d)) + sep])
    return X, np.repeat([0, 1], n)


def test_augment_identity_and_determinism(rng):
    x = rng.normal(size=(7, 3))
    ident = AugmentConfig(jitter_std=0.0, scale_range=(1.0, 1.0))
    np.testing.assert_array_equal(augment(x, ident, rng), x)
    cfg = AugmentConfig()
    a = augment(x, cfg, np.random.default_rng(3))
    b = augment(x, cfg, np.random.default_rng(3))
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, x)


def test_augment_jitter_statistics():
    x = np.zeros((20000, 3))
    out = augment(x, AugmentConfig(jitter_std=0.05, scale_range=(1.0, 1.0)), np.random.default_rng(0),
                  feature_std=np.array([1.0, 2.0, 4.0]))
    np.testing.assert_allclose(out.std(axis=0), [0.05, 0.1, 0.2], rtol=0.03)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=0.01)


def test_augment_rejects_bad_input(rng):
    with pytest.raises(DataError):
        augment(np.empty((0, 3)), AugmentConfig(), rng)
    with pytest.raises(ValueError):
        AugmentConfig(scale_range=(1.2, 1.0))


def test_first_session_scl_decreases():
    X, y = two_blobs()
    state = fresh_state((4, 16, 8))
    out = train_session(state, X, y, TrainConfig(epochs=50, batch_size=32), LossConfig(tau=0.5),
                        AugmentConfig())
    scl = [h["scl"] for h in out.history]
    assert len(scl) == 50 and scl[-1] < scl[0]
    assert all(h["loss"] == h["scl"] for h in out.history)  # no teacher: pure SCL


def test_zero_epochs_only_snapshots_teacher():
    X, y = two_blobs()
    state = fresh_state((4, 5, 3))
    out = train_session(state, X, y, TrainConfig(epochs=0), LossConfig(), AugmentConfig())
    assert out.params.checksum() == state.params.checksum()
    assert out.teacher.checksum() == state.params.checksum()
    assert out.teacher is not out.params and out.history == []
    assert out.session_index == 1


def test_teacher_is_previous_encoder():
    X, y = two_blobs()
    state = train_session(fresh_state((4, 6, 3)), X, y, TrainConfig(epochs=2), LossConfig(),
                          AugmentConfig())
    before = state.params.checksum()
    state2 = train_session(state, X + 1, y, TrainConfig(epochs=2), LossConfig(), AugmentConfig())
    assert state.teacher.checksum() == before
    assert state2.params.checksum() != before
    assert state2.teacher.checksum() == state2.params.checksum()


def test_learned_embedding_separates_classes():
    X, y = two_blobs(sep=3.0)
    state = train_session(fresh_state((4, 16, 8)), X, y, TrainConfig(epochs=30, batch_size=40),
                          LossConfig(tau=0.5), AugmentConfig())
    z = embed(state.params, X)
    z0 = embed(fresh_state((4, 16, 8)).params, X)
    assert scl_loss(z, y, 0.5)[0] < scl_loss(z0, y, 0.5)[0]


def _tep_like(rng, classes, per_class=60, d=5):
    X = rng.normal(size=(len(classes) * per_class, d))
    y = np.repeat(classes, per_class)
    return X, y, np.arange(len(y)) + 1000


@pytest.mark.parametrize("selector", ["herding", "adaherding", "random"])
def test_exemplar_quotas(rng, selector):
    state = fresh_state((5, 6, 3), capacity=100)
    X, y, rows = _tep_like(rng, [0, 1])
    buf = build_exemplars(state, X, y, rows, [0, 1], selector)
    assert {c: len(v) for c, v in buf.per_class.items()} == {0: 50, 1: 50}
    state.buffer, state.seen_classes = buf, [0, 1]
    X2, y2, rows2 = _tep_like(rng, [2, 3])
    buf2 = build_exemplars(state, X2, y2, rows2, [2, 3], selector)
    assert {c: len(v) for c, v in buf2.per_class.items()} == {0: 25, 1: 25, 2: 25, 3: 25}
    # kept old exemplars are the highest-priority prefix
    assert [e.index for e in buf2.per_class[0]] == [e.index for e in buf.per_class[0][:25]]
    assert all(e.index >= 1000 for e in buf2.per_class[3])


def test_small_class_stores_everything(rng):
    state = fresh_state((5, 6, 3), capacity=100)
    X = rng.normal(size=(13, 5))
    y = np.array([0] * 10 + [1] * 3)
    buf = build_exemplars(state, X, y, np.arange(13), [0, 1], "adaherding", n_neighbors=2)
    assert len(buf.per_class[1]) == 3 and len(buf.per_class[0]) == 10
    assert all(e.ratio is not None for e in buf.per_class[1])


def test_build_exemplars_capacity_error(rng):
    state = fresh_state((5, 6, 3), capacity=1)
    X, y, rows = _tep_like(rng, [0, 1], per_class=3)
    with pytest.raises(DataError, match="capacity"):
        build_exemplars(state, X, y, rows, [0, 1], "herding")


def test_evaluate_single_class(rng):
    state = fresh_state((5, 6, 3))
    X, y, rows = _tep_like(rng, [4], per_class=10)
    state.buffer = build_exemplars(state, X, y, rows, [4], "herding")
    state.seen_classes = [4]
    rep = evaluate(state, X, y)
    assert rep.accuracy == 1.0 and rep.confusion.tolist() == [[1.0]]
    with pytest.raises(DataError, match="unseen"):
        evaluate(state, X, np.full(len(y), 5))


def test_evaluate_confusion_rows(rng):
    state = fresh_state((5, 6, 3))
    X, y, rows = _tep_like(rng, [0, 1, 2], per_class=20)
    state.buffer = build_exemplars(state, X, y, rows, [0, 1, 2], "herding")
    state.seen_classes = [0, 1, 2]
    for clf in ("cos", "nme"):
        rep = evaluate(state, X, y, clf)
        np.testing.assert_allclose(rep.confusion.sum(axis=1), 1.0)
        assert rep.counts.sum() == len(y)
        assert rep.accuracy == pytest.approx(np.trace(rep.counts) / len(y))


def test_run_experiment_structure():
    cfg = small_cfg()
    reports, manifest, state = run_experiment(cfg)
    assert [len(r.classes) for r in reports] == [2, 4, 6]
    # floor(30 / t) per class for t = 2, 4, 6
    assert [s["buffer_size"] for s in manifest["sessions"]] == [30, 28, 30]
    assert [s["train_size"] for s in manifest["sessions"]] == [80, 40 + 30, 40 + 28]
    assert len(state.buffer) <= 30


def test_classifier_choice_does_not_touch_training():
    cos = run_experiment(small_cfg(classifier="cos"))[1]
    nme = run_experiment(small_cfg(classifier="nme"))[1]
    assert [s["encoder_sha256"] for s in cos["sessions"]] == [s["encoder_sha256"] for s in nme["sessions"]]


def test_run_experiment_deterministic():
    a, ma, _ = run_experiment(small_cfg())
    b, mb, _ = run_experiment(small_cfg())
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]
    assert ma == mb


def test_session_errors_are_labelled():
    cfg = small_cfg(**{"data.fault_train": 110})
    with pytest.raises(DataError):
        run_experiment(cfg)
    ds = synth_blobs(BlobConfig(num_classes=4, d=3, samples_per_class=40))
    cfg = small_cfg(**{"data.normal_train": 5, "data.fault_train": 5, "data.test_per_class": 5,
                       "memory.capacity": 2, "data.shot": 1,
                       "memory.selector": "herding"})
    with pytest.raises(DataError, match="session 3"):
        run_experiment(cfg, ds)
