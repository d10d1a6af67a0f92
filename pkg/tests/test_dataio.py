import json

import numpy as np
import pytest

from sclifd.dataio import (
    BlobConfig,
    Dataset,
    Standardizer,
    load_csv,
    make_schedule,
    synth_blobs,
    write_csv,
)
from sclifd.errors import DataError


def write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text, encoding="utf-8")
    return p


def test_load_csv_basic(tmp_path):
    ds = load_csv(write(tmp_path, "f0,f1,label\n0,1,0\n2,3,0\n4,5,1\n"))
    assert ds.d == 2 and ds.classes == {0, 1} and len(ds) == 3
    np.testing.assert_array_equal(ds.X, [[0, 1], [2, 3], [4, 5]])
    assert ds.samples[2].label == 1


def test_load_csv_label_column_anywhere(tmp_path):
    ds = load_csv(write(tmp_path, "label,a,b\n3,1.5,2.5\n"))
    np.testing.assert_array_equal(ds.X, [[1.5, 2.5]])
    assert ds.feature_names == ["a", "b"]


@pytest.mark.parametrize("text,match", [
    ("f0,label\n", "no samples"),
    ("f0,f1\n1,2\n", "label"),
    ("f0,label\n1,0\nNaN,1\n", "row 2"),
    ("f0,label\n1,0\nabc,1\n", "row 2"),
    ("f0,f1,label\n1,2,0\n1,0\n", "row 2"),
    ("f0,label\n1,0.5\n", "row 1"),
    ("", "header"),
])
def test_load_csv_errors(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        load_csv(write(tmp_path, text))


def test_load_csv_missing_file(tmp_path):
    with pytest.raises(DataError, match="nope.csv"):
        load_csv(tmp_path / "nope.csv")


def test_csv_round_trip(tmp_path):
    ds = synth_blobs(BlobConfig(num_classes=3, d=4, samples_per_class=5, seed=2))
    write_csv(ds, tmp_path / "b.csv")
    back = load_csv(tmp_path / "b.csv")
    np.testing.assert_array_equal(back.X, ds.X)
    np.testing.assert_array_equal(back.y, ds.y)


def test_blobs_deterministic():
    cfg = BlobConfig(num_classes=4, d=3, seed=11)
    a, b = synth_blobs(cfg), synth_blobs(cfg)
    assert a.X.tobytes() == b.X.tobytes()
    np.testing.assert_array_equal(a.y, b.y)


@pytest.mark.parametrize("sep", [0.0, 2.5, 6.0, 100.0])
def test_blob_mean_separation(sep):
    cfg = BlobConfig(num_classes=6, d=10, mean_separation=sep, within_std=2.0,
                     samples_per_class=2000, seed=1)
    ds = synth_blobs(cfg)
    means = np.stack([ds.X[ds.y == c].mean(axis=0) for c in range(6)])
    dist = np.linalg.norm(means[:, None] - means[None], axis=-1)[np.triu_indices(6, 1)]
    # empirical means carry ~std * sqrt(d / n) sampling noise
    assert dist.min() >= sep * 2.0 - 0.3


def test_blobs_well_separated_are_1nn_separable():
    ds = synth_blobs(BlobConfig(num_classes=2, d=5, mean_separation=100.0, within_std=1.0,
                                samples_per_class=100, seed=3))
    train = np.r_[0:50, 100:150]
    test = np.r_[50:100, 150:200]
    d2 = ((ds.X[test][:, None] - ds.X[train][None]) ** 2).sum(-1)
    pred = ds.y[train][d2.argmin(axis=1)]
    assert (pred == ds.y[test]).mean() == 1.0


def test_blob_config_validation():
    with pytest.raises(ValueError):
        BlobConfig(num_classes=1)
    with pytest.raises(ValueError):
        BlobConfig(within_std=0.0)
    with pytest.raises(ValueError):
        BlobConfig(mean_separation=-1.0)


def _labelled(n_per_class):
    y = np.concatenate([[c] * n for c, n in n_per_class.items()])
    return Dataset(np.arange(len(y), dtype=float)[:, None], y)


def test_schedule_tep_case1():
    ds = _labelled({c: 1300 if c == 0 else 900 for c in range(10)})
    s = make_schedule(ds, list(range(10)), 2, 500, 48, 800, seed=0)
    assert s.sessions == [[0, 1], [2, 3], [4, 5], [6, 7], [8, 9]]
    assert s.train_count[0] == 500 and all(s.train_count[c] == 48 for c in range(1, 10))
    assert all(s.test_count[c] == 800 for c in range(10))
    for c in range(10):
        tr, te = set(s.train_idx[c]), set(s.test_idx[c])
        assert not tr & te
        assert all(ds.y[i] == c for i in tr | te)


def test_schedule_mff_and_single_session():
    ds = _labelled({c: 1300 for c in range(5)})
    assert make_schedule(ds, range(5), 1, 500, 30, 800, seed=0).sessions == [[0], [1], [2], [3], [4]]
    assert make_schedule(ds, range(5), 5, 500, 30, 800, seed=0).sessions == [[0, 1, 2, 3, 4]]
    uneven = make_schedule(ds, [4, 2, 0, 1, 3], 2, 10, 5, 5, seed=0)
    assert uneven.sessions == [[4, 2], [0, 1], [3]]
    assert uneven.train_count[4] == 10 and uneven.train_count[0] == 5


def test_schedule_deterministic_and_serialisable():
    ds = _labelled({c: 50 for c in range(4)})
    a = make_schedule(ds, range(4), 2, 20, 5, 10, seed=9)
    b = make_schedule(ds, range(4), 2, 20, 5, 10, seed=9)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert sorted(a.class_order) == [0, 1, 2, 3]
    assert len(a.session_train(1)) == 10
    assert len(a.joint_test(1)) == 40


def test_schedule_errors():
    ds = _labelled({0: 10, 1: 10})
    with pytest.raises(DataError, match="class 0"):
        make_schedule(ds, [0, 1], 1, 8, 2, 5, seed=0)
    with pytest.raises(DataError, match="absent"):
        make_schedule(ds, [0, 7], 1, 2, 2, 2, seed=0)


def test_standardizer():
    X = np.array([[1.0, 5.0], [3.0, 5.0]])
    s = Standardizer.fit(X)
    np.testing.assert_allclose(s.transform(X), [[-1.0, 0.0], [1.0, 0.0]])
