import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsneseg.forest import (
    ForestConfig,
    _best_split,
    feature_importances,
    gini_impurity,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
    train,
)

from conftest import make_blobs


def test_gini_examples():
    assert gini_impurity([10, 0]) == 0.0
    assert gini_impurity([5, 5]) == 0.5
    assert gini_impurity([1, 2, 3]) == pytest.approx(11 / 18, abs=1e-15)
    with pytest.raises(ValueError):
        gini_impurity([0, 0])


def oracle_split(x, y, candidates, n_wanted, min_leaf, n_classes):
    """Every midpoint of every evaluated feature, scored with ``gini_impurity``."""
    m = len(y)
    feats = [f for f in candidates if x[:, f].min() < x[:, f].max()][:n_wanted]
    scored = []
    for f in feats:
        values = sorted(set(x[:, f].tolist()))
        for lo, hi in zip(values[:-1], values[1:]):
            thr = (lo + hi) / 2
            if thr == hi:
                thr = lo
            mask = x[:, f] <= thr
            n_l = int(mask.sum())
            if n_l < min_leaf or m - n_l < min_leaf:
                continue
            gl = gini_impurity(np.bincount(y[mask], minlength=n_classes))
            gr = gini_impurity(np.bincount(y[~mask], minlength=n_classes))
            scored.append(((n_l * gl + (m - n_l) * gr) / m, f, thr))
    if not scored:
        return None
    best = min(s[0] for s in scored)
    return min((s for s in scored if s[0] <= best + 1e-12), key=lambda s: (s[1], s[2]))


@pytest.mark.parametrize("seed", range(60))
def test_best_split_matches_oracle(seed):
    rng = np.random.default_rng(seed)
    m, d, k = int(rng.integers(2, 30)), int(rng.integers(1, 6)), int(rng.integers(2, 4))
    # coarse integer grids create many duplicate values and impurity ties
    x = rng.integers(0, int(rng.integers(2, 6)), size=(m, d)).astype(float)
    y = rng.integers(0, k, size=m)
    candidates = rng.permutation(d)
    n_wanted = int(rng.integers(1, d + 1))
    min_leaf = int(rng.integers(1, 3))
    got = _best_split(x, y, np.bincount(y, minlength=k).astype(np.int64), candidates, n_wanted, min_leaf)
    want = oracle_split(x, y, candidates, n_wanted, min_leaf, k)
    if want is None:
        assert got is None
    else:
        assert got[1:] == want[1:]
        assert got[0] == pytest.approx(want[0], abs=1e-12)


def test_single_class_forest():
    x = np.random.default_rng(0).normal(size=(20, 3))
    m = train(x, [7] * 20, ForestConfig(n_trees=5))
    assert np.all(m.importances == 0)
    assert predict(m, np.random.default_rng(1).normal(size=(9, 3))).tolist() == [7] * 9


def test_blob_feature_dominates():
    rng = np.random.default_rng(2)
    x = rng.normal(size=(200, 4))
    y = np.repeat([0, 1], 100)
    x[y == 1, 0] += 10.0
    m = train(x, y, ForestConfig(n_trees=30))
    assert m.importances[0] > 0.9
    assert abs(m.importances.sum() - 1) < 1e-9


def test_one_informative_feature_ranks_first():
    rng = np.random.default_rng(3)
    x = rng.random((300, 6))
    y = (x[:, 4] > 0.5).astype(int)
    m = train(x, y, ForestConfig(n_trees=40), feature_names=[f"c{j}" for j in range(6)])
    ranked = feature_importances(m)
    assert ranked[0][0] == "c4"
    assert [s for _, s in ranked] == sorted((s for _, s in ranked), reverse=True)
    assert sum(s for _, s in ranked) == pytest.approx(1.0, abs=1e-9)


def test_full_growth_reproduces_training_labels():
    rng = np.random.default_rng(4)
    x = rng.normal(size=(120, 5))
    y = rng.integers(0, 4, 120)  # pure noise: only memorization can fit it
    m = train(x, y, ForestConfig(n_trees=3, bootstrap=False))
    assert np.array_equal(predict(m, x), y)


def test_blobs_in_sample_accuracy():
    x, y = make_blobs([50, 50, 50], 6, 10.0, seed=5)
    m = train(x, y, ForestConfig(n_trees=20))
    assert np.array_equal(predict(m, x), y)


def test_determinism():
    x, y = make_blobs([30, 30], 4, 3.0, seed=6)
    a = train(x, y, ForestConfig(n_trees=8, seed=11))
    b = train(x, y, ForestConfig(n_trees=8, seed=11))
    assert json.dumps(model_to_dict(a)) == json.dumps(model_to_dict(b))
    c = train(x, y, ForestConfig(n_trees=8, seed=12))
    assert json.dumps(model_to_dict(a)) != json.dumps(model_to_dict(c))


@pytest.mark.parametrize("depth", [1, 2])
def test_feature_permutation_invariance(depth):
    # shallow trees on continuous data: no two features tie on impurity, so the
    # lower-index tie rule never fires (fully grown trees hit pure-child ties)
    rng = np.random.default_rng(7)
    x = rng.normal(size=(80, 5))
    y = (x[:, 1] + 0.5 * x[:, 3] > 0).astype(int) + (x[:, 0] > 1)
    perm = np.array([3, 0, 4, 1, 2])
    cfg = ForestConfig(n_trees=10, max_features="all", max_depth=depth, seed=3)
    a = train(x, y, cfg)
    b = train(x[:, perm], y, cfg)
    np.testing.assert_allclose(b.importances, a.importances[perm], atol=1e-12)
    probe = rng.normal(size=(50, 5))
    assert np.array_equal(predict(b, probe[:, perm]), predict(a, probe))


def test_tied_pure_splits_go_to_lower_feature():
    # both columns separate the classes perfectly; the lower index wins either way round
    x = np.array([[0.0, 5.0], [1.0, 6.0], [2.0, 0.0], [3.0, 1.0]])
    y = np.array([0, 0, 1, 1])
    for cols in ([0, 1], [1, 0]):
        m = train(x[:, cols], y, ForestConfig(n_trees=1, bootstrap=False, max_features="all"))
        assert m.trees[0].feature[0] == 0


def test_save_load_round_trip(tmp_path):
    x, y = make_blobs([25, 25, 25], 4, 4.0, seed=8)
    m = train(x, y + 3, ForestConfig(n_trees=6), feature_names=list("abcd"))
    path = tmp_path / "model.json"
    save_model(m, path)
    back = load_model(path)
    assert back.importances.tobytes() == m.importances.tobytes()
    assert back.feature_names == m.feature_names and back.config == m.config
    probe = np.random.default_rng(9).normal(size=(40, 4)) * 4
    assert np.array_equal(predict(back, probe), predict(m, probe))
    with pytest.raises(ValueError, match="version"):
        model_from_dict(model_to_dict(m) | {"version": 99})
    with pytest.raises(ValueError):
        model_from_dict({"format": "other"})


def test_vote_tie_goes_to_smaller_label():
    x = np.array([[0.0], [1.0]])
    m = train(x, [5, 2], ForestConfig(n_trees=2, bootstrap=False, max_depth=0))
    # each root leaf holds one of each class
    assert predict(m, x).tolist() == [2, 2]


def test_errors():
    x = np.zeros((4, 2))
    with pytest.raises(ValueError, match="labels"):
        train(x, [0, 1, 0], ForestConfig(n_trees=1))
    with pytest.raises(ValueError, match="empty"):
        train(np.zeros((0, 2)), [], ForestConfig(n_trees=1))
    with pytest.raises(ValueError, match="max_features"):
        train(x, [0, 1, 0, 1], ForestConfig(n_trees=1, max_features=3))
    m = train(x + np.arange(4)[:, None], [0, 1, 0, 1], ForestConfig(n_trees=1))
    with pytest.raises(ValueError, match="columns"):
        predict(m, np.zeros((2, 3)))
    with pytest.raises(ValueError):
        ForestConfig(max_features="log2")
    with pytest.raises(ValueError):
        ForestConfig(n_trees=0)


@settings(max_examples=25, deadline=None)
@given(st.integers(5, 40), st.integers(1, 4), st.integers(1, 4), st.integers(0, 999))
def test_importance_normalization(n, d, k, seed):
    rng = np.random.default_rng(seed)
    m = train(rng.normal(size=(n, d)), rng.integers(0, k, n), ForestConfig(n_trees=3, seed=seed))
    s = m.importances.sum()
    assert s == 0 or abs(s - 1) < 1e-9
    assert np.all(m.importances >= 0)
