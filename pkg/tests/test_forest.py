import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from rfsisso.forest import (
    ForestConfig,
    ImportanceReport,
    Leaf,
    Split,
    best_split,
    fit_forest,
    fit_predict_forest,
    gini_impurity,
    grow_tree,
    mdi_importance,
    parse_selection,
    repeated_importance,
    select_features,
)


def test_gini_values():
    assert gini_impurity([0, 0, 1, 1]) == pytest.approx(0.5)
    assert gini_impurity([1, 1, 1]) == 0.0
    assert gini_impurity(["a", "b", "c"]) == pytest.approx(2 / 3)


def test_best_split_examples():
    assert best_split([1, 2, 3, 4], [0, 0, 1, 1]) == (2.5, 0.0)
    assert best_split([3, 3, 3], [0, 1, 0]) is None
    t, imp = best_split([1, 2, 3, 4], [0, 1, 0, 1])
    assert imp == pytest.approx(best_split([1, 2, 3, 4], [0, 1, 0, 1], [1.5, 2.5, 3.5])[1])


@settings(max_examples=150, deadline=None)
@given(
    vals=st.lists(st.integers(0, 6), min_size=2, max_size=25),
    data=st.data(),
)
def test_sweep_equals_brute_force(vals, data):
    labels = data.draw(st.lists(st.integers(0, 2), min_size=len(vals), max_size=len(vals)))
    x = np.array(vals, dtype=float)
    u = np.unique(x)
    got = best_split(x, labels)
    ref = best_split(x, labels, (u[1:] + u[:-1]) / 2) if len(u) > 1 else None
    if ref is None:
        assert got is None
    else:
        assert got[0] == pytest.approx(ref[0]) and got[1] == pytest.approx(ref[1], abs=1e-12)


def _cls_data(n=120, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(0, 1, size=(n, 5))
    y = ((X[:, 0] > 0.5) ^ (X[:, 1] > 0.7)).astype(int)
    return make_dataset(X, y, task="classification", classes=("n", "p"))


def test_unbounded_tree_fits_training_data():
    ds = _cls_data()
    cfg = ForestConfig(n_trees=1, bootstrap=False, features_per_split=5)
    tree = grow_tree(ds, cfg, 0)
    assert np.array_equal(tree.predict(ds.X), ds.y)
    assert isinstance(tree.root, Split)


def test_depth_zero_is_a_leaf():
    tree = grow_tree(_cls_data(), ForestConfig(n_trees=1, max_depth=0), 0)
    assert isinstance(tree.root, Leaf)


def test_forest_learns_and_importance_is_sane():
    ds = _cls_data(300)
    train, test = ds.subset(np.arange(200)), ds.subset(np.arange(200, 300))
    _, tr, te = fit_predict_forest(train, test, ForestConfig(n_trees=50), seed=1)
    assert tr > 0.95 and te > 0.85
    imp = mdi_importance(fit_forest(train, ForestConfig(n_trees=50), seed=1))
    assert imp.sum() == pytest.approx(1.0)
    assert set(np.argsort(imp)[-2:]) == {0, 1}


def test_regression_forest():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, size=(200, 4))
    y = 3 * X[:, 2] + 0.05 * rng.normal(size=200)
    ds = make_dataset(X, y)
    _, _, r2 = fit_predict_forest(ds.subset(np.arange(150)), ds.subset(np.arange(150, 200)), ForestConfig(n_trees=40))
    assert r2 > 0.8
    rep = repeated_importance(ds, R=3, config=ForestConfig(n_trees=20))
    assert rep.ranking()[0] == 2


def test_constant_features_get_fallback_weight():
    X = np.ones((10, 3))
    X[:, 1] = np.arange(10)
    ds = make_dataset(X, np.zeros(10) + 2.0)
    imp = mdi_importance(fit_forest(ds, ForestConfig(n_trees=3)), ds)
    np.testing.assert_allclose(imp, [0, 1, 0])


def test_repeated_importance_properties():
    ds = _cls_data(100)
    cfg = ForestConfig(n_trees=15)
    a = repeated_importance(ds, R=4, config=cfg, seed=3, workers=1)
    b = repeated_importance(ds, R=4, config=cfg, seed=3, workers=3)
    assert np.array_equal(a.scores, b.scores)
    assert a.to_csv() == b.to_csv()
    assert a.scores.sum() == pytest.approx(100.0)
    assert np.all(a.scores >= 0)
    assert a.accuracies.shape == (4,)
    c = repeated_importance(ds, R=4, config=cfg, seed=4)
    assert not np.array_equal(a.scores, c.scores)


def test_mtry_validation():
    assert ForestConfig().mtry(16) == 4
    assert ForestConfig().mtry(3) == 1
    with pytest.raises(ValueError):
        ForestConfig(features_per_split=9).mtry(4)
    with pytest.raises(ValueError):
        ForestConfig(holdout=1.0)


def _report(scores):
    return ImportanceReport([f"f{i}" for i in range(len(scores))], np.asarray(scores, float), 1, np.ones(1))


def test_selection_rules():
    rep = _report([10, 40, 5, 40, 5])
    assert rep.ranking() == [1, 3, 0, 2, 4]
    assert select_features(rep, "topk:2") == [1, 3]
    assert select_features(rep, "threshold:5") == [1, 3, 0, 2, 4]
    assert select_features(rep, threshold=10.0) == [1, 3, 0]
    assert select_features(rep, threshold=50.0) == []
    with pytest.raises(ValueError):
        select_features(rep, top_k=6)
    with pytest.raises(ValueError):
        parse_selection("best:3")
    assert parse_selection("top_k:8") == ("topk", 8)


def test_report_serialisation():
    import json

    rep = _report([60, 40])
    rows = rep.to_csv().splitlines()
    assert rows[0] == "feature,score,rank" and rows[1].startswith("f0,60")
    assert json.loads(rep.to_json())["features"][0]["feature"] == "f0"
