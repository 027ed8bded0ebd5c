import json
import math

import numpy as np
import pytest

from conftest import make_dataset
from rfsisso.data import generate_synthetic
from rfsisso.errors import DegenerateDesignError, EmptySelectionError, UnsupportedDimensionError
from rfsisso.forest import ForestConfig
from rfsisso.sisso import (
    DescriptorModel,
    SisConfig,
    SpaceConfig,
    build_space,
    cs_validity_check,
    fit_least_squares,
    run_rf_sisso,
    run_sisso,
    sis_screen_classification,
    sis_screen_regression,
    so_search_classification,
    so_search_regression,
    standardize_columns,
)
from rfsisso.space import FeatureMatrix


def test_least_squares_matches_lstsq():
    rng = np.random.default_rng(0)
    F = rng.normal(size=(30, 2)) * [1e3, 1e-3]
    y = rng.normal(size=30)
    res = fit_least_squares(F, y)
    A = np.c_[np.ones(30), F]
    ref = np.linalg.lstsq(A, y, rcond=None)[0]
    np.testing.assert_allclose([res.intercept, *res.coefficients], ref, rtol=1e-9)
    assert abs(res.residual @ np.ones(30)) < 1e-10


def test_least_squares_degenerate():
    x = np.arange(5.0)
    with pytest.raises(DegenerateDesignError):
        fit_least_squares(np.c_[x, 2 * x], x**2)
    with pytest.raises(DegenerateDesignError):
        fit_least_squares(np.ones((5, 1)), x)
    with pytest.raises(DegenerateDesignError):
        fit_least_squares(np.ones((2, 2)), [1, 2])


def test_standardize_rejects_constant():
    fm = FeatureMatrix.from_arrays(np.c_[np.arange(4.0), [1.0, 2.0, 3.0, 5.0]], ["a", "b"])
    Z, mu, sd = standardize_columns(fm)
    np.testing.assert_allclose(Z.mean(axis=0), 0, atol=1e-12)
    with pytest.raises(ValueError):
        standardize_columns(np.c_[np.arange(4.0), np.ones(4)])


def test_screen_exclude_and_order():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(40, 6))
    y = X[:, 2] + 0.5 * X[:, 4]
    res = sis_screen_regression(y, X, 2)
    assert list(res.indices) == [2, 4]
    res = sis_screen_regression(y, X, 2, exclude=[2])
    assert res.indices[0] == 4 and 2 not in res.indices


def test_screen_classification_by_overlap():
    x_good = np.r_[np.arange(10.0), np.arange(10.0) + 20]
    x_bad = np.tile(np.arange(10.0), 2)
    labels = np.r_[np.zeros(10, int), np.ones(10, int)]
    res = sis_screen_classification(labels, np.c_[x_bad, x_good], 1)
    assert list(res.indices) == [1] and res.scores[0] == 0


def test_so_regression_finds_exact_pair():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(25, 8))
    y = 1.5 * X[:, 3] - 2.0 * X[:, 6] + 0.3
    m = so_search_regression(range(8), X, y, 2)
    assert m.indices == (3, 6)
    np.testing.assert_allclose(m.coefficients, [1.5, -2.0])
    assert m.intercept == pytest.approx(0.3) and m.score < 1e-12


def test_so_classification_prefers_separating_pair():
    rng = np.random.default_rng(3)
    a = rng.uniform(0, 1, size=(20, 2))
    b = rng.uniform(0, 1, size=(20, 2)) + [1.5, 0]
    noise = rng.normal(size=(40, 2))
    X = np.c_[noise[:, 0], np.r_[a, b], noise[:, 1]]
    labels = np.r_[np.zeros(20, int), np.ones(20, int)]
    fm = FeatureMatrix.from_arrays(X, ["n1", "x", "z", "n2"])
    m = so_search_classification(range(4), fm, labels, 2)
    assert m.score == 0 and 1 in m.indices
    assert m.train_accuracy == 1.0


def test_classification_dimension_limit():
    with pytest.raises(UnsupportedDimensionError):
        SisConfig(task="classification", max_dim=3)


def test_cs_check():
    d = cs_validity_check(10, 2, 10**6)
    assert d.warn and d.required_N == pytest.approx(2 * math.log(10**6))
    assert d.max_M == pytest.approx(math.exp(5))
    assert not cs_validity_check(100, 1, 1000).warn


def test_run_sisso_recovers_simple_law_and_roundtrips():
    ds = generate_synthetic("y = 2*f1/f2 + 1", n=30, seed=5, n_features=4)
    res = run_sisso(ds, SpaceConfig(rung=1), SisConfig(subspace_size=5, max_dim=2))
    m1 = res.model(1)
    assert m1.labels == ["(f1/f2)"] and m1.score < 1e-10
    assert set(res.timings) >= {"space", "sis", "so", "regression", "total"}
    assert all(v >= 0 for v in res.timings.values())
    back = DescriptorModel.from_dict(json.loads(m1.to_json()))
    np.testing.assert_allclose(back.predict(ds), m1.predict(ds))
    assert m1.evaluate(ds)["rmse"] < 1e-10
    assert res.subspaces[0] and len(res.subspaces) == 2
    assert not set(res.subspaces[0]) & set(res.subspaces[1])


def test_run_sisso_task_mismatch():
    ds = generate_synthetic("y = f1", n=20, seed=0)
    with pytest.raises(ValueError):
        run_sisso(ds, SpaceConfig(rung=1), SisConfig(task="classification"))


def test_rf_sisso_selection_and_errors():
    ds = generate_synthetic("y = f1*f2", n=40, seed=1, n_features=6)
    res = run_rf_sisso(
        ds, ForestConfig(n_trees=20), "topk:3", SpaceConfig(rung=1), SisConfig(subspace_size=5, max_dim=1), R=3
    )
    assert len(res.selected) == 3
    assert res.sisso.n_primaries == 3
    assert res.timings["rf"] > 0
    assert set(res.models[0].feature_names) == set(res.selected_names)
    with pytest.raises(EmptySelectionError):
        run_rf_sisso(ds, ForestConfig(n_trees=5), "threshold:101", SpaceConfig(rung=1), R=2)


def test_classification_run_end_to_end():
    ds = generate_synthetic("y = f1/f2 > 1.2", n=60, seed=4, n_features=4, task="classification")
    res = run_sisso(ds, SpaceConfig(rung=1), SisConfig(task="classification", subspace_size=10, max_dim=2))
    assert res.best.dim == 2
    assert res.best.evaluate(ds)["accuracy"] >= 0.95
    w, b = res.best.classifier.boundary()
    assert len(res.best.coefficients) == 2
