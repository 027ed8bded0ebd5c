from fractions import Fraction

import numpy as np
import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_dataset
from rfsisso.data import (
    Dataset,
    UnitVector,
    generate_synthetic,
    load_dataset,
    split_subsets,
    write_dataset,
)
from rfsisso.errors import ParseError, SchemaError, SpecError, StratificationError, ValidationError


def _write(tmp_path, text, schema):
    (tmp_path / "d.csv").write_text(text, encoding="utf-8")
    (tmp_path / "s.yaml").write_text(yaml.safe_dump(schema), encoding="utf-8")
    return tmp_path / "d.csv", tmp_path / "s.yaml"


class TestUnitVector:
    def test_lowest_terms_and_equality(self):
        a = UnitVector((Fraction(2, 4), 1))
        assert a.exponents == (Fraction(1, 2), Fraction(1))
        assert a == UnitVector((Fraction(1, 2), Fraction(1)))

    def test_arithmetic(self):
        ev = UnitVector((1, 0))
        ang = UnitVector((0, 1))
        assert (ev * ang).exponents == (1, 1)
        assert (ev / ev).is_dimensionless
        assert (ang**2).exponents == (0, 2)
        assert (ang ** Fraction(1, 2)).exponents == (0, Fraction(1, 2))

    def test_empty_means_disabled(self):
        assert UnitVector().is_dimensionless


class TestLoad:
    def test_minimal(self, tmp_path):
        d, s = _write(tmp_path, "x,y\n1,2\n3,4\n", {"target": "y"})
        ds = load_dataset(d, s)
        assert (ds.n_samples, ds.n_features) == (2, 1)
        assert ds.task == "regression"
        assert ds.units[0].is_dimensionless

    def test_classification_labels_first_appearance(self, tmp_path):
        d, s = _write(tmp_path, "a,b,cls\n1,2,metal\n3,4,insulator\n5,6,metal\n", {"target": "cls", "task": "classification"})
        ds = load_dataset(d, s)
        assert ds.target.classes == ("metal", "insulator")
        assert ds.y.tolist() == [0, 1, 0]

    def test_parse_error_names_row_and_column(self, tmp_path):
        d, s = _write(tmp_path, "a,b,y\n1,2,3\n4,abc,5\n", {"target": "y"})
        with pytest.raises(ParseError) as ei:
            load_dataset(d, s)
        assert ei.value.row == 2 and ei.value.column == "b"

    def test_missing_target(self, tmp_path):
        d, s = _write(tmp_path, "a,b\n1,2\n3,4\n", {"target": "y"})
        with pytest.raises(SchemaError):
            load_dataset(d, s)

    def test_duplicate_column(self, tmp_path):
        d, s = _write(tmp_path, "a,a,y\n1,2,3\n4,5,6\n", {"target": "y"})
        with pytest.raises(SchemaError):
            load_dataset(d, s)

    def test_nan_rejected(self, tmp_path):
        d, s = _write(tmp_path, "a,y\n1,2\nnan,3\n", {"target": "y"})
        with pytest.raises(ValidationError):
            load_dataset(d, s)

    def test_units_sidecar(self, tmp_path):
        schema = {
            "target": "y",
            "dimensions": ["energy", "length"],
            "units": {"IE": [1, 0], "r": ["0", "1"]},
        }
        d, s = _write(tmp_path, "IE,r,y\n1,2,3\n4,5,6\n", schema)
        ds = load_dataset(d, s)
        assert ds.units == [UnitVector((1, 0)), UnitVector((0, 1))]

    def test_partial_units_fall_back_to_dimensionless(self, tmp_path):
        schema = {"target": "y", "dimensions": ["energy"], "units": {"IE": [1]}}
        d, s = _write(tmp_path, "IE,r,y\n1,2,3\n4,5,6\n", schema)
        with pytest.warns(UserWarning):
            ds = load_dataset(d, s)
        assert all(u.is_dimensionless for u in ds.units)

    def test_roundtrip_full_precision(self, tmp_path):
        ds = generate_synthetic("y = f1/f2 + 0.1", n=25, seed=3, n_features=3)
        write_dataset(ds, tmp_path / "o.csv", tmp_path / "o.yaml")
        back = load_dataset(tmp_path / "o.csv", tmp_path / "o.yaml")
        assert np.array_equal(back.X, ds.X)
        assert np.array_equal(back.y, ds.y)
        assert back.names == ds.names


class TestSplits:
    def test_sizes(self):
        ds = generate_synthetic("y = f1", n=299, seed=0)
        pairs = split_subsets(ds, 45, 5, seed=7)
        assert len(pairs) == 5
        assert all(tr.n_samples == 45 and te.n_samples == 254 for tr, te in pairs)

    def test_determinism(self):
        ds = generate_synthetic("y = f1", n=3, seed=0)
        a = split_subsets(ds, 2, 1, 0)[0]
        b = split_subsets(ds, 2, 1, 0)[0]
        assert np.array_equal(a[0].X, b[0].X) and np.array_equal(a[1].X, b[1].X)

    def test_size_error(self):
        ds = generate_synthetic("y = f1", n=10, seed=0)
        with pytest.raises(ValueError):
            split_subsets(ds, 10, 1, 0)

    def test_stratified_contains_both_classes(self):
        ds = generate_synthetic("y = f1 > 4.6", n=100, seed=2, task="classification")
        for tr, _ in split_subsets(ds, 5, 20, seed=1):
            assert set(tr.y.tolist()) == {0, 1}

    def test_stratification_failure(self):
        # a size-1 subset can never hold both classes
        ds = make_dataset(np.arange(10.0)[:, None], [0] * 5 + [1] * 5, task="classification", classes=("a", "b"))
        with pytest.raises(StratificationError):
            split_subsets(ds, 1, 1, seed=0, max_retries=5)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(3, 40), data=st.data())
    def test_partition_property(self, n, data):
        size = data.draw(st.integers(1, n - 1))
        seed = data.draw(st.integers(0, 2**31))
        ds = generate_synthetic("y = f1", n=n, seed=1, n_features=1)
        ds = Dataset(ds.features, ds.target, tuple(str(i) for i in range(n)))
        for tr, te in split_subsets(ds, size, 2, seed):
            ids = list(tr.row_ids) + list(te.row_ids)
            assert sorted(ids, key=int) == [str(i) for i in range(n)]
            assert len(set(ids)) == n


class TestSynthetic:
    def test_zero_noise_identity(self):
        ds = generate_synthetic("y = (f1/f2)^2", n=50, seed=4)
        assert np.array_equal(ds.y, (ds.X[:, 0] / ds.X[:, 1]) ** 2)

    def test_determinism(self):
        a = generate_synthetic("y = f1*f2", n=20, seed=9, noise=0.1)
        b = generate_synthetic("y = f1*f2", n=20, seed=9, noise=0.1)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_unknown_feature(self):
        with pytest.raises(SpecError):
            generate_synthetic("y = 3·f1 + f9", n=10, n_features=5)
        with pytest.raises(SpecError):
            generate_synthetic("y = g1", n=10)

    def test_ranges_respected(self):
        ds = generate_synthetic("y = f1", n=200, seed=1, n_features=2, ranges={"f2": (10.0, 11.0)})
        assert ds.X[:, 1].min() >= 10 and ds.X[:, 1].max() < 11
        assert ds.X[:, 0].min() >= 1 and ds.X[:, 0].max() < 5

    def test_classification_formula(self):
        ds = generate_synthetic("y = (f1 > 3) & (f2 < 2)", n=300, seed=0, task="classification")
        assert ds.target.is_classification
        assert np.array_equal(ds.y, ((ds.X[:, 0] > 3) & (ds.X[:, 1] < 2)).astype(int))
