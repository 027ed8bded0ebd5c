"""Datasets: unit-annotated feature columns, CSV/YAML ingestion, subset sampling
and planted-formula synthetic data.

A dataset is a list of named real-valued feature columns plus one target. The
target is either real (regression) or a label vector (classification). Class
labels are arbitrary strings mapped to dense integer codes in order of first
appearance.

Unit metadata never lives in the CSV itself; it is declared in a schema file::

    target: label
    task: classification
    id_column: material          # optional
    dimensions: [energy, length] # optional
    units:
      IE_A: [1, 0]
      rcov_A: [0, 1]
      V: [0, 0]

If ``units`` does not cover every feature column, every column is treated as
dimensionless.
"""

from __future__ import annotations

import ast
import csv
import operator
import re
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import ParseError, SchemaError, SpecError, StratificationError, ValidationError

__all__ = [
    "UnitVector",
    "FeatureColumn",
    "Target",
    "Dataset",
    "Schema",
    "load_schema",
    "load_dataset",
    "write_dataset",
    "split_subsets",
    "generate_synthetic",
]


@dataclass(frozen=True)
class UnitVector:
    """Rational exponents over the declared base dimensions.

    An empty vector means unit tracking is disabled; it compares equal only to
    another empty vector and counts as dimensionless.
    """

    exponents: tuple[Fraction, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "exponents", tuple(Fraction(e) for e in self.exponents))

    @classmethod
    def dimensionless(cls, n_dims: int = 0) -> "UnitVector":
        return cls((Fraction(0),) * n_dims)

    @property
    def is_dimensionless(self) -> bool:
        return all(e == 0 for e in self.exponents)

    def __mul__(self, other: "UnitVector") -> "UnitVector":
        return UnitVector(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __truediv__(self, other: "UnitVector") -> "UnitVector":
        return UnitVector(tuple(a - b for a, b in zip(self.exponents, other.exponents)))

    def __pow__(self, k) -> "UnitVector":
        k = Fraction(k)
        return UnitVector(tuple(e * k for e in self.exponents))

    def __str__(self):
        return "[" + ", ".join(str(e) for e in self.exponents) + "]"


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    values: np.ndarray
    unit: UnitVector = field(default_factory=UnitVector)

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(np.asarray(self.values, dtype=float)))
        if not np.all(np.isfinite(self.values)):
            raise ValidationError(f"column {self.name!r} contains NaN or Inf")


@dataclass(frozen=True)
class Target:
    """Regression target (float values) or classification labels.

    For classification ``values`` holds integer codes into ``classes``.
    """

    kind: str
    values: np.ndarray
    classes: tuple[str, ...] = ()
    name: str = "target"

    def __post_init__(self):
        if self.kind not in ("regression", "classification"):
            raise ValueError(f"unknown target kind {self.kind!r}")
        if self.kind == "regression":
            vals = np.asarray(self.values, dtype=float)
            if not np.all(np.isfinite(vals)):
                raise ValidationError("target contains NaN or Inf")
        else:
            vals = np.asarray(self.values, dtype=np.int64)
            if not self.classes:
                object.__setattr__(self, "classes", tuple(str(c) for c in range(vals.max() + 1)))
            if len(np.unique(vals)) < 2:
                raise ValidationError("classification target needs at least two distinct labels")
        object.__setattr__(self, "values", _readonly(vals))

    @property
    def is_classification(self) -> bool:
        return self.kind == "classification"

    def take(self, idx) -> "Target":
        vals = self.values[idx]
        if self.is_classification and len(np.unique(vals)) < 2:
            # subsets may legitimately be single-class (e.g. a test split)
            t = object.__new__(Target)
            object.__setattr__(t, "kind", self.kind)
            object.__setattr__(t, "values", _readonly(vals))
            object.__setattr__(t, "classes", self.classes)
            object.__setattr__(t, "name", self.name)
            return t
        return Target(self.kind, vals, self.classes, self.name)


@dataclass(frozen=True)
class Dataset:
    features: tuple[FeatureColumn, ...]
    target: Target
    row_ids: tuple[str, ...] | None = None

    def __post_init__(self):
        feats = tuple(self.features)
        object.__setattr__(self, "features", feats)
        if len(feats) < 1:
            raise ValidationError("a dataset needs at least one feature column")
        n = len(self.target.values)
        names = [f.name for f in feats]
        if len(set(names)) != len(names):
            raise ValidationError("feature names must be unique")
        for f in feats:
            if len(f.values) != n:
                raise ValidationError(f"column {f.name!r} has {len(f.values)} rows, target has {n}")
        if self.row_ids is not None:
            object.__setattr__(self, "row_ids", tuple(str(r) for r in self.row_ids))
            if len(self.row_ids) != n:
                raise ValidationError("row_ids length does not match the target")

    @property
    def n_samples(self) -> int:
        return len(self.target.values)

    @property
    def n_features(self) -> int:
        return len(self.features)

    @property
    def names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def task(self) -> str:
        return self.target.kind

    @property
    def y(self) -> np.ndarray:
        return self.target.values

    @cached_property
    def X(self) -> np.ndarray:
        """(n_samples, n_features) matrix of the feature values."""
        return _readonly(np.column_stack([f.values for f in self.features]))

    @property
    def units(self) -> list[UnitVector]:
        return [f.unit for f in self.features]

    def subset(self, rows) -> "Dataset":
        rows = np.asarray(rows, dtype=np.int64)
        feats = tuple(FeatureColumn(f.name, f.values[rows], f.unit) for f in self.features)
        ids = None if self.row_ids is None else tuple(self.row_ids[i] for i in rows)
        return _unchecked_dataset(feats, self.target.take(rows), ids)

    def select(self, columns: Sequence[int | str]) -> "Dataset":
        """Keep only the given feature columns, in the given order."""
        idx = [self.names.index(c) if isinstance(c, str) else int(c) for c in columns]
        return Dataset(tuple(self.features[i] for i in idx), self.target, self.row_ids)


def _unchecked_dataset(features, target, row_ids):
    # Subsets of a valid dataset only need the size checks, not the class-count check.
    ds = object.__new__(Dataset)
    object.__setattr__(ds, "features", tuple(features))
    object.__setattr__(ds, "target", target)
    object.__setattr__(ds, "row_ids", row_ids)
    return ds


# ---------------------------------------------------------------------------
# Schema and CSV
# ---------------------------------------------------------------------------


@dataclass
class Schema:
    target: str
    task: str = "regression"
    features: list[str] | None = None
    id_column: str | None = None
    dimensions: list[str] = field(default_factory=list)
    units: dict[str, list] = field(default_factory=dict)

    @classmethod
    def from_mapping(cls, m: Mapping) -> "Schema":
        if not isinstance(m, Mapping):
            raise SchemaError("schema must be a mapping")
        target = m.get("target")
        if isinstance(target, (list, tuple)):
            raise SchemaError("schema must name exactly one target column")
        if not target:
            raise SchemaError("schema does not name a target column")
        known = {"target", "task", "features", "id_column", "dimensions", "units"}
        extra = set(m) - known
        if extra:
            raise SchemaError(f"unknown schema keys: {sorted(extra)}")
        task = m.get("task", "regression")
        if task not in ("regression", "classification"):
            raise SchemaError(f"task must be regression or classification, got {task!r}")
        return cls(
            target=str(target),
            task=task,
            features=list(m["features"]) if m.get("features") else None,
            id_column=m.get("id_column"),
            dimensions=list(m.get("dimensions") or []),
            units=dict(m.get("units") or {}),
        )


def load_schema(schema) -> Schema:
    if isinstance(schema, Schema):
        return schema
    if isinstance(schema, Mapping):
        return Schema.from_mapping(schema)
    path = Path(schema)
    try:
        with open(path, encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        raise SchemaError(f"cannot parse schema {path}: {exc}") from exc
    return Schema.from_mapping(data or {})


def _parse_unit(col: str, raw, n_dims: int) -> UnitVector:
    if isinstance(raw, str):
        raw = raw.replace(",", " ").split()
    try:
        exps = tuple(Fraction(str(e)) for e in raw)
    except (ValueError, ZeroDivisionError, TypeError) as exc:
        raise SchemaError(f"unit of {col!r} is not a list of rationals: {raw!r}") from exc
    if len(exps) != n_dims:
        raise SchemaError(f"unit of {col!r} has {len(exps)} exponents, expected {n_dims}")
    return UnitVector(exps)


def load_dataset(path, schema) -> Dataset:
    """Read a CSV file into a :class:`Dataset` according to ``schema``."""
    schema = load_schema(schema)
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise SchemaError(f"{path} is empty; a header row is mandatory") from None
        rows = [r for r in reader if r]

    header = [h.strip() for h in header]
    dup = {h for h in header if header.count(h) > 1}
    if dup:
        raise SchemaError(f"duplicate column(s) {sorted(dup)}")
    if schema.target not in header:
        raise SchemaError(f"target column {schema.target!r} missing")
    if schema.id_column is not None and schema.id_column not in header:
        raise SchemaError(f"id column {schema.id_column!r} missing")
    if schema.features is not None:
        missing = [c for c in schema.features if c not in header]
        if missing:
            raise SchemaError(f"feature column(s) {missing} missing")
        feature_names = list(schema.features)
    else:
        feature_names = [h for h in header if h not in (schema.target, schema.id_column)]
    if not feature_names:
        raise SchemaError("no feature columns")
    pos = {h: i for i, h in enumerate(header)}

    for lineno, r in enumerate(rows, start=2):
        if len(r) != len(header):
            raise ParseError(f"line {lineno}: expected {len(header)} fields, got {len(r)}", row=lineno - 1)

    n_dims = len(schema.dimensions)
    covered = all(c in schema.units for c in feature_names)
    if schema.units and not covered:
        warnings.warn("unit annotations incomplete; treating every column as dimensionless")
    if schema.units and n_dims == 0:
        raise SchemaError("units given but no base dimensions declared")

    columns = []
    for name in feature_names:
        j = pos[name]
        vals = np.empty(len(rows))
        for i, r in enumerate(rows):
            cell = r[j].strip()
            try:
                vals[i] = float(cell)
            except ValueError:
                raise ParseError(
                    f"non-numeric value {cell!r} at row {i + 1}, column {name!r}", row=i + 1, column=name
                ) from None
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.argmax(bad))
            raise ValidationError(f"NaN/Inf at row {i + 1}, column {name!r}")
        if covered and schema.units:
            unit = _parse_unit(name, schema.units[name], n_dims)
        else:
            unit = UnitVector.dimensionless(n_dims)
        columns.append(FeatureColumn(name, vals, unit))

    jt = pos[schema.target]
    raw_target = [r[jt].strip() for r in rows]
    if schema.task == "classification":
        classes: dict[str, int] = {}
        codes = [classes.setdefault(v, len(classes)) for v in raw_target]
        if len(classes) < 2:
            raise ValidationError("classification target has fewer than two labels")
        target = Target("classification", np.array(codes), tuple(classes), schema.target)
    else:
        tv = np.empty(len(rows))
        for i, cell in enumerate(raw_target):
            try:
                tv[i] = float(cell)
            except ValueError:
                raise ParseError(
                    f"non-numeric target {cell!r} at row {i + 1}", row=i + 1, column=schema.target
                ) from None
        if not np.all(np.isfinite(tv)):
            raise ValidationError("target contains NaN or Inf")
        target = Target("regression", tv, (), schema.target)

    ids = None
    if schema.id_column is not None:
        ids = tuple(r[pos[schema.id_column]] for r in rows)
    if len(rows) < 2:
        raise ValidationError("a dataset needs at least two rows")
    return Dataset(tuple(columns), target, ids)


def write_dataset(ds: Dataset, path, schema_path=None, id_column: str = "id") -> None:
    """Write ``ds`` as CSV (and optionally its schema as YAML).

    Floats are written with ``repr`` so a reload reproduces them exactly.
    """
    tname = ds.target.name
    header = ([id_column] if ds.row_ids is not None else []) + ds.names + [tname]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(ds.n_samples):
            row = [ds.row_ids[i]] if ds.row_ids is not None else []
            row += [repr(float(f.values[i])) for f in ds.features]
            if ds.target.is_classification:
                row.append(ds.target.classes[ds.target.values[i]])
            else:
                row.append(repr(float(ds.target.values[i])))
            w.writerow(row)
    if schema_path is not None:
        m = {"target": tname, "task": ds.task}
        if ds.row_ids is not None:
            m["id_column"] = id_column
        n_dims = len(ds.features[0].unit.exponents)
        if n_dims:
            m["dimensions"] = [f"d{k}" for k in range(n_dims)]
            m["units"] = {f.name: [str(e) for e in f.unit.exponents] for f in ds.features}
        with open(schema_path, "w", encoding="utf-8") as fh:
            yaml.safe_dump(m, fh, sort_keys=False)


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def split_subsets(
    ds: Dataset,
    size: int,
    repeats: int,
    seed: int,
    stratify: bool = True,
    max_retries: int = 1000,
) -> list[tuple[Dataset, Dataset]]:
    """Draw ``repeats`` random train/test partitions with ``size`` training rows.

    Repeat ``r`` uses its own generator seeded by ``(seed, r)``. For
    classification with ``stratify`` on, a draw is rejected until the training
    part contains every class.
    """
    n = ds.n_samples
    if not 1 <= size < n:
        raise ValueError(f"size must satisfy 1 <= size < N={n}, got {size}")
    if repeats < 1:
        raise ValueError("repeats must be >= 1")
    need_all = stratify and ds.target.is_classification
    n_classes = len(np.unique(ds.y)) if need_all else 0
    out = []
    for r in range(repeats):
        rng = np.random.default_rng([seed, r])
        for _ in range(max_retries):
            perm = rng.permutation(n)
            train = np.sort(perm[:size])
            if not need_all or len(np.unique(ds.y[train])) == n_classes:
                break
        else:
            raise StratificationError(
                f"could not draw a {size}-row training set containing every class in {max_retries} tries"
            )
        test = np.sort(perm[size:])
        out.append((ds.subset(train), ds.subset(test)))
    return out


# ---------------------------------------------------------------------------
# Synthetic data
# ---------------------------------------------------------------------------

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
    ast.BitAnd: np.logical_and,
    ast.BitOr: np.logical_or,
}
_CMPOPS = {
    ast.Gt: operator.gt,
    ast.GtE: operator.ge,
    ast.Lt: operator.lt,
    ast.LtE: operator.le,
}
_FUNCS = {"exp": np.exp, "log": np.log, "sqrt": np.sqrt, "abs": np.abs}


def _formula_ast(formula: str) -> ast.expr:
    rhs = formula.split("=", 1)[1] if re.match(r"^\s*\w+\s*=[^=]", formula) else formula
    rhs = rhs.replace("^", "**").replace("·", "*").replace("×", "*")
    try:
        return ast.parse(rhs.strip(), mode="eval").body
    except SyntaxError as exc:
        raise SpecError(f"cannot parse formula {formula!r}: {exc.msg}") from exc


def _formula_names(node: ast.expr) -> set[str]:
    return {n.id for n in ast.walk(node) if isinstance(n, ast.Name) and n.id not in _FUNCS}


def _eval_formula(node, env):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return node.value
    if isinstance(node, ast.Name):
        try:
            return env[node.id]
        except KeyError:
            raise SpecError(f"unknown feature {node.id!r}") from None
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        return _BINOPS[type(node.op)](_eval_formula(node.left, env), _eval_formula(node.right, env))
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_formula(node.operand, env)
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.Compare) and len(node.ops) == 1 and type(node.ops[0]) in _CMPOPS:
        return _CMPOPS[type(node.ops[0])](_eval_formula(node.left, env), _eval_formula(node.comparators[0], env))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS:
        if len(node.args) != 1:
            raise SpecError(f"{node.func.id} takes one argument")
        return _FUNCS[node.func.id](_eval_formula(node.args[0], env))
    raise SpecError(f"unsupported formula element: {ast.dump(node)}")


def generate_synthetic(
    formula: str,
    n: int,
    noise: float = 0.0,
    seed: int = 0,
    n_features: int | None = None,
    low: float = 1.0,
    high: float = 5.0,
    ranges: Mapping[str, tuple[float, float]] | None = None,
    units: Mapping[str, Sequence] | None = None,
    task: str = "regression",
) -> Dataset:
    """Dataset whose target is a planted formula of features ``f1..fK``.

    Features are i.i.d. uniform on ``[low, high)`` (per-feature overrides in
    ``ranges``). For ``task="classification"`` the formula must be a boolean
    expression (comparisons, ``&``, ``|``) and becomes labels "0"/"1".

    >>> ds = generate_synthetic("y = (f1/f2)^2", n=5, seed=1)
    >>> bool(np.allclose(ds.y, (ds.X[:, 0] / ds.X[:, 1]) ** 2))
    True
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if noise < 0:
        raise ValueError("noise must be >= 0")
    tree = _formula_ast(formula)
    referenced = _formula_names(tree)
    idx = []
    for name in referenced:
        m = re.fullmatch(r"f(\d+)", name)
        if not m:
            raise SpecError(f"unknown feature {name!r}; generated features are named f1..fK")
        idx.append(int(m.group(1)))
    k = n_features if n_features is not None else max(idx, default=1)
    if k < 1:
        raise ValueError("n_features must be >= 1")
    over = [f"f{i}" for i in idx if i > k or i < 1]
    if over:
        raise SpecError(f"formula references {sorted(over)} but only f1..f{k} are generated")
    rng = np.random.default_rng(seed)
    names = [f"f{i + 1}" for i in range(k)]
    ranges = dict(ranges or {})
    X = np.empty((n, k))
    for j, name in enumerate(names):
        lo, hi = ranges.get(name, (low, high))
        X[:, j] = rng.uniform(lo, hi, size=n)
    env = {name: X[:, j] for j, name in enumerate(names)}
    with np.errstate(all="ignore"):
        y = np.broadcast_to(np.asarray(_eval_formula(tree, env), dtype=float), (n,)).copy()
    if noise > 0:
        y = y + rng.normal(0.0, noise, size=n)
    if task == "classification":
        codes = y.astype(np.int64)
        target = Target("classification", codes, ("0", "1"), "y")
    else:
        if not np.all(np.isfinite(y)):
            raise SpecError("formula produced NaN/Inf on the generated features")
        target = Target("regression", y, (), "y")
    units = units or {}
    n_dims = len(next(iter(units.values()))) if units else 0
    cols = tuple(
        FeatureColumn(
            name,
            X[:, j],
            UnitVector(tuple(units[name])) if name in units else UnitVector.dimensionless(n_dims),
        )
        for j, name in enumerate(names)
    )
    return Dataset(cols, target, None)
