"""Sure independence screening (SIS) and the sparsifying operator (SO).

The engine works on a :class:`~rfsisso.space.FeatureMatrix`:

1. SIS ranks every candidate column against the target (dimension 1) or the
   current residual (dimension > 1) and keeps the best ``subspace_size``.
2. SO searches every ``d``-subset of the union of the subspaces screened so
   far and keeps the best one: lowest least-squares RMSE for regression,
   lowest class-domain overlap for classification.

Every search is exhaustive and ties are broken on sorted column indices, so the
winner does not depend on how the enumeration is split across threads.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .data import Dataset
from .errors import DegenerateDesignError, EmptySelectionError, NoModelError, UnsupportedDimensionError
from .expressions import Expr, evaluate, format_expr, parse_expr
from .forest import ForestConfig, ImportanceReport, repeated_importance, select_features
from .hull import interval_margin, pair_overlaps, separation_margin
from .metrics import LinearClassifier, accuracy, pearson_r, rmse, train_linear_svc
from .space import (
    DEFAULT_DEDUP_TOL,
    DEFAULT_MAX_BYTES,
    DEFAULT_MAX_COLUMNS,
    FeatureMatrix,
    OperatorSet,
    expand_space,
)

log = logging.getLogger(__name__)

__all__ = [
    "SpaceConfig",
    "SisConfig",
    "ScreenResult",
    "LstsqResult",
    "DescriptorModel",
    "SissoResult",
    "RFSissoResult",
    "CSDiagnostic",
    "standardize_columns",
    "sis_screen_regression",
    "sis_screen_classification",
    "fit_least_squares",
    "so_search_regression",
    "so_search_classification",
    "build_space",
    "run_sisso",
    "run_rf_sisso",
    "cs_validity_check",
]

RANK_TOL = 1e-10


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SpaceConfig:
    rung: int = 2
    ops: OperatorSet = field(default_factory=OperatorSet.full)
    units: bool = True
    dedup_tol: float = DEFAULT_DEDUP_TOL
    max_columns: int = DEFAULT_MAX_COLUMNS
    max_bytes: int = DEFAULT_MAX_BYTES

    def __post_init__(self):
        if self.rung < 0:
            raise ValueError("rung must be >= 0")
        if not isinstance(self.ops, OperatorSet):
            object.__setattr__(self, "ops", OperatorSet.from_names(self.ops))


@dataclass(frozen=True)
class SisConfig:
    """Screening and search settings.

    ``subspace_size`` columns are added to the search space per dimension;
    descriptors are built for dimensions ``1..max_dim``.
    """

    subspace_size: int = 30
    max_dim: int = 2
    task: str = "regression"
    standardize: bool = True
    workers: int | None = None
    svc_C: float = 1.0

    def __post_init__(self):
        if self.subspace_size < 1:
            raise ValueError("subspace_size must be >= 1")
        if self.max_dim < 1:
            raise ValueError("max_dim must be >= 1")
        if self.task not in ("regression", "classification"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.task == "classification" and self.max_dim > 2:
            raise UnsupportedDimensionError("classification descriptors are limited to 2 dimensions")


# ---------------------------------------------------------------------------
# column access helpers


def _colmajor(fm) -> np.ndarray:
    """``(n_columns, n_samples)`` view of a FeatureMatrix or sample-major array."""
    if isinstance(fm, FeatureMatrix):
        return fm.data
    a = np.asarray(fm, dtype=float)
    if a.ndim != 2:
        raise ValueError("expected a 2-D (n_samples, n_columns) array")
    return a.T


def _moments(fm, data):
    if isinstance(fm, FeatureMatrix):
        return fm.means, fm.stds
    return data.mean(axis=1), data.std(axis=1)


def _chunks(n_cols: int, n_samples: int, budget: int = 4_000_000):
    step = max(1, budget // max(1, n_samples))
    for s in range(0, n_cols, step):
        yield s, min(n_cols, s + step)


def _n_workers(workers) -> int:
    if workers is None:
        return min(8, os.cpu_count() or 1)
    return max(1, int(workers))


def _labels_of(fm, idx) -> list[str]:
    if isinstance(fm, FeatureMatrix):
        return [fm.label(int(i)) for i in idx]
    return [f"c{int(i)}" for i in idx]


def _exprs_of(fm, idx) -> tuple[Expr, ...]:
    if isinstance(fm, FeatureMatrix):
        return tuple(fm.exprs[int(i)] for i in idx)
    return ()


def _feature_names(fm) -> list[str]:
    return list(fm.names) if isinstance(fm, FeatureMatrix) else []


# ---------------------------------------------------------------------------
# standardisation and screening


def standardize_columns(fm):
    """Z-score every column (population std).

    Returns ``(Z, means, stds)`` with ``Z`` shaped ``(n_samples, n_columns)``.
    Raises ValueError on a constant column, which the space builder is
    supposed to have removed already.
    """
    data = _colmajor(fm)
    means, stds = _moments(fm, data)
    if np.any(stds == 0):
        bad = int(np.flatnonzero(stds == 0)[0])
        raise ValueError(f"internal invariant violated: column {bad} is constant")
    return ((data - means[:, None]) / stds[:, None]).T, means, stds


@dataclass(frozen=True)
class ScreenResult:
    """Indices of the screened columns with their scores, best first."""

    indices: np.ndarray
    scores: np.ndarray

    def __len__(self):
        return len(self.indices)


def _top(scores: np.ndarray, k: int, descending: bool) -> ScreenResult:
    key = -scores if descending else scores
    finite = np.isfinite(key)
    cand = np.flatnonzero(finite)
    if k > len(cand):
        k = len(cand)
    if k < len(cand):
        part = cand[np.argpartition(key[cand], k - 1)[:k]]
        cut = key[part].max()
        # everything strictly better than the cut, plus cut-ties by lowest index
        better = cand[key[cand] < cut]
        ties = cand[key[cand] == cut]
        chosen = np.concatenate([better, ties[: k - len(better)]])
    else:
        chosen = cand
    order = np.lexsort((chosen, key[chosen]))
    idx = chosen[order]
    return ScreenResult(idx.astype(np.int64), scores[idx])


def _check_k(k, n_cols):
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n_cols:
        raise ValueError(f"k={k} exceeds the {n_cols} available columns")


def sis_screen_regression(target, fm, k: int, exclude: Sequence[int] = (), standardize: bool = True) -> ScreenResult:
    """Rank columns by ``|<P, F_i>|`` with ``F_i`` standardised.

    With standardisation this is the ranking by absolute Pearson correlation.
    Ties go to the lower column index; columns in ``exclude`` are skipped.
    """
    data = _colmajor(fm)
    P = np.asarray(target, dtype=float).ravel()
    if len(P) != data.shape[1]:
        raise ValueError(f"target has {len(P)} values, columns have {data.shape[1]}")
    _check_k(k, data.shape[0] - len(set(int(i) for i in exclude)))
    means, stds = _moments(fm, data)
    Pc = P - P.mean()
    scores = np.empty(data.shape[0])
    for s, e in _chunks(data.shape[0], data.shape[1]):
        block = data[s:e]
        if standardize:
            scores[s:e] = np.abs((block - means[s:e, None]) @ Pc) / stds[s:e]
        else:
            scores[s:e] = np.abs(block @ P)
    if len(exclude):
        scores[np.asarray(exclude, dtype=np.int64)] = -np.inf
    return _top(scores, k, descending=True)


def _two_classes(labels):
    lab = np.asarray(labels).ravel()
    classes = np.unique(lab)
    if len(classes) < 2:
        raise ValueError("classification screening needs two classes")
    if len(classes) > 2:
        raise ValueError("only two-class problems are supported")
    return lab == classes[1]


def overlap_counts(data: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """1-D domain overlap of every row of ``data`` (columns x samples)."""
    out = np.empty(data.shape[0], dtype=np.int64)
    for s, e in _chunks(data.shape[0], data.shape[1]):
        a, b = data[s:e][:, ~pos], data[s:e][:, pos]
        amin, amax = a.min(axis=1, keepdims=True), a.max(axis=1, keepdims=True)
        bmin, bmax = b.min(axis=1, keepdims=True), b.max(axis=1, keepdims=True)
        out[s:e] = ((a >= bmin) & (a <= bmax)).sum(axis=1) + ((b >= amin) & (b <= amax)).sum(axis=1)
    return out


def sis_screen_classification(labels, fm, k: int, exclude: Sequence[int] = (), rows=None) -> ScreenResult:
    """Rank columns by 1-D class-domain overlap, smallest first.

    The overlap of a column counts the samples of each class that fall inside
    the ``[min, max]`` interval of the other class. ``rows`` restricts the
    count to a subset of samples. Ties go to the lower column index.
    """
    data = _colmajor(fm)
    lab = np.asarray(labels).ravel()
    if len(lab) != data.shape[1]:
        raise ValueError(f"labels have {len(lab)} values, columns have {data.shape[1]}")
    if rows is not None:
        rows = np.asarray(rows, dtype=np.int64)
        data = data[:, rows]
        lab = lab[rows]
    pos = _two_classes(lab)
    _check_k(k, data.shape[0] - len(set(int(i) for i in exclude)))
    scores = overlap_counts(data, pos).astype(float)
    if len(exclude):
        scores[np.asarray(exclude, dtype=np.int64)] = np.inf
    return _top(scores, k, descending=False)


# ---------------------------------------------------------------------------
# least squares


@dataclass(frozen=True)
class LstsqResult:
    coefficients: np.ndarray
    intercept: float
    residual: np.ndarray
    rmse: float


def fit_least_squares(columns, P) -> LstsqResult:
    """Ordinary least squares with an intercept, via pivoted QR.

    Columns are scaled to unit norm before the factorisation. The design is
    rejected as rank-deficient (:class:`DegenerateDesignError`) when a
    diagonal entry of R falls below ``1e-10`` times the largest one. One step
    of iterative refinement tightens the residual's orthogonality.
    """
    F = np.asarray(columns, dtype=float)
    if F.ndim == 1:
        F = F[:, None]
    y = np.asarray(P, dtype=float).ravel()
    N, n = F.shape
    if len(y) != N:
        raise ValueError(f"target has {len(y)} values, columns have {N} rows")
    if n + 1 > N:
        raise DegenerateDesignError(f"{n} columns plus intercept exceed {N} samples")
    A = np.empty((N, n + 1))
    A[:, 0] = 1.0
    A[:, 1:] = F
    norms = np.sqrt(np.einsum("ij,ij->j", A, A))
    if np.any(norms == 0) or not np.all(np.isfinite(norms)):
        raise DegenerateDesignError("zero or non-finite column")
    As = A / norms
    Q, R, piv = scipy.linalg.qr(As, mode="economic", pivoting=True, check_finite=False)
    d = np.abs(np.diag(R))
    if d[-1] < RANK_TOL * d[0]:
        raise DegenerateDesignError("design matrix is rank-deficient")

    def solve(rhs):
        z = scipy.linalg.solve_triangular(R, Q.T @ rhs, check_finite=False)
        c = np.empty(n + 1)
        c[piv] = z
        return c

    c = solve(y)
    res = y - As @ c
    c = c + solve(res)
    c = c / norms
    res = y - A @ c
    return LstsqResult(c[1:].copy(), float(c[0]), res, float(np.sqrt(res @ res / N)))


# ---------------------------------------------------------------------------
# descriptor models


@dataclass
class DescriptorModel:
    """A ``dim``-dimensional descriptor and the linear model built on it.

    For regression ``coefficients``/``intercept`` are the least-squares fit and
    ``score`` is the training RMSE. For classification ``score`` is the class
    domain overlap, ``margin`` the separation of the class domains in
    standardised descriptor coordinates, and ``coefficients``/``intercept``
    describe the linear SVC boundary ``coef . d + intercept = 0``.
    """

    task: str
    indices: tuple[int, ...]
    labels: list[str]
    coefficients: np.ndarray
    intercept: float
    score: float
    feature_names: list[str] = field(default_factory=list)
    exprs: tuple[Expr, ...] = field(default=(), repr=False)
    margin: float = 0.0
    classifier: LinearClassifier | None = field(default=None, repr=False)
    train_accuracy: float | None = None

    @property
    def dim(self) -> int:
        return len(self.indices)

    def descriptor_values(self, ds: Dataset) -> np.ndarray:
        """``(n_samples, dim)`` descriptor values on ``ds``; may raise DomainError."""
        if not self.exprs:
            raise ValueError("model carries no expressions to evaluate")
        cols = [ds.names.index(n) for n in self.feature_names]
        rows = ds.X[:, cols]
        return np.column_stack([evaluate(e, rows) for e in self.exprs])

    def predict(self, ds: Dataset) -> np.ndarray:
        D = self.descriptor_values(ds)
        if self.task == "regression":
            return D @ self.coefficients + self.intercept
        if self.classifier is None:
            raise ValueError("classification model has no trained classifier")
        return self.classifier.predict(D)

    def evaluate(self, ds: Dataset) -> dict:
        pred = self.predict(ds)
        if self.task == "regression":
            out = {"rmse": rmse(pred, ds.y)}
            try:
                out["r"] = pearson_r(pred, ds.y)
            except ValueError:
                out["r"] = float("nan")
            return out
        return {"accuracy": accuracy(pred, ds.y)}

    def formula(self) -> str:
        if self.task == "regression":
            terms = [f"{c:+.6g}*[{lab}]" for c, lab in zip(self.coefficients, self.labels)]
            return f"y = {self.intercept:.6g} " + " ".join(terms)
        return "; ".join(f"d{i + 1} = {lab}" for i, lab in enumerate(self.labels))

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "dim": self.dim,
            "descriptors": list(self.labels),
            "indices": [int(i) for i in self.indices],
            "coefficients": [float(c) for c in self.coefficients],
            "intercept": float(self.intercept),
            "score": float(self.score),
            "feature_names": list(self.feature_names),
        }
        if self.task == "classification":
            d["margin"] = float(self.margin)
            d["train_accuracy"] = self.train_accuracy
            d["classifier"] = self.classifier.to_dict() if self.classifier is not None else None
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "DescriptorModel":
        names = list(d.get("feature_names", []))
        exprs = tuple(parse_expr(s, names) for s in d["descriptors"]) if names else ()
        clf = d.get("classifier")
        return cls(
            d["task"],
            tuple(d.get("indices", ())),
            list(d["descriptors"]),
            np.asarray(d["coefficients"], dtype=float),
            float(d["intercept"]),
            float(d["score"]),
            names,
            exprs,
            float(d.get("margin", 0.0)),
            LinearClassifier.from_dict(clf) if clf else None,
            d.get("train_accuracy"),
        )


# ---------------------------------------------------------------------------
# SO search


def _combo_chunks(n_items: int, dim: int, n_chunks: int):
    """Split the lexicographic combination sequence into contiguous slices."""
    total = math.comb(n_items, dim)
    size = max(1, -(-total // n_chunks))
    for start in range(0, total, size):
        yield start, min(total, start + size)


def _reduce(results):
    """Deterministic reduction of per-chunk winners: lowest key, then tuple."""
    best = None
    for r in results:
        if r is not None and (best is None or r[:2] < best[:2]):
            best = r
    return best


def _run_chunks(fn, n_items, dim, workers):
    nw = _n_workers(workers)
    chunks = list(_combo_chunks(n_items, dim, nw * 4 if nw > 1 else 1))
    if nw == 1 or len(chunks) == 1:
        return _reduce(fn(a, b) for a, b in chunks)
    with ThreadPoolExecutor(nw) as pool:
        return _reduce(pool.map(lambda ab: fn(*ab), chunks))


def so_search_regression(union_space: Sequence[int], fm, P, n: int, workers: int | None = None) -> DescriptorModel:
    """Exhaustive best-subset search over ``n``-column subsets of ``union_space``.

    Each subset is fitted by :func:`fit_least_squares`; the lowest RMSE wins
    and exact ties go to the lexicographically smallest sorted index tuple.
    Rank-deficient subsets are skipped.
    """
    S = np.array(sorted(set(int(i) for i in union_space)), dtype=np.int64)
    if n < 1:
        raise ValueError("n must be >= 1")
    if len(S) < n:
        raise ValueError(f"union space has {len(S)} columns, need at least {n}")
    data = _colmajor(fm)
    cols = np.ascontiguousarray(data[S].T)
    y = np.asarray(P, dtype=float).ravel()

    def search(start, stop):
        best = None
        for combo in itertools.islice(itertools.combinations(range(len(S)), n), start, stop):
            try:
                fit = fit_least_squares(cols[:, combo], y)
            except DegenerateDesignError:
                continue
            key = (fit.rmse, tuple(S[list(combo)].tolist()))
            if best is None or key < best[:2]:
                best = (*key, fit)
        return best

    best = _run_chunks(search, len(S), n, workers)
    if best is None:
        raise NoModelError(f"every {n}-subset of the {len(S)}-column union space is degenerate")
    r, idx, fit = best
    return DescriptorModel(
        "regression",
        idx,
        _labels_of(fm, idx),
        fit.coefficients,
        fit.intercept,
        r,
        _feature_names(fm),
        _exprs_of(fm, idx),
    )


def _standardized(x: np.ndarray) -> np.ndarray:
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - x.mean(axis=0)) / sd


def _margin(Zc: np.ndarray, pos: np.ndarray) -> float:
    a, b = Zc[~pos], Zc[pos]
    if Zc.shape[1] == 1:
        return interval_margin(a[:, 0], b[:, 0])
    return separation_margin(a, b)


def _one_dimensional_pairs(fm, S: np.ndarray, data: np.ndarray, combos: np.ndarray) -> np.ndarray:
    """Mask of column pairs that only re-parametrise a single variable.

    A pair is flagged when both expressions use the same single primary
    feature, or when the two columns order the samples identically or in
    exact reverse. Such points lie on one monotone curve, where the hull
    overlap count is zero whatever the class arrangement.
    """
    cols = data[S]
    dense = np.empty(cols.shape, dtype=np.int64)
    for k in range(len(S)):
        _, dense[k] = np.unique(cols[k], return_inverse=True)
    rev = dense.max(axis=1, keepdims=True) - dense
    fwd_key = [r.tobytes() for r in dense]
    rev_key = [r.tobytes() for r in rev]
    prim = None
    if isinstance(fm, FeatureMatrix):
        prim = [frozenset(fm.exprs[int(i)].features()) for i in S]
    out = np.zeros(len(combos), dtype=bool)
    for t, (i, j) in enumerate(combos):
        same_order = fwd_key[i] == fwd_key[j] or fwd_key[i] == rev_key[j]
        same_primary = prim is not None and len(prim[i]) == 1 and prim[i] == prim[j]
        out[t] = same_order or same_primary
    return out


def so_search_classification(
    union_space: Sequence[int],
    fm,
    labels,
    n: int,
    workers: int | None = None,
    C: float = 1.0,
) -> DescriptorModel:
    """Exhaustive search for the ``n``-subset with the least class-domain overlap.

    Overlap is the interval count for ``n=1`` and the convex-hull count for
    ``n=2``. Ties go to the larger separation margin on standardised
    descriptor coordinates (the gap between the class domains when they are
    disjoint, otherwise minus the length or area they share), then to the
    lexicographically smallest index tuple. A linear SVC is trained on the
    winning descriptor.

    For ``n=2`` pairs that are one-dimensional in disguise (see
    :func:`_one_dimensional_pairs`) are skipped unless nothing else is left.
    """
    if n not in (1, 2):
        raise UnsupportedDimensionError(f"classification descriptors support n in {{1, 2}}, got {n}")
    S = np.array(sorted(set(int(i) for i in union_space)), dtype=np.int64)
    if len(S) < n:
        raise ValueError(f"union space has {len(S)} columns, need at least {n}")
    lab = np.asarray(labels).ravel()
    pos = _two_classes(lab)
    data = _colmajor(fm)
    Z = np.ascontiguousarray(_standardized(np.ascontiguousarray(data[S].T)))

    if n == 1:
        combos = np.arange(len(S))[:, None]
        overlaps = overlap_counts(np.ascontiguousarray(Z.T), pos)
    else:
        combos = np.array(list(itertools.combinations(range(len(S)), 2)), dtype=np.int64)
        nw = _n_workers(workers)
        parts = np.array_split(np.arange(len(combos)), max(1, min(len(combos), nw * 4)))

        def score(idx):
            return pair_overlaps(Z, pos, combos[idx])

        if nw == 1:
            overlaps = np.concatenate([score(p) for p in parts])
        else:
            with ThreadPoolExecutor(nw) as pool:
                overlaps = np.concatenate(list(pool.map(score, parts)))
        flat = _one_dimensional_pairs(fm, S, data, combos)
        if not flat.all():
            overlaps = np.where(flat, np.iinfo(np.int64).max, overlaps)
    tied = np.flatnonzero(overlaps == overlaps.min())
    best = None
    for t in tied:  # lexicographic order, so the first of equal margins wins
        m = _margin(Z[:, combos[t]], pos)
        if best is None or m > best[1]:
            best = (t, m)
    t, margin = best
    idx = tuple(S[combos[t]].tolist())
    D = data[list(idx)].T
    clf, acc = train_linear_svc(D, lab, C=C)
    w, b = clf.boundary()
    return DescriptorModel(
        "classification",
        idx,
        _labels_of(fm, idx),
        w,
        b,
        float(overlaps[t]),
        _feature_names(fm),
        _exprs_of(fm, idx),
        margin=float(margin),
        classifier=clf,
        train_accuracy=acc,
    )


# ---------------------------------------------------------------------------
# full runs


@dataclass(frozen=True)
class CSDiagnostic:
    """Outcome of the sample-size check ``N >= C * n * ln(M)``."""

    warn: bool
    N: int
    n: int
    M: int
    C: float
    required_N: float
    max_M: float
    message: str

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("warn", "N", "n", "M", "C", "required_N", "max_M", "message")}


def cs_validity_check(N: int, n: int, M: int, C: float = 1.0) -> CSDiagnostic:
    """Compare the sample count with the sparse-recovery bound ``C n ln M``.

    The diagnostic warns when ``N < C n ln M`` and reports the largest space
    size the sample count supports, ``M <= exp(N / (C n))``.
    """
    if N < 1 or n < 1 or M < 1 or C <= 0:
        raise ValueError("N, n, M must be >= 1 and C > 0")
    need = C * n * math.log(M)
    try:
        max_m = math.exp(N / (C * n))
    except OverflowError:
        max_m = math.inf
    warn = N < need
    if warn:
        msg = f"N={N} < C*n*ln(M)={need:.4g}: the {n}-D descriptor may not be uniquely recoverable; M should be <= {max_m:.4g}"
        log.warning(msg)
    else:
        msg = f"N={N} >= C*n*ln(M)={need:.4g}"
    return CSDiagnostic(warn, N, n, M, C, need, max_m, msg)


@dataclass
class SissoResult:
    models: list[DescriptorModel]
    space_size: int
    n_primaries: int
    timings: dict
    subspaces: list[list[int]]
    diagnostics: list[CSDiagnostic] = field(default_factory=list)

    @property
    def best(self) -> DescriptorModel:
        return self.models[-1]

    def model(self, dim: int) -> DescriptorModel:
        return self.models[dim - 1]


def build_space(ds: Dataset, space_cfg: SpaceConfig = SpaceConfig()) -> FeatureMatrix:
    prim = FeatureMatrix.from_dataset(ds, units=space_cfg.units, dedup_tol=space_cfg.dedup_tol)
    return expand_space(
        prim,
        space_cfg.ops,
        space_cfg.rung,
        dedup_tol=space_cfg.dedup_tol,
        max_columns=space_cfg.max_columns,
        max_bytes=space_cfg.max_bytes,
    )


def _overlap_rows(values: np.ndarray, pos: np.ndarray) -> np.ndarray:
    """Samples lying inside the other class's interval on a 1-D descriptor."""
    a, b = values[~pos], values[pos]
    inside = np.zeros(len(values), dtype=bool)
    inside[~pos] = (a >= b.min()) & (a <= b.max())
    inside[pos] = (b >= a.min()) & (b <= a.max())
    return np.flatnonzero(inside)


def run_sisso(
    ds: Dataset,
    space_cfg: SpaceConfig = SpaceConfig(),
    sis_cfg: SisConfig | None = None,
    fm: FeatureMatrix | None = None,
) -> SissoResult:
    """Build the feature space and fit descriptors of dimension ``1..max_dim``.

    Timings (seconds, wall clock) are reported for the ``space``, ``sis`` and
    ``so`` phases; ``regression`` is ``sis + so``.
    """
    sis_cfg = sis_cfg or SisConfig(task=ds.task)
    if sis_cfg.task != ds.task:
        raise ValueError(f"config task {sis_cfg.task!r} does not match the dataset task {ds.task!r}")
    t_start = time.perf_counter()
    if fm is None:
        fm = build_space(ds, space_cfg)
    t_space = time.perf_counter() - t_start
    y = ds.y
    t_sis = t_so = 0.0
    union: list[int] = []
    subspaces: list[list[int]] = []
    models: list[DescriptorModel] = []
    residual = np.asarray(y, dtype=float)
    for d in range(1, sis_cfg.max_dim + 1):
        available = len(fm) - len(union)
        if available < 1:
            break
        k = min(sis_cfg.subspace_size, available)
        t0 = time.perf_counter()
        if ds.task == "regression":
            scr = sis_screen_regression(residual, fm, k, exclude=union, standardize=sis_cfg.standardize)
        else:
            rows = None
            if d > 1:
                unresolved = _overlap_rows(models[-1].descriptor_values(ds)[:, 0], _two_classes(y))
                if len(np.unique(y[unresolved])) == 2:
                    rows = unresolved
            scr = sis_screen_classification(y, fm, k, exclude=union, rows=rows)
        new = [int(i) for i in scr.indices]
        subspaces.append(new)
        union = union + new
        t1 = time.perf_counter()
        t_sis += t1 - t0
        if len(union) < d:
            break
        if ds.task == "regression":
            m = so_search_regression(union, fm, y, d, workers=sis_cfg.workers)
            residual = y - (fm.data[list(m.indices)].T @ m.coefficients + m.intercept)
        else:
            m = so_search_classification(union, fm, y, d, workers=sis_cfg.workers, C=sis_cfg.svc_C)
        t_so += time.perf_counter() - t1
        models.append(m)
    diags = [cs_validity_check(ds.n_samples, sis_cfg.max_dim, max(1, len(fm)))]
    timings = {
        "space": t_space,
        "sis": t_sis,
        "so": t_so,
        "regression": t_sis + t_so,
        "total": time.perf_counter() - t_start,
    }
    return SissoResult(models, len(fm), ds.n_features, timings, subspaces, diags)


@dataclass
class RFSissoResult:
    importance: ImportanceReport
    selected: list[int]
    selected_names: list[str]
    sisso: SissoResult
    timings: dict

    @property
    def models(self) -> list[DescriptorModel]:
        return self.sisso.models


def run_rf_sisso(
    ds: Dataset,
    rf_cfg: ForestConfig = ForestConfig(),
    selection: str = "topk:8",
    space_cfg: SpaceConfig = SpaceConfig(),
    sis_cfg: SisConfig | None = None,
    R: int = 50,
    seed: int = 0,
    workers: int | None = None,
    importance: ImportanceReport | None = None,
) -> RFSissoResult:
    """Random-forest prescreening followed by :func:`run_sisso` on the kept primaries.

    The primaries keep their original column order in the restricted dataset.
    A precomputed ``importance`` report may be passed to skip the forest fits.
    """
    t0 = time.perf_counter()
    if importance is None:
        importance = repeated_importance(ds, R, rf_cfg, seed, workers)
    sel = select_features(importance, selection)
    t_rf = time.perf_counter() - t0
    if not sel:
        raise EmptySelectionError(f"selection {selection!r} kept no features")
    keep = sorted(sel)
    sub = ds.select(keep)
    res = run_sisso(sub, space_cfg, sis_cfg)
    timings = dict(res.timings)
    timings["rf"] = t_rf
    timings["total"] = t_rf + res.timings["total"]
    return RFSissoResult(importance, list(sel), [ds.names[i] for i in sel], res, timings)
