"""CART random forest with mean-decrease-impurity importance.

Trees are grown by a compiled kernel that releases the GIL, so the trees of a
forest can be fitted on a thread pool. All randomness (bootstrap draws and the
per-node feature order) is drawn up front from a generator dedicated to each
tree, which makes a forest a pure function of ``(data, config, seed)``
whatever the number of workers.

Classification nodes use Gini impurity; regression nodes use the variance
(mean squared deviation) of the target.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from numba import njit

from .data import Dataset

__all__ = [
    "gini_impurity",
    "best_split",
    "Leaf",
    "Split",
    "TreeNode",
    "Tree",
    "ForestConfig",
    "Forest",
    "grow_tree",
    "fit_forest",
    "fit_predict_forest",
    "mdi_importance",
    "ImportanceReport",
    "repeated_importance",
    "select_features",
    "parse_selection",
]


def gini_impurity(labels) -> float:
    """``1 - sum_k p_k**2`` over the label fractions ``p_k``."""
    lab = np.asarray(labels).ravel()
    if lab.size == 0:
        raise ValueError("gini impurity of an empty label vector")
    _, counts = np.unique(lab, return_counts=True)
    p = counts / lab.size
    return float(1.0 - np.sum(p * p))


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, nogil=True)
def _node_impurity(y, seg, n_classes):
    m = seg.shape[0]
    if n_classes > 0:
        counts = np.zeros(n_classes, np.int64)
        for s in seg:
            counts[int(y[s])] += 1
        acc = 0.0
        for c in counts:
            acc += float(c) * float(c)
        best = 0
        for c in range(1, n_classes):
            if counts[c] > counts[best]:
                best = c
        return 1.0 - acc / (float(m) * float(m)), float(best)
    tot = 0.0
    for s in seg:
        tot += y[s]
    mean = tot / m
    sse = 0.0
    for s in seg:
        d = y[s] - mean
        sse += d * d
    return sse / m, mean


@njit(cache=True, nogil=True)
def _sweep(xs, ys, n_classes, min_leaf):
    """Best midpoint split of pre-sorted ``xs`` with targets ``ys``.

    Returns ``(found, threshold, weighted_child_impurity)``. Candidate
    thresholds are visited in increasing order and only a strict improvement
    replaces the incumbent, so ties go to the smallest threshold.
    """
    m = xs.shape[0]
    best = np.inf
    thr = 0.0
    found = False
    if n_classes > 0:
        left = np.zeros(n_classes, np.float64)
        right = np.zeros(n_classes, np.float64)
        for i in range(m):
            right[int(ys[i])] += 1.0
        for i in range(m - 1):
            c = int(ys[i])
            left[c] += 1.0
            right[c] -= 1.0
            if xs[i] == xs[i + 1]:
                continue
            nl = i + 1
            nr = m - nl
            if nl < min_leaf or nr < min_leaf:
                continue
            sl = 0.0
            sr = 0.0
            for k in range(n_classes):
                sl += left[k] * left[k]
                sr += right[k] * right[k]
            gl = 1.0 - sl / (float(nl) * nl)
            gr = 1.0 - sr / (float(nr) * nr)
            imp = (nl * gl + nr * gr) / m
            if imp < best:
                best = imp
                found = True
                t = 0.5 * (xs[i] + xs[i + 1])
                thr = xs[i] if t >= xs[i + 1] else t
        return found, thr, best
    s_all = 0.0
    q_all = 0.0
    for i in range(m):
        s_all += ys[i]
        q_all += ys[i] * ys[i]
    s_l = 0.0
    q_l = 0.0
    for i in range(m - 1):
        s_l += ys[i]
        q_l += ys[i] * ys[i]
        if xs[i] == xs[i + 1]:
            continue
        nl = i + 1
        nr = m - nl
        if nl < min_leaf or nr < min_leaf:
            continue
        s_r = s_all - s_l
        q_r = q_all - q_l
        sse = (q_l - s_l * s_l / nl) + (q_r - s_r * s_r / nr)
        imp = max(sse, 0.0) / m
        if imp < best:
            best = imp
            found = True
            t = 0.5 * (xs[i] + xs[i + 1])
            thr = xs[i] if t >= xs[i + 1] else t
    return found, thr, best


@njit(cache=True, nogil=True)
def _grow(X, y, n_classes, rows, keys, mtry, max_depth, min_leaf):
    n = rows.shape[0]
    cap = 2 * n + 1
    feat = np.full(cap, -1, np.int64)
    thr = np.zeros(cap)
    left = np.full(cap, -1, np.int64)
    right = np.full(cap, -1, np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, np.int64)
    gain = np.zeros(cap)
    idx = rows.copy()
    buf = np.empty(n, np.int64)

    st_node = np.empty(cap, np.int64)
    st_lo = np.empty(cap, np.int64)
    st_hi = np.empty(cap, np.int64)
    st_depth = np.empty(cap, np.int64)
    sp = 0
    st_node[0], st_lo[0], st_hi[0], st_depth[0] = 0, 0, n, 0
    sp = 1
    n_nodes = 1
    while sp > 0:
        sp -= 1
        node, lo, hi, depth = st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp]
        seg = idx[lo:hi]
        m = hi - lo
        imp, val = _node_impurity(y, seg, n_classes)
        count[node] = m
        value[node] = val
        if imp <= 0.0 or m < 2 or m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        order = np.argsort(keys[node])
        best_f = -1
        best_t = 0.0
        best_imp = np.inf
        examined = 0
        for k in order:
            if examined >= mtry and best_f >= 0:
                break
            xcol = X[seg, k]
            o = np.argsort(xcol, kind="mergesort")
            xs = xcol[o]
            if xs[0] == xs[m - 1]:
                continue
            examined += 1
            ys = y[seg[o]]
            found, t, ci = _sweep(xs, ys, n_classes, min_leaf)
            if found and ci < best_imp:
                best_imp = ci
                best_f = k
                best_t = t
        if best_f < 0:
            continue
        # stable partition: rows with x <= t first
        nl = 0
        for s in seg:
            if X[s, best_f] <= best_t:
                buf[nl] = s
                nl += 1
        j = nl
        for s in seg:
            if X[s, best_f] > best_t:
                buf[j] = s
                j += 1
        idx[lo:hi] = buf[:m]
        feat[node] = best_f
        thr[node] = best_t
        gain[node] = (m / n) * (imp - best_imp)
        left[node] = n_nodes
        right[node] = n_nodes + 1
        # push right first so the left subtree is processed first
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = n_nodes + 1, lo + nl, hi, depth + 1
        sp += 1
        st_node[sp], st_lo[sp], st_hi[sp], st_depth[sp] = n_nodes, lo, lo + nl, depth + 1
        sp += 1
        n_nodes += 2
    return (
        feat[:n_nodes].copy(),
        thr[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        count[:n_nodes].copy(),
        gain[:n_nodes].copy(),
    )


@njit(cache=True, nogil=True)
def _apply(feat, thr, left, right, value, X):
    out = np.empty(X.shape[0])
    for i in range(X.shape[0]):
        node = 0
        while feat[node] >= 0:
            if X[i, feat[node]] <= thr[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


# ---------------------------------------------------------------------------
# splits


def best_split(values, labels, candidate_thresholds=None):
    """Threshold minimising the weighted Gini impurity of the two children.

    Parameters
    ----------
    values : array_like
        Feature values, one per sample.
    labels : array_like
        Class labels of any hashable type.
    candidate_thresholds : array_like, optional
        Thresholds to try. Defaults to the midpoints between consecutive
        distinct sorted values.

    Returns
    -------
    tuple of (float, float) or None
        ``(threshold, weighted_child_impurity)``; samples with
        ``value <= threshold`` go left. Ties go to the smallest threshold.
        None when no threshold leaves both children non-empty.
    """
    x = np.asarray(values, dtype=float).ravel()
    lab = np.asarray(labels).ravel()
    if len(x) != len(lab):
        raise ValueError(f"length mismatch: {len(x)} values vs {len(lab)} labels")
    if len(x) < 2:
        raise ValueError("need at least two samples")
    _, codes = np.unique(lab, return_inverse=True)
    codes = codes.astype(np.float64)
    k = int(codes.max()) + 1
    if candidate_thresholds is None:
        o = np.argsort(x, kind="mergesort")
        found, t, imp = _sweep(x[o], codes[o], k, 1)
        return (float(t), float(imp)) if found else None
    best = None
    for t in np.sort(np.asarray(candidate_thresholds, dtype=float).ravel()):
        mask = x <= t
        nl = int(mask.sum())
        if nl == 0 or nl == len(x):
            continue
        imp = (nl * gini_impurity(codes[mask]) + (len(x) - nl) * gini_impurity(codes[~mask])) / len(x)
        if best is None or imp < best[1]:
            best = (float(t), float(imp))
    return best


# ---------------------------------------------------------------------------
# trees


@dataclass(frozen=True)
class Leaf:
    prediction: float


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass(frozen=True)
class Tree:
    """Flat-array tree. ``feature[k] < 0`` marks node ``k`` as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node_samples: np.ndarray
    impurity_decrease: np.ndarray
    n_features: int
    n_classes: int

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    @property
    def root(self) -> TreeNode:
        return self._node(0)

    def _node(self, k: int) -> TreeNode:
        if self.feature[k] < 0:
            v = self.value[k]
            return Leaf(int(v) if self.n_classes else float(v))
        return Split(int(self.feature[k]), float(self.threshold[k]), self._node(self.left[k]), self._node(self.right[k]))

    def predict(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        out = _apply(self.feature, self.threshold, self.left, self.right, self.value, X)
        return out.astype(np.int64) if self.n_classes else out

    def importances(self) -> np.ndarray:
        """Unnormalised impurity decrease accumulated per feature."""
        imp = np.zeros(self.n_features)
        split = self.feature >= 0
        np.add.at(imp, self.feature[split], self.impurity_decrease[split])
        return imp


@dataclass(frozen=True)
class ForestConfig:
    """Forest hyperparameters.

    ``max_depth=None`` grows until purity; ``features_per_split`` is an
    integer or ``"sqrt"`` (rounded down, at least 1). ``holdout`` is the
    validation fraction used by :func:`repeated_importance`.
    """

    n_trees: int = 100
    max_depth: int | None = None
    min_samples_leaf: int = 1
    features_per_split: int | str = "sqrt"
    bootstrap: bool = True
    holdout: float = 0.2

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0 or None")
        if isinstance(self.features_per_split, str):
            if self.features_per_split != "sqrt":
                raise ValueError("features_per_split must be an integer or 'sqrt'")
        elif self.features_per_split < 1:
            raise ValueError("features_per_split must be >= 1")
        if not 0.0 < self.holdout < 1.0:
            raise ValueError("holdout must lie in (0, 1)")

    def mtry(self, n_features: int) -> int:
        if self.features_per_split == "sqrt":
            return max(1, math.isqrt(n_features))
        if self.features_per_split > n_features:
            raise ValueError(f"features_per_split={self.features_per_split} exceeds the {n_features} features")
        return int(self.features_per_split)


def _task_arrays(ds: Dataset):
    if ds.target.is_classification:
        return np.asarray(ds.y, dtype=np.float64), len(ds.target.classes)
    return np.asarray(ds.y, dtype=np.float64), 0


def _grow_arrays(X, y, n_classes, config: ForestConfig, rng: np.random.Generator) -> Tree:
    n, M = X.shape
    rows = rng.integers(0, n, size=n) if config.bootstrap else np.arange(n, dtype=np.int64)
    rows = rows.astype(np.int64)
    keys = rng.random((2 * n + 1, M))
    depth = -1 if config.max_depth is None else int(config.max_depth)
    arrays = _grow(X, y, n_classes, rows, keys, config.mtry(M), depth, int(config.min_samples_leaf))
    return Tree(*arrays, n_features=M, n_classes=n_classes)


def grow_tree(ds: Dataset, config: ForestConfig, rng: np.random.Generator | int) -> Tree:
    """Grow one tree on ``ds`` (with a bootstrap draw if configured)."""
    if ds.n_samples < 1:
        raise ValueError("cannot grow a tree on an empty dataset")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    y, k = _task_arrays(ds)
    X = np.ascontiguousarray(ds.X, dtype=float)
    return _grow_arrays(X, y, k, config, rng)


def _tree_rng(seed, path: tuple, t: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(*path, t)))


def _workers(workers: int | None) -> int:
    if workers is None:
        return min(8, os.cpu_count() or 1)
    return max(1, int(workers))


@dataclass(frozen=True)
class Forest:
    trees: tuple[Tree, ...]
    task: str
    n_classes: int
    n_train: int

    def predict(self, X) -> np.ndarray:
        """Majority vote (ties to the smaller label code) or mean prediction."""
        X = np.ascontiguousarray(X, dtype=float)
        preds = np.stack([t.predict(X) for t in self.trees])
        if self.task == "regression":
            return preds.mean(axis=0)
        votes = np.zeros((X.shape[0], self.n_classes), dtype=np.int64)
        for p in preds:
            votes[np.arange(X.shape[0]), p] += 1
        return votes.argmax(axis=1)


def _fit(X, y, n_classes, task, config, seed, path, workers) -> Forest:
    def one(t):
        return _grow_arrays(X, y, n_classes, config, _tree_rng(seed, path, t))

    nw = _workers(workers)
    if nw == 1 or config.n_trees == 1:
        trees = [one(t) for t in range(config.n_trees)]
    else:
        with ThreadPoolExecutor(nw) as pool:
            trees = list(pool.map(one, range(config.n_trees)))
    return Forest(tuple(trees), task, n_classes, X.shape[0])


def fit_forest(train: Dataset, config: ForestConfig = ForestConfig(), seed: int = 0, workers: int | None = None) -> Forest:
    y, k = _task_arrays(train)
    X = np.ascontiguousarray(train.X, dtype=float)
    return _fit(X, y, k, train.task, config, seed, (), workers)


def _score(task, pred, truth) -> float:
    if task == "regression":
        ss = float(np.sum((truth - truth.mean()) ** 2))
        if ss == 0.0:
            return 1.0 if np.allclose(pred, truth) else 0.0
        return 1.0 - float(np.sum((truth - pred) ** 2)) / ss
    return float(np.mean(pred == truth))


def fit_predict_forest(train: Dataset, test: Dataset, config: ForestConfig = ForestConfig(), seed: int = 0, workers=None):
    """Fit on ``train`` and predict ``test``.

    Returns ``(test_predictions, train_score, test_score)``. The score is the
    accuracy for classification and R^2 for regression.
    """
    if train.names != test.names or train.task != test.task:
        raise ValueError("train and test datasets do not share a schema")
    forest = fit_forest(train, config, seed, workers)
    pred = forest.predict(test.X)
    return pred, _score(train.task, forest.predict(train.X), train.y), _score(test.task, pred, test.y)


def mdi_importance(forest: Forest, train: Dataset | None = None) -> np.ndarray:
    """Mean-decrease-impurity importance normalised to sum to 1.

    Each split adds ``(node_samples / N) * (parent impurity - weighted child
    impurity)`` to its feature; contributions are summed over trees. If no
    tree split at all, the weight is shared equally among the features that
    are non-constant in ``train`` (or all features when ``train`` is None).
    """
    total = np.zeros(forest.trees[0].n_features)
    for t in forest.trees:
        total += t.importances()
    s = total.sum()
    if s > 0:
        return total / s
    if train is not None:
        X = train.X
        live = (X.max(axis=0) > X.min(axis=0)).astype(float)
        if live.any():
            return live / live.sum()
    return np.full(len(total), 1.0 / len(total))


# ---------------------------------------------------------------------------
# repeated importance


@dataclass
class ImportanceReport:
    """Accuracy-weighted importance over repeated forest fits, on a 0-100 scale."""

    names: list[str]
    scores: np.ndarray
    repeats: int
    accuracies: np.ndarray
    per_repeat: np.ndarray = field(repr=False, default=None)
    metadata: dict = field(default_factory=dict)

    def ranking(self) -> list[int]:
        """Feature indices by descending score, ties by ascending index."""
        return sorted(range(len(self.scores)), key=lambda i: (-self.scores[i], i))

    def to_rows(self) -> list[tuple[str, float, int]]:
        return [(self.names[i], float(self.scores[i]), r + 1) for r, i in enumerate(self.ranking())]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["feature", "score", "rank"])
        for name, score, rank in self.to_rows():
            w.writerow([name, repr(score), rank])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "features": [{"feature": n, "score": s, "rank": r} for n, s, r in self.to_rows()],
            "repeats": self.repeats,
            "accuracies": [float(a) for a in self.accuracies],
            "mean_accuracy": float(np.mean(self.accuracies)),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def repeated_importance(
    ds: Dataset,
    R: int = 50,
    config: ForestConfig = ForestConfig(),
    seed: int = 0,
    workers: int | None = None,
) -> ImportanceReport:
    """Combine ``R`` forest fits into one importance score per feature.

    Repeat ``r`` splits ``ds`` at random into training and validation parts
    (``config.holdout`` goes to validation), fits a forest on the training
    part, and scores it on the validation part to get ``G_r`` (accuracy, or
    ``max(R^2, 0)`` for regression). The combined score of feature ``m`` is
    ``sum_r I_r(m) * G_r``, rescaled so the scores sum to 100.
    """
    if R < 1:
        raise ValueError("R must be >= 1")
    n = ds.n_samples
    n_val = max(1, int(round(config.holdout * n)))
    if n_val >= n:
        raise ValueError(f"dataset of {n} rows is too small for a {config.holdout} holdout")
    X = np.ascontiguousarray(ds.X, dtype=float)
    y, k = _task_arrays(ds)
    per_repeat = np.zeros((R, ds.n_features))
    acc = np.zeros(R)
    for r in range(R):
        perm = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r, 0))).permutation(n)
        val, tr = np.sort(perm[:n_val]), np.sort(perm[n_val:])
        forest = _fit(X[tr], y[tr], k, ds.task, config, seed, (r, 1), workers)
        g = _score(ds.task, forest.predict(X[val]), y[val])
        acc[r] = max(g, 0.0)
        per_repeat[r] = mdi_importance(forest, ds.subset(tr))
    if acc.sum() > 0:
        combined = acc @ per_repeat
    else:
        combined = per_repeat.sum(axis=0)
    scores = 100.0 * combined / combined.sum()
    meta = {
        "n_trees": config.n_trees,
        "max_depth": config.max_depth,
        "min_samples_leaf": config.min_samples_leaf,
        "features_per_split": config.features_per_split,
        "bootstrap": config.bootstrap,
        "holdout": config.holdout,
        "seed": seed,
        "task": ds.task,
    }
    return ImportanceReport(list(ds.names), scores, R, acc, per_repeat, meta)


# ---------------------------------------------------------------------------
# selection


def parse_selection(mode: str) -> tuple[str, float]:
    """``"threshold:5"`` -> ``("threshold", 5.0)``; ``"topk:8"`` -> ``("topk", 8)``."""
    kind, _, arg = str(mode).partition(":")
    kind = kind.strip().lower().replace("_", "")
    if kind not in ("threshold", "topk") or not arg:
        raise ValueError(f"selection must look like 'threshold:5' or 'topk:8', got {mode!r}")
    try:
        val = float(arg)
    except ValueError:
        raise ValueError(f"bad selection argument {arg!r}") from None
    if kind == "topk":
        if val != int(val):
            raise ValueError("topk needs an integer")
        return kind, int(val)
    return kind, val


def select_features(
    report: ImportanceReport,
    mode: str | None = None,
    *,
    threshold: float | None = None,
    top_k: int | None = None,
) -> list[int]:
    """Indices of the selected features, by descending score then index.

    Give exactly one of ``mode`` (``"threshold:5"`` / ``"topk:8"``),
    ``threshold`` or ``top_k``.
    """
    if sum(x is not None for x in (mode, threshold, top_k)) != 1:
        raise ValueError("give exactly one of mode, threshold or top_k")
    if mode is not None:
        kind, val = parse_selection(mode)
        if kind == "topk":
            top_k = int(val)
        else:
            threshold = val
    order = report.ranking()
    if top_k is not None:
        if not 1 <= top_k <= len(order):
            raise ValueError(f"top_k must be in 1..{len(order)}, got {top_k}")
        return order[:top_k]
    return [i for i in order if report.scores[i] >= threshold]
