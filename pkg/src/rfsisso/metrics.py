"""Scoring primitives: RMSE, Pearson r, accuracy and a linear max-margin classifier."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .hull import Hull2D, convex_hull, hull_distance, hull_overlap_count, interval_gap, interval_overlap_count

__all__ = [
    "rmse",
    "pearson_r",
    "accuracy",
    "LinearClassifier",
    "train_linear_svc",
    "Hull2D",
    "convex_hull",
    "hull_overlap_count",
    "hull_distance",
    "interval_overlap_count",
    "interval_gap",
]


def _pair(a, b, min_len=1):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if len(a) < min_len:
        raise ValueError(f"need at least {min_len} values")
    return a, b


def rmse(pred, truth) -> float:
    p, t = _pair(pred, truth)
    return float(np.sqrt(np.mean((p - t) ** 2)))


def pearson_r(a, b) -> float:
    x, y = _pair(a, b, min_len=2)
    dx = x - x.mean()
    dy = y - y.mean()
    sx, sy = np.sqrt(dx @ dx), np.sqrt(dy @ dy)
    if sx == 0 or sy == 0:
        raise ValueError("correlation undefined for a constant input")
    return float(np.clip((dx @ dy) / (sx * sy), -1.0, 1.0))


def accuracy(pred_labels, truth_labels) -> float:
    p = np.asarray(pred_labels).ravel()
    t = np.asarray(truth_labels).ravel()
    if len(p) != len(t):
        raise ValueError(f"length mismatch: {len(p)} vs {len(t)}")
    if len(p) == 0:
        raise ValueError("empty label vectors")
    return float(np.mean(p == t))


# ---------------------------------------------------------------------------


@dataclass
class LinearClassifier:
    """Linear decision rule ``w . (x - mean) / scale + bias > 0``.

    ``classes`` holds the two label values; the positive side predicts
    ``classes[1]`` and a score of exactly zero predicts ``classes[0]``.
    """

    weights: np.ndarray
    bias: float
    C: float
    mean: np.ndarray
    scale: np.ndarray
    classes: tuple
    converged: bool = True
    n_iter: int = 0
    objective_history: list = field(default_factory=list, repr=False)

    def decision_function(self, points) -> np.ndarray:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        return ((x - self.mean) / self.scale) @ self.weights + self.bias

    def predict(self, points) -> np.ndarray:
        pos = self.decision_function(points) > 0
        return np.where(pos, self.classes[1], self.classes[0])

    def boundary(self) -> tuple[np.ndarray, float]:
        """Weights and offset of the decision boundary in input coordinates."""
        w = self.weights / self.scale
        return w, float(self.bias - w @ self.mean)

    def primal_objective(self, points, labels) -> float:
        y = np.where(np.asarray(labels) == self.classes[1], 1.0, -1.0)
        margins = y * self.decision_function(points)
        return float(0.5 * self.weights @ self.weights + self.C * np.maximum(0.0, 1.0 - margins).sum())

    def to_dict(self) -> dict:
        d = asdict(self)
        d.pop("objective_history")
        for k in ("weights", "mean", "scale"):
            d[k] = [float(v) for v in d[k]]
        d["classes"] = [c.item() if hasattr(c, "item") else c for c in self.classes]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "LinearClassifier":
        return cls(
            np.asarray(d["weights"], dtype=float),
            float(d["bias"]),
            float(d["C"]),
            np.asarray(d["mean"], dtype=float),
            np.asarray(d["scale"], dtype=float),
            tuple(d["classes"]),
            bool(d.get("converged", True)),
            int(d.get("n_iter", 0)),
        )


def train_linear_svc(points, labels, C: float = 1.0, max_iter: int = 100_000, tol: float = 1e-8):
    """Soft-margin linear SVM (hinge loss, unregularised bias).

    Solves the dual ``min 1/2 a'Qa - sum(a)`` s.t. ``0 <= a <= C``,
    ``y'a = 0`` by two-coordinate descent with maximal-violating-pair
    selection. Every step minimises the dual exactly along its pair, so the
    recorded dual objective never increases. Inputs are standardised
    internally. Returns ``(classifier, train_accuracy)``.
    """
    X = np.asarray(points, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    lab = np.asarray(labels).ravel()
    if X.shape[0] != len(lab):
        raise ValueError("points and labels differ in length")
    if X.shape[1] not in (1, 2):
        raise ValueError("descriptor dimension must be 1 or 2")
    if C <= 0:
        raise ValueError("C must be > 0")
    classes = tuple(np.unique(lab).tolist())
    if len(classes) != 2:
        raise ValueError(f"need exactly two classes, got {len(classes)}")
    y = np.where(lab == classes[1], 1.0, -1.0)

    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    K = Z @ Z.T
    Q = (y[:, None] * y[None, :]) * K
    n = len(y)
    alpha = np.zeros(n)
    grad = -np.ones(n)  # Q a - e
    history = [0.0]
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        yg = -y * grad
        up = ((alpha < C) & (y > 0)) | ((alpha > 0) & (y < 0))
        low = ((alpha < C) & (y < 0)) | ((alpha > 0) & (y > 0))
        i = int(np.argmax(np.where(up, yg, -np.inf)))
        j = int(np.argmin(np.where(low, yg, np.inf)))
        if yg[i] - yg[j] < tol:
            converged = True
            break
        # move along d_i = y_i t, d_j = -y_j t, t >= 0
        quad = Q[i, i] + Q[j, j] - 2.0 * y[i] * y[j] * Q[i, j]
        quad = quad if quad > 1e-12 else 1e-12
        t = (yg[i] - yg[j]) / quad
        t_max_i = (C - alpha[i]) if y[i] > 0 else alpha[i]
        t_max_j = alpha[j] if y[j] > 0 else (C - alpha[j])
        t = min(t, t_max_i, t_max_j)
        new_i = min(max(alpha[i] + y[i] * t, 0.0), C)
        new_j = min(max(alpha[j] - y[j] * t, 0.0), C)
        di, dj = new_i - alpha[i], new_j - alpha[j]
        alpha[i], alpha[j] = new_i, new_j
        grad += Q[:, i] * di + Q[:, j] * dj
        history.append(float(0.5 * (alpha @ grad - alpha.sum())))
    w = Z.T @ (alpha * y)
    yg = -y * grad
    free = (alpha > 1e-12) & (alpha < C - 1e-12)
    if free.any():
        b = float(yg[free].mean())
    else:
        up = ((alpha < C) & (y > 0)) | ((alpha > 0) & (y < 0))
        low = ((alpha < C) & (y < 0)) | ((alpha > 0) & (y > 0))
        hi = yg[up].max() if up.any() else 0.0
        lo = yg[low].min() if low.any() else 0.0
        b = float(0.5 * (hi + lo))
    clf = LinearClassifier(w, b, float(C), mean, scale, classes, converged, it, history)
    return clf, accuracy(clf.predict(X), lab)
