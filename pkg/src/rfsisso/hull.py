"""Planar convex hulls and the domain-overlap score used for classification.

Hulls are built with Andrew's monotone chain. Containment is inclusive:
points on the boundary (within a small tolerance) count as inside. The
kernels are compiled so the classification search can score thousands of
descriptor pairs quickly; the Python functions below wrap them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

TOL = 1e-12


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


# ---------------------------------------------------------------------------
# kernels


@njit(cache=True, nogil=True)
def _sorted_unique(P):
    o = np.argsort(P[:, 1], kind="mergesort")
    o = o[np.argsort(P[o, 0], kind="mergesort")]
    out = np.empty((P.shape[0], 2))
    k = 0
    for i in o:
        if k > 0 and out[k - 1, 0] == P[i, 0] and out[k - 1, 1] == P[i, 1]:
            continue
        out[k, 0] = P[i, 0]
        out[k, 1] = P[i, 1]
        k += 1
    return out[:k]


@njit(cache=True, nogil=True)
def _xc(ox, oy, ax, ay, bx, by):
    return (ax - ox) * (by - oy) - (ay - oy) * (bx - ox)


@njit(cache=True, nogil=True)
def _chain(points):
    P = _sorted_unique(points)
    m = P.shape[0]
    if m <= 2:
        return P
    H = np.empty((2 * m, 2))
    k = 0
    for i in range(m):
        while k >= 2 and _xc(H[k - 2, 0], H[k - 2, 1], H[k - 1, 0], H[k - 1, 1], P[i, 0], P[i, 1]) <= 0:
            k -= 1
        H[k] = P[i]
        k += 1
    t = k + 1
    for i in range(m - 2, -1, -1):
        while k >= t and _xc(H[k - 2, 0], H[k - 2, 1], H[k - 1, 0], H[k - 1, 1], P[i, 0], P[i, 1]) <= 0:
            k -= 1
        H[k] = P[i]
        k += 1
    return H[: k - 1].copy()


@njit(cache=True, nogil=True)
def _seg_dist(px, py, ax, ay, bx, by):
    ex, ey = bx - ax, by - ay
    L2 = ex * ex + ey * ey
    if L2 == 0.0:
        return np.hypot(px - ax, py - ay)
    t = ((px - ax) * ex + (py - ay) * ey) / L2
    t = min(max(t, 0.0), 1.0)
    return np.hypot(px - (ax + t * ex), py - (ay + t * ey))


@njit(cache=True, nogil=True)
def _contains(V, pts, eps, out):
    nv = V.shape[0]
    for i in range(pts.shape[0]):
        px, py = pts[i, 0], pts[i, 1]
        if nv == 1:
            out[i] = np.hypot(px - V[0, 0], py - V[0, 1]) <= eps
        elif nv == 2:
            out[i] = _seg_dist(px, py, V[0, 0], V[0, 1], V[1, 0], V[1, 1]) <= eps
        else:
            ok = True
            for k in range(nv):
                ax, ay = V[k, 0], V[k, 1]
                bx, by = V[(k + 1) % nv, 0], V[(k + 1) % nv, 1]
                ex, ey = bx - ax, by - ay
                if ex * (py - ay) - ey * (px - ax) < -eps * np.hypot(ex, ey):
                    ok = False
                    break
            out[i] = ok
    return out


@njit(cache=True, nogil=True)
def _eps(V, pts):
    s = 1.0
    for i in range(V.shape[0]):
        s = max(s, abs(V[i, 0]), abs(V[i, 1]))
    for i in range(pts.shape[0]):
        s = max(s, abs(pts[i, 0]), abs(pts[i, 1]))
    return TOL * s


@njit(cache=True, nogil=True)
def _overlap(A, B):
    ha = _chain(A)
    hb = _chain(B)
    ia = _contains(hb, A, _eps(hb, A), np.empty(A.shape[0], np.bool_))
    ib = _contains(ha, B, _eps(ha, B), np.empty(B.shape[0], np.bool_))
    return ia.sum() + ib.sum()


@njit(cache=True, nogil=True)
def pair_overlaps(Z, pos, pairs):
    """Hull overlap count of the 2-D descriptor ``Z[:, pair]`` for every pair."""
    out = np.empty(pairs.shape[0], np.int64)
    na = 0
    for p in pos:
        if not p:
            na += 1
    A = np.empty((na, 2))
    B = np.empty((pos.shape[0] - na, 2))
    for k in range(pairs.shape[0]):
        i, j = pairs[k, 0], pairs[k, 1]
        ia = 0
        ib = 0
        for s in range(Z.shape[0]):
            if pos[s]:
                B[ib, 0] = Z[s, i]
                B[ib, 1] = Z[s, j]
                ib += 1
            else:
                A[ia, 0] = Z[s, i]
                A[ia, 1] = Z[s, j]
                ia += 1
        out[k] = _overlap(A, B)
    return out


# ---------------------------------------------------------------------------
# public API


@dataclass(frozen=True)
class Hull2D:
    """Counter-clockwise hull vertices without collinear points.

    One vertex means the input collapsed to a point, two mean a segment.
    """

    vertices: np.ndarray

    @property
    def area(self) -> float:
        v = self.vertices
        if len(v) < 3:
            return 0.0
        x, y = v[:, 0], v[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def contains(self, points) -> np.ndarray:
        """Boolean mask: which points lie inside or on the hull."""
        p = np.ascontiguousarray(np.atleast_2d(np.asarray(points, dtype=float)))
        if p.shape[0] == 0:
            return np.zeros(0, dtype=bool)
        V = np.ascontiguousarray(self.vertices, dtype=float)
        return _contains(V, p, _eps(V, p), np.empty(len(p), dtype=np.bool_))


def convex_hull(points) -> Hull2D:
    pts = np.ascontiguousarray(np.asarray(points, dtype=float).reshape(-1, 2))
    if len(pts) == 0:
        raise ValueError("convex hull of an empty point set")
    return Hull2D(_chain(pts))


def _segment_distance(p, a, b):
    """Distance from each point in p to the segment ab."""
    ab = b - a
    L2 = float(ab @ ab)
    if L2 == 0.0:
        return np.hypot(*(p - a).T)
    t = np.clip(((p - a) @ ab) / L2, 0.0, 1.0)
    proj = a + t[:, None] * ab
    return np.hypot(*(p - proj).T)


def _edges(h: Hull2D):
    v = h.vertices
    if len(v) == 1:
        return [(v[0], v[0])]
    if len(v) == 2:
        return [(v[0], v[1])]
    return [(v[k], v[(k + 1) % len(v)]) for k in range(len(v))]


def _segments_cross(p1, p2, q1, q2) -> bool:
    d1, d2 = _cross(q1, q2, p1), _cross(q1, q2, p2)
    d3, d4 = _cross(p1, p2, q1), _cross(p1, p2, q2)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def hull_distance(h1: Hull2D, h2: Hull2D) -> float:
    """Euclidean gap between two hulls; 0 when they touch or intersect."""
    if h1.contains(h2.vertices).any() or h2.contains(h1.vertices).any():
        return 0.0
    for a1, a2 in _edges(h1):
        for b1, b2 in _edges(h2):
            if _segments_cross(a1, a2, b1, b2):
                return 0.0
    best = np.inf
    for a, b in _edges(h2):
        best = min(best, float(_segment_distance(h1.vertices, a, b).min()))
    for a, b in _edges(h1):
        best = min(best, float(_segment_distance(h2.vertices, a, b).min()))
    return best


def _clip(subject: np.ndarray, clipper: np.ndarray) -> np.ndarray:
    # Sutherland-Hodgman against a counter-clockwise convex clipper
    out = [tuple(p) for p in subject]
    n = len(clipper)
    for k in range(n):
        a, b = clipper[k], clipper[(k + 1) % n]
        inp, out = out, []
        if not inp:
            break
        for i in range(len(inp)):
            p, q = np.array(inp[i - 1]), np.array(inp[i])
            dp, dq = _cross(a, b, p), _cross(a, b, q)
            if dq >= 0:
                if dp < 0:
                    out.append(tuple(p + (q - p) * (dp / (dp - dq))))
                out.append(tuple(q))
            elif dp >= 0:
                out.append(tuple(p + (q - p) * (dp / (dp - dq))))
    return np.array(out, dtype=float).reshape(-1, 2)


def intersection_area(h1: Hull2D, h2: Hull2D) -> float:
    """Area of the intersection of two hulls (0 for degenerate hulls)."""
    if len(h1.vertices) < 3 or len(h2.vertices) < 3:
        return 0.0
    poly = _clip(h1.vertices, h2.vertices)
    return Hull2D(poly).area if len(poly) >= 3 else 0.0


def separation_margin(points_a, points_b) -> float:
    """Signed separation of two 2-D point sets.

    The gap between the hulls when they are disjoint; otherwise minus the
    area of their intersection. Larger is better separated.
    """
    ha = convex_hull(points_a)
    hb = convex_hull(points_b)
    gap = hull_distance(ha, hb)
    if gap > 0:
        return gap
    return -intersection_area(ha, hb)


def hull_overlap_count(points_a, points_b) -> int:
    """Points of A inside hull(B) plus points of B inside hull(A)."""
    a = np.ascontiguousarray(np.atleast_2d(np.asarray(points_a, dtype=float)))
    b = np.ascontiguousarray(np.atleast_2d(np.asarray(points_b, dtype=float)))
    if a.shape[0] == 0 or b.shape[0] == 0 or a.size == 0 or b.size == 0:
        raise ValueError("both point sets must be non-empty")
    return int(_overlap(a, b))


def interval_overlap_count(values_a, values_b) -> int:
    """1-D analogue of :func:`hull_overlap_count` using [min, max] intervals."""
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    return int(((a >= b.min()) & (a <= b.max())).sum() + ((b >= a.min()) & (b <= a.max())).sum())


def interval_gap(values_a, values_b) -> float:
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    return float(max(0.0, b.min() - a.max(), a.min() - b.max()))


def interval_margin(values_a, values_b) -> float:
    """1-D counterpart of :func:`separation_margin`: gap, or minus the overlap length."""
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    return float(max(a.min(), b.min()) - min(a.max(), b.max()))
