"""Recursive feature-space construction with value deduplication.

The space is stored as a dense ``(n_columns, n_samples)`` array plus a compact
"recipe" per column (operator code, operand column indices). :class:`Expr`
objects are only materialised when somebody asks for them, which keeps
million-column spaces affordable.

Step ``q`` applies every operator to every admissible operand drawn from the
columns built so far, at least one of which is from step ``q - 1`` (pairs of
older columns were already tried in an earlier step and would only repeat).
A candidate is dropped when

* any row leaves an operator's domain or is non-finite,
* the column is constant (range <= ``dedup_tol`` times its magnitude),
* it equals an existing column within ``dedup_tol`` relative tolerance on
  every row. Lower rung wins, then the lexicographically smaller canonical key.

Duplicates are found with a 64-bit hash of the column quantised to ~1e-10
relative precision; every hash hit is confirmed by an explicit tolerance
comparison before anything is merged.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .data import Dataset, UnitVector
from .errors import CapacityError, DimensionError
from .expressions import (
    BINARY_OPS,
    COMMUTATIVE,
    UNARY_OPS,
    Expr,
    apply_op,
    canonicalize,
    combine,
    leaf,
    op_name,
    result_unit,
    valid_mask,
)

__all__ = ["OperatorSet", "FeatureMatrix", "expand_space", "fingerprint"]

OPS = ("feature",) + UNARY_OPS + BINARY_OPS
OP_CODE = {op: k for k, op in enumerate(OPS)}

DEFAULT_DEDUP_TOL = 1e-9
DEFAULT_MAX_COLUMNS = 10**7
DEFAULT_MAX_BYTES = 2 * 1024**3


@dataclass(frozen=True)
class OperatorSet:
    unary: tuple[str, ...] = UNARY_OPS
    binary: tuple[str, ...] = BINARY_OPS

    def __post_init__(self):
        un = tuple(op for op in UNARY_OPS if op in {op_name(o) for o in self.unary})
        bi = tuple(op for op in BINARY_OPS if op in {op_name(o) for o in self.binary})
        if set(map(op_name, self.unary)) - set(UNARY_OPS) or set(map(op_name, self.binary)) - set(BINARY_OPS):
            raise ValueError("operator listed under the wrong arity")
        if not un and not bi:
            raise ValueError("operator set is empty")
        object.__setattr__(self, "unary", un)
        object.__setattr__(self, "binary", bi)

    @classmethod
    def full(cls) -> "OperatorSet":
        return cls()

    @classmethod
    def from_names(cls, names: Iterable[str]) -> "OperatorSet":
        names = [op_name(n) for n in names]
        return cls(tuple(n for n in names if n in UNARY_OPS), tuple(n for n in names if n in BINARY_OPS))

    @property
    def names(self) -> list[str]:
        return list(self.unary) + list(self.binary)

    def __contains__(self, op):
        return op_name(op) in self.unary or op_name(op) in self.binary


# ---------------------------------------------------------------------------
# fingerprints

_DROP_BITS = 52 - 33
_ROW_MULT_SEED = 0x5EED_F00D


def _row_multipliers(n: int) -> np.ndarray:
    rng = np.random.default_rng(_ROW_MULT_SEED)
    return rng.integers(1, 2**63, size=n, dtype=np.uint64) | np.uint64(1)


def _mix64(h: np.ndarray) -> np.ndarray:
    # splitmix64 finaliser
    h = h ^ (h >> np.uint64(30))
    h = h * np.uint64(0xBF58476D1CE4E5B9)
    h = h ^ (h >> np.uint64(27))
    h = h * np.uint64(0x94D049BB133111EB)
    return h ^ (h >> np.uint64(31))


def fingerprint(block: np.ndarray) -> np.ndarray:
    """64-bit hash of each row of ``block`` (shape ``(k, n_samples)``).

    Values are rounded to 33 significant bits first, so columns that agree to
    ~1e-10 relative precision usually share a fingerprint.
    """
    block = np.atleast_2d(np.asarray(block, dtype=float)) + 0.0  # folds -0.0 into 0.0
    bits = block.view(np.int64)
    q = (bits + np.int64(1 << (_DROP_BITS - 1))) >> np.int64(_DROP_BITS)
    with np.errstate(over="ignore"):
        h = (q.view(np.uint64) * _row_multipliers(block.shape[1])[None, :]).sum(axis=1, dtype=np.uint64)
    return _mix64(h)


def _close(a: np.ndarray, b: np.ndarray, tol: float) -> np.ndarray:
    """Row-wise: every element of a equals b within relative tolerance."""
    return np.all(np.abs(a - b) <= tol * np.maximum(np.abs(a), np.abs(b)), axis=-1)


def _nonconstant(block: np.ndarray, tol: float) -> np.ndarray:
    rng = block.max(axis=1) - block.min(axis=1)
    return rng > tol * np.abs(block).max(axis=1)


# ---------------------------------------------------------------------------


class _LazyExprs(Sequence):
    def __init__(self, fm):
        self._fm = fm
        self._cache: dict[int, Expr] = {}

    def __len__(self):
        return len(self._fm)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        i = int(i)
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        e = self._cache.get(i)
        if e is None:
            e = self._cache[i] = self._fm._build_expr(i)
        return e


class FeatureMatrix:
    """Evaluated candidate features and the expressions that produced them.

    ``values`` is ``(n_samples, n_columns)``; column ``i`` was produced by
    ``exprs[i]``. Construct with :meth:`from_dataset` and :func:`expand_space`.
    """

    def __init__(self, data, op, left, right, rung, unit_id, unit_table, fingerprints, names, primary_units):
        self._data = data  # (n_columns, n_samples)
        self.op = op
        self.left = left
        self.right = right
        self.rung = rung
        self.unit_id = unit_id
        self.unit_table = unit_table
        self.fingerprints = fingerprints
        self.names = list(names)
        self.primary_units = list(primary_units)
        self.exprs = _LazyExprs(self)
        for a in (data, op, left, right, rung, unit_id, fingerprints):
            a.setflags(write=False)

    @classmethod
    def from_dataset(cls, ds: Dataset, units: bool = True, dedup_tol: float = DEFAULT_DEDUP_TOL) -> "FeatureMatrix":
        """Primary features of ``ds`` as a rung-0 matrix.

        Constant and duplicate primaries are dropped. With ``units=False`` every
        column is treated as unit-less.
        """
        prim_units = [f.unit if units else UnitVector() for f in ds.features]
        return cls.from_arrays(ds.X, ds.names, prim_units, dedup_tol)

    @classmethod
    def from_arrays(cls, X, names, units=None, dedup_tol: float = DEFAULT_DEDUP_TOL) -> "FeatureMatrix":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(names):
            raise ValueError("X must be (n_samples, n_features) matching names")
        units = list(units) if units is not None else [UnitVector()] * len(names)
        if not np.all(np.isfinite(X)):
            raise ValueError("primary features contain NaN/Inf")
        data = np.ascontiguousarray(X.T)
        keep = _nonconstant(data, dedup_tol)
        fps = fingerprint(data)
        seen: dict[int, int] = {}
        idx = []
        for j in range(data.shape[0]):
            if not keep[j]:
                continue
            k = seen.get(int(fps[j]))
            if k is not None and _close(data[j], data[k], dedup_tol):
                continue
            seen[int(fps[j])] = j
            idx.append(j)
        if not idx:
            raise ValueError("every primary feature is constant")
        idx = np.array(idx, dtype=np.int64)
        lookup: dict[UnitVector, int] = {}
        uid = np.array([lookup.setdefault(units[j], len(lookup)) for j in idx], dtype=np.int32)
        table = [None] * len(lookup)
        for u, k in lookup.items():
            table[k] = u
        n = len(idx)
        return cls(
            np.ascontiguousarray(data[idx]),
            np.zeros(n, dtype=np.int8),
            idx.astype(np.int32),
            np.full(n, -1, dtype=np.int32),
            np.zeros(n, dtype=np.int8),
            uid,
            table,
            fps[idx].copy(),
            names,
            units,
        )

    # -- basic accessors -------------------------------------------------

    def __len__(self):
        return self._data.shape[0]

    @property
    def n_samples(self) -> int:
        return self._data.shape[1]

    @property
    def values(self) -> np.ndarray:
        return self._data.T

    @property
    def data(self) -> np.ndarray:
        """Column-major view: ``data[i]`` is column ``i``."""
        return self._data

    def column(self, i: int) -> np.ndarray:
        return self._data[i]

    def unit(self, i: int) -> UnitVector:
        return self.unit_table[self.unit_id[i]]

    @cached_property
    def means(self) -> np.ndarray:
        return self._data.mean(axis=1)

    @cached_property
    def stds(self) -> np.ndarray:
        out = np.empty(len(self))
        step = max(1, 2_000_000 // max(1, self.n_samples))
        for s in range(0, len(self), step):
            out[s : s + step] = self._data[s : s + step].std(axis=1)
        return out

    @cached_property
    def keys(self) -> list[str]:
        return [canonicalize(e) for e in self.exprs]

    def label(self, i: int) -> str:
        return str(self.exprs[i])

    def _build_expr(self, i: int) -> Expr:
        code = OPS[self.op[i]]
        if code == "feature":
            f = int(self.left[i])
            return leaf(f, self.names[f], self.primary_units[f])
        args = [self.exprs[int(self.left[i])]]
        if self.right[i] >= 0:
            args.append(self.exprs[int(self.right[i])])
        e = combine(code, args, units_enabled=False)
        # the builder already enforced unit rules; attach the tracked unit
        return Expr(e.op, e.args, unit=self.unit(i), rung=int(self.rung[i]))

    def max_rung(self) -> int:
        return int(self.rung.max()) if len(self) else 0


# ---------------------------------------------------------------------------
# space construction


class _Units:
    """Interning table for unit vectors with memoised operator results."""

    def __init__(self, table):
        self.table = list(table)
        self.index = {u: k for k, u in enumerate(self.table)}
        self.memo: dict[tuple, int] = {}

    def intern(self, u):
        k = self.index.get(u)
        if k is None:
            k = self.index[u] = len(self.table)
            self.table.append(u)
        return k

    def apply(self, op, a, b=-1) -> int:
        """Unit id of the result, or -1 when the unit rules refuse it."""
        key = (op, a, b)
        r = self.memo.get(key)
        if r is None:
            us = [self.table[a]] if b < 0 else [self.table[a], self.table[b]]
            try:
                r = self.intern(result_unit(op, us))
            except DimensionError:
                r = -1
            self.memo[key] = r
        return r

    def apply_many(self, op, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
        if b is None:
            uniq, inv = np.unique(a, return_inverse=True)
            res = np.array([self.apply(op, int(x)) for x in uniq], dtype=np.int32)
        else:
            pairs = a.astype(np.int64) * (1 << 31) + b.astype(np.int64)
            uniq, inv = np.unique(pairs, return_inverse=True)
            res = np.array([self.apply(op, int(p >> 31), int(p & ((1 << 31) - 1))) for p in uniq], dtype=np.int32)
        return res[inv.reshape(-1)] if len(uniq) else np.empty(0, dtype=np.int32)


def _candidate_count(rung: np.ndarray, q: int, ops: OperatorSet) -> int:
    m = len(rung)
    newest = int(np.count_nonzero(rung == q - 1))
    old = m - newest
    n_pairs = m * (m - 1) // 2 - old * (old - 1) // 2
    per_pair = sum(1 if op in COMMUTATIVE else 2 for op in ops.binary)
    return newest * len(ops.unary) + n_pairs * per_pair


def _iter_candidates(op_arr, rung, unit_id, q, ops, units: _Units, chunk: int):
    """Yield (op_code, left, right, unit_id) arrays for step q in a fixed order."""
    m = len(rung)
    newest = np.flatnonzero(rung == q - 1)
    for op in ops.unary:
        cand = newest
        # structural no-ops: inv(inv x), log(exp x), exp(log x)
        undo = {"inv": "inv", "log": "exp", "exp": "log"}.get(op)
        if undo is not None:
            cand = cand[op_arr[cand] != OP_CODE[undo]]
        for s in range(0, len(cand), chunk):
            left = cand[s : s + chunk].astype(np.int32)
            uid = units.apply_many(op, unit_id[left])
            ok = uid >= 0
            yield OP_CODE[op], left[ok], np.full(ok.sum(), -1, dtype=np.int32), uid[ok]
    first_new = int(newest[0]) if len(newest) else m
    # columns are appended in rung order, so pairs with j >= first_new cover
    # exactly the pairs that contain at least one newest column
    for op in ops.binary:
        for j0 in range(first_new, m, max(1, chunk // max(1, m))):
            j1 = min(m, j0 + max(1, chunk // max(1, m)))
            jj = np.arange(j0, j1)
            counts = jj  # partner i ranges over 0..j-1
            left = np.repeat(jj, counts)
            starts = np.cumsum(counts) - counts
            right_pos = np.arange(counts.sum()) - np.repeat(starts, counts)
            # (i, j) with i < j
            i_idx = right_pos.astype(np.int32)
            j_idx = left.astype(np.int32)
            orders = [(i_idx, j_idx)] if op in COMMUTATIVE else [(i_idx, j_idx), (j_idx, i_idx)]
            for a, b in orders:
                uid = units.apply_many(op, unit_id[a], unit_id[b])
                ok = uid >= 0
                yield OP_CODE[op], a[ok], b[ok], uid[ok]


def _compute(data, code, left, right):
    op = OPS[code]
    a = data[left]
    b = data[right] if right is not None and OPS[code] in BINARY_OPS else None
    out = apply_op(op, a, b)
    return out, valid_mask(op, a, b, out).all(axis=1)


def expand_space(
    primaries: FeatureMatrix,
    ops: OperatorSet | None = None,
    rung: int = 2,
    dedup_tol: float = DEFAULT_DEDUP_TOL,
    max_columns: int = DEFAULT_MAX_COLUMNS,
    max_bytes: int = DEFAULT_MAX_BYTES,
    chunk_bytes: int = 64 * 1024**2,
) -> FeatureMatrix:
    """Grow ``primaries`` by ``rung`` rounds of the operator set.

    Raises :class:`CapacityError` before evaluating a round whose candidate
    count would exceed ``max_columns``, or when the retained columns would need
    more than ``max_bytes`` of storage.
    """
    if rung < 0:
        raise ValueError("rung must be >= 0")
    if len(primaries) == 0:
        raise ValueError("no primary features")
    ops = ops or OperatorSet.full()
    fm = primaries
    n = fm.n_samples
    chunk = max(1, chunk_bytes // (8 * n))
    for q in range(1, rung + 1):
        n_cand = _candidate_count(fm.rung, q, ops)
        if len(fm) + n_cand > max_columns:
            raise CapacityError("max_columns", max_columns, len(fm) + n_cand)
        fm = _grow(fm, q, ops, dedup_tol, max_bytes, chunk)
    return fm


def _grow(fm: FeatureMatrix, q, ops, tol, max_bytes, chunk) -> FeatureMatrix:
    data = fm.data
    n = fm.n_samples
    units = _Units(fm.unit_table)
    m = len(fm)

    # pass 1: validity and fingerprints of every candidate
    c_op, c_left, c_right, c_uid, c_fp = [], [], [], [], []
    for code, left, right, uid in _iter_candidates(fm.op, fm.rung, fm.unit_id, q, ops, units, chunk):
        for s in range(0, len(left), chunk):
            l, r, u = left[s : s + chunk], right[s : s + chunk], uid[s : s + chunk]
            out, ok = _compute(data, code, l, r)
            ok &= _nonconstant(np.where(np.isfinite(out), out, 0.0), tol)
            if not ok.any():
                continue
            c_op.append(np.full(ok.sum(), code, dtype=np.int8))
            c_left.append(l[ok])
            c_right.append(r[ok])
            c_uid.append(u[ok])
            c_fp.append(fingerprint(out[ok]))
    if not c_op:
        return fm
    c_op = np.concatenate(c_op)
    c_left = np.concatenate(c_left)
    c_right = np.concatenate(c_right)
    c_uid = np.concatenate(c_uid)
    c_fp = np.concatenate(c_fp)
    k = len(c_op)

    # pass 2: decide survivors by fingerprint
    old_order = np.argsort(fm.fingerprints, kind="stable")
    old_sorted = fm.fingerprints[old_order]
    pos = np.searchsorted(old_sorted, c_fp)
    pos_c = np.minimum(pos, max(len(old_sorted) - 1, 0))
    hits_old = (pos < len(old_sorted)) & (old_sorted[pos_c] == c_fp)
    rep = np.full(k, -1, dtype=np.int64)  # representative: existing column index
    rep[hits_old] = old_order[pos_c[hits_old]]

    fresh = np.flatnonzero(~hits_old)
    uniq, first, inv, counts = np.unique(c_fp[fresh], return_index=True, return_inverse=True, return_counts=True)
    winner_of_group = fresh[first]  # first occurrence by candidate order
    multi = counts > 1
    if multi.any():
        # same-rung duplicates: the lexicographically smallest canonical key wins
        inv_list = inv.reshape(-1)
        sel = multi[inv_list]
        cands = fresh[sel]
        groups = inv_list[sel]
        keys = _CandidateKeys(fm, c_op, c_left, c_right).keys(cands)
        order = np.lexsort((cands, keys, groups))
        g_sorted = groups[order]
        first_in_group = np.ones(len(order), dtype=bool)
        first_in_group[1:] = g_sorted[1:] != g_sorted[:-1]
        winner_of_group[g_sorted[first_in_group]] = cands[order[first_in_group]]
    is_winner = np.zeros(k, dtype=bool)
    is_winner[winner_of_group] = True
    group_winner = winner_of_group[inv.reshape(-1)]

    winners = np.flatnonzero(is_winner)  # candidate order
    new_index = np.full(k, -1, dtype=np.int64)
    new_index[winners] = m + np.arange(len(winners))
    rep[fresh] = new_index[group_winner]
    rep[winners] = -1

    total = m + len(winners)
    if total * n * 8 > max_bytes:
        raise CapacityError("max_bytes", max_bytes, total * n * 8)

    # pass 3: materialise winners, then confirm every merge by direct comparison
    out_data = np.empty((total, n))
    out_data[:m] = data
    for s in range(0, len(winners), chunk):
        w = winners[s : s + chunk]
        vals, _ = _compute_mixed(out_data, c_op[w], c_left[w], c_right[w])
        out_data[m + s : m + s + len(w)] = vals

    dropped = np.flatnonzero(rep >= 0)
    extra = []
    for s in range(0, len(dropped), chunk):
        d = dropped[s : s + chunk]
        vals, _ = _compute_mixed(out_data, c_op[d], c_left[d], c_right[d])
        same = _close(vals, out_data[rep[d]], tol)
        extra.extend(d[~same].tolist())

    op_new = c_op[winners]
    left_new, right_new = c_left[winners], c_right[winners]
    uid_new, fp_new = c_uid[winners], c_fp[winners].copy()
    if extra:
        # genuine 64-bit collisions: keep the column under a re-salted fingerprint
        extra = np.array(sorted(extra))
        vals, _ = _compute_mixed(out_data, c_op[extra], c_left[extra], c_right[extra])
        out_data = np.concatenate([out_data, vals])
        used = set(fm.fingerprints.tolist()) | set(fp_new.tolist())
        fps = []
        for f in c_fp[extra].tolist():
            while f in used:
                f = (f * 0x9E3779B97F4A7C15 + 1) & 0xFFFFFFFFFFFFFFFF
            used.add(f)
            fps.append(f)
        op_new = np.concatenate([op_new, c_op[extra]])
        left_new = np.concatenate([left_new, c_left[extra]])
        right_new = np.concatenate([right_new, c_right[extra]])
        uid_new = np.concatenate([uid_new, c_uid[extra]])
        fp_new = np.concatenate([fp_new, np.array(fps, dtype=np.uint64)])

    cnt = len(op_new)
    return FeatureMatrix(
        out_data,
        np.concatenate([fm.op, op_new]),
        np.concatenate([fm.left, left_new]),
        np.concatenate([fm.right, right_new]),
        np.concatenate([fm.rung, np.full(cnt, q, dtype=np.int8)]),
        np.concatenate([fm.unit_id, uid_new.astype(np.int32)]),
        units.table,
        np.concatenate([fm.fingerprints, fp_new]),
        fm.names,
        fm.primary_units,
    )


def _compute_mixed(data, codes, left, right):
    out = np.empty((len(codes), data.shape[1]))
    ok = np.empty(len(codes), dtype=bool)
    for code in np.unique(codes):
        sel = codes == code
        out[sel], ok[sel] = _compute(data, int(code), left[sel], right[sel])
    return out, ok


class _CandidateKeys:
    """Canonical keys of not-yet-materialised candidates.

    Generation never emits inv(inv x), log(exp x) or exp(log x), so a
    candidate's key follows directly from its operands' keys.
    """

    def __init__(self, fm, c_op, c_left, c_right):
        self.fm, self.c_op, self.c_left, self.c_right = fm, c_op, c_left, c_right
        self.memo: dict[int, str] = {}

    def operand(self, i: int) -> str:
        k = self.memo.get(i)
        if k is None:
            k = self.memo[i] = canonicalize(self.fm.exprs[i])
        return k

    def key(self, c) -> str:
        return str(self.keys(np.array([c]))[0])

    def keys(self, cands: np.ndarray) -> np.ndarray:
        ops = self.c_op[cands]
        left = self.c_left[cands]
        right = self.c_right[cands]
        used = np.unique(np.concatenate([left, right[right >= 0]]))
        table = np.array([self.operand(int(i)) for i in used])
        a = table[np.searchsorted(used, left)]
        b = np.where(right >= 0, table[np.searchsorted(used, np.maximum(right, 0))], "")
        comm = np.isin(ops, [OP_CODE[o] for o in COMMUTATIVE]) & (b < a)
        a, b = np.where(comm, b, a), np.where(comm, a, b)
        names = np.array(OPS)[ops]
        inner = np.where(right >= 0, np.char.add(np.char.add(a, ","), b), a)
        return np.char.add(np.char.add(np.char.add(names, "("), inner), ")")


def space_size_estimate(n_primaries: int, ops: OperatorSet, rung: int) -> int:
    """Upper bound on the candidate count, ignoring domain failures and duplicates."""
    m, newest = n_primaries, n_primaries
    per_pair = sum(1 if op in COMMUTATIVE else 2 for op in ops.binary)
    for _ in range(rung):
        old = m - newest
        add = newest * len(ops.unary) + (m * (m - 1) // 2 - old * (old - 1) // 2) * per_pair
        m, newest = m + add, add
    return m
