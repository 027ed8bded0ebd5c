"""Symbolic expressions over primary features.

Operators (the identity is implicit, every primary is kept as-is)::

    unary:  exp  log  sqrt  inv (x^-1)  sq (x^2)  cube (x^3)
    binary: add  sub  mul  div  absdiff (|a - b|)

The printed form is fully parenthesised infix and is what :func:`parse_expr`
reads back, e.g. ``((chi_A*V))^2`` or ``abs(EA_A-chi_B)``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import UnitVector
from .errors import DimensionError, DomainError

__all__ = [
    "UNARY_OPS",
    "BINARY_OPS",
    "COMMUTATIVE",
    "EPS_DOMAIN",
    "EXP_LIMIT",
    "Expr",
    "leaf",
    "combine",
    "result_unit",
    "canonicalize",
    "evaluate",
    "apply_op",
    "domain_mask",
    "valid_mask",
    "format_expr",
    "parse_expr",
]

UNARY_OPS = ("exp", "log", "sqrt", "inv", "sq", "cube")
BINARY_OPS = ("add", "sub", "mul", "div", "absdiff")
COMMUTATIVE = frozenset({"add", "mul", "absdiff"})
ARITY = {**{op: 1 for op in UNARY_OPS}, **{op: 2 for op in BINARY_OPS}}

EPS_DOMAIN = 1e-50
EXP_LIMIT = 700.0

_ALIASES = {
    "+": "add",
    "-": "sub",
    "*": "mul",
    "/": "div",
    "|-|": "absdiff",
    "abs": "absdiff",
    "^-1": "inv",
    "^2": "sq",
    "^3": "cube",
}


def op_name(op: str) -> str:
    op = _ALIASES.get(op, op)
    if op not in ARITY:
        raise ValueError(f"unknown operator {op!r}")
    return op


@dataclass(frozen=True)
class Expr:
    """Immutable expression node.

    Leaves have ``op == "feature"`` and carry the primary's column index and
    name; inner nodes carry their operands in ``args``.
    """

    op: str
    args: tuple["Expr", ...] = ()
    feature: int = -1
    name: str = ""
    unit: UnitVector = UnitVector()
    rung: int = 0

    @property
    def is_leaf(self) -> bool:
        return self.op == "feature"

    def __str__(self):
        return format_expr(self)

    def features(self) -> set[int]:
        if self.is_leaf:
            return {self.feature}
        return set().union(*(a.features() for a in self.args))


def leaf(index: int, name: str, unit: UnitVector | None = None) -> Expr:
    return Expr("feature", (), int(index), name, unit if unit is not None else UnitVector(), 0)


# ---------------------------------------------------------------------------
# unit rules


def result_unit(op: str, units: Sequence[UnitVector]) -> UnitVector:
    """Unit of ``op`` applied to operands with ``units``; raises DimensionError."""
    if op in ("add", "sub", "absdiff"):
        a, b = units
        if a != b:
            raise DimensionError("unit-mismatch", f"{op} needs identical units, got {a} and {b}")
        return a
    if op == "mul":
        return units[0] * units[1]
    if op == "div":
        return units[0] / units[1]
    (u,) = units
    if op in ("exp", "log"):
        if not u.is_dimensionless:
            raise DimensionError("not-dimensionless", f"{op} needs a dimensionless operand, got {u}")
        return u
    return u ** {"sqrt": 0.5, "inv": -1, "sq": 2, "cube": 3}[op]


def combine(op: str, operands: Sequence[Expr], units_enabled: bool = True) -> Expr:
    """Build ``op(*operands)``.

    With ``units_enabled`` the dimensional rules are enforced and a refused
    combination raises :class:`DimensionError` whose ``reason`` is one of
    ``"unit-mismatch"`` or ``"not-dimensionless"``.
    """
    op = op_name(op)
    operands = tuple(operands)
    if len(operands) != ARITY[op]:
        raise ValueError(f"{op} takes {ARITY[op]} operand(s), got {len(operands)}")
    if units_enabled:
        unit = result_unit(op, [e.unit for e in operands])
    else:
        unit = UnitVector()
    return Expr(op, operands, unit=unit, rung=1 + max(e.rung for e in operands))


# ---------------------------------------------------------------------------
# canonical keys


def _canon(e: Expr):
    # returns (op, key, inner) where inner is the canonical child of a unary node
    if e.is_leaf:
        return ("feature", e.name, None)
    if len(e.args) == 1:
        child = _canon(e.args[0])
        cop = child[0]
        if (e.op, cop) in (("inv", "inv"), ("log", "exp"), ("exp", "log")):
            return child[2]
        return (e.op, f"{e.op}({child[1]})", child)
    k1, k2 = _canon(e.args[0])[1], _canon(e.args[1])[1]
    if e.op in COMMUTATIVE and k2 < k1:
        k1, k2 = k2, k1
    return (e.op, f"{e.op}({k1},{k2})", None)


def canonicalize(e: Expr) -> str:
    """Canonical key: commutative operands sorted, ``inv(inv(x))``,
    ``log(exp(x))`` and ``exp(log(x))`` reduced to ``x``."""
    return _canon(e)[1]


# ---------------------------------------------------------------------------
# numerics shared by evaluate() and the vectorised space builder


def apply_op(op: str, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    with np.errstate(all="ignore"):
        if op == "add":
            return a + b
        if op == "sub":
            return a - b
        if op == "mul":
            return a * b
        if op == "div":
            return a / b
        if op == "absdiff":
            return np.abs(a - b)
        if op == "exp":
            return np.exp(a)
        if op == "log":
            return np.log(a)
        if op == "sqrt":
            return np.sqrt(a)
        if op == "inv":
            return 1.0 / a
        if op == "sq":
            return a * a
        if op == "cube":
            return a * a * a
    raise ValueError(f"unknown operator {op!r}")


_DOMAIN_REASON = {
    "log": "log-nonpositive",
    "sqrt": "sqrt-negative",
    "inv": "inverse-of-zero",
    "div": "division-by-zero",
    "exp": "exp-overflow",
}


def domain_mask(op: str, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Elementwise: operands lie inside the operator's domain."""
    with np.errstate(invalid="ignore"):
        if op == "log":
            return a > EPS_DOMAIN
        if op == "sqrt":
            return a >= 0
        if op == "inv":
            return np.abs(a) > EPS_DOMAIN
        if op == "div":
            return np.abs(b) > EPS_DOMAIN
        if op == "exp":
            return np.abs(a) <= EXP_LIMIT
    return np.ones(np.shape(a), dtype=bool)


def valid_mask(op: str, a: np.ndarray, b: np.ndarray | None, out: np.ndarray) -> np.ndarray:
    """Elementwise: operands inside the op's domain and the result finite."""
    return domain_mask(op, a, b) & np.isfinite(out)


def evaluate(e: Expr, rows: np.ndarray) -> np.ndarray:
    """Evaluate ``e`` on ``rows`` (n_samples x n_primaries).

    Raises :class:`DomainError` naming the first offending row when an
    operator leaves its domain or produces a non-finite value.
    """
    rows = np.asarray(rows, dtype=float)
    if rows.ndim == 1:
        rows = rows[None, :]
    return _eval(e, rows)


def _eval(e: Expr, rows):
    if e.is_leaf:
        if not 0 <= e.feature < rows.shape[1]:
            raise ValueError(f"feature index {e.feature} out of range for {rows.shape[1]} columns")
        return rows[:, e.feature]
    args = [_eval(a, rows) for a in e.args]
    a = args[0]
    b = args[1] if len(args) == 2 else None
    out = apply_op(e.op, a, b)
    dom = domain_mask(e.op, a, b)
    ok = dom & np.isfinite(out)
    if not ok.all():
        row = int(np.argmin(ok))
        reason = _DOMAIN_REASON[e.op] if not dom[row] else "non-finite"
        raise DomainError(reason, row)
    return out


# ---------------------------------------------------------------------------
# printing and parsing

_INFIX = {"add": "+", "sub": "-", "mul": "*", "div": "/"}
_POWER = {"inv": "^-1", "sq": "^2", "cube": "^3"}


def format_expr(e: Expr, names: Sequence[str] | None = None) -> str:
    if e.is_leaf:
        return names[e.feature] if names is not None else e.name
    s = [format_expr(a, names) for a in e.args]
    if e.op in _INFIX:
        return f"({s[0]}{_INFIX[e.op]}{s[1]})"
    if e.op == "absdiff":
        return f"abs({s[0]}-{s[1]})"
    if e.op in _POWER:
        return f"({s[0]}){_POWER[e.op]}"
    return f"{e.op}({s[0]})"


class _Parser:
    def __init__(self, text, names, units, units_enabled):
        self.s = text.replace(" ", "")
        self.i = 0
        self.names = list(names)
        self.by_len = sorted(range(len(self.names)), key=lambda k: -len(self.names[k]))
        self.units = units
        self.units_enabled = units_enabled

    def error(self, msg):
        return ValueError(f"{msg} at position {self.i} in {self.s!r}")

    def eat(self, tok):
        if not self.s.startswith(tok, self.i):
            raise self.error(f"expected {tok!r}")
        self.i += len(tok)

    def build(self, op, args):
        return combine(op, args, self.units_enabled)

    def expr(self):
        s, i = self.s, self.i
        for fn in ("exp", "log", "sqrt"):
            if s.startswith(fn + "(", i) and not self._name_here():
                self.i += len(fn) + 1
                a = self.expr()
                self.eat(")")
                return self.build(fn, [a])
        if s.startswith("abs(", i) and not self._name_here():
            self.i += 4
            a = self.expr()
            self.eat("-")
            b = self.expr()
            self.eat(")")
            return self.build("absdiff", [a, b])
        if s.startswith("(", i):
            self.i += 1
            a = self.expr()
            if s.startswith(")", self.i):
                self.i += 1
                m = re.compile(r"\^(-1|2|3)").match(s, self.i)
                if not m:
                    raise self.error("expected a power after ')'")
                self.i = m.end()
                return self.build({"-1": "inv", "2": "sq", "3": "cube"}[m.group(1)], [a])
            if self.i >= len(s) or s[self.i] not in "+-*/":
                raise self.error("expected an infix operator")
            op = {"+": "add", "-": "sub", "*": "mul", "/": "div"}[s[self.i]]
            self.i += 1
            b = self.expr()
            self.eat(")")
            return self.build(op, [a, b])
        k = self._name_here()
        if k is None:
            raise self.error("unknown token")
        self.i += len(self.names[k])
        unit = self.units[k] if self.units is not None else UnitVector()
        return leaf(k, self.names[k], unit)

    def _name_here(self):
        # longest feature name matching at the cursor, if it is followed by a delimiter
        for k in self.by_len:
            n = self.names[k]
            if self.s.startswith(n, self.i):
                j = self.i + len(n)
                if j == len(self.s) or self.s[j] in "+-*/),^":
                    return k
        return None


def parse_expr(
    text: str,
    names: Sequence[str],
    units: Sequence[UnitVector] | None = None,
) -> Expr:
    """Inverse of :func:`format_expr`. Unit rules are applied when ``units`` is given."""
    p = _Parser(text, names, units, units_enabled=units is not None)
    e = p.expr()
    if p.i != len(p.s):
        raise p.error("trailing characters")
    return e
