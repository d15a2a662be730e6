"""Guard expressions for transitions.

Guards are written as prefix s-expressions::

    (> (result A2) 100)
    (and (== (recv R1) "register") (not false))

Atoms are integers, double-quoted strings (``\\"`` and ``\\\\`` escapes),
``true``/``false``, and the references ``(recv <r-label>)`` and
``(result <act-label>)``. Message contents and action results are opaque
strings, so a reference may be compared against either an integer or a
string literal.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

from .errors import PredicateSyntaxError, PredicateTypeError, UnboundReference

COMPARISONS = ("==", "!=", "<", "<=", ">", ">=")
CONNECTIVES = ("and", "or")
REF_KINDS = ("recv", "result")

_INT_RE = re.compile(r"-?[0-9]+\Z")
_LABEL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]*\Z")


@dataclass(frozen=True)
class Lit:
    value: Union[str, int, bool]


@dataclass(frozen=True)
class Ref:
    kind: str  # "recv" | "result"
    label: str


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "PredExpr"
    right: "PredExpr"


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" | "or"
    args: tuple["PredExpr", ...]


@dataclass(frozen=True)
class Not:
    arg: "PredExpr"


PredExpr = Union[Lit, Ref, Cmp, BoolOp, Not]


# -- parsing -----------------------------------------------------------------

_TOKEN_RE = re.compile(r'\s*(?:(\()|(\))|("(?:[^"\\]|\\.)*")|([^\s()"]+))')


def _tokenize(text: str) -> list[str]:
    tokens = []
    pos = 0
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == pos:
            raise PredicateSyntaxError(f"unexpected character at {pos} in {text!r}")
        tokens.append(m.group(m.lastindex))
        pos = m.end()
    return tokens


def _unquote(tok: str) -> str:
    body = tok[1:-1]
    out = []
    i = 0
    while i < len(body):
        c = body[i]
        if c == "\\":
            i += 1
            if body[i] not in '"\\':
                raise PredicateSyntaxError(f"bad escape in {tok}")
            c = body[i]
        out.append(c)
        i += 1
    return "".join(out)


def parse_pred(text: str) -> PredExpr:
    tokens = _tokenize(text)
    if not tokens:
        raise PredicateSyntaxError("empty predicate")
    expr, pos = _parse(tokens, 0)
    if pos != len(tokens):
        raise PredicateSyntaxError(f"trailing input in {text!r}")
    return expr


def _parse(tokens: list[str], pos: int) -> tuple[PredExpr, int]:
    if pos >= len(tokens):
        raise PredicateSyntaxError("unexpected end of predicate")
    tok = tokens[pos]
    if tok == ")":
        raise PredicateSyntaxError("unexpected ')'")
    if tok != "(":
        return _atom(tok), pos + 1

    if pos + 1 >= len(tokens):
        raise PredicateSyntaxError("unexpected end of predicate")
    head = tokens[pos + 1]
    pos += 2
    args = []
    while pos < len(tokens) and tokens[pos] != ")":
        if head in REF_KINDS:
            args.append(tokens[pos])
            pos += 1
        else:
            arg, pos = _parse(tokens, pos)
            args.append(arg)
    if pos >= len(tokens):
        raise PredicateSyntaxError("missing ')'")
    pos += 1

    if head in REF_KINDS:
        if len(args) != 1 or not _LABEL_RE.match(args[0]):
            raise PredicateSyntaxError(f"({head} ...) takes one label")
        return Ref(head, args[0]), pos
    if head in COMPARISONS:
        if len(args) != 2:
            raise PredicateSyntaxError(f"{head} takes two operands")
        return Cmp(head, args[0], args[1]), pos
    if head in CONNECTIVES:
        if len(args) < 2:
            raise PredicateSyntaxError(f"{head} takes at least two operands")
        return BoolOp(head, tuple(args)), pos
    if head == "not":
        if len(args) != 1:
            raise PredicateSyntaxError("not takes one operand")
        return Not(args[0]), pos
    raise PredicateSyntaxError(f"unknown operator {head!r}")


def _atom(tok: str) -> Lit:
    if tok.startswith('"'):
        return Lit(_unquote(tok))
    if tok == "true":
        return Lit(True)
    if tok == "false":
        return Lit(False)
    if _INT_RE.match(tok):
        return Lit(int(tok))
    raise PredicateSyntaxError(f"bad atom {tok!r}")


# -- rendering ---------------------------------------------------------------

def render_pred(expr: PredExpr) -> str:
    """Canonical text form; ``parse_pred(render_pred(e)) == e``."""
    if isinstance(expr, Lit):
        v = expr.value
        if isinstance(v, bool):
            return "true" if v else "false"
        if isinstance(v, int):
            return str(v)
        return '"' + v.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(expr, Ref):
        return f"({expr.kind} {expr.label})"
    if isinstance(expr, Cmp):
        return f"({expr.op} {render_pred(expr.left)} {render_pred(expr.right)})"
    if isinstance(expr, BoolOp):
        return "(" + " ".join([expr.op] + [render_pred(a) for a in expr.args]) + ")"
    if isinstance(expr, Not):
        return f"(not {render_pred(expr.arg)})"
    raise TypeError(f"not a predicate: {expr!r}")


# -- static checks -----------------------------------------------------------

def references(expr: PredExpr) -> set[tuple[str, str]]:
    """All ``(kind, label)`` references in *expr*."""
    if isinstance(expr, Ref):
        return {(expr.kind, expr.label)}
    if isinstance(expr, Cmp):
        return references(expr.left) | references(expr.right)
    if isinstance(expr, BoolOp):
        out: set[tuple[str, str]] = set()
        for a in expr.args:
            out |= references(a)
        return out
    if isinstance(expr, Not):
        return references(expr.arg)
    return set()


def _type_of(expr: PredExpr) -> str:
    if isinstance(expr, Lit):
        if isinstance(expr.value, bool):
            return "bool"
        return "int" if isinstance(expr.value, int) else "str"
    if isinstance(expr, Ref):
        return "ref"
    if isinstance(expr, Cmp):
        lt, rt = _type_of(expr.left), _type_of(expr.right)
        if "bool" in (lt, rt):
            if lt != rt:
                raise PredicateTypeError(f"{expr.op} compares bool with {lt if rt == 'bool' else rt}")
            if expr.op not in ("==", "!="):
                raise PredicateTypeError(f"{expr.op} is not defined on booleans")
        elif "ref" not in (lt, rt) and lt != rt:
            raise PredicateTypeError(f"{expr.op} compares {lt} with {rt}")
        return "bool"
    if isinstance(expr, (BoolOp, Not)):
        args = expr.args if isinstance(expr, BoolOp) else (expr.arg,)
        for a in args:
            t = _type_of(a)
            if t != "bool":
                raise PredicateTypeError(f"operand of {getattr(expr, 'op', 'not')} has type {t}")
        return "bool"
    raise PredicateTypeError(f"not a predicate: {expr!r}")


def typecheck(expr: PredExpr) -> None:
    """Raise :class:`PredicateTypeError` unless *expr* is a well-typed boolean."""
    t = _type_of(expr)
    if t != "bool":
        raise PredicateTypeError(f"guard has type {t}, expected bool")


# -- evaluation --------------------------------------------------------------

def _value(expr: PredExpr, store) -> Union[str, bool]:
    if isinstance(expr, Lit):
        v = expr.value
        if isinstance(v, bool):
            return v
        return str(v)
    if isinstance(expr, Ref):
        table = store.recv_values if expr.kind == "recv" else store.results
        if expr.label not in table:
            raise UnboundReference(expr.label)
        return table[expr.label]
    return _eval(expr, store)


def _compare(op: str, left, right) -> bool:
    if isinstance(left, bool) or isinstance(right, bool):
        if not (isinstance(left, bool) and isinstance(right, bool)) or op not in ("==", "!="):
            raise PredicateTypeError(f"{op} on {left!r} and {right!r}")
        return (left == right) if op == "==" else (left != right)
    if op == "==":
        return left == right
    if op == "!=":
        return left != right
    if _INT_RE.match(left) and _INT_RE.match(right):
        left, right = int(left), int(right)
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


def _eval(expr: PredExpr, store) -> bool:
    if isinstance(expr, Cmp):
        return _compare(expr.op, _value(expr.left, store), _value(expr.right, store))
    if isinstance(expr, BoolOp):
        vals = [_eval_bool(a, store) for a in expr.args]  # strict
        return all(vals) if expr.op == "and" else any(vals)
    if isinstance(expr, Not):
        return not _eval_bool(expr.arg, store)
    if isinstance(expr, Lit) and isinstance(expr.value, bool):
        return expr.value
    raise PredicateTypeError(f"{render_pred(expr)} is not boolean")


def _eval_bool(expr: PredExpr, store) -> bool:
    v = _value(expr, store)
    if not isinstance(v, bool):
        raise PredicateTypeError(f"{render_pred(expr)} is not boolean")
    return v


def evaluate_pred(expr: PredExpr, store) -> bool:
    """Evaluate *expr* against a data store with ``recv_values`` and ``results``.

    ``==``/``!=`` compare raw strings. The ordering operators compare as
    integers when both sides are decimal integers, else lexicographically.
    """
    return _eval(expr, store)
