"""Constraint DSL: parsing and per-snapshot evaluation.

One constraint per line::

    C4: context ArduCopter inv: self.oclIsInState(Takeoff) and self.location.altitude_AGL>0 and self.location.altitude_AGL<=50

``#`` and ``--`` start comments.  The expression grammar covers numeric
literals, dotted ``self.`` field paths, comparisons (``> >= < <= = <>``),
``and``/``or``/``not``, parentheses, and ``self.oclIsInState(<State>)``.
Enumerated fields may be compared against their declared value names.

Scoping rule: a *top-level conjunct* ``self.oclIsInState(S) and <rest>``
makes the constraint a state invariant for ``S`` — the remainder is
evaluated only while the vehicle is in ``S`` (or in one of its flattened
``S.<sub>`` substates), and the constraint is not evaluated at all
elsewhere.  Read literally the conjunction would instead fail whenever the
vehicle is anywhere else, which would make every state invariant "violated"
almost all of the time; the invariant reading is the intended one.
``oclIsInState`` anywhere deeper in an expression is evaluated in place as
an ordinary boolean atom.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .domain import DomainSchema, Snapshot
from .statemachine import in_state

__all__ = [
    "Constraint",
    "ConstraintError",
    "EvalResult",
    "ViolationLedger",
    "parse_constraints",
    "evaluate",
    "record",
    "GENERAL",
]

GENERAL = None  # scope value for unscoped constraints


class ConstraintError(ValueError):
    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


# ---------------------------------------------------------------------------
# expression AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Path:
    path: str


@dataclass(frozen=True)
class EnumLit:
    code: int
    name: str


@dataclass(frozen=True)
class InState:
    state: str


@dataclass(frozen=True)
class Cmp:
    op: str
    left: "Num | Path | EnumLit"
    right: "Num | Path | EnumLit"


@dataclass(frozen=True)
class Not:
    arg: "Expr"


@dataclass(frozen=True)
class And:
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    args: tuple["Expr", ...]


@dataclass(frozen=True)
class Bool:
    value: bool


Expr = Num | Path | EnumLit | InState | Cmp | Not | And | Or | Bool


@dataclass(frozen=True)
class Constraint:
    cid: str
    context: str
    scope: str | None  # None => general, otherwise the state name
    body: Expr
    source: str

    @property
    def general(self) -> bool:
        return self.scope is None


# ---------------------------------------------------------------------------
# tokenizer / recursive-descent parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>-?\d+(?:\.\d+)?)|(?P<ident>[A-Za-z_][A-Za-z0-9_.]*)"
    r"|(?P<op><>|<=|>=|<|>|=|\(|\)))"
)

_HEADER = re.compile(
    r"(?P<cid>[A-Za-z_][A-Za-z0-9_]*)\s*:\s*context\s+(?P<ctx>[A-Za-z_][A-Za-z0-9_]*)"
    r"\s+inv\s*:\s*(?P<expr>.+)$"
)


class _Parser:
    def __init__(self, text, schema, states, lineno):
        self.schema = schema
        self.states = states
        self.lineno = lineno
        self.tokens = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                if text[pos:].strip():
                    raise ConstraintError(
                        f"unexpected character {text[pos:].strip()[0]!r}", lineno
                    )
                break
            self.tokens.append(m)
            pos = m.end()
        self.idx = 0

    def peek(self):
        if self.idx >= len(self.tokens):
            return None, None
        m = self.tokens[self.idx]
        for kind in ("num", "ident", "op"):
            if m.group(kind) is not None:
                return kind, m.group(kind)
        return None, None  # pragma: no cover

    def take(self):
        kind, val = self.peek()
        self.idx += 1
        return kind, val

    def expect(self, want):
        kind, val = self.take()
        if val != want:
            raise ConstraintError(f"expected {want!r}, got {val!r}", self.lineno)

    def fail(self, msg):
        raise ConstraintError(msg, self.lineno)

    # grammar: or_expr := and_expr ('or' and_expr)*
    #          and_expr := unary ('and' unary)*
    #          unary := 'not' unary | comparison
    #          comparison := operand (cmp operand)?
    #          operand := number | path | oclIsInState | '(' or_expr ')' | true | false
    def parse(self) -> Expr:
        expr = self.or_expr()
        kind, val = self.peek()
        if kind is not None:
            self.fail(f"trailing input near {val!r}")
        return expr

    def or_expr(self) -> Expr:
        args = [self.and_expr()]
        while self.peek() == ("ident", "or"):
            self.take()
            args.append(self.and_expr())
        return args[0] if len(args) == 1 else Or(tuple(args))

    def and_expr(self) -> Expr:
        args = [self.unary()]
        while self.peek() == ("ident", "and"):
            self.take()
            args.append(self.unary())
        return args[0] if len(args) == 1 else And(tuple(args))

    def unary(self) -> Expr:
        if self.peek() == ("ident", "not"):
            self.take()
            return Not(self.unary())
        return self.comparison()

    def comparison(self) -> Expr:
        left = self.operand()
        kind, val = self.peek()
        if kind == "op" and val in ("<", "<=", ">", ">=", "=", "<>"):
            self.take()
            right = self.operand(partner=left)
            left = self._check_cmp(val, left, right)
        return left

    def _check_cmp(self, op, left, right) -> Cmp:
        # resolve bare identifiers against the enum table of the other side
        if isinstance(left, _BareIdent):
            left = self._resolve_enum(left, right)
        if isinstance(right, _BareIdent):
            right = self._resolve_enum(right, left)
        for side in (left, right):
            if isinstance(side, (InState, And, Or, Not, Bool)):
                self.fail("comparison operands must be numeric")
        return Cmp(op, left, right)

    def _resolve_enum(self, ident, other):
        if not isinstance(other, Path):
            self.fail(f"cannot resolve identifier {ident.name!r}")
        f = self.schema.field_at(other.path)
        if f.kind != "enum":
            self.fail(
                f"identifier {ident.name!r} compared against non-enum path {other.path!r}"
            )
        return EnumLit(self.schema.enum_code(other.path, ident.name), ident.name)

    def operand(self, partner=None) -> Expr:
        kind, val = self.take()
        if kind == "num":
            return Num(float(val))
        if kind == "op" and val == "(":
            inner = self.or_expr()
            self.expect(")")
            return inner
        if kind == "ident":
            if val == "true":
                return Bool(True)
            if val == "false":
                return Bool(False)
            if val == "self.oclIsInState" or val == "oclIsInState":
                self.expect("(")
                k2, state = self.take()
                if k2 != "ident":
                    self.fail("oclIsInState needs a state name")
                self.expect(")")
                if self.states is not None and not any(
                    in_state(state, s) or in_state(s, state) for s in self.states
                ):
                    self.fail(f"unknown state {state!r} in oclIsInState")
                return InState(state)
            if val.startswith("self."):
                path = val[len("self.") :]
                if not self.schema.has_path(path):
                    self.fail(f"unknown field path {path!r}")
                return Path(path)
            return _BareIdent(val)
        self.fail("expected a value" if val is None else f"unexpected token {val!r}")


@dataclass(frozen=True)
class _BareIdent:
    """Identifier awaiting enum resolution inside a comparison."""

    name: str


def parse_constraints(
    text: str,
    schema: DomainSchema,
    states=None,
) -> list[Constraint]:
    """Parse a constraint file against ``schema``.

    ``states``, when given, is the collection of legal state names used to
    validate ``oclIsInState`` references (dotted prefixes of flattened
    substates count).  Duplicate ids, unknown paths, and syntax errors are
    rejected with their line number.
    """
    out: list[Constraint] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        line = line.split("--", 1)[0].strip()
        if not line:
            continue
        m = _HEADER.match(line)
        if not m:
            raise ConstraintError(
                "expected '<Id>: context <Class> inv: <expr>'", lineno
            )
        cid, ctx = m.group("cid"), m.group("ctx")
        if cid in seen:
            raise ConstraintError(f"duplicate constraint id {cid!r}", lineno)
        seen.add(cid)
        expr = _Parser(m.group("expr"), schema, states, lineno).parse()
        _require_boolean(expr, lineno)
        scope, body = _split_scope(expr)
        out.append(Constraint(cid, ctx, scope, body, line))
    return out


def _require_boolean(expr: Expr, lineno) -> None:
    """The constraint as a whole, and every logical operand, must be a
    boolean-valued expression."""
    if isinstance(expr, _BareIdent):
        raise ConstraintError(f"unresolved identifier {expr.name!r}", lineno)
    if isinstance(expr, (Num, Path, EnumLit)):
        raise ConstraintError("expression is numeric where a boolean is needed", lineno)
    if isinstance(expr, Not):
        _require_boolean(expr.arg, lineno)
    elif isinstance(expr, (And, Or)):
        for arg in expr.args:
            _require_boolean(arg, lineno)


def _split_scope(expr: Expr) -> tuple[str | None, Expr]:
    """Hoist a leading top-level ``oclIsInState`` conjunct into the scope."""
    if isinstance(expr, InState):
        return expr.state, Bool(True)
    if isinstance(expr, And):
        for i, arg in enumerate(expr.args):
            if isinstance(arg, InState):
                rest = expr.args[:i] + expr.args[i + 1 :]
                body = rest[0] if len(rest) == 1 else And(rest)
                return arg.state, body
    return GENERAL, expr


# ---------------------------------------------------------------------------
# evaluation

_CMP_FN = {
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    "=": lambda a, b: a == b,
    "<>": lambda a, b: a != b,
}


def _compile(expr: Expr):
    """Compile an AST to a closure snapshot -> bool|float.  Exact IEEE-754
    comparison semantics, no epsilon."""
    if isinstance(expr, Bool):
        v = expr.value
        return lambda snap: v
    if isinstance(expr, Num):
        v = expr.value
        return lambda snap: v
    if isinstance(expr, EnumLit):
        v = float(expr.code)
        return lambda snap: v
    if isinstance(expr, Path):
        p = expr.path
        return lambda snap: snap.value(p)
    if isinstance(expr, InState):
        s = expr.state
        return lambda snap: in_state(snap.flight_state, s)
    if isinstance(expr, Cmp):
        fn = _CMP_FN[expr.op]
        left = _compile(expr.left)
        right = _compile(expr.right)
        return lambda snap: fn(left(snap), right(snap))
    if isinstance(expr, Not):
        arg = _compile(expr.arg)
        return lambda snap: not arg(snap)
    if isinstance(expr, And):
        parts = [_compile(a) for a in expr.args]
        return lambda snap: all(p(snap) for p in parts)
    if isinstance(expr, Or):
        parts = [_compile(a) for a in expr.args]
        return lambda snap: any(p(snap) for p in parts)
    raise ConstraintError(f"cannot compile {expr!r}")  # pragma: no cover


@dataclass(frozen=True)
class EvalResult:
    """Outcome of one evaluation pass: which constraints were applicable,
    which failed, and the violation count ``m = len(failed)``."""

    evaluated: tuple[str, ...]
    failed: tuple[str, ...]

    @property
    def m(self) -> int:
        return len(self.failed)


# keyed by value (Constraint is frozen/hashable); bounded by parsed files
_COMPILED_CACHE: dict[Constraint, object] = {}


def _compiled(c: Constraint):
    fn = _COMPILED_CACHE.get(c)
    if fn is None:
        fn = _compile(c.body)
        _COMPILED_CACHE[c] = fn
    return fn


def evaluate(constraints, snapshot: Snapshot) -> EvalResult:
    """Evaluate all applicable constraints against one snapshot.

    General constraints always apply; state invariants apply only when the
    snapshot's flight state is in their scope.  Each failed id counts once
    per call, so ``m`` is the number of distinct violated constraints.
    """
    evaluated = []
    failed = []
    for c in constraints:
        if c.scope is not None and not in_state(snapshot.flight_state, c.scope):
            continue
        evaluated.append(c.cid)
        if not _compiled(c)(snapshot):
            failed.append(c.cid)
    return EvalResult(tuple(evaluated), tuple(failed))


@dataclass
class ViolationLedger:
    """Per (flight state, constraint id) violation bookkeeping: total
    occurrences plus the once-only "unique" flag."""

    totals: dict[tuple[str, str], int] = field(default_factory=dict)

    def total(self, state: str, cid: str) -> int:
        return self.totals.get((state, cid), 0)

    def unique_count(self, state: str) -> int:
        return sum(1 for (s, _cid) in self.totals if s == state)

    def total_count(self, state: str) -> int:
        return sum(n for (s, _cid), n in self.totals.items() if s == state)

    def states(self) -> list[str]:
        return sorted({s for (s, _cid) in self.totals})

    def grand_total(self) -> int:
        return sum(self.totals.values())

    def grand_unique(self) -> int:
        return len(self.totals)


def record(ledger: ViolationLedger, state: str, result: EvalResult) -> ViolationLedger:
    """Fold one evaluation result into the ledger (mutates and returns it)."""
    for cid in result.failed:
        key = (state, cid)
        ledger.totals[key] = ledger.totals.get(key, 0) + 1
    return ledger
