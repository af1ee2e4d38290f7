"""Interpreter for the core event-driven calculus.

The machine runs programs built from thunks (function values bound to
arguments) with explicit permission stores: an enabled-events set feeding a
non-deterministic event loop and a disallowed-calls set whose members
terminate the program in the bad state when invoked directly.  An
instrumented stepper labels package-switching calls and returns with
observable messages, so a run yields an observable trace.

Surface syntax::

    let x = e in e
    x => [app|fwk] e          (x, y) => [fwk] e
    bind e e    invoke e
    enable e    disable e     allow e    disallow e
    thk  unit  true  false  42  a#1:Activity
    if e then e else e        e ; e
    newcell e   get e   set e e
    add e e     eq e e

``#`` starts a comment at the beginning of a line or after whitespace.
The ``force`` form is machine-internal and rejected in surface programs.
"""

from __future__ import annotations

import itertools
import random
import re
from dataclasses import dataclass, field
from typing import Optional, Union

from .messages import (
    APP,
    CB,
    CBRET,
    CI,
    CIRET,
    DIS_CI,
    FALSE,
    FWK,
    TRUE,
    UNIT,
    Bool,
    FunctionSymbol,
    Int,
    Message,
    ObjectId,
    Str,
    Thunk,
    Trace,
    Unit,
    Value,
    strip_comment,
)


class ProgramError(Exception):
    """Base error for program parsing and scope checking."""

    def __init__(self, msg: str, line: Optional[int] = None):
        if line is not None:
            msg = f"line {line}: {msg}"
        super().__init__(msg)


class StuckError(Exception):
    """The machine reached a state no rule applies to."""


class ScheduleError(Exception):
    """An explicit schedule selected an event index out of range."""


# ---------------------------------------------------------------------------
# Surface AST


class Expr:
    __slots__ = ()


@dataclass(frozen=True)
class ELit(Expr):
    value: Value


@dataclass(frozen=True)
class EVar(Expr):
    name: str


@dataclass(frozen=True)
class EThk(Expr):
    pass


@dataclass(frozen=True)
class ELam(Expr):
    params: tuple[str, ...]
    package: str
    body: Expr
    name: str = "<anon>"


@dataclass(frozen=True)
class ELet(Expr):
    var: str
    bound: Expr
    body: Expr


@dataclass(frozen=True)
class EIf(Expr):
    cond: Expr
    then: Expr
    orelse: Expr


@dataclass(frozen=True)
class EPrim(Expr):
    """A primitive machine form: op applied to operand expressions.

    Ops: bind, invoke, enable, disable, allow, disallow, newcell, get, set,
    add, eq.  After normalization every operand is an atom.
    """

    op: str
    operands: tuple[Expr, ...]


UNARY_OPS = ("invoke", "enable", "disable", "allow", "disallow", "newcell", "get")
BINARY_OPS = ("bind", "set", "add", "eq")

KEYWORDS = {
    "let", "in", "if", "then", "else", "thk", "unit", "true", "false",
    "app", "fwk", "force", *UNARY_OPS, *BINARY_OPS,
}


# ---------------------------------------------------------------------------
# Lexer

_TOKEN_RE = re.compile(
    r"""
    (?P<objlit>[A-Za-z_]\w*\#\d+:[A-Za-z_]\w*)
  | (?P<ident>[A-Za-z_]\w*)
  | (?P<int>-?\d+)
  | (?P<arrow>=>)
  | (?P<punct>[()\[\],;=])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int


def _lex(source: str) -> list[Token]:
    tokens: list[Token] = []
    for lineno, raw in enumerate(source.splitlines(), start=1):
        text = strip_comment(raw)
        pos = 0
        while pos < len(text):
            if text[pos].isspace():
                pos += 1
                continue
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise ProgramError(f"unexpected character {text[pos]!r}", lineno)
            kind = m.lastgroup or "punct"
            tokens.append(Token(kind, m.group(0), lineno))
            pos = m.end()
    return tokens


# ---------------------------------------------------------------------------
# Parser (recursive descent with token-index lookahead)


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self, offset: int = 0) -> Optional[Token]:
        idx = self.pos + offset
        return self.tokens[idx] if idx < len(self.tokens) else None

    def next(self) -> Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1].line if self.tokens else None
            raise ProgramError("unexpected end of program", last)
        self.pos += 1
        return tok

    def expect(self, text: str) -> Token:
        tok = self.next()
        if tok.text != text:
            raise ProgramError(f"expected {text!r}, got {tok.text!r}", tok.line)
        return tok

    def at(self, text: str) -> bool:
        tok = self.peek()
        return tok is not None and tok.text == text

    # expr := let | if | seq
    def parse_expr(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ProgramError("unexpected end of program")
        if tok.text == "let":
            self.next()
            name_tok = self.next()
            if name_tok.kind != "ident" or name_tok.text in KEYWORDS:
                raise ProgramError(f"bad binder {name_tok.text!r}", name_tok.line)
            self.expect("=")
            bound = self.parse_expr_no_seq()
            self.expect("in")
            body = self.parse_expr()
            if isinstance(bound, ELam) and bound.name == "<anon>":
                bound = ELam(bound.params, bound.package, bound.body, name_tok.text)
            return ELet(name_tok.text, bound, body)
        if tok.text == "if":
            self.next()
            cond = self.parse_expr_no_seq()
            self.expect("then")
            then = self.parse_expr_no_seq()
            self.expect("else")
            orelse = self.parse_expr_no_seq()
            return self._maybe_seq(EIf(cond, then, orelse))
        return self._maybe_seq(self.parse_prefix())

    # Like parse_expr but a following ';' belongs to the enclosing context
    # (used for let right-hand sides and if arms, which extend rightwards
    # only via explicit parentheses).
    def parse_expr_no_seq(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ProgramError("unexpected end of program")
        if tok.text == "let":
            return self.parse_expr()
        if tok.text == "if":
            self.next()
            cond = self.parse_expr_no_seq()
            self.expect("then")
            then = self.parse_expr_no_seq()
            self.expect("else")
            orelse = self.parse_expr_no_seq()
            return EIf(cond, then, orelse)
        return self.parse_prefix()

    def _maybe_seq(self, first: Expr) -> Expr:
        if self.at(";"):
            self.next()
            rest = self.parse_expr()
            return ELet("%seq", first, rest)
        return first

    def parse_prefix(self) -> Expr:
        tok = self.peek()
        if tok is not None and tok.kind == "ident":
            if tok.text == "force":
                raise ProgramError("'force' is machine-internal", tok.line)
            if tok.text in UNARY_OPS:
                self.next()
                return EPrim(tok.text, (self.parse_operand(),))
            if tok.text in BINARY_OPS:
                self.next()
                a = self.parse_operand()
                b = self.parse_operand()
                return EPrim(tok.text, (a, b))
        return self.parse_operand()

    def _lambda_ahead(self) -> bool:
        # '(' ident (',' ident)* ')' '=>' ...
        if not self.at("("):
            return False
        i = 1
        while True:
            tok = self.peek(i)
            if tok is None or tok.kind != "ident":
                return False
            i += 1
            tok = self.peek(i)
            if tok is None:
                return False
            if tok.text == ",":
                i += 1
                continue
            if tok.text == ")":
                nxt = self.peek(i + 1)
                return nxt is not None and nxt.text == "=>"
            return False

    def parse_lambda(self) -> ELam:
        params: list[str] = []
        if self.at("("):
            self.next()
            while True:
                tok = self.next()
                if tok.kind != "ident" or tok.text in KEYWORDS:
                    raise ProgramError(f"bad parameter {tok.text!r}", tok.line)
                params.append(tok.text)
                if self.at(","):
                    self.next()
                    continue
                self.expect(")")
                break
        else:
            tok = self.next()
            if tok.kind != "ident" or tok.text in KEYWORDS:
                raise ProgramError(f"bad parameter {tok.text!r}", tok.line)
            params.append(tok.text)
        self.expect("=>")
        self.expect("[")
        pkg_tok = self.next()
        if pkg_tok.text not in (APP, FWK):
            raise ProgramError(f"package tag must be app or fwk, got {pkg_tok.text!r}", pkg_tok.line)
        self.expect("]")
        body = self.parse_expr()
        if len(set(params)) != len(params):
            raise ProgramError("duplicate parameter names", pkg_tok.line)
        return ELam(tuple(params), pkg_tok.text, body)

    def parse_operand(self) -> Expr:
        tok = self.peek()
        if tok is None:
            raise ProgramError("unexpected end of program")
        if self._lambda_ahead():
            return self.parse_lambda()
        if tok.kind == "ident" and self.peek(1) is not None and self.peek(1).text == "=>":
            return self.parse_lambda()
        if tok.text == "(":
            self.next()
            inner = self.parse_expr()
            self.expect(")")
            return inner
        if tok.kind == "objlit":
            self.next()
            label, rest = tok.text.split("#", 1)
            index, type_name = rest.split(":", 1)
            return ELit(ObjectId(label, int(index), type_name))
        if tok.kind == "int":
            self.next()
            return ELit(Int(int(tok.text)))
        if tok.kind == "ident":
            if tok.text == "unit":
                self.next()
                return ELit(UNIT)
            if tok.text == "true":
                self.next()
                return ELit(TRUE)
            if tok.text == "false":
                self.next()
                return ELit(FALSE)
            if tok.text == "thk":
                self.next()
                return EThk()
            if tok.text == "force":
                raise ProgramError("'force' is machine-internal", tok.line)
            if tok.text in KEYWORDS:
                raise ProgramError(f"unexpected keyword {tok.text!r}", tok.line)
            self.next()
            return EVar(tok.text)
        raise ProgramError(f"unexpected token {tok.text!r}", tok.line)


# ---------------------------------------------------------------------------
# Static checks and normalization


def _check_scopes(expr: Expr, bound: frozenset[str], fun_pkg: Optional[str]) -> None:
    if isinstance(expr, ELit):
        return
    if isinstance(expr, EVar):
        if expr.name not in bound:
            raise ProgramError(f"unbound identifier {expr.name!r}")
        return
    if isinstance(expr, EThk):
        if fun_pkg is None:
            raise ProgramError("'thk' outside a function body")
        return
    if isinstance(expr, ELam):
        _check_scopes(expr.body, bound | set(expr.params), expr.package)
        return
    if isinstance(expr, ELet):
        _check_scopes(expr.bound, bound, fun_pkg)
        _check_scopes(expr.body, bound | {expr.var}, fun_pkg)
        return
    if isinstance(expr, EIf):
        for sub in (expr.cond, expr.then, expr.orelse):
            _check_scopes(sub, bound, fun_pkg)
        return
    if isinstance(expr, EPrim):
        if expr.op in ("enable", "disable", "allow", "disallow") and fun_pkg == APP:
            raise ProgramError(f"app code may not use {expr.op!r}")
        for sub in expr.operands:
            _check_scopes(sub, bound, fun_pkg)
        return
    raise ProgramError(f"unknown expression node {type(expr).__name__}")


def _is_atom(expr: Expr) -> bool:
    return isinstance(expr, (ELit, EVar, EThk, ELam))


class _Normalizer:
    """Rewrite operands of primitive forms and if-conditions into atoms.

    Compound operands are let-bound to fresh ``%n`` temporaries so that the
    machine's primitive steps only ever see values, mirroring a let-normal
    form presentation."""

    def __init__(self) -> None:
        self._fresh = itertools.count()

    def normalize(self, expr: Expr) -> Expr:
        if _is_atom(expr):
            if isinstance(expr, ELam):
                return ELam(expr.params, expr.package, self.normalize(expr.body), expr.name)
            return expr
        if isinstance(expr, ELet):
            return ELet(expr.var, self.normalize(expr.bound), self.normalize(expr.body))
        if isinstance(expr, EIf):
            cond, wrap = self._atomize(expr.cond)
            return wrap(EIf(cond, self.normalize(expr.then), self.normalize(expr.orelse)))
        if isinstance(expr, EPrim):
            wraps = []
            atoms = []
            for operand in expr.operands:
                atom, wrap = self._atomize(operand)
                atoms.append(atom)
                wraps.append(wrap)
            out: Expr = EPrim(expr.op, tuple(atoms))
            for wrap in reversed(wraps):
                out = wrap(out)
            return out
        raise ProgramError(f"cannot normalize {type(expr).__name__}")

    def _atomize(self, expr: Expr):
        expr = self.normalize(expr)
        if _is_atom(expr):
            return expr, lambda e: e
        tmp = f"%{next(self._fresh)}"
        return EVar(tmp), (lambda e, tmp=tmp, bound=expr: ELet(tmp, bound, e))


def parse_program(text: str) -> Expr:
    """Parse, scope-check, and normalize a surface program."""
    parser = _Parser(_lex(text))
    expr = parser.parse_expr()
    if parser.peek() is not None:
        tok = parser.peek()
        raise ProgramError(f"trailing tokens starting at {tok.text!r}", tok.line)
    _check_scopes(expr, frozenset(), None)
    return _Normalizer().normalize(expr)


def load_program(path) -> Expr:
    with open(path, "r", encoding="utf-8") as f:
        return parse_program(f.read())


# ---------------------------------------------------------------------------
# Runtime values


@dataclass(frozen=True)
class Closure(Value):
    """A function value with its captured environment.

    Closures compare by allocation identity: the uid is assigned when the
    function literal is evaluated, so two thunks over the same let-bound
    function are equal while distinct literals never are."""

    params: tuple[str, ...]
    body: Expr = field(compare=False, hash=False, repr=False)
    package: str
    env: "Env" = field(compare=False, hash=False, repr=False)
    name: str
    uid: int

    def sort_key(self) -> tuple:
        return (5, self.name, self.uid)

    def __str__(self) -> str:
        return f"<fun {self.name} [{self.package}]>"


@dataclass(frozen=True)
class RThunk(Value):
    closure: Closure
    args: tuple[Value, ...]

    def sort_key(self) -> tuple:
        return (6, self.closure.name, self.closure.uid, tuple(a.sort_key() for a in self.args))

    def __str__(self) -> str:
        return f"{self.closure.name}[{','.join(map(str, self.args))}]"


@dataclass(frozen=True)
class CellRef(Value):
    cell: int

    def sort_key(self) -> tuple:
        return (7, self.cell)

    def __str__(self) -> str:
        return f"<cell {self.cell}>"


class Env:
    """Immutable chained environment."""

    __slots__ = ("_frame", "_parent")

    def __init__(self, frame: Optional[dict] = None, parent: Optional["Env"] = None):
        self._frame = frame or {}
        self._parent = parent

    def extend(self, name: str, value: Value) -> "Env":
        return Env({name: value}, self)

    def extend_many(self, items: dict) -> "Env":
        return Env(dict(items), self)

    def lookup(self, name: str) -> Value:
        env: Optional[Env] = self
        while env is not None:
            if name in env._frame:
                return env._frame[name]
            env = env._parent
        raise StuckError(f"unbound identifier {name!r} at run time")


EMPTY_ENV = Env()


# Continuation frames (top of stack is the last tuple element).


@dataclass(frozen=True)
class FLet:
    var: str
    body: Expr
    env: Env


@dataclass(frozen=True)
class FThunk:
    thunk: RThunk


@dataclass(frozen=True)
class FEvent:
    thunk: RThunk


Frame = Union[FLet, FThunk, FEvent]


@dataclass(frozen=True)
class MForce:
    """Machine-internal control form: a thunk about to be applied."""

    thunk: RThunk


BAD = "bad"


@dataclass(frozen=True)
class MachineState:
    """Configuration: control, environment, cell store, permission stores,
    and the continuation stack.  The distinguished bad state uses the BAD
    control marker."""

    control: object
    env: Env = EMPTY_ENV
    store: tuple[tuple[int, Value], ...] = ()
    enabled: frozenset = frozenset()
    disallowed: frozenset = frozenset()
    cont: tuple[Frame, ...] = ()

    def is_bad(self) -> bool:
        return self.control is BAD

    def is_value(self) -> bool:
        return isinstance(self.control, Value)

    def is_terminal(self) -> bool:
        return self.is_bad() or (self.is_value() and not self.cont and not self.enabled)

    def store_get(self, cell: int) -> Value:
        for cid, v in self.store:
            if cid == cell:
                return v
        raise StuckError(f"read of unallocated cell {cell}")

    def store_set(self, cell: int, value: Value) -> tuple[tuple[int, Value], ...]:
        return tuple((cid, value if cid == cell else v) for cid, v in self.store)


def initial_state(program: Expr) -> MachineState:
    return MachineState(control=program)


def _caller_package(cont: tuple[Frame, ...]) -> Optional[str]:
    """Package of the running caller thunk, from the continuation."""
    for frame in reversed(cont):
        if isinstance(frame, (FThunk, FEvent)):
            return frame.thunk.closure.package
    return None


_SERIALIZABLE = (Unit, Bool, Int, Str, ObjectId)


def _observable_thunk(thunk: RThunk) -> Thunk:
    for a in thunk.args:
        if not isinstance(a, _SERIALIZABLE):
            raise StuckError(
                f"value {a} crosses the app-framework interface but is not observable"
            )
    fun = FunctionSymbol(thunk.closure.name, thunk.closure.package)
    return Thunk(fun, thunk.args)


def _force_label(thunk: RThunk, cont: tuple[Frame, ...]) -> Optional[Message]:
    callee = thunk.closure.package
    caller = _caller_package(cont)
    if callee == APP and caller == FWK:
        return Message(CB, _observable_thunk(thunk))
    if callee == FWK and caller == APP:
        return Message(CI, _observable_thunk(thunk))
    return None


def _return_label(thunk: RThunk, rest: tuple[Frame, ...], value: Value) -> Optional[Message]:
    returnee = thunk.closure.package
    caller = _caller_package(rest)
    if returnee == FWK and caller == APP:
        if not isinstance(value, _SERIALIZABLE):
            raise StuckError(f"return value {value} crosses the interface but is not observable")
        return Message(CIRET, _observable_thunk(thunk), value)
    if returnee == APP and caller == FWK:
        if not isinstance(value, _SERIALIZABLE):
            raise StuckError(f"return value {value} crosses the interface but is not observable")
        return Message(CBRET, _observable_thunk(thunk), value)
    return None


def sorted_enabled(state: MachineState) -> list[RThunk]:
    return sorted(state.enabled, key=lambda t: t.sort_key())


def _eval_atom(expr: Expr, env: Env, uid_counter) -> Value:
    if isinstance(expr, ELit):
        return expr.value
    if isinstance(expr, EVar):
        return env.lookup(expr.name)
    if isinstance(expr, EThk):
        return env.lookup("thk")
    if isinstance(expr, ELam):
        return Closure(expr.params, expr.body, expr.package, env, expr.name, next(uid_counter))
    raise StuckError(f"operand {type(expr).__name__} is not an atom")


class Machine:
    """Small-step executor.  A Machine owns the uid supply for closures and
    cells so that states from one run are internally consistent."""

    def __init__(self) -> None:
        self._uids = itertools.count(1)
        self._cells = itertools.count(1)

    def step(self, state: MachineState) -> list[tuple[Optional[Message], MachineState]]:
        """All successors of a non-terminal state with their message labels.

        Every rule is deterministic except event dispatch, which yields one
        successor per enabled thunk (in sorted order)."""
        if state.is_terminal():
            raise ValueError("step on a terminal state")
        c = state.control

        if isinstance(c, Value):
            if state.cont:
                top = state.cont[-1]
                rest = state.cont[:-1]
                if isinstance(top, FLet):
                    env2 = top.env.extend(top.var, c)
                    return [(None, MachineState(top.body, env2, state.store,
                                                state.enabled, state.disallowed, rest))]
                if isinstance(top, FThunk):
                    label = _return_label(top.thunk, rest, c)
                    return [(label, MachineState(c, state.env, state.store,
                                                 state.enabled, state.disallowed, rest))]
                if isinstance(top, FEvent):
                    return [(None, MachineState(c, state.env, state.store,
                                                state.enabled, state.disallowed, rest))]
                raise StuckError(f"unknown continuation frame {top!r}")
            # Event: value at the top level, pick any enabled thunk.
            succs = []
            for thunk in sorted_enabled(state):
                succs.append((None, MachineState(MForce(thunk), state.env, state.store,
                                                 state.enabled, state.disallowed,
                                                 (FEvent(thunk),))))
            return succs

        if isinstance(c, MForce):
            thunk = c.thunk
            closure = thunk.closure
            if len(thunk.args) != len(closure.params):
                raise StuckError(
                    f"forcing {closure.name} with {len(thunk.args)} of "
                    f"{len(closure.params)} arguments"
                )
            label = _force_label(thunk, state.cont)
            frame = dict(zip(closure.params, thunk.args))
            frame["thk"] = thunk
            env2 = closure.env.extend_many(frame)
            return [(label, MachineState(closure.body, env2, state.store,
                                         state.enabled, state.disallowed,
                                         state.cont + (FThunk(thunk),)))]

        if isinstance(c, ELet):
            return [(None, MachineState(c.bound, state.env, state.store,
                                        state.enabled, state.disallowed,
                                        state.cont + (FLet(c.var, c.body, state.env),)))]

        if isinstance(c, EIf):
            cond = _eval_atom(c.cond, state.env, self._uids)
            if not isinstance(cond, Bool):
                raise StuckError(f"if condition is {cond}, not a boolean")
            branch = c.then if cond.flag else c.orelse
            return [(None, MachineState(branch, state.env, state.store,
                                        state.enabled, state.disallowed, state.cont))]

        if _is_atom(c):
            return [(None, MachineState(_eval_atom(c, state.env, self._uids), state.env,
                                        state.store, state.enabled, state.disallowed,
                                        state.cont))]

        if isinstance(c, EPrim):
            return [self._prim(c, state)]

        raise StuckError(f"no rule for control {type(c).__name__}")

    def _prim(self, expr: EPrim, state: MachineState) -> tuple[Optional[Message], MachineState]:
        vals = [_eval_atom(a, state.env, self._uids) for a in expr.operands]
        op = expr.op

        def done(value: Value, *, store=None, enabled=None, disallowed=None):
            return (None, MachineState(
                value, state.env,
                state.store if store is None else store,
                state.enabled if enabled is None else enabled,
                state.disallowed if disallowed is None else disallowed,
                state.cont))

        if op == "bind":
            target, arg = vals
            if isinstance(target, Closure):
                return done(RThunk(target, (arg,)))
            if isinstance(target, RThunk):
                if len(target.args) >= len(target.closure.params):
                    raise StuckError(f"bind on saturated thunk {target}")
                return done(RThunk(target.closure, target.args + (arg,)))
            raise StuckError(f"bind on non-function {target}")
        if op == "invoke":
            (thunk,) = vals
            if not isinstance(thunk, RThunk):
                raise StuckError(f"invoke on non-thunk {thunk}")
            if thunk in state.disallowed:
                label = Message(DIS_CI, _observable_thunk(thunk))
                return (label, MachineState(BAD, state.env, state.store,
                                            state.enabled, state.disallowed, state.cont))
            return (None, MachineState(MForce(thunk), state.env, state.store,
                                       state.enabled, state.disallowed, state.cont))
        if op in ("enable", "disable", "allow", "disallow"):
            (thunk,) = vals
            if not isinstance(thunk, RThunk):
                raise StuckError(f"{op} on non-thunk {thunk}")
            if op == "enable":
                return done(thunk, enabled=state.enabled | {thunk})
            if op == "disable":
                return done(thunk, enabled=state.enabled - {thunk})
            if op == "disallow":
                return done(thunk, disallowed=state.disallowed | {thunk})
            return done(thunk, disallowed=state.disallowed - {thunk})
        if op == "newcell":
            (v,) = vals
            cell = next(self._cells)
            return done(CellRef(cell), store=state.store + ((cell, v),))
        if op == "get":
            (ref,) = vals
            if not isinstance(ref, CellRef):
                raise StuckError(f"get on non-cell {ref}")
            return done(state.store_get(ref.cell))
        if op == "set":
            ref, v = vals
            if not isinstance(ref, CellRef):
                raise StuckError(f"set on non-cell {ref}")
            state.store_get(ref.cell)
            return done(UNIT, store=state.store_set(ref.cell, v))
        if op == "add":
            a, b = vals
            if not (isinstance(a, Int) and isinstance(b, Int)):
                raise StuckError("add on non-integers")
            return done(Int(a.n + b.n))
        if op == "eq":
            a, b = vals
            return done(Bool(a == b))
        raise StuckError(f"unknown primitive {op!r}")


# ---------------------------------------------------------------------------
# Schedules and whole runs


@dataclass(frozen=True)
class Schedule:
    """Event choices for a run: an explicit index list or a seeded RNG."""

    picks: Optional[tuple[int, ...]] = None
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        if (self.picks is None) == (self.seed is None):
            raise ValueError("schedule is either an explicit list or a seed")


def parse_schedule(text: str) -> Schedule:
    text = text.strip()
    if text.startswith("seed:"):
        return Schedule(seed=int(text[len("seed:"):]))
    picks = tuple(int(p) for p in re.split(r"[,\s]+", text) if p)
    return Schedule(picks=picks)


FINISHED = "finished"
BAD_STATUS = "bad"
BUDGET_EXHAUSTED = "budget_exhausted"
STUCK = "stuck"


@dataclass(frozen=True)
class RunResult:
    trace: Trace
    status: str
    steps: int


def run(program: Expr, schedule: Schedule, max_steps: int = 10000) -> RunResult:
    """Execute a program under a schedule, collecting the observable trace.

    Status is ``bad`` iff the trace ends in a dis message; an explicit
    schedule that runs out at the event loop finishes the run."""
    if max_steps < 1:
        raise ValueError("max_steps must be positive")
    machine = Machine()
    state = initial_state(program)
    rng = random.Random(schedule.seed) if schedule.seed is not None else None
    labels: list[Message] = []
    pick_pos = 0
    steps = 0
    status = BUDGET_EXHAUSTED
    while steps < max_steps:
        if state.is_bad():
            status = BAD_STATUS
            break
        if state.is_value() and not state.cont:
            if not state.enabled:
                status = FINISHED
                break
            if rng is None:
                if pick_pos >= len(schedule.picks):
                    status = FINISHED
                    break
                choice = schedule.picks[pick_pos]
                pick_pos += 1
            else:
                choice = rng.randrange(len(state.enabled))
            succs = machine.step(state)
            if not 0 <= choice < len(succs):
                raise ScheduleError(
                    f"schedule index {choice} out of range for {len(succs)} enabled events"
                )
            label, state = succs[choice]
        else:
            try:
                succs = machine.step(state)
            except StuckError:
                status = STUCK
                break
            if len(succs) != 1:
                raise AssertionError("only event dispatch may fan out")
            label, state = succs[0]
        if label is not None:
            labels.append(label)
        steps += 1
    trace = Trace(tuple(labels))
    return RunResult(trace, status, steps)


# ---------------------------------------------------------------------------
# Program shape check (framework preamble + init invocation)


def uses_framework_init(program: Expr) -> bool:
    """True if the program's main expression, after its defining lets,
    begins by invoking a thunk over a fwk-tagged function (the framework's
    designated init)."""
    bindings: dict[str, Expr] = {}

    def resolve(e: Expr) -> Expr:
        seen = set()
        while isinstance(e, EVar) and e.name in bindings and e.name not in seen:
            seen.add(e.name)
            e = bindings[e.name]
        return e

    def fun_is_fwk(e: Expr) -> bool:
        e = resolve(e)
        if isinstance(e, ELam):
            return e.package == FWK
        if isinstance(e, EPrim) and e.op == "bind":
            return fun_is_fwk(e.operands[0])
        return False

    expr = program
    while isinstance(expr, ELet):
        bindings[expr.var] = expr.bound
        expr = expr.body
    if isinstance(expr, EPrim) and expr.op == "invoke":
        return fun_is_fwk(expr.operands[0])
    return False
