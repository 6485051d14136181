"""Tracing tree-walking interpreter.

Integers are 64-bit two's complement with wrap-around. ``/`` truncates toward
zero and ``%`` takes the sign of the dividend; either by zero traps. ``abs``
saturates, so ``abs(x) >= 0`` holds for every input.
"""
from __future__ import annotations

import sys
from dataclasses import dataclass, field
from typing import Callable, Optional

from .syntax import (
    Assign, Binary, BoolLit, Builtin, Call, CallStmt, ConstRef, Emit, Ext, FieldRef, If,
    IntLit, LocalDecl, Nop, PRIMITIVES, Program, Return, Unary, Var, While,
)
from .testcase import AssertStep, CallStep, NewStep, TestCase

DEFAULT_STEP_LIMIT = 100_000
MAX_CALL_DEPTH = 200
INT_MIN = -(2**63)
INT_MAX = 2**63 - 1

if sys.getrecursionlimit() < 20_000:
    sys.setrecursionlimit(20_000)


def wrap(v: int) -> int:
    if INT_MIN <= v <= INT_MAX:
        return v
    return ((v - INT_MIN) % 2**64) + INT_MIN


def int_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return wrap(q if (a < 0) == (b < 0) else -q)


def int_mod(a: int, b: int) -> int:
    r = abs(a) % abs(b)
    return r if a >= 0 else -r


def arith(op: str, a: int, b: int) -> int:
    """Apply an arithmetic operator; raises ZeroDivisionError on ``/0`` and ``%0``."""
    if op == "+":
        return wrap(a + b)
    if op == "-":
        return wrap(a - b)
    if op == "*":
        return wrap(a * b)
    if b == 0:
        raise ZeroDivisionError
    if op == "/":
        return int_div(a, b)
    return int_mod(a, b)


def compare(op: str, a, b) -> bool:
    if op == "<":
        return a < b
    if op == "<=":
        return a <= b
    if op == ">":
        return a > b
    if op == ">=":
        return a >= b
    if op == "==":
        return a == b
    return a != b


# -- results -----------------------------------------------------------------


@dataclass(frozen=True)
class Pass:
    def __str__(self) -> str:
        return "pass"


@dataclass(frozen=True)
class AssertFail:
    step: int
    expected: object
    actual: object

    def __str__(self) -> str:
        return f"assert-fail(step={self.step}, expected={self.expected}, actual={self.actual})"


@dataclass(frozen=True)
class RuntimeFault:
    kind: str  # "div_by_zero" | "step_limit"
    line: int
    step: int = field(default=-1, compare=False)  # index of the failing test step

    def __str__(self) -> str:
        return f"error({self.kind}, line={self.line})"


@dataclass
class Trace:
    executed_lines: set = field(default_factory=set)
    branch_outcomes: set = field(default_factory=set)
    emitted: list = field(default_factory=list)
    returns: list = field(default_factory=list)
    steps: int = 0


@dataclass
class ExecutionResult:
    outcome: object
    trace: Trace


class TestReferenceError(Exception):
    """A test refers to something the program does not offer (hard error)."""

    __test__ = False


class _Trap(Exception):
    def __init__(self, kind: str, line: int):
        self.kind = kind
        self.line = line


_NORET = object()


class Obj:
    __slots__ = ("cls", "fields")

    def __init__(self, cls: str, fields: dict):
        self.cls = cls
        self.fields = fields


@dataclass
class Instrumentation:
    """Optional hooks used by the test generator.

    ``probes`` maps a node id to a list of ``(mutant_id, kind, data)``; after
    that node is evaluated the interpreter calls
    ``check(kind, data, value, operands)`` and records in ``infected`` every
    mutant for which it returns true. Expression probes receive the operand
    values; statement probes receive the assigned, returned or tested value.
    ``distances`` collects the minimum branch distance per (line, outcome).
    """

    probes: dict = field(default_factory=dict)
    infected: set = field(default_factory=set)
    check: Optional[Callable] = None
    distances: Optional[dict] = None


class Interpreter:
    def __init__(self, program: Program, env: Optional[dict] = None,
                 step_limit: int = DEFAULT_STEP_LIMIT,
                 instrumentation: Optional[Instrumentation] = None):
        self.program = program
        self.classes = {c.name: c for c in program.classes}
        self.methods = {(c.name, m.name): m for c in program.classes for m in c.methods}
        self.env = env or {}
        self.step_limit = step_limit
        self.steps = 0
        self.depth = 0
        self.trace = Trace()
        self.instr = instrumentation
        self.probes = instrumentation.probes if instrumentation else None
        self.distances = instrumentation.distances if instrumentation else None
        self._eval = {
            IntLit: self._lit, BoolLit: self._lit, Var: self._var, FieldRef: self._field,
            ConstRef: self._const, Unary: self._unary, Binary: self._binary,
            Call: self._call, Builtin: self._builtin, Ext: self._ext,
        }

    # -- objects -------------------------------------------------------------

    def new_object(self, cname: str) -> Obj:
        decl = self.classes[cname]
        values = {}
        for fname, ftype in decl.fields:
            if ftype == "int":
                values[fname] = 0
            elif ftype == "bool":
                values[fname] = False
            else:
                values[fname] = self.new_object(ftype)
        return Obj(cname, values)

    # -- statements ----------------------------------------------------------

    def invoke(self, obj: Obj, method, args, line: int = 0):
        if self.depth >= MAX_CALL_DEPTH:
            raise _Trap("step_limit", line)
        self.depth += 1
        frame = {p[0]: a for p, a in zip(method.params, args)}
        result = self.exec_block(method.body, obj, frame)
        self.depth -= 1
        return None if result is _NORET else result

    def exec_block(self, stmts, obj, frame):
        for s in stmts:
            result = self.exec_stmt(s, obj, frame)
            if result is not _NORET:
                return result
        return _NORET

    def _tick(self, line: int):
        self.steps += 1
        self.trace.executed_lines.add(line)
        if self.steps > self.step_limit:
            raise _Trap("step_limit", line)

    def exec_stmt(self, s, obj, frame):
        line = s.line
        self._tick(line)
        t = type(s)
        if t is Assign:
            value = self._eval[type(s.value)](s.value, obj, frame)
            if self.probes is not None:
                self._probe(s.nid, value)
            if s.to_field:
                obj.fields[s.name] = value
            else:
                frame[s.name] = value
            return _NORET
        if t is If:
            cond = self._condition(s, obj, frame)
            return self.exec_block(s.then if cond else s.orelse, obj, frame)
        if t is CallStmt:
            if self.probes is not None:
                self._probe(s.nid, None)
            self._call(s.call, obj, frame)
            return _NORET
        if t is Return:
            if s.value is None:
                return None
            value = self._eval[type(s.value)](s.value, obj, frame)
            if self.probes is not None:
                self._probe(s.nid, value)
            return value
        if t is LocalDecl:
            value = self._eval[type(s.init)](s.init, obj, frame)
            if self.probes is not None:
                self._probe(s.nid, value)
            frame[s.name] = value
            return _NORET
        if t is While:
            while self._condition(s, obj, frame):
                result = self.exec_block(s.body, obj, frame)
                if result is not _NORET:
                    return result
                self._tick(line)
            return _NORET
        if t is Emit:
            value = self._eval[type(s.value)](s.value, obj, frame)
            self.trace.emitted.append(value)
            return _NORET
        if t is Nop:
            return _NORET
        raise TypeError(f"unexpected statement {s!r}")

    def _condition(self, s, obj, frame) -> bool:
        cond, line = s.cond, s.line
        if self.distances is not None:
            value, d_true, d_false = self._distance(cond, obj, frame)
            for outcome, d in ((True, d_true), (False, d_false)):
                key = (line, outcome)
                old = self.distances.get(key)
                if old is None or d < old:
                    self.distances[key] = d
        else:
            value = self._eval[type(cond)](cond, obj, frame)
        if self.probes is not None:
            self._probe(s.nid, value)
        self.trace.branch_outcomes.add((line, value))
        return value

    # -- expressions ---------------------------------------------------------

    def eval(self, e, obj, frame):
        return self._eval[type(e)](e, obj, frame)

    def _lit(self, e, obj, frame):
        return e.value

    def _var(self, e, obj, frame):
        return frame[e.name]

    def _field(self, e, obj, frame):
        return obj.fields[e.name]

    def _const(self, e, obj, frame):
        return e.value

    def _ext(self, e, obj, frame):
        if e.has:
            return e.key in self.env
        return wrap(int(self.env.get(e.key, 0)))

    def _unary(self, e, obj, frame):
        v = self._eval[type(e.operand)](e.operand, obj, frame)
        result = wrap(-v) if e.op == "-" else (not v)
        if self.probes is not None:
            self._probe(e.nid, result, v)
        return result

    def _binary(self, e, obj, frame):
        op = e.op
        ev = self._eval
        if op == "&&" or op == "||":
            left = ev[type(e.left)](e.left, obj, frame)
            if (op == "&&" and not left) or (op == "||" and left):
                result = left
                right = None
            else:
                right = ev[type(e.right)](e.right, obj, frame)
                result = right
            if self.probes is not None:
                self._probe(e.nid, result, left, right)
            return result
        left = ev[type(e.left)](e.left, obj, frame)
        right = ev[type(e.right)](e.right, obj, frame)
        if op in ("+", "-", "*", "/", "%"):
            try:
                result = arith(op, left, right)
            except ZeroDivisionError:
                raise _Trap("div_by_zero", e.line) from None
        else:
            result = compare(op, left, right)
        if self.probes is not None:
            self._probe(e.nid, result, left, right)
        return result

    def _builtin(self, e, obj, frame):
        v = self._eval[type(e.args[0])](e.args[0], obj, frame)
        # abs saturates: abs(INT_MIN) == INT_MAX
        return INT_MAX if v == INT_MIN else abs(v)

    def _call(self, e, obj, frame):
        receiver = obj if e.receiver is None else self._eval[type(e.receiver)](e.receiver, obj, frame)
        args = [self._eval[type(a)](a, obj, frame) for a in e.args]
        method = self.methods[(receiver.cls, e.method)]
        return self.invoke(receiver, method, args, e.line)

    # -- instrumentation -----------------------------------------------------

    def _probe(self, nid, value, *operands):
        entries = self.probes.get(nid)
        if entries:
            infected = self.instr.infected
            check = self.instr.check
            for mutant_id, kind, data in entries:
                if mutant_id not in infected and check(kind, data, value, operands):
                    infected.add(mutant_id)

    def _distance(self, e, obj, frame):
        """Evaluate a boolean expression with (value, distance-to-true, distance-to-false)."""
        t = type(e)
        if t is Binary and e.op in ("<", "<=", ">", ">=", "==", "!="):
            a = self._eval[type(e.left)](e.left, obj, frame)
            b = self._eval[type(e.right)](e.right, obj, frame)
            value = compare(e.op, a, b)
            if self.probes is not None:
                self._probe(e.nid, value, a, b)
            if isinstance(a, bool):
                a, b = int(a), int(b)
            d_true, d_false = _relational_distance(e.op, a, b)
            return value, d_true, d_false
        if t is Binary and e.op in ("&&", "||"):
            lv, lt, lf = self._distance(e.left, obj, frame)
            short = (e.op == "&&" and not lv) or (e.op == "||" and lv)
            if short:
                rv, rt, rf = None, 1, 1
                value = lv
            else:
                rv, rt, rf = self._distance(e.right, obj, frame)
                value = rv
            if self.probes is not None:
                self._probe(e.nid, value, lv, rv)
            if e.op == "&&":
                return value, lt + rt if not value else 0, 0 if not value else min(lf, rf)
            return value, 0 if value else min(lt, rt), lf + rf if value else 0
        if t is Unary and e.op == "!":
            v, dt, df = self._distance(e.operand, obj, frame)
            if self.probes is not None:
                self._probe(e.nid, not v, v)
            return (not v), df, dt
        value = self._eval[t](e, obj, frame)
        return value, (0 if value else 1), (1 if value else 0)


def _relational_distance(op, a, b):
    diff = abs(a - b)
    if op == "==":
        return diff, (1 if diff == 0 else 0)
    if op == "!=":
        return (1 if diff == 0 else 0), diff
    if op == "<":
        return (0 if a < b else a - b + 1), (0 if a >= b else b - a)
    if op == "<=":
        return (0 if a <= b else a - b), (0 if a > b else b - a + 1)
    if op == ">":
        return (0 if a > b else b - a + 1), (0 if a <= b else a - b)
    return (0 if a >= b else b - a), (0 if a < b else a - b + 1)


# -- running tests -------------------------------------------------------------


def _check_literal(value, ptype: str) -> bool:
    if ptype == "bool":
        return isinstance(value, bool)
    return isinstance(value, int) and not isinstance(value, bool)


def run_test(program: Program, test: TestCase, env: Optional[dict] = None,
             step_limit: int = DEFAULT_STEP_LIMIT,
             instrumentation: Optional[Instrumentation] = None,
             engine: str = "compiled") -> ExecutionResult:
    """Execute ``test`` against ``program``.

    Reference problems (unknown class, method, variable, private method,
    argument mismatch) raise TestReferenceError instead of producing an
    outcome. ``engine`` selects the closure compiler (default) or the
    tree-walking ``"reference"`` interpreter; both give identical results.
    """
    if step_limit <= 0:
        raise ValueError("step_limit must be positive")
    env = env or {}
    interp = Interpreter(program, env, step_limit, instrumentation)
    if engine == "reference":
        trace = interp.trace

        def call(receiver, method):
            return interp.invoke(receiver, method, list(step.args))
    elif engine == "compiled":
        from .compiler import State, compiled

        cp = compiled(program, instrumentation)
        state = State(env, step_limit, instrumentation)
        trace = state.trace

        def call(receiver, method):
            return cp.invoke(state, receiver, (receiver.cls, method.name), list(step.args))
    else:
        raise ValueError(f"unknown engine '{engine}'")
    objects = {}
    outcome = Pass()
    for idx, step in enumerate(test.steps):
        if isinstance(step, NewStep):
            if step.cls not in interp.classes:
                raise TestReferenceError(f"{test.name}: unknown class '{step.cls}'")
            objects[step.var] = interp.new_object(step.cls)
            continue
        receiver = objects.get(step.receiver)
        if receiver is None:
            raise TestReferenceError(f"{test.name}: undefined variable '{step.receiver}'")
        method = interp.methods.get((receiver.cls, step.method))
        if method is None or not method.is_public:
            raise TestReferenceError(
                f"{test.name}: no public method '{receiver.cls}.{step.method}'")
        if len(step.args) != len(method.params) or not all(
            _check_literal(a, p[1]) for a, p in zip(step.args, method.params)
        ):
            raise TestReferenceError(f"{test.name}: bad arguments for '{step.method}'")
        if isinstance(step, AssertStep):
            if method.return_type not in PRIMITIVES or not _check_literal(step.expected, method.return_type):
                raise TestReferenceError(f"{test.name}: cannot assert on '{step.method}'")
        try:
            value = call(receiver, method)
        except _Trap as trap:
            outcome = RuntimeFault(trap.kind, trap.line, idx)
            break
        except RecursionError:
            outcome = RuntimeFault("step_limit", method.span[0], idx)
            break
        if method.return_type in PRIMITIVES:
            trace.returns.append((idx, value))
        if isinstance(step, CallStep):
            if step.var is not None:
                if not isinstance(value, Obj):
                    raise TestReferenceError(f"{test.name}: '{step.method}' returns no object")
                objects[step.var] = value
        elif value != step.expected or type(value) is not type(step.expected):
            outcome = AssertFail(idx, step.expected, value)
            break
    trace.steps = interp.steps if engine == "reference" else state.steps
    return ExecutionResult(outcome, trace)


def compare_results(orig: ExecutionResult, mutated: ExecutionResult) -> bool:
    """True iff the two runs of the same test produced a different result.

    Errors are compared by (kind, line); assertion failures by (step, actual
    value). Emitted values and coverage are ignored.
    """
    a, b = orig.outcome, mutated.outcome
    a_err, b_err = isinstance(a, RuntimeFault), isinstance(b, RuntimeFault)
    if a_err != b_err:
        return True
    if a_err:
        return (a.kind, a.line) != (b.kind, b.line)
    a_fail, b_fail = isinstance(a, AssertFail), isinstance(b, AssertFail)
    if a_fail != b_fail:
        return True
    if a_fail:
        return (a.step, a.actual, type(a.actual)) != (b.step, b.actual, type(b.actual))
    return False
