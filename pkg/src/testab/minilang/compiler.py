"""Closure compiler: the fast execution engine behind ``run_test``.

Each method body is turned into nested Python closures once per program (and
instrumentation setup), which removes the per-node dispatch of the
tree-walking ``Interpreter``. The two engines are kept observably identical:
same results, traces, step counts, probe calls and branch distances. The
tree walker stays as the reference they are tested against.
"""
from __future__ import annotations

import operator
import weakref

from .interp import INT_MAX, INT_MIN, MAX_CALL_DEPTH, Trace, _NORET, _Trap, _relational_distance, int_div, int_mod, wrap
from .syntax import (
    Assign, Binary, BoolLit, Builtin, Call, CallStmt, ConstRef, Emit, Ext, FieldRef, If, IntLit,
    LocalDecl, Nop, Program, Return, Unary, Var, While,
)

_COMPARE = {
    "<": operator.lt, "<=": operator.le, ">": operator.gt, ">=": operator.ge,
    "==": operator.eq, "!=": operator.ne,
}


class State:
    """Mutable per-test execution state shared by all compiled closures."""

    __slots__ = ("steps", "limit", "depth", "env", "trace", "lines", "branches", "emitted",
                 "infected", "check", "distances")

    def __init__(self, env, step_limit, instrumentation=None):
        self.steps = 0
        self.limit = step_limit
        self.depth = 0
        self.env = env
        self.trace = Trace()
        self.lines = self.trace.executed_lines
        self.branches = self.trace.branch_outcomes
        self.emitted = self.trace.emitted
        if instrumentation is not None:
            self.infected = instrumentation.infected
            self.check = instrumentation.check
            self.distances = instrumentation.distances
        else:
            self.infected = self.check = self.distances = None


def _probe(st, entries, value, operands):
    infected = st.infected
    for mutant_id, kind, data in entries:
        if mutant_id not in infected and st.check(kind, data, value, operands):
            infected.add(mutant_id)


class CompiledProgram:
    def __init__(self, program: Program, probes=None, distances: bool = False):
        self.program = program
        self.probes = probes
        self.distances = distances
        self.methods = {}
        for c in program.classes:
            for m in c.methods:
                params = tuple(p[0] for p in m.params)
                self.methods[(c.name, m.name)] = (params, self._block(m.body))

    def invoke(self, st: State, obj, key, args, line=0):
        if st.depth >= MAX_CALL_DEPTH:
            raise _Trap("step_limit", line)
        st.depth += 1
        params, body = self.methods[key]
        result = body(st, obj, dict(zip(params, args)))
        st.depth -= 1
        return None if result is _NORET else result

    def _entries(self, nid):
        if self.probes is None:
            return None
        return self.probes.get(nid) or None

    # -- statements ----------------------------------------------------------

    def _block(self, stmts):
        fns = tuple(self._stmt(s) for s in stmts)
        if len(fns) == 1:
            return fns[0]
        if not fns:
            return lambda st, obj, fr: _NORET

        def block(st, obj, fr):
            for fn in fns:
                r = fn(st, obj, fr)
                if r is not _NORET:
                    return r
            return _NORET
        return block

    def _stmt(self, s):
        line = s.line
        t = type(s)
        if t is Assign or t is LocalDecl:
            value = self._expr(s.value if t is Assign else s.init)
            entries = self._entries(s.nid)
            name = s.name
            to_field = t is Assign and s.to_field

            def assign(st, obj, fr):
                st.steps += 1
                st.lines.add(line)
                if st.steps > st.limit:
                    raise _Trap("step_limit", line)
                v = value(st, obj, fr)
                if entries is not None:
                    _probe(st, entries, v, ())
                if to_field:
                    obj.fields[name] = v
                else:
                    fr[name] = v
                return _NORET
            return assign
        if t is If:
            cond = self._condition(s)
            then = self._block(s.then)
            orelse = self._block(s.orelse)

            def if_(st, obj, fr):
                st.steps += 1
                st.lines.add(line)
                if st.steps > st.limit:
                    raise _Trap("step_limit", line)
                if cond(st, obj, fr):
                    return then(st, obj, fr)
                return orelse(st, obj, fr)
            return if_
        if t is While:
            cond = self._condition(s)
            body = self._block(s.body)

            def while_(st, obj, fr):
                st.steps += 1
                st.lines.add(line)
                if st.steps > st.limit:
                    raise _Trap("step_limit", line)
                while cond(st, obj, fr):
                    r = body(st, obj, fr)
                    if r is not _NORET:
                        return r
                    st.steps += 1
                    if st.steps > st.limit:
                        raise _Trap("step_limit", line)
                return _NORET
            return while_
        if t is CallStmt:
            call = self._expr(s.call)
            entries = self._entries(s.nid)

            def call_stmt(st, obj, fr):
                st.steps += 1
                st.lines.add(line)
                if st.steps > st.limit:
                    raise _Trap("step_limit", line)
                if entries is not None:
                    _probe(st, entries, None, ())
                call(st, obj, fr)
                return _NORET
            return call_stmt
        if t is Return:
            if s.value is None:
                def return_none(st, obj, fr):
                    st.steps += 1
                    st.lines.add(line)
                    if st.steps > st.limit:
                        raise _Trap("step_limit", line)
                    return None
                return return_none
            value = self._expr(s.value)
            entries = self._entries(s.nid)

            def return_(st, obj, fr):
                st.steps += 1
                st.lines.add(line)
                if st.steps > st.limit:
                    raise _Trap("step_limit", line)
                v = value(st, obj, fr)
                if entries is not None:
                    _probe(st, entries, v, ())
                return v
            return return_
        if t is Emit:
            value = self._expr(s.value)

            def emit(st, obj, fr):
                st.steps += 1
                st.lines.add(line)
                if st.steps > st.limit:
                    raise _Trap("step_limit", line)
                st.emitted.append(value(st, obj, fr))
                return _NORET
            return emit
        if t is Nop:
            def nop(st, obj, fr):
                st.steps += 1
                st.lines.add(line)
                if st.steps > st.limit:
                    raise _Trap("step_limit", line)
                return _NORET
            return nop
        raise TypeError(f"unexpected statement {s!r}")

    def _condition(self, s):
        line = s.line
        entries = self._entries(s.nid)
        key_t, key_f = (line, True), (line, False)
        if self.distances:
            dist = self._distance(s.cond)

            def cond(st, obj, fr):
                value, d_true, d_false = dist(st, obj, fr)
                ds = st.distances
                old = ds.get(key_t)
                if old is None or d_true < old:
                    ds[key_t] = d_true
                old = ds.get(key_f)
                if old is None or d_false < old:
                    ds[key_f] = d_false
                if entries is not None:
                    _probe(st, entries, value, ())
                st.branches.add((line, value))
                return value
            return cond
        expr = self._expr(s.cond)
        if entries is None:
            def cond(st, obj, fr):
                value = expr(st, obj, fr)
                st.branches.add((line, value))
                return value
            return cond

        def cond_probed(st, obj, fr):
            value = expr(st, obj, fr)
            _probe(st, entries, value, ())
            st.branches.add((line, value))
            return value
        return cond_probed

    # -- expressions ---------------------------------------------------------

    def _expr(self, e):
        t = type(e)
        if t is IntLit or t is BoolLit or t is ConstRef:
            v = e.value
            return lambda st, obj, fr: v
        if t is Var:
            name = e.name
            return lambda st, obj, fr: fr[name]
        if t is FieldRef:
            name = e.name
            return lambda st, obj, fr: obj.fields[name]
        if t is Ext:
            key = e.key
            if e.has:
                return lambda st, obj, fr: key in st.env
            return lambda st, obj, fr: wrap(int(st.env.get(key, 0)))
        if t is Builtin:
            arg = self._expr(e.args[0])

            def abs_(st, obj, fr):
                v = arg(st, obj, fr)
                return INT_MAX if v == INT_MIN else abs(v)
            return abs_
        if t is Unary:
            return self._unary(e)
        if t is Binary:
            return self._binary(e)
        if t is Call:
            return self._call(e)
        raise TypeError(f"unexpected expression {e!r}")

    def _unary(self, e):
        operand = self._expr(e.operand)
        entries = self._entries(e.nid)
        neg = e.op == "-"

        def unary(st, obj, fr):
            v = operand(st, obj, fr)
            result = wrap(-v) if neg else (not v)
            if entries is not None:
                _probe(st, entries, result, (v,))
            return result
        return unary

    def _binary(self, e):
        op = e.op
        left = self._expr(e.left)
        right = self._expr(e.right)
        entries = self._entries(e.nid)
        line = e.line
        if op == "&&" or op == "||":
            is_and = op == "&&"

            def logic(st, obj, fr):
                lv = left(st, obj, fr)
                if (is_and and not lv) or (not is_and and lv):
                    result, rv = lv, None
                else:
                    rv = right(st, obj, fr)
                    result = rv
                if entries is not None:
                    _probe(st, entries, result, (lv, rv))
                return result
            return logic
        if op in _COMPARE:
            cmp = _COMPARE[op]
            if entries is None:
                return lambda st, obj, fr: cmp(left(st, obj, fr), right(st, obj, fr))

            def compare_probed(st, obj, fr):
                a = left(st, obj, fr)
                b = right(st, obj, fr)
                result = cmp(a, b)
                _probe(st, entries, result, (a, b))
                return result
            return compare_probed
        if op == "+":
            def fn(a, b):
                v = a + b
                return v if INT_MIN <= v <= INT_MAX else wrap(v)
        elif op == "-":
            def fn(a, b):
                v = a - b
                return v if INT_MIN <= v <= INT_MAX else wrap(v)
        elif op == "*":
            def fn(a, b):
                v = a * b
                return v if INT_MIN <= v <= INT_MAX else wrap(v)
        else:
            base = int_div if op == "/" else int_mod

            def fn(a, b):
                if b == 0:
                    raise _Trap("div_by_zero", line)
                return base(a, b)
        if entries is None:
            return lambda st, obj, fr: fn(left(st, obj, fr), right(st, obj, fr))

        def arith_probed(st, obj, fr):
            a = left(st, obj, fr)
            b = right(st, obj, fr)
            result = fn(a, b)
            _probe(st, entries, result, (a, b))
            return result
        return arith_probed

    def _call(self, e):
        receiver = None if e.receiver is None else self._expr(e.receiver)
        args = tuple(self._expr(a) for a in e.args)
        name = e.method
        line = e.line
        invoke = self.invoke

        def call(st, obj, fr):
            recv = obj if receiver is None else receiver(st, obj, fr)
            values = [a(st, obj, fr) for a in args]
            return invoke(st, recv, (recv.cls, name), values, line)
        return call

    def _distance(self, e):
        """Compile a condition to a function returning (value, d_true, d_false)."""
        t = type(e)
        entries = self._entries(getattr(e, "nid", None))
        if t is Binary and e.op in _COMPARE:
            left, right = self._expr(e.left), self._expr(e.right)
            cmp, op = _COMPARE[e.op], e.op

            def rel(st, obj, fr):
                a = left(st, obj, fr)
                b = right(st, obj, fr)
                value = cmp(a, b)
                if entries is not None:
                    _probe(st, entries, value, (a, b))
                if isinstance(a, bool):
                    a, b = int(a), int(b)
                d_true, d_false = _relational_distance(op, a, b)
                return value, d_true, d_false
            return rel
        if t is Binary and e.op in ("&&", "||"):
            left, right = self._distance(e.left), self._distance(e.right)
            is_and = e.op == "&&"

            def logic(st, obj, fr):
                lv, lt, lf = left(st, obj, fr)
                if (is_and and not lv) or (not is_and and lv):
                    rv, rt, rf = None, 1, 1
                    value = lv
                else:
                    rv, rt, rf = right(st, obj, fr)
                    value = rv
                if entries is not None:
                    _probe(st, entries, value, (lv, rv))
                if is_and:
                    return value, lt + rt if not value else 0, 0 if not value else min(lf, rf)
                return value, 0 if value else min(lt, rt), lf + rf if value else 0
            return logic
        if t is Unary and e.op == "!":
            inner = self._distance(e.operand)

            def not_(st, obj, fr):
                v, dt, df = inner(st, obj, fr)
                if entries is not None:
                    _probe(st, entries, not v, (v,))
                return (not v), df, dt
            return not_
        expr = self._expr(e)

        def plain(st, obj, fr):
            value = expr(st, obj, fr)
            return value, (0 if value else 1), (1 if value else 0)
        return plain


_CACHE: dict = {}


def compiled(program: Program, instrumentation=None) -> CompiledProgram:
    """Compiled form of ``program`` for the given instrumentation setup, cached."""
    probes = instrumentation.probes if instrumentation is not None else None
    distances = instrumentation is not None and instrumentation.distances is not None
    key = (id(program), id(probes) if probes is not None else None, distances)
    hit = _CACHE.get(key)
    if hit is not None and hit[0]() is program and hit[1].probes is probes:
        return hit[1]
    cp = CompiledProgram(program, probes, distances)
    ref = weakref.ref(program, lambda _r, k=key, c=_CACHE: c.pop(k, None))
    _CACHE[key] = (ref, cp)
    return cp
