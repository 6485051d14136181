"""Mutant generation and Revealed/Executed/Missed classification.

The operator set mirrors PIT's "stronger" group as far as the language has
sites for it. Increment and switch operators have no counterpart here.
"""
from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Iterable, Optional

from .minilang.interp import (
    DEFAULT_STEP_LIMIT, ExecutionResult, arith, compare, compare_results, run_test,
)
from .minilang.printer import format_expr
from .minilang.syntax import (
    ARITH_OPS, Assign, Binary, BoolLit, CallStmt, ConstRef, Emit, If, IntLit, LocalDecl,
    Nop, Program, Return, Unary, While, children, replace_node,
)
from .minilang.testcase import TestSuite


class Operator(str, Enum):
    AOR = "AOR"
    ROR_BOUNDARY = "ROR_BOUNDARY"
    ROR_NEGATE = "ROR_NEGATE"
    LOR = "LOR"
    REMOVE_COND_TRUE = "REMOVE_COND_TRUE"
    REMOVE_COND_FALSE = "REMOVE_COND_FALSE"
    INVERT_NEG = "INVERT_NEG"
    INVERT_NOT = "INVERT_NOT"
    PRIMITIVE_RETURN = "PRIMITIVE_RETURN"
    BOOL_RETURN = "BOOL_RETURN"
    VOID_CALL_REMOVAL = "VOID_CALL_REMOVAL"
    EXPR_TO_CONST = "EXPR_TO_CONST"


MAX_CONSTS_PER_SITE = 4

_BOUNDARY = {"<": "<=", "<=": "<", ">": ">=", ">=": ">"}
_NEGATE = {"<": ">=", "<=": ">", ">": "<=", ">=": "<", "==": "!=", "!=": "=="}


@dataclass(frozen=True)
class Mutant:
    id: str
    operator: Operator
    cls: str
    method: str
    line: int
    description: str
    node: int  # id of the node the patch replaces
    replacement: object
    probe_key: int  # node id whose evaluation shows weak infection
    probe_data: object = None


class Verdict(IntEnum):
    MISSED = 0
    EXECUTED = 1
    REVEALED = 2

    @property
    def label(self) -> str:
        return self.name.capitalize()


@dataclass(frozen=True)
class MutantVerdict:
    mutant_id: str
    verdict: Verdict
    witnesses: tuple = ()


# -- generation ----------------------------------------------------------------


def _static_int(e) -> Optional[int]:
    if isinstance(e, IntLit):
        return e.value
    if isinstance(e, ConstRef):
        return e.value
    if isinstance(e, Unary) and e.op == "-" and isinstance(e.operand, IntLit):
        return -e.operand.value
    return None


class _Generator:
    def __init__(self, program: Program):
        self.program = program
        self.out = []
        self.counts = {}

    def emit(self, op, cls, method, line, description, node, replacement, probe_key, data=None):
        key = (cls.name, method.name, line, op)
        ordinal = self.counts.get(key, 0)
        self.counts[key] = ordinal + 1
        mid = f"{cls.name}.{method.name}:{line}:{op.value}:{ordinal}"
        self.out.append(Mutant(mid, op, cls.name, method.name, line, description, node,
                               replacement, probe_key, data))

    def method(self, cls, method):
        self.cls, self.meth = cls, method
        for s in method.body:
            self.stmt(s)

    def stmt(self, s):
        cls, meth = self.cls, self.meth
        line = s.line
        if isinstance(s, (If, While)):
            cond_text = format_expr(s.cond)
            outcomes = (True, False) if isinstance(s, If) else (False,)
            for value in outcomes:
                op = Operator.REMOVE_COND_TRUE if value else Operator.REMOVE_COND_FALSE
                self.emit(op, cls, meth, line, f"{cond_text} -> {str(value).lower()}",
                          s.cond.nid, BoolLit(s.cond.nid, s.cond.line, value), s.nid, value)
            self.expr(s.cond, line)
            for child in (s.then + s.orelse) if isinstance(s, If) else s.body:
                self.stmt(child)
            return
        if isinstance(s, Return) and s.value is not None:
            if self.meth.return_type == "bool":
                self.emit(Operator.BOOL_RETURN, cls, meth, line,
                          f"return {format_expr(s.value)} -> return !({format_expr(s.value)})",
                          s.value.nid, Unary(-s.value.nid, line, "!", s.value), s.nid)
            elif self.meth.return_type == "int":
                if _static_int(s.value) != 0:
                    self.emit(Operator.PRIMITIVE_RETURN, cls, meth, line,
                              f"return {format_expr(s.value)} -> return 0",
                              s.value.nid, IntLit(s.value.nid, line, 0), s.nid, 0)
                self.to_const(s, s.value, "return ")
            self.expr(s.value, line)
            return
        if isinstance(s, Assign):
            if self._is_int(s):
                self.to_const(s, s.value, f"{s.name} = ")
            self.expr(s.value, line)
            return
        if isinstance(s, LocalDecl):
            if s.type == "int":
                self.to_const(s, s.init, f"{s.name} = ")
            self.expr(s.init, line)
            return
        if isinstance(s, CallStmt):
            target = self.program.method(s.call.target, s.call.method)
            if target is not None and target.return_type == "void":
                self.emit(Operator.VOID_CALL_REMOVAL, cls, meth, line,
                          f"removed call {format_expr(s.call)}", s.nid, Nop(s.nid, line), s.nid)
            for a in s.call.args:
                self.expr(a, line)
            if s.call.receiver is not None:
                self.expr(s.call.receiver, line)
            return
        if isinstance(s, Emit):
            self.expr(s.value, line)
            return

    def _is_int(self, s: Assign) -> bool:
        if s.to_field:
            return self.cls.field_type(s.name) == "int"
        return _local_type(self.meth, s.name) == "int"

    def to_const(self, stmt, value, prefix):
        current = _static_int(value)
        taken = 0
        for cname, cvalue in self.cls.consts:
            if taken == MAX_CONSTS_PER_SITE:
                break
            if current is not None and current == cvalue:
                continue
            taken += 1
            self.emit(Operator.EXPR_TO_CONST, self.cls, self.meth, stmt.line,
                      f"{prefix}{format_expr(value)} -> {prefix}{cname}",
                      value.nid, ConstRef(value.nid, value.line, cname, cvalue), stmt.nid, cvalue)

    def expr(self, e, line):
        cls, meth = self.cls, self.meth
        if isinstance(e, Binary):
            text = format_expr(e)
            if e.op in ARITH_OPS:
                for op in ARITH_OPS:
                    if op != e.op:
                        new = Binary(e.nid, e.line, op, e.left, e.right)
                        self.emit(Operator.AOR, cls, meth, line, f"{text} -> {format_expr(new)}",
                                  e.nid, new, e.nid, op)
            elif e.op in _NEGATE:
                if e.op in _BOUNDARY:
                    new = Binary(e.nid, e.line, _BOUNDARY[e.op], e.left, e.right)
                    self.emit(Operator.ROR_BOUNDARY, cls, meth, line,
                              f"{text} -> {format_expr(new)}", e.nid, new, e.nid, new.op)
                new = Binary(e.nid, e.line, _NEGATE[e.op], e.left, e.right)
                self.emit(Operator.ROR_NEGATE, cls, meth, line, f"{text} -> {format_expr(new)}",
                          e.nid, new, e.nid, new.op)
            else:
                new = Binary(e.nid, e.line, "||" if e.op == "&&" else "&&", e.left, e.right)
                self.emit(Operator.LOR, cls, meth, line, f"{text} -> {format_expr(new)}",
                          e.nid, new, e.nid, new.op)
        elif isinstance(e, Unary):
            op = Operator.INVERT_NEG if e.op == "-" else Operator.INVERT_NOT
            self.emit(op, cls, meth, line, f"{format_expr(e)} -> {format_expr(e.operand)}",
                      e.nid, e.operand, e.nid)
        for child in children(e):
            self.expr(child, line)


def _local_type(method, name):
    for pname, ptype in method.params:
        if pname == name:
            return ptype
    from .minilang.syntax import walk

    for node in walk(method.body):
        if isinstance(node, LocalDecl) and node.name == name:
            return node.type
    return None


def generate_mutants(program: Program, classes: Optional[Iterable[str]] = None) -> list:
    """All mutants of non-synthetic methods, in source order."""
    wanted = None if classes is None else set(classes)
    gen = _Generator(program)
    for cls in program.classes:
        if wanted is not None and cls.name not in wanted:
            continue
        for method in cls.methods:
            if not method.synthetic:
                gen.method(cls, method)
    return gen.out


def apply_mutant(program: Program, mutant: Mutant) -> Program:
    return replace_node(program, mutant.node, mutant.replacement)


def infects(kind, data, value, operands) -> bool:
    """Weak-mutation check: would the mutant's node have produced another value?"""
    if kind == Operator.AOR:
        try:
            return arith(data, *operands) != value
        except ZeroDivisionError:
            return True
    if kind in (Operator.ROR_BOUNDARY, Operator.ROR_NEGATE):
        return compare(data, *operands) != value
    if kind == Operator.LOR:
        left, right = operands
        if right is None:  # short-circuited: the other operand is unknown
            return False
        alt = (left or right) if data == "||" else (left and right)
        return alt != value
    if kind == Operator.INVERT_NEG:
        return operands[0] != value
    if kind in (Operator.INVERT_NOT, Operator.BOOL_RETURN, Operator.VOID_CALL_REMOVAL):
        return True
    # REMOVE_COND_*, PRIMITIVE_RETURN, EXPR_TO_CONST: replacement is a constant
    return value != data or type(value) is not type(data)


# -- classification --------------------------------------------------------------


def run_suite(program: Program, suite: TestSuite, env=None, step_limit=DEFAULT_STEP_LIMIT) -> list:
    return [run_test(program, t, env, step_limit) for t in suite.cases]


TIMEOUT_FACTOR = 10
TIMEOUT_CONST = 1000


def mutant_step_limit(original_steps: int, step_limit: int) -> int:
    """Step budget for a mutant run: a multiple of the original run's steps.

    Like a timeout scaled to the unmutated run, this bounds the cost of
    mutants that loop forever; exceeding it is a step_limit error.
    """
    return min(step_limit, TIMEOUT_FACTOR * original_steps + TIMEOUT_CONST)


def _classify_one(program, mutant, suite, originals, env, step_limit) -> MutantVerdict:
    mutated = None
    executed_by = None
    for test, orig in zip(suite.cases, originals):
        # Runs agree until the mutated node is reached, so tests that never
        # reach the line cannot execute or reveal the mutant.
        if mutant.line not in orig.trace.executed_lines:
            continue
        if mutated is None:
            mutated = apply_mutant(program, mutant)
        result = run_test(mutated, test, env, mutant_step_limit(orig.trace.steps, step_limit))
        if compare_results(orig, result):
            return MutantVerdict(mutant.id, Verdict.REVEALED, (test.name,))
        if executed_by is None and mutant.line in result.trace.executed_lines:
            executed_by = test.name
    if executed_by is not None:
        return MutantVerdict(mutant.id, Verdict.EXECUTED, (executed_by,))
    return MutantVerdict(mutant.id, Verdict.MISSED)


def _classify_chunk(args):
    program, mutants, suite, originals, env, step_limit = args
    return [_classify_one(program, m, suite, originals, env, step_limit) for m in mutants]


def classify(program: Program, mutants: list, suite: TestSuite, env: Optional[dict] = None,
             step_limit: int = DEFAULT_STEP_LIMIT, jobs: int = 1,
             originals: Optional[list] = None) -> list:
    """Classify every mutant against ``suite``; output order follows ``mutants``."""
    env = env or {}
    if originals is None:
        originals = run_suite(program, suite, env, step_limit)
    if jobs <= 1 or len(mutants) < 2:
        return [_classify_one(program, m, suite, originals, env, step_limit) for m in mutants]
    chunks = [mutants[i::jobs] for i in range(jobs)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        parts = list(pool.map(_classify_chunk,
                              [(program, c, suite, originals, env, step_limit) for c in chunks]))
    by_id = {v.mutant_id: v for part in parts for v in part}
    return [by_id[m.id] for m in mutants]


# -- reports -------------------------------------------------------------------


def mutants_csv(mutants: list, verdicts: Optional[list] = None) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["id", "class", "method", "line", "operator", "description"]
    if verdicts is not None:
        header += ["verdict", "witness"]
    writer.writerow(header)
    by_id = {v.mutant_id: v for v in verdicts or []}
    for m in mutants:
        row = [m.id, m.cls, m.method, m.line, m.operator.value, m.description]
        if verdicts is not None:
            v = by_id[m.id]
            row += [v.verdict.label, ";".join(v.witnesses)]
        writer.writerow(row)
    return buf.getvalue()
