"""Per-method static metrics and the test-side response-for-class count."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

from .minilang.syntax import Call, FieldRef, If, PRIMITIVES, Program, While, walk
from .minilang.testcase import NewStep

METRIC_NAMES = ("loc", "rfc", "cbo", "cbo_modified", "fan_in", "fan_out", "wmc")


@dataclass(frozen=True)
class MetricsRecord:
    loc: int
    rfc: int
    cbo: int
    cbo_modified: int
    fan_in: int
    fan_out: int
    wmc: int

    def as_dict(self) -> dict:
        return {name: getattr(self, name) for name in METRIC_NAMES}


@dataclass(frozen=True)
class RfcTestRecord:
    method: tuple
    rfc_test: int
    tests: list = field(default_factory=list)


def _lookup(program: Program, method_id):
    cls, name = method_id
    decl = program.cls(cls)
    m = decl.method(name) if decl is not None else None
    if m is None:
        raise KeyError(f"unknown method '{cls}.{name}'")
    return decl, m


def _call_targets(method) -> list:
    return [(n.target, n.method) for n in walk(method.body) if isinstance(n, Call)]


def method_metrics(program: Program, method_id) -> MetricsRecord:
    decl, m = _lookup(program, method_id)
    first, last = m.span
    loc = sum(1 for line in range(first, last + 1) if line in program.token_lines)

    targets = set(_call_targets(m))
    rfc = len(targets)

    used_classes = set()
    for node in walk(m.body):
        if isinstance(node, Call) and node.target != decl.name:
            used_classes.add(node.target)
        elif isinstance(node, FieldRef):
            ftype = decl.field_type(node.name)
            if ftype is not None and ftype not in PRIMITIVES:
                used_classes.add(ftype)
    used_classes.discard(decl.name)
    cbo = len(used_classes)

    fan_out = len({c for c, _ in targets if c != decl.name})
    fan_in = sum(
        1 for other in decl.methods
        if other.name != m.name and (decl.name, m.name) in _call_targets(other)
    )
    wmc = sum(1 for node in walk(m.body) if isinstance(node, (If, While))) or 1
    return MetricsRecord(loc, rfc, cbo, fan_in + fan_out, fan_in, fan_out, wmc)


def rfc_test(program: Program, tests, method_id=None) -> RfcTestRecord:
    """Count distinct invocation targets across ``tests``; ``new C()`` counts as one."""
    targets = set()
    for test in tests:
        var_class = {}
        for step in test.steps:
            if isinstance(step, NewStep):
                if program.cls(step.cls) is None:
                    raise KeyError(f"{test.name}: unknown class '{step.cls}'")
                var_class[step.var] = step.cls
                targets.add((step.cls, "<new>"))
                continue
            cls = var_class.get(step.receiver)
            m = program.method(cls, step.method) if cls else None
            if m is None:
                raise KeyError(f"{test.name}: unresolved call '{step.receiver}.{step.method}'")
            targets.add((cls, step.method))
            var = getattr(step, "var", None)
            if var:
                var_class[var] = m.return_type
    return RfcTestRecord(method_id, len(targets), [t.name for t in tests])


def all_metrics(program: Program) -> dict:
    return {mid: method_metrics(program, mid) for mid in program.method_ids()}


def metrics_csv(program: Program) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("class", "method") + METRIC_NAMES)
    for (cls, name), rec in all_metrics(program).items():
        w.writerow((cls, name) + tuple(getattr(rec, k) for k in METRIC_NAMES))
    return buf.getvalue()
