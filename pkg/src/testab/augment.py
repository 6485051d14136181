"""Testability-facilitated programs and pruning of facilitated calls from suites.

Synthetic members are appended on the line of each class's closing brace, so
every original statement keeps its line number in the enriched program.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .minilang.lexer import tokenize
from .minilang.parser import parse_program
from .minilang.syntax import PRIMITIVES, SYNTHETIC_PREFIX, Program
from .minilang.testcase import NewStep, TestCase, TestSuite

SETTER_ARG = "_custom_v__"


@dataclass(frozen=True)
class AugmentationMap:
    setters: dict = field(default_factory=dict)  # (class, field) -> method name
    getters: dict = field(default_factory=dict)  # (class, field) -> method name

    def synthetic_methods(self) -> set:
        return {(c, m) for (c, _), m in list(self.setters.items()) + list(self.getters.items())}

    def is_empty(self) -> bool:
        return not self.setters and not self.getters


def setter_name(ordinal: int) -> str:
    return f"{SYNTHETIC_PREFIX}{ordinal}__"


def getter_name(field_name: str) -> str:
    return f"{SYNTHETIC_PREFIX}get_{field_name}__"


def _class_closing_braces(source: str) -> dict:
    """Map class name -> (line, col) of its closing brace."""
    out = {}
    depth = 0
    current = None
    tokens = tokenize(source)
    for i, tok in enumerate(tokens):
        if tok.kind == "ident" and tok.text == "class" and depth == 0:
            current = tokens[i + 1].text
        elif tok.text == "{" and tok.kind == "op":
            depth += 1
        elif tok.text == "}" and tok.kind == "op":
            depth -= 1
            if depth == 0 and current is not None:
                out[current] = (tok.line, tok.col)
                current = None
    return out


def enrich(program: Program):
    """Return (P', map) where P' gains public setters and getters per class."""
    setters, getters = {}, {}
    inserts = {}
    for cls in program.classes:
        existing = {m.name for m in cls.methods}
        members = []
        ordinal = 0
        for fname, ftype in cls.fields:
            if ftype in PRIMITIVES:
                ordinal += 1
                name = setter_name(ordinal)
                setters[(cls.name, fname)] = name
                if name not in existing:
                    members.append(
                        f"public void {name}({ftype} {SETTER_ARG}) "
                        f"{{ this.{fname} = {SETTER_ARG}; }}"
                    )
            else:
                name = getter_name(fname)
                getters[(cls.name, fname)] = name
                if name not in existing:
                    members.append(f"public {ftype} {name}() {{ return this.{fname}; }}")
        if members:
            inserts[cls.name] = " ".join(members) + " "
    amap = AugmentationMap(setters, getters)
    if not inserts:
        return program, amap
    braces = _class_closing_braces(program.source)
    lines = program.source.split("\n")
    for cname, text in inserts.items():
        line, col = braces[cname]
        row = lines[line - 1]
        lines[line - 1] = row[: col - 1] + text + row[col - 1:]
    enriched = parse_program("\n".join(lines), program.source_name)
    return enriched, amap


def _is_synthetic_call(step, amap: AugmentationMap, var_class: dict) -> bool:
    if step.method.startswith(SYNTHETIC_PREFIX):
        return True
    return (var_class.get(step.receiver), step.method) in amap.synthetic_methods()


def prune_test(test: TestCase, amap: AugmentationMap):
    """Drop facilitated calls and everything reached through synthetic getters."""
    tainted = set()
    var_class = {}
    kept = []
    for step in test.steps:
        if isinstance(step, NewStep):
            var_class[step.var] = step.cls
            kept.append(step)
            continue
        if step.receiver in tainted or _is_synthetic_call(step, amap, var_class):
            var = getattr(step, "var", None)
            if var:
                tainted.add(var)
            continue
        kept.append(step)
    if not any(not isinstance(s, NewStep) for s in kept):
        return None
    return TestCase(test.name, tuple(kept))


def prune(suite: TestSuite, amap: AugmentationMap) -> TestSuite:
    cases = []
    for test in suite.cases:
        pruned = prune_test(test, amap)
        if pruned is not None:
            cases.append(pruned)
    return TestSuite(suite.name, tuple(cases))
