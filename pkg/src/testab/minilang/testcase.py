"""Test cases and suites, plus the ``.mlt`` file format.

::

    // comments with // or #
    test testGetScale {
        p = new SampleProg();
        p.setScale(0);
        q = p._custom_get_inner__();
        assert p.getScale() == 0;
    }

The suite name is the file stem.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

from .lexer import SourceError, TokenStream, tokenize


@dataclass(frozen=True)
class NewStep:
    var: str
    cls: str


@dataclass(frozen=True)
class CallStep:
    var: Optional[str]
    receiver: str
    method: str
    args: tuple


@dataclass(frozen=True)
class AssertStep:
    receiver: str
    method: str
    args: tuple
    expected: Union[int, bool]


Step = Union[NewStep, CallStep, AssertStep]


@dataclass(frozen=True)
class TestCase:
    __test__ = False

    name: str
    steps: tuple

    def called_methods(self) -> list:
        return [(s.receiver, s.method) for s in self.steps if not isinstance(s, NewStep)]


@dataclass(frozen=True)
class TestSuite:
    __test__ = False

    name: str
    cases: tuple

    def case(self, name: str) -> Optional[TestCase]:
        for c in self.cases:
            if c.name == name:
                return c
        return None


def _literal(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def format_step(step) -> str:
    if isinstance(step, NewStep):
        return f"{step.var} = new {step.cls}();"
    args = ", ".join(_literal(a) for a in step.args)
    if isinstance(step, AssertStep):
        return f"assert {step.receiver}.{step.method}({args}) == {_literal(step.expected)};"
    prefix = f"{step.var} = " if step.var else ""
    return f"{prefix}{step.receiver}.{step.method}({args});"


def format_test(test: TestCase) -> str:
    lines = [f"test {test.name} {{"]
    lines += [f"    {format_step(s)}" for s in test.steps]
    lines.append("}")
    return "\n".join(lines)


def format_suite(suite: TestSuite, header: Optional[str] = None) -> str:
    parts = []
    if header:
        parts.extend(f"# {h}" for h in header.splitlines())
    parts.extend(format_test(t) for t in suite.cases)
    return "\n".join(parts) + "\n"


def _parse_literal(ts: TokenStream):
    if ts.at("true") or ts.at("false"):
        return ts.advance().text == "true"
    return ts.integer()


def _parse_args(ts: TokenStream) -> tuple:
    ts.expect("(")
    out = []
    if not ts.at(")"):
        while True:
            out.append(_parse_literal(ts))
            if not ts.accept(","):
                break
    ts.expect(")")
    return tuple(out)


def parse_suite(source: str, name: str = "suite", source_name: str = "<string>") -> TestSuite:
    ts = TokenStream(tokenize(source, source_name), source_name)
    cases = []
    seen = set()
    while ts.tok.kind != "eof":
        ts.expect("test")
        tname = ts.ident("test name")
        if tname.text in seen:
            ts.error(f"duplicate test '{tname.text}'", tname)
        seen.add(tname.text)
        ts.expect("{")
        steps = []
        defined = set()
        while not ts.at("}"):
            if ts.tok.kind == "eof":
                ts.error(f"unterminated test '{tname.text}'")
            if ts.accept("assert"):
                recv = ts.ident("receiver")
                if recv.text not in defined:
                    ts.error(f"undefined variable '{recv.text}'", recv)
                ts.expect(".")
                method = ts.ident("method name").text
                args = _parse_args(ts)
                ts.expect("==")
                expected = _parse_literal(ts)
                ts.expect(";")
                steps.append(AssertStep(recv.text, method, args, expected))
                continue
            first = ts.ident()
            var = None
            if ts.accept("="):
                var = first.text
                if ts.accept("new"):
                    cls = ts.ident("class name").text
                    ts.expect("(")
                    ts.expect(")")
                    ts.expect(";")
                    steps.append(NewStep(var, cls))
                    defined.add(var)
                    continue
                first = ts.ident("receiver")
            if first.text not in defined:
                ts.error(f"undefined variable '{first.text}'", first)
            ts.expect(".")
            method = ts.ident("method name").text
            args = _parse_args(ts)
            ts.expect(";")
            steps.append(CallStep(var, first.text, method, args))
            if var:
                defined.add(var)
        ts.expect("}")
        cases.append(TestCase(tname.text, tuple(steps)))
    return TestSuite(name, tuple(cases))


def load_suite(path) -> TestSuite:
    path = Path(path)
    return parse_suite(path.read_text(encoding="utf-8"), path.stem, str(path))


__all__ = [
    "AssertStep", "CallStep", "NewStep", "SourceError", "TestCase", "TestSuite",
    "format_suite", "format_test", "load_suite", "parse_suite",
]
