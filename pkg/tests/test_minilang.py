import pytest
from hypothesis import given, settings, strategies as st

from testab.minilang import (
    AssertFail, AssertStep, CallStep, NewStep, Pass, RuntimeFault, SourceError, TestCase,
    TestReferenceError, compare_results, format_program, format_suite, parse_file,
    parse_program, parse_suite, run_test, shape,
)
from testab.minilang.interp import ExecutionResult, INT_MAX, INT_MIN, Trace, int_div, int_mod, wrap
from testab.mutation import apply_mutant, generate_mutants

from conftest import DEMO, FIXTURES, SAMPLE


def _test(*steps, name="t"):
    return TestCase(name, tuple(steps))


def _diagnostic(source):
    with pytest.raises(SourceError) as info:
        parse_program(source)
    return info.value.diagnostics[0]


# -- parsing ------------------------------------------------------------------------


def test_sample_program_shape(sample):
    assert len(sample.classes) == 1
    cls = sample.classes[0]
    assert cls.name == "SampleProg"
    assert len(cls.fields) == 4
    assert len(cls.methods) == 7


def test_empty_class():
    p = parse_program("class A { }")
    assert [c.name for c in p.classes] == ["A"]
    assert p.classes[0].methods == ()


def test_missing_return():
    d = _diagnostic("class A { int f(int x) { } }")
    assert "missing return on some path" in d.message


@pytest.mark.parametrize("source, fragment", [
    ("class A { int x; int x; }", "duplicate member"),
    ("class A { B b; }", "unresolved type"),
    ("class A { public void f(A a) { } }", "non-primitive parameter"),
    ("class A { public int f() { return y; } }", "unresolved name"),
    ("class A { public int f() { return 1 + true; } }", "type"),
    ("class A { const int K = 1; public void f() { K = 2; } }", "const"),
    ("class A { public void f() { g(); } }", "g"),
    ("class A { public int f( { return 1; } }", "expected"),
    ("class A { B b; } class B { A a; }", "cycl"),
])
def test_diagnostics(source, fragment):
    d = _diagnostic(source)
    assert fragment in d.message
    assert d.line >= 1 and d.col >= 1


def test_diagnostic_points_at_token():
    d = _diagnostic("class A {\n  public int f() {\n    return 1 +;\n  }\n}")
    assert (d.line, d.col) == (3, 15)


def test_private_method_not_callable_across_classes():
    d = _diagnostic(
        "class A { B b; public void f() { b.g(); } }\n"
        "class B { private void g() { } }"
    )
    assert "private" in d.message


def test_source_lines_are_physical(sample):
    m = sample.method("SampleProg", "setScale")
    assert m.span == (10, 12)
    assert m.body[0].line == 11


def _round_trip(program):
    text = format_program(program)
    again = parse_program(text, program.source_name)
    assert shape(again) == shape(program)
    assert format_program(again) == text


@pytest.mark.parametrize("path", sorted((DEMO / "src").glob("*.ml"))
                         + sorted((FIXTURES / "micro").glob("*.ml")) + [SAMPLE],
                         ids=lambda p: p.name)
def test_round_trip_files(path):
    _round_trip(parse_file(path))


_ATOMS = st.sampled_from(["x", "y", "this.f", "K", "0", "1", "7", "abs(x)", "this.g(x)"])


@st.composite
def int_exprs(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        return draw(_ATOMS)
    kind = draw(st.sampled_from(["bin", "neg", "paren"]))
    if kind == "neg":
        return f"-{draw(int_exprs(depth - 1))}"
    if kind == "paren":
        return f"({draw(int_exprs(depth - 1))})"
    op = draw(st.sampled_from(["+", "-", "*", "/", "%"]))
    return f"{draw(int_exprs(depth - 1))} {op} {draw(int_exprs(depth - 1))}"


@st.composite
def bool_exprs(draw, depth=3):
    if depth == 0 or draw(st.booleans()):
        op = draw(st.sampled_from(["<", "<=", ">", ">=", "==", "!="]))
        return f"{draw(int_exprs(2))} {op} {draw(int_exprs(2))}"
    kind = draw(st.sampled_from(["and", "or", "not"]))
    if kind == "not":
        return f"!({draw(bool_exprs(depth - 1))})"
    op = "&&" if kind == "and" else "||"
    return f"{draw(bool_exprs(depth - 1))} {op} {draw(bool_exprs(depth - 1))}"


@settings(max_examples=150, deadline=None)
@given(int_exprs(), bool_exprs())
def test_round_trip_random_expressions(ie, be):
    source = (
        "class A {\n  const int K = 3;\n  int f;\n"
        "  public int g(int z) { return z; }\n"
        f"  public int m(int x, int y) {{\n    if ({be}) return {ie};\n    return 0;\n  }}\n}}\n"
    )
    _round_trip(parse_program(source))


# -- integer semantics --------------------------------------------------------------


def test_integer_semantics():
    assert wrap(INT_MAX + 1) == INT_MIN
    assert int_div(-7, 2) == -3
    assert int_mod(-7, 2) == -1
    assert int_mod(7, -2) == 1
    assert int_div(INT_MIN, -1) == INT_MIN


# -- execution ----------------------------------------------------------------------


def test_run_sample_pass(sample):
    t = _test(NewStep("p", "SampleProg"), CallStep(None, "p", "setScale", (0,)),
              AssertStep("p", "getScale", (), 0))
    r = run_test(sample, t)
    assert r.outcome == Pass()
    assert {11, 23, 24} <= r.trace.executed_lines
    assert r.trace.emitted == [0]
    assert r.trace.returns == [(2, 0)]


def test_assert_fail(sample):
    t = _test(NewStep("p", "SampleProg"), AssertStep("p", "getScale", (), 1))
    assert run_test(sample, t).outcome == AssertFail(1, 1, 0)


def test_div_by_zero_line():
    p = parse_program("class A {\n  public int f(int x) {\n    return 10 / x;\n  }\n}")
    r = run_test(p, _test(NewStep("a", "A"), CallStep(None, "a", "f", (0,))))
    assert r.outcome == RuntimeFault("div_by_zero", 3)
    assert 3 in r.trace.executed_lines


def test_step_limit():
    p = parse_program("class A { int n; public void spin() { while (true) n = n + 1; } }")
    r = run_test(p, _test(NewStep("a", "A"), CallStep(None, "a", "spin", ())), step_limit=50)
    assert isinstance(r.outcome, RuntimeFault) and r.outcome.kind == "step_limit"


def test_deep_recursion_is_step_limit():
    p = parse_program("class A { public int f(int n) { return f(n + 1); } }")
    r = run_test(p, _test(NewStep("a", "A"), CallStep(None, "a", "f", (0,))))
    assert r.outcome.kind == "step_limit"


def test_ext_environment():
    p = parse_program(
        'class A { public int f() { if (ext_has("k")) return ext("k"); return -1; } }')
    t = _test(NewStep("a", "A"), AssertStep("a", "f", (), -1))
    assert run_test(p, t).outcome == Pass()
    assert run_test(p, t, env={"k": 5}).outcome == AssertFail(1, -1, 5)


def test_class_typed_fields_are_fresh_instances():
    p = parse_program(
        "class C { int v; public void inc() { v = v + 1; } public int get() { return v; } }\n"
        "class H { C a; C b; public int bump() { a.inc(); a.inc(); b.inc(); return a.get() * 10 + b.get(); } }"
    )
    t = _test(NewStep("h", "H"), AssertStep("h", "bump", (), 21))
    assert run_test(p, t).outcome == Pass()


@pytest.mark.parametrize("steps", [
    (NewStep("a", "Nope"),),
    (CallStep(None, "zz", "setScale", (1,)),),
    (NewStep("p", "SampleProg"), CallStep(None, "p", "peekSensor", ())),
    (NewStep("p", "SampleProg"), CallStep(None, "p", "setScale", (True,))),
    (NewStep("p", "SampleProg"), CallStep(None, "p", "setScale", ())),
])
def test_reference_errors(sample, steps):
    with pytest.raises(TestReferenceError):
        run_test(sample, _test(*steps))


def test_bool_assert_type_mismatch_fails():
    p = parse_program("class A { public int f() { return 1; } }")
    with pytest.raises(TestReferenceError):
        run_test(p, _test(NewStep("a", "A"), AssertStep("a", "f", (), True)))


# -- result comparison --------------------------------------------------------------


def _res(outcome):
    return ExecutionResult(outcome, Trace())


@pytest.mark.parametrize("a, b, differs", [
    (Pass(), AssertFail(2, 0, 100), True),
    (Pass(), Pass(), False),
    (RuntimeFault("div_by_zero", 9), RuntimeFault("step_limit", 14), True),
    (RuntimeFault("div_by_zero", 9), RuntimeFault("div_by_zero", 10), True),
    (RuntimeFault("div_by_zero", 9), RuntimeFault("div_by_zero", 9), False),
    (Pass(), RuntimeFault("step_limit", 3), True),
    (AssertFail(1, 0, 5), AssertFail(1, 0, 6), True),
    (AssertFail(1, 0, 5), AssertFail(2, 0, 5), True),
    (AssertFail(1, 0, 5), AssertFail(1, 0, 5), False),
])
def test_compare_results(a, b, differs):
    assert compare_results(_res(a), _res(b)) is differs
    assert compare_results(_res(b), _res(a)) is differs


def test_compare_ignores_emitted_and_coverage():
    a = ExecutionResult(Pass(), Trace({1, 2}, set(), [1], []))
    b = ExecutionResult(Pass(), Trace({3}, set(), [2, 3], []))
    assert not compare_results(a, b)


# -- test files -----------------------------------------------------------------------


def test_suite_round_trip():
    src = ("test a {\n    p = new SampleProg();\n    p.setScale(-3);\n"
           "    assert p.getScale() == -300;\n}\n")
    suite = parse_suite(src, "S")
    assert format_suite(suite) == src
    assert suite.cases[0].steps[1] == CallStep(None, "p", "setScale", (-3,))


@pytest.mark.parametrize("src", [
    "test a { p.setScale(1); }",
    "test a { p = new A(); } test a { q = new A(); }",
    "test a { p = new A(); p.m(x); }",
])
def test_suite_errors(src):
    with pytest.raises(SourceError):
        parse_suite(src)


# -- engines ------------------------------------------------------------------------


def _programs():
    paths = sorted((DEMO / "src").glob("*.ml")) + sorted((FIXTURES / "micro").glob("*.ml"))
    return [parse_file(p) for p in paths + [SAMPLE]]


_PROGRAMS = _programs()
_VARIANTS = []
for _p in _PROGRAMS:
    _VARIANTS.append(_p)
    _VARIANTS += [apply_mutant(_p, m) for m in generate_mutants(_p)[::4]]


@st.composite
def program_and_test(draw):
    program = draw(st.sampled_from(_VARIANTS))
    cls = draw(st.sampled_from(program.classes))
    public = [m for m in cls.methods if m.is_public]
    steps = [NewStep("o", cls.name)]
    for _ in range(draw(st.integers(0, 6))):
        if not public:
            break
        m = draw(st.sampled_from(public))
        args = tuple(
            draw(st.booleans()) if t == "bool" else draw(st.one_of(
                st.integers(-3, 3), st.integers(-2**63, 2**63 - 1), st.sampled_from([10, 100, 2000])))
            for _, t in m.params
        )
        if m.return_type in ("int", "bool") and draw(st.booleans()):
            steps.append(AssertStep("o", m.name, args, 0 if m.return_type == "int" else False))
        elif m.return_type in ("int", "bool", "void"):
            steps.append(CallStep(None, "o", m.name, args))
    return program, TestCase("t", tuple(steps))


@settings(max_examples=300, deadline=None)
@given(program_and_test(), st.sampled_from([100, 5000]))
def test_compiled_engine_matches_reference(pt, limit):
    program, test = pt
    a = run_test(program, test, step_limit=limit)
    b = run_test(program, test, step_limit=limit, engine="reference")
    assert a.outcome == b.outcome
    assert a.trace == b.trace


def test_execution_is_deterministic(sample):
    t = _test(NewStep("p", "SampleProg"), CallStep(None, "p", "setMode", (10,)),
              CallStep(None, "p", "setScale", (20000,)), CallStep(None, "p", "setSensor", (-4,)),
              CallStep(None, "p", "updtState", ()), AssertStep("p", "currState", (), 4))
    results = [run_test(sample, t) for _ in range(3)]
    assert all(r.outcome == Pass() for r in results)
    assert all(r.trace == results[0].trace for r in results)


def test_unknown_engine(sample):
    with pytest.raises(ValueError):
        run_test(sample, _test(NewStep("p", "SampleProg")), engine="jit")
