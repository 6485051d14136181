"""Search-based unit test generation.

A whole-suite genetic algorithm with an archive. Suites are lists of call
sequences on one receiver of the target class; fitness is the sum of the
selected criteria (line, branch, output, exception and weak-mutation
coverage). Every test that covers a goal no archived test covers is archived,
and the archive, minimized to tests with a unique goal, is the result.
"""
from __future__ import annotations

import hashlib
import logging
import random
from dataclasses import dataclass, field

from .minilang.interp import (
    DEFAULT_STEP_LIMIT, AssertFail, Instrumentation, RuntimeFault, run_test,
)
from .minilang.syntax import (
    PRIMITIVES, Assign, CallStmt, ConstRef, Emit, If, IntLit, LocalDecl, Program, Return, While, walk,
)
from .minilang.testcase import AssertStep, CallStep, NewStep, TestCase, TestSuite
from .mutation import generate_mutants, infects

log = logging.getLogger(__name__)

CRITERIA = ("line", "branch", "output", "exception", "mutation")
EXCEPTION_CAP = 5
MUTANT_SAMPLE = 50
SPECIAL_INTS = (0, 1, -1, 10, -10, 100, -100)
INT_RANGE = 2**16
OUTPUT_CAP = 5
_STATEMENTS = (LocalDecl, Assign, If, While, Return, CallStmt, Emit)


@dataclass(frozen=True)
class GenConfig:
    seed: int = 1
    budget_min: int = 2000
    budget_max: int = 20000
    population: int = 30
    max_steps_per_test: int = 12
    max_tests_per_suite: int = 40
    int_range: int = INT_RANGE
    fitness: tuple = CRITERIA
    step_limit: int = DEFAULT_STEP_LIMIT
    mutant_sample: int = MUTANT_SAMPLE

    def __post_init__(self):
        if self.budget_min > self.budget_max:
            raise ValueError("budget_min must not exceed budget_max")
        if self.population < 2:
            raise ValueError("population must be at least 2")
        unknown = set(self.fitness) - set(CRITERIA)
        if unknown:
            raise ValueError(f"unknown fitness criteria: {sorted(unknown)}")


def scaled_budget(class_loc: int, project_min_loc: int, project_max_loc: int,
                  cfg: GenConfig) -> int:
    """Interpolate the iteration budget linearly over class size."""
    if not project_min_loc <= class_loc <= project_max_loc:
        raise ValueError(
            f"class size {class_loc} outside project range [{project_min_loc}, {project_max_loc}]")
    if project_min_loc == project_max_loc:
        return cfg.budget_min
    frac = (class_loc - project_min_loc) / (project_max_loc - project_min_loc)
    return int(round(cfg.budget_min + frac * (cfg.budget_max - cfg.budget_min)))


@dataclass
class FitnessVector:
    line: float = 0.0
    branch: float = 0.0
    output: float = 0.0
    exception: float = 0.0
    mutation: float = 0.0
    selected: tuple = CRITERIA

    @property
    def total(self) -> float:
        return sum(getattr(self, c) for c in self.selected)


@dataclass(frozen=True)
class _Summary:
    """What one execution of a test contributed; cached per test."""

    goals: frozenset
    distances: tuple  # ((line, outcome), distance) pairs


@dataclass
class _Problem:
    program: Program
    cls: str
    cfg: GenConfig
    env: dict
    line_goals: frozenset
    branch_goals: frozenset
    output_caps: dict  # method name -> number of distinct values that saturates it
    mutant_ids: frozenset
    probes: dict
    callables: dict  # class -> list of MethodDecl
    pool: tuple
    executions: int = 0
    cache: dict = field(default_factory=dict)


def _class_literals(program: Program, cls: str) -> list:
    decl = program.cls(cls)
    values = [v for _, v in decl.consts]
    for m in decl.methods:
        for node in walk(m.body):
            if isinstance(node, IntLit):
                values += [node.value, -node.value]
            elif isinstance(node, ConstRef):
                values.append(node.value)
    return sorted(set(values))


def _reachable_classes(program: Program, cls: str) -> list:
    """Classes whose objects a test can obtain starting from ``cls``."""
    seen = [cls]
    for name in seen:
        for m in program.cls(name).methods:
            if m.is_public and m.return_type not in PRIMITIVES + ("void",):
                if m.return_type not in seen:
                    seen.append(m.return_type)
    return seen


def _build_problem(program: Program, cls: str, cfg: GenConfig, env, rng) -> _Problem:
    decl = program.cls(cls)
    line_goals, branch_goals, output_caps = set(), set(), {}
    for m in decl.methods:
        for node in walk(m.body):
            if isinstance(node, _STATEMENTS):
                line_goals.add(("line", node.line))
            if isinstance(node, (If, While)):
                branch_goals |= {("branch", node.line, True), ("branch", node.line, False)}
        if m.is_public and m.return_type == "int":
            output_caps[m.name] = OUTPUT_CAP
        elif m.is_public and m.return_type == "bool":
            output_caps[m.name] = 2
    mutants = generate_mutants(program, [cls])
    if len(mutants) > cfg.mutant_sample:
        picked = sorted(rng.sample(range(len(mutants)), cfg.mutant_sample))
        mutants = [mutants[i] for i in picked]
    probes = {}
    for m in mutants:
        probes.setdefault(m.probe_key, []).append((m.id, m.operator, m.probe_data))
    callables = {
        c: [m for m in program.cls(c).methods if m.is_public]
        for c in _reachable_classes(program, cls)
    }
    pool = tuple(sorted(set(SPECIAL_INTS) | set(_class_literals(program, cls))))
    return _Problem(program, cls, cfg, env or {}, frozenset(line_goals), frozenset(branch_goals),
                    output_caps, frozenset(m.id for m in mutants), probes,
                    callables, pool)


# -- test representation ----------------------------------------------------------


def _random_int(rng: random.Random, prob: _Problem) -> int:
    r = rng.random()
    if r < 0.35:
        return rng.choice(prob.pool)
    if r < 0.5:
        return rng.choice(prob.pool) + rng.choice((-1, 1))
    return rng.randint(-prob.cfg.int_range, prob.cfg.int_range)


def _random_args(rng, prob, method) -> tuple:
    return tuple(
        rng.random() < 0.5 if ptype == "bool" else _random_int(rng, prob)
        for _, ptype in method.params
    )


def _vars_before(steps, index) -> dict:
    out = {}
    for s in steps[:index]:
        if isinstance(s, NewStep):
            out[s.var] = s.cls
        elif isinstance(s, CallStep) and s.var:
            out[s.var] = s.cls_hint
    return out


@dataclass(frozen=True)
class _Call(CallStep):
    """CallStep that remembers the class of the object it binds, if any."""

    cls_hint: str = ""


def _random_call(rng, prob, steps, index):
    scope = _vars_before(steps, index)
    var = rng.choice(sorted(scope))
    cls = scope[var]
    methods = prob.callables.get(cls)
    if not methods:
        return None
    method = rng.choice(methods)
    args = _random_args(rng, prob, method)
    bind = None
    if method.return_type not in PRIMITIVES + ("void",):
        taken = {s.var for s in steps if getattr(s, "var", None)}
        n = 1
        while f"v{n}" in taken:
            n += 1
        bind = f"v{n}"
    return _Call(bind, var, method.name, args, method.return_type if bind else "")


def _repair(steps) -> tuple:
    defined = set()
    out = []
    for s in steps:
        if isinstance(s, NewStep):
            defined.add(s.var)
            out.append(s)
        elif s.receiver in defined:
            out.append(s)
            if s.var:
                defined.add(s.var)
    return tuple(out)


def _random_test(rng, prob) -> tuple:
    steps = [NewStep("v0", prob.cls)]
    length = rng.randint(1, prob.cfg.max_steps_per_test)
    for _ in range(length):
        call = _random_call(rng, prob, steps, len(steps))
        if call is None:
            break
        steps.append(call)
    return tuple(steps)


def _mutate_test(rng, prob, steps) -> tuple:
    steps = list(steps)
    calls = len(steps) - 1
    changed = False
    # each operator fires with probability 1/3, at least one is applied
    while not changed:
        if calls > 1 and rng.random() < 1 / 3:
            del steps[rng.randint(1, len(steps) - 1)]
            steps = list(_repair(steps))
            calls = len(steps) - 1
            changed = True
        if rng.random() < 1 / 3:
            idxs = [i for i, s in enumerate(steps) if isinstance(s, CallStep) and s.args]
            if idxs:
                i = rng.choice(idxs)
                s = steps[i]
                method = prob.program.method(_vars_before(steps, i)[s.receiver], s.method)
                args = list(s.args)
                j = rng.randrange(len(args))
                if method.params[j][1] == "bool":
                    args[j] = not args[j]
                else:
                    r = rng.random()
                    if r < 0.4:
                        args[j] = _random_int(rng, prob)
                    elif r < 0.8:
                        args[j] = max(-2**63, min(2**63 - 1, args[j] + rng.choice((-1, 1)) * rng.choice((1, 2, 10, 100))))
                    else:
                        args[j] = -args[j] if args[j] != -2**63 else 0
                steps[i] = _Call(s.var, s.receiver, s.method, tuple(args), s.cls_hint)
                changed = True
        if calls < prob.cfg.max_steps_per_test and rng.random() < 1 / 3:
            pos = rng.randint(1, len(steps))
            call = _random_call(rng, prob, steps, pos)
            if call is not None:
                steps.insert(pos, call)
                calls += 1
            changed = True
    return _repair(steps)


# -- evaluation -------------------------------------------------------------------


def _execute(prob: _Problem, steps) -> _Summary:
    hit = prob.cache.get(steps)
    if hit is not None:
        return hit
    prob.executions += 1
    instr = Instrumentation(probes=prob.probes, check=infects, distances={})
    result = run_test(prob.program, TestCase("candidate", steps), prob.env,
                      prob.cfg.step_limit, instr)
    goals = set()
    for line in result.trace.executed_lines:
        g = ("line", line)
        if g in prob.line_goals:
            goals.add(g)
    for line, outcome in result.trace.branch_outcomes:
        g = ("branch", line, outcome)
        if g in prob.branch_goals:
            goals.add(g)
    for idx, value in result.trace.returns:
        if steps[idx].method in prob.output_caps:
            goals.add(("output", steps[idx].method, value))
    if isinstance(result.outcome, RuntimeFault):
        goals.add(("exception", result.outcome.kind, result.outcome.line))
    for mid in instr.infected:
        goals.add(("mutant", mid))
    distances = tuple(
        (key, d) for key, d in instr.distances.items()
        if ("branch",) + key in prob.branch_goals
    )
    summary = _Summary(frozenset(goals), distances)
    prob.cache[steps] = summary
    return summary


def _fitness(prob: _Problem, suite) -> FitnessVector:
    goals = set()
    best = {}
    for steps in suite:
        s = _execute(prob, steps)
        goals |= s.goals
        for key, d in s.distances:
            if key not in best or d < best[key]:
                best[key] = d
    fv = FitnessVector(selected=tuple(prob.cfg.fitness))
    fv.line = _ratio(sum(1 for g in goals if g[0] == "line"), len(prob.line_goals))
    if prob.branch_goals:
        score = 0.0
        for g in prob.branch_goals:
            if g in goals:
                score += 1.0
            elif g[1:] in best:
                d = best[g[1:]]
                score += 0.5 * (1.0 - d / (d + 1.0))
        fv.branch = score / len(prob.branch_goals)
    else:
        fv.branch = 1.0
    if prob.output_caps:
        seen = {}
        for g in goals:
            if g[0] == "output":
                seen[g[1]] = seen.get(g[1], 0) + 1
        fv.output = sum(min(seen.get(m, 0), cap) / cap
                        for m, cap in prob.output_caps.items()) / len(prob.output_caps)
    else:
        fv.output = 1.0
    fv.exception = min(1.0, sum(1 for g in goals if g[0] == "exception") / EXCEPTION_CAP)
    fv.mutation = _ratio(sum(1 for g in goals if g[0] == "mutant"), len(prob.mutant_ids))
    return fv


def _ratio(a: int, b: int) -> float:
    return 1.0 if b == 0 else a / b


def _goal_kinds(cfg: GenConfig) -> set:
    kinds = {"line": "line", "branch": "branch", "output": "output",
             "exception": "exception", "mutation": "mutant"}
    return {kinds[c] for c in cfg.fitness}


class _Archive:
    """Tests that first covered some goal.

    Output goals count only up to each method's cap and exception goals up to
    EXCEPTION_CAP, so the archive stays bounded.
    """

    def __init__(self, kinds, output_caps):
        self.kinds = kinds
        self.output_caps = output_caps
        self.outputs = {}
        self.exceptions = 0
        self.covered = set()
        self.tests = []  # (steps, goals)

    def _admissible(self, g) -> bool:
        if g in self.covered or g[0] not in self.kinds:
            return False
        if g[0] == "output":
            return self.outputs.get(g[1], 0) < self.output_caps[g[1]]
        if g[0] == "exception":
            return self.exceptions < EXCEPTION_CAP
        return True

    def offer(self, steps, summary: _Summary) -> bool:
        if summary.goals <= self.covered:
            return False
        new = False
        for g in sorted(summary.goals, key=repr):
            if self._admissible(g):
                self.covered.add(g)
                new = True
                if g[0] == "output":
                    self.outputs[g[1]] = self.outputs.get(g[1], 0) + 1
                elif g[0] == "exception":
                    self.exceptions += 1
        if new:
            self.tests.append((steps, frozenset(summary.goals & self.covered)))
        return new

    def saturated(self, prob) -> bool:
        """True once every goal with a known total (all but exceptions) is covered."""
        kinds = self.kinds
        covered = self.covered
        if "line" in kinds and not prob.line_goals <= covered:
            return False
        if "branch" in kinds and not prob.branch_goals <= covered:
            return False
        if "mutant" in kinds and any(("mutant", m) not in covered for m in prob.mutant_ids):
            return False
        if "output" in kinds and any(self.outputs.get(m, 0) < cap
                                     for m, cap in self.output_caps.items()):
            return False
        return True

    def minimized(self) -> list:
        kept = list(self.tests)
        i = 0
        while i < len(kept):
            others = set()
            for j, (_, g) in enumerate(kept):
                if j != i:
                    others |= g
            if kept[i][1] <= others:
                del kept[i]
            else:
                i += 1
        return [steps for steps, _ in kept]


def _crossover(rng, a, b):
    alpha = rng.random()
    i = int(round(alpha * len(a)))
    j = int(round(alpha * len(b)))
    return a[:i] + b[j:], b[:j] + a[i:]


def _tournament(rng, scored, size=3):
    best = None
    for _ in range(size):
        cand = scored[rng.randrange(len(scored))]
        if best is None or cand[0] > best[0]:
            best = cand
    return best[1]


def _mutate_suite(rng, prob, suite):
    cfg = prob.cfg
    out = []
    for steps in suite:
        if rng.random() < 1.0 / max(1, len(suite)):
            out.append(_mutate_test(rng, prob, steps))
        else:
            out.append(steps)
    # insert fresh tests with decreasing probability
    p = 0.1
    while len(out) < cfg.max_tests_per_suite and rng.random() < p:
        out.append(_random_test(rng, prob))
        p *= 0.5
    if len(out) > 1 and rng.random() < 0.05:
        del out[rng.randrange(len(out))]
    return out[: cfg.max_tests_per_suite]


def _stable_seed(*parts) -> int:
    digest = hashlib.sha256("\x1f".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "big")


def generate(program: Program, cls: str, cfg: GenConfig, budget: int = None,
             env: dict = None, name: str = None, stream: str = "") -> TestSuite:
    """Generate a suite for ``cls``. Deterministic for a fixed ``cfg.seed``.

    ``budget`` counts test executions (cache hits are free) and defaults to
    ``cfg.budget_min``. ``stream`` selects an independent sub-seed, so runs on
    different program versions do not share random choices.
    """
    decl = program.cls(cls)
    if decl is None:
        raise KeyError(f"unknown class '{cls}'")
    suite_name = name or f"{cls}GeneratedTest"
    if not any(m.is_public for m in decl.methods):
        log.warning("class %s has no public methods; returning an empty suite", cls)
        return TestSuite(suite_name, ())
    budget = cfg.budget_min if budget is None else budget
    rng = random.Random(_stable_seed(cfg.seed, stream, cls))
    prob = _build_problem(program, cls, cfg, env, random.Random(_stable_seed(cfg.seed, cls, "mutants")))
    archive = _Archive(_goal_kinds(cfg), prob.output_caps)

    def evaluate(suite):
        fresh = [steps for steps in suite if steps not in prob.cache]
        fv = _fitness(prob, suite)
        for steps in fresh:
            archive.offer(steps, prob.cache[steps])
        return fv.total

    population = []
    for _ in range(cfg.population):
        size = rng.randint(1, max(1, cfg.max_tests_per_suite // 4))
        population.append([_random_test(rng, prob) for _ in range(size)])
    scored = [(evaluate(s), s) for s in population]
    generations = 0
    while prob.executions < budget and generations < budget and not archive.saturated(prob):
        generations += 1
        scored.sort(key=lambda x: -x[0])
        nxt = [scored[0][1]]
        while len(nxt) < cfg.population:
            a = _tournament(rng, scored)
            b = _tournament(rng, scored)
            if rng.random() < 0.75:
                a, b = _crossover(rng, a, b)
            nxt.append(_mutate_suite(rng, prob, a))
            if len(nxt) < cfg.population:
                nxt.append(_mutate_suite(rng, prob, b))
        scored = [(evaluate(s), s) for s in nxt]
    log.debug("generated %s: %d executions, %d generations, %d goals",
              cls, prob.executions, generations, len(archive.covered))
    tests = archive.minimized()
    cases = tuple(
        TestCase(f"test{i}", tuple(_plain(s) for s in steps)) for i, steps in enumerate(tests)
    )
    return TestSuite(suite_name, cases)


def _plain(step):
    if isinstance(step, _Call):
        return CallStep(step.var, step.receiver, step.method, step.args)
    return step


def fitness_of(program: Program, cls: str, suite: TestSuite, cfg: GenConfig,
               env: dict = None) -> FitnessVector:
    """FitnessVector of an existing suite (assert steps are run as plain calls)."""
    prob = _build_problem(program, cls, cfg, env, random.Random(_stable_seed(cfg.seed, cls, "mutants")))
    suite_steps = []
    for t in suite.cases:
        steps = []
        for s in t.steps:
            if isinstance(s, AssertStep):
                s = CallStep(None, s.receiver, s.method, s.args)
            steps.append(s)
        suite_steps.append(tuple(steps))
    return _fitness(prob, suite_steps)


# -- assertions -------------------------------------------------------------------


def add_assertions(program: Program, suite: TestSuite, env: dict = None,
                   step_limit: int = DEFAULT_STEP_LIMIT) -> TestSuite:
    """Turn every non-void call into an assertion on the value observed on ``program``.

    The call is replaced by the assertion (which performs the same call), so
    the test's behaviour is unchanged. A test that stops on a runtime error or
    a failing assertion keeps its prefix up to that step, without new
    assertions after it.
    """
    cases = []
    for test in suite.cases:
        result = run_test(program, test, env, step_limit)
        observed = dict(result.trace.returns)
        stop = len(test.steps)
        if isinstance(result.outcome, (RuntimeFault, AssertFail)):
            stop = _failing_step(test, result)
        steps = []
        for idx, step in enumerate(test.steps[: stop + 1]):
            if isinstance(step, CallStep) and step.var is None and idx in observed:
                step = AssertStep(step.receiver, step.method, step.args, observed[idx])
            steps.append(step)
        cases.append(TestCase(test.name, tuple(steps)))
    return TestSuite(suite.name, tuple(cases))


def _failing_step(test: TestCase, result) -> int:
    return result.outcome.step
