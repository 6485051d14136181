"""End-to-end testability estimation.

Tests are generated for the program P and for its enriched version P' (which
has synthetic setters and getters). Mutants of P are classified with merged
suites on both versions, and the per-mutant verdicts are aggregated into
per-line votes and per-method controllability, observability and testability.
"""
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Optional

from . import __version__
from .augment import AugmentationMap, enrich, prune
from .minilang.interp import DEFAULT_STEP_LIMIT
from .minilang.syntax import Program
from .minilang.testcase import TestSuite
from .mutation import Verdict, classify, generate_mutants
from .testgen import GenConfig, add_assertions, generate, scaled_budget

log = logging.getLogger(__name__)


class InvariantError(RuntimeError):
    """An internal consistency check failed."""


@dataclass(frozen=True)
class ConclusivenessConfig:
    chi_sq: float = 3.841459
    p: float = 0.5
    d: float = 0.15

    def __post_init__(self):
        if not 0 < self.p < 1 or not 0 < self.d < 1:
            raise ValueError("p and d must lie strictly between 0 and 1")
        if self.chi_sq <= 0:
            raise ValueError("chi_sq must be positive")


def sample_size(population: int, cfg: ConclusivenessConfig = ConclusivenessConfig()) -> int:
    """Smallest sample that represents ``population`` lines at the configured accuracy.

    Evaluated in exact rational arithmetic so boundary cases round correctly.
    """
    if population < 1:
        return 0
    chi = Fraction(repr(cfg.chi_sq))
    p = Fraction(repr(cfg.p))
    d = Fraction(repr(cfg.d))
    var = chi * p * (1 - p)
    s = var * population / (d * d * (population - 1) + var)
    return math.ceil(s)


@dataclass
class PipelineArtifacts:
    program: Program
    enriched: Program
    amap: AugmentationMap
    tests_p: TestSuite
    tests_p_prime: TestSuite
    tests_p_prime_noapi: TestSuite
    mutants: list
    verdicts_on_p: list
    verdicts_on_p_prime: list

    def suite_p(self) -> TestSuite:
        return _merge("S_P", self.tests_p, self.tests_p_prime_noapi)

    def suite_p_prime(self) -> TestSuite:
        return _merge("S_P'", self.tests_p, self.tests_p_prime_noapi, self.tests_p_prime)


@dataclass(frozen=True)
class VerdictSets:
    baseline: frozenset
    executed: frozenset
    revealed: frozenset


@dataclass(frozen=True)
class LineEvidence:
    line: int
    contr_vote: str
    obs_vote: str
    baseline_count: int
    executed_count: int
    revealed_count: int


@dataclass
class TestabilityEstimate:
    __test__ = False

    method: tuple
    contr_plus: int
    contr_minus: int
    obs_plus: int
    obs_minus: int
    controllability: Optional[float]
    observability: Optional[float]
    testability: Optional[float]
    mutated_lines: int
    sampled_lines: int
    threshold: int
    conclusive: bool
    evidences: list = field(default_factory=list)


def _merge(name: str, *suites: TestSuite) -> TestSuite:
    """Concatenate suites, prefixing test names with their origin suite."""
    cases = []
    for suite in suites:
        for case in suite.cases:
            cases.append(type(case)(f"{suite.name}.{case.name}", case.steps))
    return TestSuite(name, tuple(cases))


def class_loc(program: Program, cls: str) -> int:
    first, last = program.cls(cls).span
    return sum(1 for line in range(first, last + 1) if line in program.token_lines)


def budgets_for(programs, cfg: GenConfig) -> dict:
    """Per (source, class) budgets scaled over the class sizes of all ``programs``."""
    sizes = {
        (p.source_name, c.name): class_loc(p, c.name) for p in programs for c in p.classes
    }
    if not sizes:
        return {}
    lo, hi = min(sizes.values()), max(sizes.values())
    return {key: scaled_budget(loc, lo, hi, cfg) for key, loc in sizes.items()}


def run_pipeline(program: Program, classes=None, cfg: GenConfig = GenConfig(),
                 env: Optional[dict] = None, jobs: int = 1, budgets: Optional[dict] = None,
                 step_limit: int = DEFAULT_STEP_LIMIT) -> PipelineArtifacts:
    env = dict(env or {})
    names = [c.name for c in program.classes]
    if classes is not None:
        wanted = set(classes)
        unknown = wanted - set(names)
        if unknown:
            raise KeyError(f"unknown classes: {sorted(unknown)}")
        names = [n for n in names if n in wanted]
    if budgets is None:
        budgets = budgets_for([program], cfg)

    enriched, amap = enrich(program)
    cases_p, cases_pp = [], []
    for cls in names:
        budget = budgets.get((program.source_name, cls), cfg.budget_min)
        sp = generate(program, cls, cfg, budget, env, stream="P")
        spp = generate(enriched, cls, cfg, budget, env, stream="P'")
        cases_p += [type(c)(f"{cls}_{c.name}", c.steps) for c in sp.cases]
        cases_pp += [type(c)(f"{cls}_{c.name}", c.steps) for c in spp.cases]
    tests_p = add_assertions(program, TestSuite("TestsP", tuple(cases_p)), env, step_limit)
    tests_pp = add_assertions(enriched, TestSuite("TestsP'", tuple(cases_pp)), env, step_limit)
    noapi = prune(tests_pp, amap)
    noapi = TestSuite("TestsP'_noapi", noapi.cases)

    mutants = generate_mutants(program, names)
    # P' is reparsed, so node ids of later classes may shift; match mutants by id
    mutants_pp = generate_mutants(enriched, names)
    if [m.id for m in mutants] != [m.id for m in mutants_pp]:
        raise InvariantError("mutants of P and P' differ")
    art = PipelineArtifacts(program, enriched, amap, tests_p, tests_pp, noapi, mutants, [], [])
    art.verdicts_on_p = classify(program, mutants, art.suite_p(), env, step_limit, jobs)
    art.verdicts_on_p_prime = classify(enriched, mutants_pp, art.suite_p_prime(), env,
                                       step_limit, jobs)
    return art


def derive_sets(art: PipelineArtifacts) -> VerdictSets:
    on_p = {v.mutant_id: v.verdict for v in art.verdicts_on_p}
    on_pp = {v.mutant_id: v.verdict for v in art.verdicts_on_p_prime}
    if set(on_p) != set(on_pp):
        raise InvariantError("verdict lists are not aligned by mutant id")
    baseline = frozenset(m for m, v in on_pp.items() if v >= Verdict.EXECUTED)
    executed = frozenset(m for m, v in on_p.items() if v >= Verdict.EXECUTED)
    revealed = frozenset(m for m, v in on_pp.items() if v == Verdict.REVEALED)
    if not executed <= baseline:
        raise InvariantError(f"executed but not baseline: {sorted(executed - baseline)}")
    if not revealed <= baseline:
        raise InvariantError(f"revealed but not baseline: {sorted(revealed - baseline)}")
    return VerdictSets(baseline, executed, revealed)


def line_evidences(sets: VerdictSets, mutants: list) -> list:
    by_line = {}
    for m in mutants:
        if m.id in sets.baseline:
            by_line.setdefault(m.line, []).append(m.id)
    out = []
    for line in sorted(by_line):
        ids = by_line[line]
        b = len(ids)
        e = sum(1 for i in ids if i in sets.executed)
        r = sum(1 for i in ids if i in sets.revealed)
        out.append(LineEvidence(line, "+" if 2 * e > b else "-", "+" if 2 * r > b else "-",
                                b, e, r))
    return out


def estimate(evidences: list, method_of: dict, mutant_counts: dict,
             cfg: ConclusivenessConfig = ConclusivenessConfig()) -> list:
    """Per-method estimates.

    ``method_of`` maps each mutated line to its method and ``mutant_counts``
    maps each line to its number of mutants (of any verdict).
    """
    population = {}
    for line, count in mutant_counts.items():
        if count > 0:
            population.setdefault(method_of[line], set()).add(line)
    grouped = {}
    for ev in evidences:
        if ev.line not in method_of:
            raise KeyError(f"evidence line {ev.line} maps to no method")
        grouped.setdefault(method_of[ev.line], []).append(ev)
        population.setdefault(method_of[ev.line], set()).add(ev.line)
    out = []
    for mid in sorted(population):
        evs = grouped.get(mid, [])
        cp = sum(1 for e in evs if e.contr_vote == "+")
        op = sum(1 for e in evs if e.obs_vote == "+")
        cm, om = len(evs) - cp, len(evs) - op
        big_n = len(population[mid])
        n = len(evs)
        threshold = sample_size(big_n, cfg)
        if n == 0:
            c = o = t = None
        else:
            c = cp / (cp + cm)
            o = op / (op + om)
            t = c * o
        out.append(TestabilityEstimate(mid, cp, cm, op, om, c, o, t, big_n, n, threshold,
                                       n > 0 and n >= threshold, evs))
    return out


def estimate_artifacts(art: PipelineArtifacts, cfg: ConclusivenessConfig = ConclusivenessConfig(),
                       min_mutated_lines: int = 0) -> list:
    """Estimates for every mutated method of the pipeline's program.

    Methods with at most ``min_mutated_lines`` mutated lines are dropped.
    """
    sets = derive_sets(art)
    # methods may share a physical line, so lines are only grouped within a method
    by_method = {}
    for m in art.mutants:
        by_method.setdefault((m.cls, m.method), []).append(m)
    ests = []
    for mid in sorted(by_method):
        mutants = by_method[mid]
        counts = {}
        for m in mutants:
            counts[m.line] = counts.get(m.line, 0) + 1
        ests += estimate(line_evidences(sets, mutants), dict.fromkeys(counts, mid), counts, cfg)
    return [e for e in ests if e.mutated_lines > min_mutated_lines]


# -- reports -------------------------------------------------------------------


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def report_header(config: dict) -> dict:
    return {
        "tool": "testab",
        "version": __version__,
        "seed": config.get("seed"),
        "config_hash": config_hash(config),
        "config": config,
    }


def estimate_to_dict(e: TestabilityEstimate) -> dict:
    return {
        "method": f"{e.method[0]}.{e.method[1]}",
        "controllability": e.controllability,
        "observability": e.observability,
        "testability": e.testability,
        "conclusive": e.conclusive,
        "n": e.sampled_lines,
        "N": e.mutated_lines,
        "threshold": e.threshold,
        "votes": {"contr_plus": e.contr_plus, "contr_minus": e.contr_minus,
                  "obs_plus": e.obs_plus, "obs_minus": e.obs_minus},
        "line_evidences": [asdict(ev) for ev in e.evidences],
    }


def summary(estimates: list) -> dict:
    conclusive = sum(1 for e in estimates if e.conclusive)
    return {
        "methods": len(estimates),
        "conclusive_count": conclusive,
        "conclusive_portion": conclusive / len(estimates) if estimates else None,
    }


def estimate_report(estimates: list, config: dict) -> dict:
    return {
        "header": report_header(config),
        "methods": [estimate_to_dict(e) for e in estimates],
        "summary": summary(estimates),
    }


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=False) + "\n"
