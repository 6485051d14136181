"""Study machinery: corpus loading, test-to-method association, rank statistics,
combined indicators and the correlation study over a corpus.
"""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .estimator import (
    ConclusivenessConfig, budgets_for, estimate_artifacts, estimate_to_dict, report_header,
    run_pipeline,
)
from .minilang.parser import parse_file
from .minilang.syntax import SYNTHETIC_PREFIX, Program
from .minilang.testcase import NewStep, load_suite
from .staticmetrics import METRIC_NAMES, method_metrics, rfc_test
from .testgen import GenConfig

log = logging.getLogger(__name__)

SIGNIFICANCE = 0.05
EXACT_MAX_N = 8
EQUALITY_METHODS = ("equals", "hashCode")
HELPER_PREFIXES = ("set", "get", "is")

INDICATORS = ("Testability", "Loc", "Rfc", "Cbo", "CboModified", "FanIn", "FanOut", "Wmc",
              "RfcTest")
_METRIC_OF = dict(zip(INDICATORS[1:8], METRIC_NAMES))


class HarnessError(Exception):
    """Study input that cannot be processed (e.g. no subjects)."""


# -- corpus ---------------------------------------------------------------------------


@dataclass
class Corpus:
    programs: list
    suites: list
    root: str = ""

    @classmethod
    def load(cls, root) -> "Corpus":
        root = Path(root)
        programs = [parse_file(p) for p in sorted((root / "src").glob("*.ml"))]
        suites = [load_suite(p) for p in sorted((root / "tests").glob("*.mlt"))]
        corpus = cls(programs, suites, root.name)
        corpus.validate()
        return corpus

    def class_index(self) -> dict:
        index = {}
        for p in self.programs:
            for c in p.classes:
                if c.name in index:
                    raise HarnessError(f"class '{c.name}' defined in more than one program")
                index[c.name] = p
        return index

    def validate(self):
        index = self.class_index()
        for suite in self.suites:
            for test in suite.cases:
                for step in test.steps:
                    if isinstance(step, NewStep) and step.cls not in index:
                        raise HarnessError(
                            f"{suite.name}.{test.name}: unknown class '{step.cls}'")
                if test.steps:
                    rfc_test(self.program_of(test), [test])

    def program_of(self, test) -> Optional[Program]:
        index = self.class_index()
        for step in test.steps:
            if isinstance(step, NewStep):
                return index[step.cls]
        return None


# -- association ------------------------------------------------------------------------


class Heuristic(str, Enum):
    NAME = "NameMatch"
    STEM = "StemMatch"
    CONTAINS = "ContainsMatch"
    UNIQUE_CALL = "UniqueCall"
    NON_HELPER_UNIQUE_CALL = "NonHelperUniqueCall"


HEURISTICS = tuple(Heuristic)
STEM_SUFFIXES = ("ing", "ed", "es", "s", "e")
MIN_STEM = 3


@dataclass(frozen=True)
class TestMatch:
    __test__ = False

    test: str  # "Suite.test"
    method: tuple
    heuristic: Heuristic


@dataclass
class Association:
    method: tuple
    tests: list
    heuristic: Heuristic


def _lower_first(s: str) -> str:
    return s[:1].lower() + s[1:]


def stem(word: str) -> str:
    word = word.lower()
    for suffix in STEM_SUFFIXES:
        if word.endswith(suffix) and len(word) - len(suffix) >= MIN_STEM:
            return word[: -len(suffix)]
    return word


def suite_class(suite_name: str) -> Optional[str]:
    if suite_name.endswith("Test") and len(suite_name) > 4:
        return suite_name[:-4]
    if suite_name.startswith("Test") and len(suite_name) > 4:
        return suite_name[4:]
    return None


def _candidates(program: Program, cls: str) -> list:
    decl = program.cls(cls)
    return [
        m.name for m in decl.methods
        if m.is_public and not m.synthetic and not m.name.startswith(SYNTHETIC_PREFIX)
        and m.name not in EQUALITY_METHODS
    ]


def _is_helper(name: str) -> bool:
    for prefix in HELPER_PREFIXES:
        if name.startswith(prefix) and (len(name) == len(prefix) or name[len(prefix)].isupper()):
            return True
    return False


def _match_one(test, cls: Optional[str], program: Program, enabled) -> Optional[tuple]:
    names = _candidates(program, cls) if cls else []
    base = test.name[4:] if test.name.startswith("test") else test.name
    if Heuristic.NAME in enabled and base:
        hits = [m for m in names if _lower_first(m) == _lower_first(base)]
        if len(hits) == 1:
            return hits[0], Heuristic.NAME
    if Heuristic.STEM in enabled and base:
        hits = [m for m in names if stem(m) == stem(base)]
        if len(hits) == 1:
            return hits[0], Heuristic.STEM
    if Heuristic.CONTAINS in enabled and base:
        hits = [m for m in names if len(m) >= MIN_STEM and m.lower() in base.lower()]
        if hits:
            longest = max(len(m) for m in hits)
            top = [m for m in hits if len(m) == longest]
            if len(top) == 1:
                return top[0], Heuristic.CONTAINS
    if cls is None:
        return None
    var_class = {}
    called = []
    for step in test.steps:
        if isinstance(step, NewStep):
            var_class[step.var] = step.cls
            continue
        if var_class.get(step.receiver) == cls and step.method in names and step.method not in called:
            called.append(step.method)
        if getattr(step, "var", None):
            m = program.method(var_class.get(step.receiver), step.method)
            var_class[step.var] = m.return_type if m else None
    if Heuristic.UNIQUE_CALL in enabled and len(called) == 1:
        return called[0], Heuristic.UNIQUE_CALL
    if Heuristic.NON_HELPER_UNIQUE_CALL in enabled:
        core = [m for m in called if not _is_helper(m)]
        if len(core) == 1:
            return core[0], Heuristic.NON_HELPER_UNIQUE_CALL
    return None


def match_tests(corpus: Corpus, heuristics=HEURISTICS):
    """Per-test association; returns (matches, unmatched test names)."""
    enabled = set(heuristics)
    index = corpus.class_index()
    matches, unmatched = [], []
    for suite in corpus.suites:
        cls = suite_class(suite.name)
        if cls not in index:
            cls = None
        for test in suite.cases:
            program = index[cls] if cls else corpus.program_of(test)
            full = f"{suite.name}.{test.name}"
            hit = _match_one(test, cls, program, enabled) if program is not None else None
            if hit is None:
                unmatched.append(full)
            else:
                matches.append(TestMatch(full, (cls, hit[0]), hit[1]))
    return matches, unmatched


def associate(corpus: Corpus, heuristics=HEURISTICS) -> list:
    """Aggregate per-test matches into one association per method."""
    matches, unmatched = match_tests(corpus, heuristics)
    if unmatched:
        log.info("%d tests not associated: %s", len(unmatched), ", ".join(unmatched))
    order = {h: i for i, h in enumerate(HEURISTICS)}
    by_method = {}
    for m in matches:
        a = by_method.get(m.method)
        if a is None:
            by_method[m.method] = Association(m.method, [m.test], m.heuristic)
        else:
            a.tests.append(m.test)
            if order[m.heuristic] < order[a.heuristic]:
                a.heuristic = m.heuristic
    return [by_method[k] for k in sorted(by_method)]


# -- rank statistics ------------------------------------------------------------------


@dataclass(frozen=True)
class CorrelationEntry:
    pair: tuple
    rho: Optional[float]
    p_value: Optional[float]
    n: int
    significant: bool

    def cell(self) -> str:
        return f"{self.rho:.2f}" if self.significant else "-"


def fractional_ranks(values) -> np.ndarray:
    return stats.rankdata(np.asarray(values, dtype=float), method="average")


def _pearson_parts(a2, b2):
    """Numerator and squared denominator of Pearson's r on integer vectors."""
    n = len(a2)
    num = n * sum(x * y for x, y in zip(a2, b2)) - sum(a2) * sum(b2)
    da = n * sum(x * x for x in a2) - sum(a2) ** 2
    db = n * sum(y * y for y in b2) - sum(b2) ** 2
    return num, da, db


def _ratio(num: int, den2: int) -> float:
    root = math.isqrt(den2)
    if root * root == den2:
        return num / root
    return num / math.sqrt(den2)


def spearman(x, y, pair=("x", "y"), exact_max_n: int = EXACT_MAX_N) -> CorrelationEntry:
    """Spearman's rho with a two-sided p-value.

    Ranks are doubled to integers so rho is computed exactly up to the final
    division; the permutation test compares integer numerators.
    """
    if len(x) != len(y):
        raise ValueError("vectors differ in length")
    n = len(x)
    if n < 3:
        raise ValueError("need at least 3 observations")
    a2 = [int(round(2 * r)) for r in fractional_ranks(x)]
    b2 = [int(round(2 * r)) for r in fractional_ranks(y)]
    num, da, db = _pearson_parts(a2, b2)
    if da == 0 or db == 0:
        return CorrelationEntry(tuple(pair), None, None, n, False)
    rho = max(-1.0, min(1.0, _ratio(num, da * db)))
    if n <= exact_max_n:
        p = _permutation_p(a2, b2, num)
    elif abs(rho) == 1.0:
        p = 0.0
    else:
        t = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))
    return CorrelationEntry(tuple(pair), rho, p, n, p <= SIGNIFICANCE)


def _permutation_p(a2, b2, num) -> float:
    n = len(a2)
    a = np.asarray(a2, dtype=np.int64)
    perms = np.asarray(list(itertools.permutations(b2)), dtype=np.int64)
    sums = perms @ a
    # n*sum(ab) - sum(a)sum(b) for every permutation
    nums = n * sums - int(a.sum()) * sum(b2)
    hits = int(np.count_nonzero(np.abs(nums) >= abs(num)))
    return hits / len(perms)


# -- combined indicator ---------------------------------------------------------------


@dataclass
class CombinedIndicator:
    base: str
    scores: dict
    reversed: bool


def combine(metric_values: dict, testability: dict, anticorrelated: bool,
            base: str = "metric") -> CombinedIndicator:
    """Average the metric rank with the testability rank.

    ``testability`` maps each method to its estimate value, or None when the
    estimate is inconclusive. Testability ranks are computed over the
    conclusive methods and stretched to the range of the metric ranks.
    """
    methods = sorted(metric_values)
    if set(testability) - set(methods):
        raise KeyError("testability given for methods without a metric value")
    m_ranks = dict(zip(methods, fractional_ranks([metric_values[m] for m in methods])))
    conclusive = [m for m in methods if testability.get(m) is not None]
    total = len(methods)
    scores = {m: float(m_ranks[m]) for m in methods}
    if not conclusive:
        log.warning("no conclusive estimates for %s; combined ranking equals the metric ranking",
                    base)
        return CombinedIndicator(base, scores, anticorrelated)
    sign = -1.0 if anticorrelated else 1.0
    t_ranks = fractional_ranks([sign * testability[m] for m in conclusive])
    k = len(conclusive)
    for m, r in zip(conclusive, t_ranks):
        if k == 1:
            scaled = (1 + total) / 2
        else:
            scaled = 1 + (r - 1) * (total - 1) / (k - 1)
        scores[m] = (float(m_ranks[m]) + float(scaled)) / 2
    return CombinedIndicator(base, scores, anticorrelated)


# -- study ----------------------------------------------------------------------------


@dataclass(frozen=True)
class StudyConfig:
    gen: GenConfig = GenConfig()
    conclusiveness: ConclusivenessConfig = ConclusivenessConfig()
    min_mutated_lines: int = 2
    exact_max_n: int = EXACT_MAX_N
    env: tuple = ()  # (key, value) pairs


@dataclass
class Subject:
    method: tuple
    tests: list
    heuristic: str
    metrics: dict
    rfc_test: int
    estimate: object


@dataclass
class StudyReport:
    subjects: list
    conclusiveness: list
    correlations: list
    combined: list
    unmatched: list = field(default_factory=list)


def _class_pipeline(args):
    program, cls, gen, budgets, env, ccfg, min_lines = args
    art = run_pipeline(program, [cls], gen, dict(env), 1, budgets)
    return estimate_artifacts(art, ccfg, min_lines)


def _indicator(subject: Subject, name: str):
    if name == "Testability":
        return subject.estimate.testability if subject.estimate.conclusive else None
    if name == "RfcTest":
        return subject.rfc_test
    return subject.metrics[_METRIC_OF[name]]


def study(corpus: Corpus, cfg: StudyConfig = StudyConfig(), jobs: int = 1) -> StudyReport:
    associations = {a.method: a for a in associate(corpus)}
    _, unmatched = match_tests(corpus)
    index = corpus.class_index()
    budgets = budgets_for(corpus.programs, cfg.gen)
    tasks = [
        (p, c.name, cfg.gen, budgets, cfg.env, cfg.conclusiveness, cfg.min_mutated_lines)
        for p in corpus.programs for c in p.classes
        if any(mid[0] == c.name for mid in associations)
    ]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_class_pipeline, tasks))
    else:
        results = [_class_pipeline(t) for t in tasks]

    tests_by_name = {
        f"{s.name}.{t.name}": t for s in corpus.suites for t in s.cases
    }
    subjects = []
    for estimates in results:
        for est in estimates:
            assoc = associations.get(est.method)
            if assoc is None:
                continue
            program = index[est.method[0]]
            tests = [tests_by_name[name] for name in assoc.tests]
            subjects.append(Subject(
                est.method, list(assoc.tests), assoc.heuristic.value,
                method_metrics(program, est.method).as_dict(),
                rfc_test(program, tests).rfc_test, est,
            ))
    subjects.sort(key=lambda s: s.method)
    if not subjects:
        raise HarnessError("empty subject set")

    conclusiveness = []
    for p in corpus.programs:
        names = {c.name for c in p.classes}
        subs = [s for s in subjects if s.method[0] in names]
        conclusiveness.append(_conclusiveness_row(Path(p.source_name).stem, subs))
    conclusiveness.append(_conclusiveness_row("total", subjects))

    correlations = []
    for a, b in itertools.combinations(INDICATORS, 2):
        correlations.append(_correlate(subjects, a, b, cfg.exact_max_n))

    combined = _combined_table(subjects, cfg.exact_max_n)
    return StudyReport(subjects, conclusiveness, correlations, combined, unmatched)


def _conclusiveness_row(name, subjects) -> dict:
    conclusive = sum(1 for s in subjects if s.estimate.conclusive)
    return {"project": name, "subjects": len(subjects), "conclusive": conclusive,
            "portion": conclusive / len(subjects) if subjects else None}


def _correlate(subjects, a, b, exact_max_n) -> CorrelationEntry:
    xs, ys = [], []
    for s in subjects:
        x, y = _indicator(s, a), _indicator(s, b)
        if x is not None and y is not None:
            xs.append(x)
            ys.append(y)
    if len(xs) < 3:
        return CorrelationEntry((a, b), None, None, len(xs), False)
    return spearman(xs, ys, (a, b), exact_max_n)


def _combined_table(subjects, exact_max_n) -> list:
    truth = [s.rfc_test for s in subjects]
    t_vs_truth = _correlate(subjects, "Testability", "RfcTest", exact_max_n)
    # testability falls as test effort grows, so its ranking is reversed
    # unless the observed association is positive
    anticorrelated = not (t_vs_truth.rho is not None and t_vs_truth.rho > 0)
    testability = {
        s.method: s.estimate.testability if s.estimate.conclusive else None for s in subjects
    }
    rows = []
    for name in INDICATORS[1:8]:
        values = {s.method: s.metrics[_METRIC_OF[name]] for s in subjects}
        base = _safe_spearman([values[s.method] for s in subjects], truth,
                              (name, "RfcTest"), exact_max_n)
        comb = combine(values, testability, anticorrelated, name)
        combined = _safe_spearman([comb.scores[s.method] for s in subjects], truth,
                                  (f"{name}+Testability", "RfcTest"), exact_max_n)
        rows.append({"metric": name, "base": base, "combined": combined,
                     "reversed": anticorrelated})
    return rows


def _safe_spearman(x, y, pair, exact_max_n) -> CorrelationEntry:
    if len(x) < 3:
        return CorrelationEntry(pair, None, None, len(x), False)
    return spearman(x, y, pair, exact_max_n)


# -- report output --------------------------------------------------------------------


def _entry_dict(e: CorrelationEntry) -> dict:
    return {"pair": list(e.pair), "rho": e.rho, "p_value": e.p_value, "n": e.n,
            "significant": e.significant}


def report_dict(report: StudyReport, config: dict) -> dict:
    return {
        "header": report_header(config),
        "subjects": [
            {
                "method": f"{s.method[0]}.{s.method[1]}",
                "heuristic": s.heuristic,
                "tests": s.tests,
                "metrics": s.metrics,
                "rfc_test": s.rfc_test,
                "estimate": estimate_to_dict(s.estimate),
            }
            for s in report.subjects
        ],
        "unmatched_tests": report.unmatched,
        "conclusiveness": report.conclusiveness,
        "correlations": [_entry_dict(e) for e in report.correlations],
        "combined": [
            {"metric": r["metric"], "reversed": r["reversed"],
             "base": _entry_dict(r["base"]), "combined": _entry_dict(r["combined"])}
            for r in report.combined
        ],
    }


def _csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in rows:
        w.writerow(row)
    return buf.getvalue()


def _num(v) -> str:
    return "" if v is None else repr(v)


def conclusiveness_csv(report: StudyReport) -> str:
    rows = [("project", "subjects", "conclusive", "portion")]
    rows += [(r["project"], r["subjects"], r["conclusive"], _num(r["portion"]))
             for r in report.conclusiveness]
    return _csv(rows)


def correlations_csv(report: StudyReport) -> str:
    rows = [("a", "b", "rho", "p_value", "n", "significant")]
    rows += [(e.pair[0], e.pair[1], _num(e.rho), _num(e.p_value), e.n, e.significant)
             for e in report.correlations]
    return _csv(rows)


def combined_csv(report: StudyReport) -> str:
    rows = [("metric", "reversed", "base_rho", "base_p", "combined_rho", "combined_p", "n")]
    for r in report.combined:
        b, c = r["base"], r["combined"]
        rows.append((r["metric"], r["reversed"], _num(b.rho), _num(b.p_value), _num(c.rho),
                     _num(c.p_value), b.n))
    return _csv(rows)


def _table(rows) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(str(c).rjust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def format_tables(report: StudyReport) -> str:
    parts = ["Conclusiveness"]
    parts.append(_table([("project", "subjects", "conclusive", "portion")] + [
        (r["project"], r["subjects"], r["conclusive"],
         "-" if r["portion"] is None else f"{r['portion']:.2f}")
        for r in report.conclusiveness
    ]))
    cells = {e.pair: e.cell() for e in report.correlations}
    matrix = [("",) + INDICATORS]
    for a in INDICATORS:
        row = [a]
        for b in INDICATORS:
            if a == b:
                row.append("1.00")
            else:
                row.append(cells.get((a, b)) or cells.get((b, a)))
        matrix.append(tuple(row))
    parts += ["Spearman correlations", _table(matrix)]
    parts.append("Base vs combined correlation with RfcTest")
    parts.append(_table([("metric", "base", "combined")] + [
        (r["metric"], r["base"].cell(), r["combined"].cell()) for r in report.combined
    ]))
    return "\n".join(parts)
