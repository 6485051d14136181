"""Command-line entry point: ``testab <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 input or parse error, 3 internal
invariant violation.
"""
from __future__ import annotations

import argparse
import csv
import fnmatch
import io
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import __version__
from .augment import enrich, prune
from .estimator import (
    ConclusivenessConfig, InvariantError, budgets_for, config_hash, dump_json, estimate_artifacts,
    estimate_report, report_header, run_pipeline,
)
from .evalharness import (
    Corpus, HarnessError, StudyConfig, associate, combined_csv, conclusiveness_csv,
    correlations_csv, format_tables, match_tests, report_dict, study,
)
from .minilang.interp import TestReferenceError
from .minilang.lexer import SourceError
from .minilang.parser import parse_file
from .minilang.testcase import format_suite, load_suite
from .mutation import classify, generate_mutants, mutants_csv
from .staticmetrics import METRIC_NAMES, all_metrics
from .testgen import CRITERIA, GenConfig, add_assertions, generate

EXIT_OK, EXIT_USAGE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3
CONFIG_FILE = "testab.json"
SEED_ENV = "TESTAB_SEED"

log = logging.getLogger("testab")


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    seed: int = 1
    budget_min: int = 2000
    budget_max: int = 20000
    fitness: list = field(default_factory=lambda: list(CRITERIA))
    chi_sq: float = 3.841459
    p: float = 0.5
    d: float = 0.15
    min_mutated_lines: int = None
    include: list = field(default_factory=list)
    exclude: list = field(default_factory=list)
    format: str = None
    env: dict = field(default_factory=dict)

    def gen(self) -> GenConfig:
        return GenConfig(seed=self.seed, budget_min=self.budget_min, budget_max=self.budget_max,
                         fitness=tuple(self.fitness))

    def conclusiveness(self) -> ConclusivenessConfig:
        return ConclusivenessConfig(self.chi_sq, self.p, self.d)

    def header_dict(self, command: str) -> dict:
        d = asdict(self)
        d["command"] = command
        return d

    def wants(self, cls: str) -> bool:
        if self.include and not any(fnmatch.fnmatchcase(cls, g) for g in self.include):
            return False
        return not any(fnmatch.fnmatchcase(cls, g) for g in self.exclude)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _common(p):
    p.add_argument("--seed", type=int, help=f"random seed (fallback: ${SEED_ENV}, then config)")
    p.add_argument("--config", help=f"JSON config file (default: ./{CONFIG_FILE} if present)")
    p.add_argument("--jobs", type=int, default=1, help="worker processes; never changes output")
    p.add_argument("--format", choices=("json", "csv", "table"))
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.add_argument("--budget-min", type=int)
    p.add_argument("--budget-max", type=int)
    p.add_argument("--fitness", help="comma-separated subset of " + ",".join(CRITERIA))
    p.add_argument("--chi-sq", type=float)
    p.add_argument("--p", type=float, dest="prop")
    p.add_argument("--d", type=float, dest="accuracy")
    p.add_argument("--min-mutated-lines", type=int)
    p.add_argument("--include", action="append", default=[], help="class glob to include")
    p.add_argument("--exclude", action="append", default=[], help="class glob to exclude")
    p.add_argument("--env", action="append", default=[], metavar="KEY=INT",
                   help="value for ext(KEY); for manual experiments")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="testab", description="Mutation-based testability estimation")
    parser.add_argument("--version", action="version", version=f"testab {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("check", help="parse and type-check programs")
    p.add_argument("files", nargs="+")
    _common(p)

    p = sub.add_parser("metrics", help="per-method static metrics")
    p.add_argument("path")
    _common(p)

    p = sub.add_parser("mutants", help="list mutants, optionally classified by a suite")
    p.add_argument("file")
    p.add_argument("--suite", help=".mlt suite to classify the mutants with")
    _common(p)

    p = sub.add_parser("testgen", help="generate a test suite for one class")
    p.add_argument("file")
    p.add_argument("--class", dest="cls", required=True)
    p.add_argument("--budget", type=int, help="test executions (default: budget-min)")
    p.add_argument("--no-asserts", action="store_true")
    p.add_argument("--enriched", action="store_true",
                   help="generate on the enriched program and write the pruned suite")
    _common(p)

    p = sub.add_parser("enrich", help="print the program with synthetic setters/getters")
    p.add_argument("file")
    _common(p)

    p = sub.add_parser("estimate", help="testability estimates for a file or directory")
    p.add_argument("path")
    _common(p)

    p = sub.add_parser("associate", help="associate corpus tests with methods")
    p.add_argument("corpus")
    _common(p)

    p = sub.add_parser("study", help="run the correlation study on a corpus")
    p.add_argument("corpus")
    p.add_argument("--out-dir", help="directory for report.json and CSV tables")
    _common(p)
    return parser


# -- configuration --------------------------------------------------------------------


def load_config(args) -> RunConfig:
    cfg = RunConfig()
    path = args.config or (CONFIG_FILE if Path(CONFIG_FILE).is_file() else None)
    if path:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read config {path}: {exc}") from exc
        known = {f.name for f in fields(RunConfig)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        for k, v in data.items():
            setattr(cfg, k, v)
    if args.seed is not None:
        cfg.seed = args.seed
    elif os.environ.get(SEED_ENV):
        try:
            cfg.seed = int(os.environ[SEED_ENV])
        except ValueError as exc:
            raise ValueError(f"{SEED_ENV} must be an integer") from exc
    overrides = {
        "budget_min": args.budget_min, "budget_max": args.budget_max, "chi_sq": args.chi_sq,
        "p": args.prop, "d": args.accuracy, "min_mutated_lines": args.min_mutated_lines,
        "format": args.format,
    }
    for k, v in overrides.items():
        if v is not None:
            setattr(cfg, k, v)
    if args.fitness:
        cfg.fitness = [f.strip() for f in args.fitness.split(",") if f.strip()]
    cfg.include = list(cfg.include) + args.include
    cfg.exclude = list(cfg.exclude) + args.exclude
    env = dict(cfg.env)
    for item in args.env:
        key, sep, value = item.partition("=")
        try:
            env[key] = int(value)
        except ValueError:
            sep = ""
        if not sep or not key:
            raise UsageError(f"--env expects KEY=INT, got '{item}'")
    cfg.env = dict(sorted(env.items()))
    cfg.gen()
    cfg.conclusiveness()
    return cfg


def _write(args, text: str):
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _programs(path) -> list:
    path = Path(path)
    if path.is_dir():
        files = sorted(path.glob("*.ml"))
        if not files:
            raise FileNotFoundError(f"no .ml files in {path}")
        return [parse_file(f) for f in files]
    return [parse_file(path)]


def _table(rows) -> str:
    widths = [max(len(str(r[i])) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(str(c).ljust(w) for c, w in zip(r, widths)).rstrip()
                     for r in rows) + "\n"


def _csv_rows(rows) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _render_rows(rows, fmt: str, header: dict) -> str:
    if fmt == "json":
        keys = rows[0]
        return dump_json({"header": header, "rows": [dict(zip(keys, r)) for r in rows[1:]]})
    if fmt == "table":
        return _table(rows)
    return _csv_rows(rows)


# -- subcommands ----------------------------------------------------------------------


def cmd_check(args, cfg):
    for f in args.files:
        program = parse_file(f)
        methods = sum(len(c.methods) for c in program.classes)
        print(f"{f}: ok ({len(program.classes)} classes, {methods} methods)")


def cmd_metrics(args, cfg):
    rows = [("class", "method") + METRIC_NAMES]
    for program in _programs(args.path):
        for (cls, name), rec in all_metrics(program).items():
            if cfg.wants(cls):
                rows.append((cls, name) + tuple(getattr(rec, k) for k in METRIC_NAMES))
    _write(args, _render_rows(rows, cfg.format or "csv", report_header(cfg.header_dict("metrics"))))


def cmd_mutants(args, cfg):
    program = parse_file(args.file)
    classes = [c.name for c in program.classes if cfg.wants(c.name)]
    mutants = generate_mutants(program, classes)
    verdicts = None
    if args.suite:
        verdicts = classify(program, mutants, load_suite(args.suite), cfg.env, jobs=args.jobs)
    text = mutants_csv(mutants, verdicts)
    fmt = cfg.format or "csv"
    if fmt != "csv":
        rows = list(csv.reader(io.StringIO(text)))
        text = _render_rows(rows, fmt, report_header(cfg.header_dict("mutants")))
    _write(args, text)


def cmd_testgen(args, cfg):
    program = parse_file(args.file)
    if program.cls(args.cls) is None:
        raise KeyError(f"unknown class '{args.cls}'")
    target, amap = enrich(program) if args.enriched else (program, None)
    stream = "P'" if args.enriched else "P"
    suite = generate(target, args.cls, cfg.gen(), args.budget, cfg.env, name=f"{args.cls}Test",
                     stream=stream)
    if not args.no_asserts:
        suite = add_assertions(target, suite, cfg.env)
    hdr = report_header(cfg.header_dict("testgen"))
    header = f"generated by testab {hdr['version']} seed={hdr['seed']} config={hdr['config_hash']}"
    if amap is not None:
        header += f"\npruned-from: {suite.name} (enriched {Path(program.source_name).name})"
        suite = prune(suite, amap)
    _write(args, format_suite(suite, header))


def cmd_enrich(args, cfg):
    program = parse_file(args.file)
    enriched, _ = enrich(program)
    text = enriched.source
    _write(args, text if text.endswith("\n") else text + "\n")


def cmd_estimate(args, cfg):
    programs = _programs(args.path)
    gen = cfg.gen()
    budgets = budgets_for(programs, gen)
    min_lines = cfg.min_mutated_lines if cfg.min_mutated_lines is not None else 0
    estimates = []
    for program in programs:
        classes = [c.name for c in program.classes if cfg.wants(c.name)]
        if not classes:
            continue
        art = run_pipeline(program, classes, gen, cfg.env, args.jobs, budgets)
        estimates += estimate_artifacts(art, cfg.conclusiveness(), min_lines)
    report = estimate_report(estimates, cfg.header_dict("estimate"))
    fmt = cfg.format or "json"
    if fmt == "json":
        _write(args, dump_json(report))
        return
    rows = [("method", "controllability", "observability", "testability", "n", "N",
             "threshold", "conclusive")]
    for m in report["methods"]:
        rows.append((m["method"], _fmt(m["controllability"]), _fmt(m["observability"]),
                     _fmt(m["testability"]), m["n"], m["N"], m["threshold"], m["conclusive"]))
    _write(args, _render_rows(rows, fmt, report["header"]))


def _fmt(v):
    return "" if v is None else f"{v:.4f}"


def cmd_associate(args, cfg):
    corpus = Corpus.load(args.corpus)
    matches, unmatched = match_tests(corpus)
    rows = [("test", "class", "method", "heuristic")]
    rows += [(m.test, m.method[0], m.method[1], m.heuristic.value) for m in matches]
    rows += [(t, "", "", "") for t in unmatched]
    fmt = cfg.format or "csv"
    if fmt == "json":
        header = report_header(cfg.header_dict("associate"))
        payload = {
            "header": header,
            "tests": [dict(zip(rows[0], r)) for r in rows[1:len(matches) + 1]],
            "unmatched": unmatched,
            "methods": [
                {"method": f"{a.method[0]}.{a.method[1]}", "tests": a.tests,
                 "heuristic": a.heuristic.value}
                for a in associate(corpus)
            ],
        }
        _write(args, dump_json(payload))
    else:
        _write(args, _render_rows(rows, fmt, {}))


def cmd_study(args, cfg):
    corpus = Corpus.load(args.corpus)
    min_lines = cfg.min_mutated_lines if cfg.min_mutated_lines is not None else 2
    scfg = StudyConfig(cfg.gen(), cfg.conclusiveness(), min_lines,
                       env=tuple(sorted(cfg.env.items())))
    report = study(corpus, scfg, args.jobs)
    config = cfg.header_dict("study")
    config["min_mutated_lines"] = min_lines
    payload = dump_json(report_dict(report, config))
    if args.out_dir:
        out = Path(args.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(payload, encoding="utf-8")
        (out / "conclusiveness.csv").write_text(conclusiveness_csv(report), encoding="utf-8")
        (out / "correlations.csv").write_text(correlations_csv(report), encoding="utf-8")
        (out / "combined.csv").write_text(combined_csv(report), encoding="utf-8")
    fmt = cfg.format or ("table" if args.out_dir else "json")
    if fmt == "table":
        _write(args, format_tables(report))
    elif fmt == "csv":
        _write(args, conclusiveness_csv(report) + "\n" + correlations_csv(report) + "\n"
               + combined_csv(report))
    else:
        _write(args, payload)


COMMANDS = {
    "check": cmd_check, "metrics": cmd_metrics, "mutants": cmd_mutants, "testgen": cmd_testgen,
    "enrich": cmd_enrich, "estimate": cmd_estimate, "associate": cmd_associate,
    "study": cmd_study,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_usage(sys.stderr)
            raise UsageError("testab: error: a subcommand is required")
        if args.jobs < 1:
            raise UsageError("--jobs must be at least 1")
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        cfg = load_config(args)
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return EXIT_OK if not exc.code else EXIT_USAGE
    except SourceError as exc:
        for d in exc.diagnostics:
            print(f"{exc.source_name}:{d.line}:{d.col}: error: {d.message}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantError as exc:
        print(f"testab: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (OSError, ValueError, KeyError, HarnessError, TestReferenceError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"testab: error: {msg}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
