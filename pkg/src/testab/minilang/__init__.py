"""The subject language: parser, AST, printer and tracing interpreter."""
from .interp import (
    DEFAULT_STEP_LIMIT, AssertFail, ExecutionResult, Pass, RuntimeFault, TestReferenceError,
    Trace, compare_results, run_test,
)
from .lexer import Diagnostic, SourceError
from .parser import parse_file, parse_program
from .printer import format_program
from .syntax import SYNTHETIC_PREFIX, ClassDecl, MethodDecl, Program, shape
from .testcase import (
    AssertStep, CallStep, NewStep, TestCase, TestSuite, format_suite, load_suite, parse_suite,
)

__all__ = [
    "DEFAULT_STEP_LIMIT", "SYNTHETIC_PREFIX", "AssertFail", "AssertStep", "CallStep",
    "ClassDecl", "Diagnostic", "ExecutionResult", "MethodDecl", "NewStep", "Pass", "Program",
    "RuntimeFault", "SourceError", "TestCase", "TestReferenceError", "TestSuite", "Trace",
    "compare_results", "format_program", "format_suite", "load_suite", "parse_file",
    "parse_program", "parse_suite", "run_test", "shape",
]
