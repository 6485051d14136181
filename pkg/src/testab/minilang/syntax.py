"""AST node types for the subject language.

Every node carries ``nid`` (a per-program unique id assigned in parse order)
and ``line`` (the physical source line). Nodes are frozen so programs can be
shared freely between threads and processes.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields, is_dataclass, replace
from typing import Any, Callable, Iterator, Optional, Union

PRIMITIVES = ("int", "bool")
SYNTHETIC_PREFIX = "_custom_"
ARITH_OPS = ("+", "-", "*", "/", "%")
COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")
LOGIC_OPS = ("&&", "||")


# -- expressions -------------------------------------------------------------


@dataclass(frozen=True)
class IntLit:
    nid: int
    line: int
    value: int


@dataclass(frozen=True)
class BoolLit:
    nid: int
    line: int
    value: bool


@dataclass(frozen=True)
class Name:
    """Unresolved identifier; replaced by Var/FieldRef/ConstRef after checking."""

    nid: int
    line: int
    name: str
    col: int = 0


@dataclass(frozen=True)
class Var:
    nid: int
    line: int
    name: str


@dataclass(frozen=True)
class FieldRef:
    nid: int
    line: int
    name: str


@dataclass(frozen=True)
class ConstRef:
    nid: int
    line: int
    name: str
    value: int


@dataclass(frozen=True)
class Unary:
    nid: int
    line: int
    op: str
    operand: Expr


@dataclass(frozen=True)
class Binary:
    nid: int
    line: int
    op: str
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Call:
    """Method call. ``receiver`` is None for calls on ``this``.

    ``target`` is the class declaring the called method, filled in by the
    checker.
    """

    nid: int
    line: int
    receiver: Optional[Expr]
    method: str
    args: tuple
    target: str = ""
    col: int = 0


@dataclass(frozen=True)
class Builtin:
    nid: int
    line: int
    name: str
    args: tuple


@dataclass(frozen=True)
class Ext:
    """Read of the external environment: ``ext("k")`` or ``ext_has("k")``."""

    nid: int
    line: int
    key: str
    has: bool


Expr = Union[IntLit, BoolLit, Name, Var, FieldRef, ConstRef, Unary, Binary, Call, Builtin, Ext]


# -- statements --------------------------------------------------------------


@dataclass(frozen=True)
class LocalDecl:
    nid: int
    line: int
    type: str
    name: str
    init: Expr


@dataclass(frozen=True)
class Assign:
    """Assignment to a local (``to_field`` false) or a field of ``this``."""

    nid: int
    line: int
    name: str
    value: Expr
    to_field: bool = False


@dataclass(frozen=True)
class If:
    nid: int
    line: int
    cond: Expr
    then: tuple
    orelse: tuple


@dataclass(frozen=True)
class While:
    nid: int
    line: int
    cond: Expr
    body: tuple


@dataclass(frozen=True)
class Return:
    nid: int
    line: int
    value: Optional[Expr]


@dataclass(frozen=True)
class CallStmt:
    nid: int
    line: int
    call: Call


@dataclass(frozen=True)
class Emit:
    nid: int
    line: int
    value: Expr


@dataclass(frozen=True)
class Nop:
    """Placeholder left behind by statement-deleting mutants. Never parsed."""

    nid: int
    line: int


Stmt = Union[LocalDecl, Assign, If, While, Return, CallStmt, Emit, Nop]


# -- declarations ------------------------------------------------------------


@dataclass(frozen=True)
class MethodDecl:
    name: str
    visibility: str
    params: tuple  # of (name, type)
    return_type: str
    body: tuple
    span: tuple  # (first_line, last_line)
    synthetic: bool = False

    @property
    def is_public(self) -> bool:
        return self.visibility == "public"


@dataclass(frozen=True)
class ClassDecl:
    name: str
    consts: tuple  # of (name, value)
    fields: tuple  # of (name, type)
    methods: tuple
    span: tuple = (0, 0)

    def method(self, name: str) -> Optional[MethodDecl]:
        for m in self.methods:
            if m.name == name:
                return m
        return None

    def field_type(self, name: str) -> Optional[str]:
        for fname, ftype in self.fields:
            if fname == name:
                return ftype
        return None

    def const_value(self, name: str) -> Optional[int]:
        for cname, value in self.consts:
            if cname == name:
                return value
        return None


@dataclass(frozen=True)
class Program:
    classes: tuple
    source_name: str = "<string>"
    source: str = field(default="", compare=False, repr=False)
    token_lines: frozenset = field(default=frozenset(), compare=False, repr=False)

    def cls(self, name: str) -> Optional[ClassDecl]:
        for c in self.classes:
            if c.name == name:
                return c
        return None

    def method(self, cls: str, name: str) -> Optional[MethodDecl]:
        c = self.cls(cls)
        return c.method(name) if c is not None else None

    def method_ids(self, include_synthetic: bool = False) -> list:
        return [
            (c.name, m.name)
            for c in self.classes
            for m in c.methods
            if include_synthetic or not m.synthetic
        ]

    def method_at_line(self, line: int) -> Optional[tuple]:
        for c in self.classes:
            for m in c.methods:
                if m.span[0] <= line <= m.span[1]:
                    return (c.name, m.name)
        return None


# -- generic traversal -------------------------------------------------------

_NODE_TYPES = (
    IntLit, BoolLit, Name, Var, FieldRef, ConstRef, Unary, Binary, Call, Builtin, Ext,
    LocalDecl, Assign, If, While, Return, CallStmt, Emit, Nop,
)


def is_node(obj: Any) -> bool:
    return isinstance(obj, _NODE_TYPES)


def children(node: Any) -> Iterator[Any]:
    """Yield direct child nodes of ``node`` in source order."""
    for f in fields(node):
        value = getattr(node, f.name)
        if is_node(value):
            yield value
        elif isinstance(value, tuple):
            for item in value:
                if is_node(item):
                    yield item


def walk(node: Any) -> Iterator[Any]:
    """Pre-order traversal over a node or a tuple of nodes."""
    if isinstance(node, tuple):
        for item in node:
            yield from walk(item)
        return
    yield node
    for child in children(node):
        yield from walk(child)


def method_nodes(method: MethodDecl) -> Iterator[Any]:
    return walk(method.body)


def transform(node: Any, fn: Callable[[Any], Optional[Any]]) -> Any:
    """Bottom-up rebuild. ``fn`` returns a replacement node or None to keep."""
    if isinstance(node, tuple):
        items = tuple(transform(item, fn) for item in node)
        return node if all(a is b for a, b in zip(items, node)) else items
    if not is_node(node):
        return node
    changes = {}
    for f in fields(node):
        value = getattr(node, f.name)
        if is_node(value) or isinstance(value, tuple):
            new = transform(value, fn)
            if new is not value:
                changes[f.name] = new
    rebuilt = replace(node, **changes) if changes else node
    out = fn(rebuilt)
    return rebuilt if out is None else out


def replace_node(program: Program, nid: int, replacement: Any) -> Program:
    """Return a copy of ``program`` with the node ``nid`` swapped out."""
    hit = []

    def swap(n):
        if n.nid == nid:
            hit.append(n)
            return replacement
        return None

    classes = []
    for c in program.classes:
        methods = tuple(replace(m, body=transform(m.body, swap)) for m in c.methods)
        classes.append(replace(c, methods=methods))
    if not hit:
        raise KeyError(f"no node with id {nid}")
    return replace(program, classes=tuple(classes))


def shape(obj: Any) -> Any:
    """Structural fingerprint that ignores node ids, lines and columns."""
    if isinstance(obj, tuple):
        return tuple(shape(o) for o in obj)
    if is_dataclass(obj) and not isinstance(obj, type):
        skip = {"nid", "line", "col", "span", "source", "token_lines", "source_name"}
        return (type(obj).__name__,) + tuple(
            shape(getattr(obj, f.name)) for f in fields(obj) if f.name not in skip
        )
    return obj
