"""Pretty-printer for programs. Emits one statement per line."""
from __future__ import annotations

from .syntax import (
    Assign, Binary, BoolLit, Builtin, Call, CallStmt, ConstRef, Emit, Ext, FieldRef, If,
    IntLit, LocalDecl, Name, Nop, Program, Return, Unary, Var, While,
)

_PREC = {"||": 1, "&&": 2, "==": 3, "!=": 3, "<": 4, "<=": 4, ">": 4, ">=": 4,
         "+": 5, "-": 5, "*": 6, "/": 6, "%": 6}
_UNARY_PREC = 7


def format_expr(e, parent_prec: int = 0) -> str:
    if isinstance(e, IntLit):
        return str(e.value)
    if isinstance(e, BoolLit):
        return "true" if e.value else "false"
    if isinstance(e, (Var, Name)):
        return e.name
    if isinstance(e, FieldRef):
        return f"this.{e.name}"
    if isinstance(e, ConstRef):
        return e.name
    if isinstance(e, Ext):
        return f'{"ext_has" if e.has else "ext"}("{e.key}")'
    if isinstance(e, Unary):
        inner = format_expr(e.operand, _UNARY_PREC)
        # keep "- -x" from collapsing into a decrement-looking token pair
        sep = " " if inner.startswith(e.op) else ""
        return f"{e.op}{sep}{inner}"
    if isinstance(e, Binary):
        prec = _PREC[e.op]
        # left-associative: the right operand needs parens at equal precedence
        text = f"{format_expr(e.left, prec)} {e.op} {format_expr(e.right, prec + 1)}"
        return f"({text})" if prec < parent_prec else text
    if isinstance(e, Builtin):
        return f"{e.name}({', '.join(format_expr(a) for a in e.args)})"
    if isinstance(e, Call):
        args = ", ".join(format_expr(a) for a in e.args)
        if e.receiver is None:
            return f"this.{e.method}({args})"
        return f"{format_expr(e.receiver, _UNARY_PREC + 1)}.{e.method}({args})"
    raise TypeError(f"cannot format {e!r}")


def format_stmt(s, indent: int) -> list:
    pad = "    " * indent
    if isinstance(s, LocalDecl):
        return [f"{pad}{s.type} {s.name} = {format_expr(s.init)};"]
    if isinstance(s, Assign):
        target = f"this.{s.name}" if s.to_field else s.name
        return [f"{pad}{target} = {format_expr(s.value)};"]
    if isinstance(s, If):
        lines = [f"{pad}if ({format_expr(s.cond)}) {{"]
        for t in s.then:
            lines += format_stmt(t, indent + 1)
        if s.orelse:
            lines.append(f"{pad}}} else {{")
            for t in s.orelse:
                lines += format_stmt(t, indent + 1)
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, While):
        lines = [f"{pad}while ({format_expr(s.cond)}) {{"]
        for t in s.body:
            lines += format_stmt(t, indent + 1)
        lines.append(f"{pad}}}")
        return lines
    if isinstance(s, Return):
        if s.value is None:
            return [f"{pad}return;"]
        return [f"{pad}return {format_expr(s.value)};"]
    if isinstance(s, CallStmt):
        return [f"{pad}{format_expr(s.call)};"]
    if isinstance(s, Emit):
        return [f"{pad}emit({format_expr(s.value)});"]
    if isinstance(s, Nop):
        return [f"{pad}// removed"]
    raise TypeError(f"cannot format {s!r}")


def format_program(program: Program) -> str:
    out = []
    for c in program.classes:
        out.append(f"class {c.name} {{")
        for name, value in c.consts:
            out.append(f"    const int {name} = {value};")
        for name, ftype in c.fields:
            out.append(f"    {ftype} {name};")
        for m in c.methods:
            params = ", ".join(f"{t} {n}" for n, t in m.params)
            out.append(f"    {m.visibility} {m.return_type} {m.name}({params}) {{")
            for s in m.body:
                out += format_stmt(s, 2)
            out.append("    }")
        out.append("}")
    return "\n".join(out) + "\n"
