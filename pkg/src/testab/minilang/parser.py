"""Parser and static checker for subject programs.

Grammar (``//`` and ``#`` start line comments)::

    program  := class*
    class    := 'class' NAME '{' member* '}'
    member   := 'const' 'int' NAME '=' ['-'] INT ';'
              | type NAME ';'
              | ['public'|'private'] (type|'void') NAME '(' [type NAME {',' type NAME}] ')' block
    type     := 'int' | 'bool' | NAME
    block    := '{' stmt* '}'
    body     := block | stmt
    stmt     := 'if' '(' expr ')' body ['else' body]
              | 'while' '(' expr ')' body
              | 'return' [expr] ';'
              | 'emit' '(' expr ')' ';'
              | ('int'|'bool') NAME '=' expr ';'
              | ['this' '.'] NAME '=' expr ';'
              | call ';'
    expr     := the usual C precedence over || && == != < <= > >= + - * / % unary - !
    primary  := INT | 'true' | 'false' | NAME | 'this' '.' NAME | NAME '(' args ')'
              | 'ext' '(' STRING ')' | 'ext_has' '(' STRING ')' | '(' expr ')'
    postfix  := primary {'.' NAME '(' args ')'}

Methods without a visibility modifier are public. Methods whose name starts
with ``_custom_`` are synthetic.
"""
from __future__ import annotations

from dataclasses import replace

from .lexer import Diagnostic, SourceError, TokenStream, tokenize
from .syntax import (
    COMPARE_OPS, PRIMITIVES, SYNTHETIC_PREFIX, Assign, Binary, BoolLit, Builtin, Call,
    CallStmt, ClassDecl, ConstRef, Emit, Ext, FieldRef, If, IntLit, LocalDecl, MethodDecl,
    Name, Program, Return, Unary, Var, While,
)

BUILTINS = {"abs": (("int",), "int")}

_BINARY_LEVELS = (
    ("||",),
    ("&&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("+", "-"),
    ("*", "/", "%"),
)


class _Parser:
    def __init__(self, source: str, source_name: str):
        self.ts = TokenStream(tokenize(source, source_name), source_name)
        self.next_id = 0
        self.positions = {}  # nid -> Token, for diagnostics only

    def nid(self) -> int:
        self.next_id += 1
        return self.next_id

    # -- declarations --------------------------------------------------------

    def program(self) -> list:
        classes = []
        while self.ts.tok.kind != "eof":
            classes.append(self.class_decl())
        return classes

    def class_decl(self) -> ClassDecl:
        first = self.ts.expect("class")
        name = self.ts.ident("class name").text
        self.ts.expect("{")
        consts, fields, methods = [], [], []
        while not self.ts.at("}"):
            if self.ts.tok.kind == "eof":
                self.ts.error(f"unterminated class '{name}'")
            if self.ts.accept("const"):
                self.ts.expect("int")
                cname = self.ts.ident("constant name")
                self.ts.expect("=")
                consts.append((cname.text, self.ts.integer()))
                self.ts.expect(";")
            elif (self.ts.at("public") or self.ts.at("private") or self.ts.at("void")
                  or self.ts.peek(2).text == "("):
                m = self.method_decl()
                methods.append(m)
            else:
                ftype = self.type_name(allow_void=False)
                fname = self.ts.ident("field name")
                self.ts.expect(";")
                fields.append((fname.text, ftype))
        last = self.ts.expect("}")
        return ClassDecl(name, tuple(consts), tuple(fields), tuple(methods), (first.line, last.line))

    def type_name(self, allow_void: bool) -> str:
        t = self.ts.tok
        if t.text in PRIMITIVES or (allow_void and t.text == "void"):
            self.ts.advance()
            return t.text
        return self.ts.ident("type").text

    def method_decl(self) -> MethodDecl:
        first = self.ts.tok
        visibility = "public"
        if self.ts.at("public") or self.ts.at("private"):
            visibility = self.ts.advance().text
        ret = self.type_name(allow_void=True)
        name = self.ts.ident("method name").text
        self.ts.expect("(")
        params = []
        if not self.ts.at(")"):
            while True:
                ptype = self.type_name(allow_void=False)
                pname = self.ts.ident("parameter name").text
                params.append((pname, ptype))
                if not self.ts.accept(","):
                    break
        self.ts.expect(")")
        body = self.block()
        last = self.ts.tokens[self.ts.pos - 1]
        return MethodDecl(
            name=name,
            visibility=visibility,
            params=tuple(params),
            return_type=ret,
            body=body,
            span=(first.line, last.line),
            synthetic=name.startswith(SYNTHETIC_PREFIX),
        )

    # -- statements ----------------------------------------------------------

    def block(self) -> tuple:
        self.ts.expect("{")
        stmts = []
        while not self.ts.at("}"):
            if self.ts.tok.kind == "eof":
                self.ts.error("unterminated block")
            stmts.append(self.statement())
        self.ts.expect("}")
        return tuple(stmts)

    def body(self) -> tuple:
        if self.ts.at("{"):
            return self.block()
        return (self.statement(),)

    def statement(self):
        ts = self.ts
        tok = ts.tok
        line = tok.line
        if ts.accept("if"):
            ts.expect("(")
            cond = self.expr()
            ts.expect(")")
            then = self.body()
            orelse = self.body() if ts.accept("else") else ()
            return If(self.nid(), line, cond, then, orelse)
        if ts.accept("while"):
            ts.expect("(")
            cond = self.expr()
            ts.expect(")")
            return While(self.nid(), line, cond, self.body())
        if ts.accept("return"):
            nid = self.nid()
            value = None if ts.at(";") else self.expr()
            ts.expect(";")
            return Return(nid, line, value)
        if ts.accept("emit"):
            nid = self.nid()
            ts.expect("(")
            value = self.expr()
            ts.expect(")")
            ts.expect(";")
            return Emit(nid, line, value)
        if tok.text in PRIMITIVES:
            ts.advance()
            nid = self.nid()
            name = ts.ident("local variable name")
            self.positions[nid] = name
            ts.expect("=")
            init = self.expr()
            ts.expect(";")
            return LocalDecl(nid, line, tok.text, name.text, init)
        if tok.kind == "ident" and tok.text not in ("this",) and ts.peek().text == "=":
            ts.advance()
            ts.advance()
            nid = self.nid()
            value = self.expr()
            ts.expect(";")
            self.positions[nid] = tok
            return Assign(nid, line, tok.text, value, to_field=False)
        if tok.text == "this" and ts.peek().text == "." and ts.peek(3).text == "=":
            ts.advance()
            ts.advance()
            name = ts.ident("field name")
            ts.expect("=")
            nid = self.nid()
            value = self.expr()
            ts.expect(";")
            self.positions[nid] = name
            return Assign(nid, line, name.text, value, to_field=True)
        if tok.kind == "ident" and ts.peek().kind == "ident" and tok.text not in ("this",):
            ts.error(f"local variables must have a primitive type, not '{tok.text}'")
        nid = self.nid()
        expr = self.expr()
        ts.expect(";")
        if not isinstance(expr, Call):
            ts.error("expression statement must be a method call", tok)
        return CallStmt(nid, line, expr)

    # -- expressions ---------------------------------------------------------

    def expr(self, level: int = 0):
        if level == len(_BINARY_LEVELS):
            return self.unary()
        left = self.expr(level + 1)
        ops = _BINARY_LEVELS[level]
        while self.ts.tok.kind == "op" and self.ts.tok.text in ops:
            op = self.ts.advance()
            nid = self.nid()
            right = self.expr(level + 1)
            left = Binary(nid, op.line, op.text, left, right)
            self.positions[nid] = op
        return left

    def unary(self):
        tok = self.ts.tok
        if tok.kind == "op" and tok.text in ("-", "!"):
            self.ts.advance()
            nid = self.nid()
            operand = self.unary()
            self.positions[nid] = tok
            return Unary(nid, tok.line, tok.text, operand)
        return self.postfix()

    def postfix(self):
        expr = self.primary()
        while self.ts.at("."):
            self.ts.advance()
            name = self.ts.ident("method name")
            if not self.ts.at("("):
                self.ts.error("field access is only allowed on 'this'", name)
            nid = self.nid()
            args = self.args()
            expr = Call(nid, name.line, expr, name.text, args, col=name.col)
        return expr

    def args(self) -> tuple:
        self.ts.expect("(")
        out = []
        if not self.ts.at(")"):
            while True:
                out.append(self.expr())
                if not self.ts.accept(","):
                    break
        self.ts.expect(")")
        return tuple(out)

    def primary(self):
        ts = self.ts
        tok = ts.tok
        if tok.kind == "int":
            ts.advance()
            value = int(tok.text)
            if value >= 2**63:
                ts.error("integer literal out of 64-bit range", tok)
            return IntLit(self.nid(), tok.line, value)
        if tok.text in ("true", "false") and tok.kind == "ident":
            ts.advance()
            return BoolLit(self.nid(), tok.line, tok.text == "true")
        if ts.accept("("):
            inner = self.expr()
            ts.expect(")")
            return inner
        if tok.text in ("ext", "ext_has") and tok.kind == "ident":
            ts.advance()
            ts.expect("(")
            key = ts.tok
            if key.kind != "string":
                ts.error(f"{tok.text} expects a string key")
            ts.advance()
            ts.expect(")")
            return Ext(self.nid(), tok.line, key.text[1:-1], tok.text == "ext_has")
        if tok.text == "this" and tok.kind == "ident":
            ts.advance()
            ts.expect(".")
            name = ts.ident("member name")
            if ts.at("("):
                nid = self.nid()
                return Call(nid, name.line, None, name.text, self.args(), col=name.col)
            return FieldRef(self.nid(), name.line, name.text)
        if tok.kind == "ident" and tok.text not in ("new", "assert", "class", "void"):
            name = ts.ident()
            if ts.at("("):
                nid = self.nid()
                args = self.args()
                if name.text in BUILTINS:
                    return Builtin(nid, name.line, name.text, args)
                return Call(nid, name.line, None, name.text, args, col=name.col)
            return Name(self.nid(), name.line, name.text, col=name.col)
        ts.error(f"unexpected '{tok.text or 'end of input'}' in expression")


class _Checker:
    """Resolves names and type-checks a parsed program."""

    def __init__(self, classes, source_name: str, positions: dict):
        self.positions = positions
        self.classes = {c.name: c for c in classes}
        self.order = list(classes)
        self.source_name = source_name
        self.diags = []

    def err(self, line: int, col: int, message: str):
        self.diags.append(Diagnostic(line, col, message))

    def run(self) -> list:
        seen = set()
        for c in self.order:
            if c.name in seen:
                self.err(c.span[0], 1, f"duplicate class '{c.name}'")
            seen.add(c.name)
        for c in self.order:
            self.check_members(c)
        if self.diags:
            return []
        self.check_containment()
        if self.diags:
            return []
        return [self.check_class(c) for c in self.order]

    def check_members(self, c: ClassDecl):
        names = {}
        members = [(n, "const", c.span[0]) for n, _ in c.consts]
        members += [(n, "field", c.span[0]) for n, _ in c.fields]
        members += [(m.name, "method", m.span[0]) for m in c.methods]
        for n, kind, line in members:
            if n in names:
                self.err(line, 1, f"duplicate member '{n}' in class '{c.name}'")
            names[n] = kind
        for fname, ftype in c.fields:
            if ftype not in PRIMITIVES and ftype not in self.classes:
                self.err(c.span[0], 1, f"unresolved type '{ftype}' for field '{c.name}.{fname}'")
        for m in c.methods:
            pnames = set()
            for pname, ptype in m.params:
                if ptype not in PRIMITIVES:
                    self.err(m.span[0], 1,
                             f"non-primitive parameter '{pname}' of type '{ptype}' in '{c.name}.{m.name}'")
                if pname in pnames:
                    self.err(m.span[0], 1, f"duplicate parameter '{pname}' in '{c.name}.{m.name}'")
                pnames.add(pname)
            if m.return_type not in PRIMITIVES + ("void",):
                if not m.synthetic:
                    self.err(m.span[0], 1,
                             f"method '{c.name}.{m.name}' must return int, bool or void")
                elif m.return_type not in self.classes:
                    self.err(m.span[0], 1, f"unresolved type '{m.return_type}'")

    def check_containment(self):
        # Class-typed fields are auto-instantiated, so containment must be acyclic.
        state = {}

        def visit(name, stack):
            if state.get(name) == 2:
                return
            if state.get(name) == 1:
                cycle = " -> ".join(stack + [name])
                self.err(self.classes[name].span[0], 1, f"cyclic field containment: {cycle}")
                return
            state[name] = 1
            for _, ftype in self.classes[name].fields:
                if ftype in self.classes:
                    visit(ftype, stack + [name])
            state[name] = 2

        for c in self.order:
            visit(c.name, [])

    def check_class(self, c: ClassDecl) -> ClassDecl:
        methods = tuple(self.check_method(c, m) for m in c.methods)
        return replace(c, methods=methods)

    def check_method(self, c: ClassDecl, m: MethodDecl) -> MethodDecl:
        self.cls = c
        self.method = m
        scopes = [dict((p, t) for p, t in m.params)]
        body = self.stmts(m.body, scopes)
        if m.return_type != "void" and not _always_returns(body):
            self.err(m.span[0], 1, f"missing return on some path in '{c.name}.{m.name}'")
        return replace(m, body=body)

    def lookup_local(self, scopes, name):
        for scope in reversed(scopes):
            if name in scope:
                return scope[name]
        return None

    def stmts(self, stmts, scopes) -> tuple:
        scopes.append({})
        out = tuple(self.stmt(s, scopes) for s in stmts)
        scopes.pop()
        return out

    def stmt(self, s, scopes):
        if isinstance(s, LocalDecl):
            init, t = self.expr(s.init, scopes)
            self.expect_type(t, s.type, s.line, f"initializer of '{s.name}'")
            if self.lookup_local(scopes, s.name) is not None:
                tok = self.positions.get(s.nid)
                self.err(s.line, tok.col if tok else 1, f"duplicate local variable '{s.name}'")
            scopes[-1][s.name] = s.type
            return replace(s, init=init)
        if isinstance(s, Assign):
            value, t = self.expr(s.value, scopes)
            tok = self.positions.get(s.nid)
            col = tok.col if tok else 1
            if not s.to_field:
                lt = self.lookup_local(scopes, s.name)
                if lt is not None:
                    self.expect_type(t, lt, s.line, f"assignment to '{s.name}'")
                    return replace(s, value=value)
                if self.cls.const_value(s.name) is not None:
                    self.err(s.line, col, f"cannot assign to constant '{s.name}'")
                    return replace(s, value=value)
            ft = self.cls.field_type(s.name)
            if ft is None:
                self.err(s.line, col, f"unresolved name '{s.name}'")
                return replace(s, value=value)
            if ft not in PRIMITIVES:
                self.err(s.line, col, f"cannot assign to class-typed field '{s.name}'")
            else:
                self.expect_type(t, ft, s.line, f"assignment to '{s.name}'")
            return replace(s, value=value, to_field=True)
        if isinstance(s, If):
            cond, t = self.expr(s.cond, scopes)
            self.expect_type(t, "bool", s.line, "if condition")
            return replace(s, cond=cond, then=self.stmts(s.then, scopes),
                           orelse=self.stmts(s.orelse, scopes))
        if isinstance(s, While):
            cond, t = self.expr(s.cond, scopes)
            self.expect_type(t, "bool", s.line, "while condition")
            return replace(s, cond=cond, body=self.stmts(s.body, scopes))
        if isinstance(s, Return):
            rt = self.method.return_type
            if s.value is None:
                if rt != "void":
                    self.err(s.line, 1, f"missing return value in '{self.method.name}'")
                return s
            value, t = self.expr(s.value, scopes)
            if rt == "void":
                self.err(s.line, 1, f"void method '{self.method.name}' cannot return a value")
            else:
                self.expect_type(t, rt, s.line, "return value")
            return replace(s, value=value)
        if isinstance(s, Emit):
            value, t = self.expr(s.value, scopes)
            if t not in PRIMITIVES:
                self.err(s.line, 1, "emit expects an int or bool value")
            return replace(s, value=value)
        if isinstance(s, CallStmt):
            call, _ = self.expr(s.call, scopes, void_ok=True)
            return replace(s, call=call)
        raise TypeError(f"unexpected statement {s!r}")

    def expect_type(self, actual, expected, line, what):
        if actual is not None and actual != expected:
            self.err(line, 1, f"type mismatch in {what}: expected {expected}, found {actual}")

    def expr(self, e, scopes, void_ok=False):
        """Return (resolved expression, static type or None on error)."""
        if isinstance(e, IntLit):
            return e, "int"
        if isinstance(e, BoolLit):
            return e, "bool"
        if isinstance(e, Name):
            lt = self.lookup_local(scopes, e.name)
            if lt is not None:
                return Var(e.nid, e.line, e.name), lt
            ft = self.cls.field_type(e.name)
            if ft is not None:
                return FieldRef(e.nid, e.line, e.name), ft
            cv = self.cls.const_value(e.name)
            if cv is not None:
                return ConstRef(e.nid, e.line, e.name, cv), "int"
            self.err(e.line, e.col, f"unresolved name '{e.name}'")
            return e, None
        if isinstance(e, FieldRef):
            ft = self.cls.field_type(e.name)
            if ft is None:
                self.err(e.line, 1, f"unresolved field '{e.name}'")
            return e, ft
        if isinstance(e, Ext):
            return e, "bool" if e.has else "int"
        if isinstance(e, Unary):
            operand, t = self.expr(e.operand, scopes)
            want = "int" if e.op == "-" else "bool"
            self.expect_type(t, want, e.line, f"operand of '{e.op}'")
            return replace(e, operand=operand), want
        if isinstance(e, Binary):
            left, lt = self.expr(e.left, scopes)
            right, rt = self.expr(e.right, scopes)
            e = replace(e, left=left, right=right)
            if e.op in ("&&", "||"):
                self.expect_type(lt, "bool", e.line, f"operand of '{e.op}'")
                self.expect_type(rt, "bool", e.line, f"operand of '{e.op}'")
                return e, "bool"
            if e.op in ("==", "!="):
                if lt is not None and rt is not None:
                    if lt != rt or lt not in PRIMITIVES:
                        self.err(e.line, 1, f"cannot compare {lt} with {rt}")
                return e, "bool"
            self.expect_type(lt, "int", e.line, f"operand of '{e.op}'")
            self.expect_type(rt, "int", e.line, f"operand of '{e.op}'")
            return e, ("bool" if e.op in COMPARE_OPS else "int")
        if isinstance(e, Builtin):
            params, ret = BUILTINS[e.name]
            args = []
            if len(e.args) != len(params):
                self.err(e.line, 1, f"{e.name} expects {len(params)} argument(s)")
            for a, pt in zip(e.args, params):
                a2, t = self.expr(a, scopes)
                self.expect_type(t, pt, e.line, f"argument of {e.name}")
                args.append(a2)
            return replace(e, args=tuple(args)), ret
        if isinstance(e, Call):
            return self.call(e, scopes, void_ok)
        raise TypeError(f"unexpected expression {e!r}")

    def call(self, e: Call, scopes, void_ok):
        if e.receiver is None:
            receiver, target = None, self.cls.name
        else:
            receiver, target = self.expr(e.receiver, scopes)
            if target is None:
                return e, None
            if target not in self.classes:
                self.err(e.line, e.col, f"cannot call '{e.method}' on a value of type {target}")
                return e, None
        decl = self.classes[target].method(e.method)
        if decl is None:
            self.err(e.line, e.col, f"unresolved method '{target}.{e.method}'")
            return e, None
        if target != self.cls.name and not decl.is_public:
            self.err(e.line, e.col, f"method '{target}.{e.method}' is private")
        args = []
        if len(e.args) != len(decl.params):
            self.err(e.line, e.col,
                     f"'{target}.{e.method}' expects {len(decl.params)} argument(s), got {len(e.args)}")
        for a, (pname, ptype) in zip(e.args, decl.params):
            a2, t = self.expr(a, scopes)
            self.expect_type(t, ptype, e.line, f"argument '{pname}' of '{e.method}'")
            args.append(a2)
        if decl.return_type == "void" and not void_ok:
            self.err(e.line, e.col, f"void method '{target}.{e.method}' used as a value")
        return replace(e, receiver=receiver, args=tuple(args), target=target), decl.return_type


def _always_returns(stmts) -> bool:
    for s in stmts:
        if isinstance(s, Return):
            return True
        if isinstance(s, If) and s.orelse and _always_returns(s.then) and _always_returns(s.orelse):
            return True
    return False


def parse_program(source: str, source_name: str = "<string>") -> Program:
    """Parse and check ``source``. Raises SourceError with diagnostics."""
    parser = _Parser(source, source_name)
    classes = parser.program()
    checker = _Checker(classes, source_name, parser.positions)
    checked = checker.run()
    if checker.diags:
        raise SourceError(sorted(checker.diags, key=lambda d: (d.line, d.col)), source_name)
    token_lines = frozenset(t.line for t in parser.ts.tokens if t.kind != "eof")
    return Program(tuple(checked), source_name, source, token_lines)


def parse_file(path) -> Program:
    from pathlib import Path

    path = Path(path)
    return parse_program(path.read_text(encoding="utf-8"), str(path))
