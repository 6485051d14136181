"""Tokenizer shared by program (``.ml``) and test (``.mlt``) files."""
from __future__ import annotations

import re
from dataclasses import dataclass


@dataclass(frozen=True)
class Diagnostic:
    line: int
    col: int
    message: str

    def __str__(self) -> str:
        return f"{self.line}:{self.col}: {self.message}"


class SourceError(Exception):
    """Raised for malformed program or test sources; carries diagnostics."""

    def __init__(self, diagnostics, source_name: str = "<string>"):
        self.diagnostics = list(diagnostics)
        self.source_name = source_name
        super().__init__("\n".join(f"{source_name}:{d}" for d in self.diagnostics))


@dataclass(frozen=True)
class Token:
    kind: str  # ident, int, string, op, eof
    text: str
    line: int
    col: int


KEYWORDS = {
    "class", "const", "int", "bool", "void", "public", "private", "if", "else",
    "while", "return", "emit", "true", "false", "this", "new", "test", "assert",
    "ext", "ext_has",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*|\#[^\n]*)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<int>[0-9]+)
  | (?P<string>"[^"\n]*")
  | (?P<op>&&|\|\||==|!=|<=|>=|[-+*/%<>=!(){};,.])
    """,
    re.VERBOSE,
)


def tokenize(source: str, source_name: str = "<string>") -> list:
    tokens = []
    line, line_start, pos = 1, 0, 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            col = pos - line_start + 1
            raise SourceError(
                [Diagnostic(line, col, f"unexpected character {source[pos]!r}")], source_name
            )
        kind = m.lastgroup
        text = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(Token(kind, text, line, pos - line_start + 1))
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class TokenStream:
    def __init__(self, tokens, source_name: str = "<string>"):
        self.tokens = tokens
        self.pos = 0
        self.source_name = source_name

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, offset: int = 1) -> Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def at(self, text: str) -> bool:
        t = self.tokens[self.pos]
        return t.text == text and t.kind in ("op", "ident")

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def error(self, message: str, tok: Token = None):
        tok = tok or self.tok
        raise SourceError([Diagnostic(tok.line, tok.col, message)], self.source_name)

    def expect(self, text: str) -> Token:
        if not self.at(text):
            found = self.tok.text or "end of input"
            self.error(f"expected '{text}' but found '{found}'")
        return self.advance()

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.advance()
            return True
        return False

    def ident(self, what: str = "identifier") -> Token:
        t = self.tok
        if t.kind != "ident" or t.text in KEYWORDS:
            self.error(f"expected {what} but found '{t.text or 'end of input'}'")
        return self.advance()

    def integer(self) -> int:
        neg = self.accept("-")
        t = self.tok
        if t.kind != "int":
            self.error(f"expected integer literal but found '{t.text or 'end of input'}'")
        self.advance()
        value = -int(t.text) if neg else int(t.text)
        if not -(2**63) <= value < 2**63:
            self.error("integer literal out of 64-bit range", t)
        return value
