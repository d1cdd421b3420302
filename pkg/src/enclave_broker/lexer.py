"""Tokenizer shared by the contract DSL and the query language.

Both languages use the same identifier, string, number, and date token
forms; keyword handling (case-sensitive vs not) is left to the parsers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import ParseError

IDENT = "IDENT"
STRING = "STRING"
INTEGER = "INTEGER"
DECIMAL = "DECIMAL"
DATE = "DATE"
PUNCT = "PUNCT"
EOF = "EOF"

_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}(?!\d)")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")
_PUNCTS = ("!=", "<=", ">=", "{", "}", "[", "]", ",", ".", "*", "=", "<", ">")

_ESCAPES = {'"': '"', "\\": "\\", "n": "\n", "t": "\t", "r": "\r"}
_UNESCAPES = {"\n": "\\n", "\t": "\\t", "\r": "\\r", '"': '\\"', "\\": "\\\\"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    value: object
    line: int
    column: int
    pos: int  # absolute offset of the first character
    end: int  # absolute offset one past the last character


def escape_string(s: str) -> str:
    """Quote a string for DSL output."""
    return '"' + "".join(_UNESCAPES.get(ch, ch) for ch in s) + '"'


class _Scanner:
    def __init__(self, text: str, comments: bool):
        self.text = text
        self.comments = comments
        self.pos = 0
        self.line = 1
        self.column = 1

    def error(self, message: str):
        raise ParseError(message, self.line, self.column)

    def advance(self, n: int = 1):
        for _ in range(n):
            if self.text[self.pos] == "\n":
                self.line += 1
                self.column = 1
            else:
                self.column += 1
            self.pos += 1

    def skip_blank(self):
        while self.pos < len(self.text):
            ch = self.text[self.pos]
            if ch in " \t\r\n":
                self.advance()
            elif ch == "#" and self.comments:
                while self.pos < len(self.text) and self.text[self.pos] != "\n":
                    self.advance()
            else:
                return

    def scan_string(self) -> Token:
        line, column, start = self.line, self.column, self.pos
        self.advance()  # opening quote
        out = []
        while True:
            if self.pos >= len(self.text):
                raise ParseError("unterminated string", line, column)
            ch = self.text[self.pos]
            if ch == "\n":
                raise ParseError("unterminated string", line, column)
            if ch == '"':
                self.advance()
                return Token(STRING, self.text[start : self.pos], "".join(out), line, column, start, self.pos)
            if ch == "\\":
                self.advance()
                if self.pos >= len(self.text):
                    raise ParseError("unterminated string", line, column)
                esc = self.text[self.pos]
                if esc not in _ESCAPES:
                    self.error(f"unknown escape \\{esc}")
                out.append(_ESCAPES[esc])
                self.advance()
            else:
                out.append(ch)
                self.advance()

    def scan_number(self) -> Token:
        line, column, start = self.line, self.column, self.pos
        m = _DATE_RE.match(self.text, self.pos)
        if m:
            self.advance(len(m.group()))
            return Token(DATE, m.group(), m.group(), line, column, start, self.pos)
        if self.text[self.pos] == "-":
            self.advance()
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.advance()
        if (
            self.pos + 1 < len(self.text)
            and self.text[self.pos] == "."
            and self.text[self.pos + 1].isdigit()
        ):
            self.advance()
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.advance()
            text = self.text[start : self.pos]
            return Token(DECIMAL, text, float(text), line, column, start, self.pos)
        text = self.text[start : self.pos]
        return Token(INTEGER, text, int(text), line, column, start, self.pos)


def tokenize(text: str, comments: bool = True) -> list[Token]:
    """Scan `text` into tokens, ending with an EOF marker.

    Raises ParseError at the first character that fits no token form.
    """
    sc = _Scanner(text, comments)
    tokens: list[Token] = []
    while True:
        sc.skip_blank()
        if sc.pos >= len(text):
            tokens.append(Token(EOF, "", None, sc.line, sc.column, sc.pos, sc.pos))
            return tokens
        ch = text[sc.pos]
        if ch == '"':
            tokens.append(sc.scan_string())
            continue
        if ch.isdigit() or (ch == "-" and sc.pos + 1 < len(text) and text[sc.pos + 1].isdigit()):
            tokens.append(sc.scan_number())
            continue
        m = _IDENT_RE.match(text, sc.pos)
        if m:
            line, column, start = sc.line, sc.column, sc.pos
            sc.advance(len(m.group()))
            tokens.append(Token(IDENT, m.group(), m.group(), line, column, start, sc.pos))
            continue
        for punct in _PUNCTS:
            if text.startswith(punct, sc.pos):
                line, column, start = sc.line, sc.column, sc.pos
                sc.advance(len(punct))
                tokens.append(Token(PUNCT, punct, punct, line, column, start, sc.pos))
                break
        else:
            sc.error(f"unexpected character {ch!r}")


class TokenStream:
    """Cursor over a token list with the usual recursive-descent helpers."""

    def __init__(self, tokens: list[Token]):
        self._tokens = tokens
        self._i = 0

    def peek(self) -> Token:
        return self._tokens[self._i]

    def previous(self) -> Token:
        return self._tokens[self._i - 1]

    def advance(self) -> Token:
        tok = self._tokens[self._i]
        if tok.kind != EOF:
            self._i += 1
        return tok

    def at_end(self) -> bool:
        return self.peek().kind == EOF

    def error(self, message: str, token: Token | None = None):
        tok = token or self.peek()
        raise ParseError(message, tok.line, tok.column)

    def describe(self, token: Token | None = None) -> str:
        tok = token or self.peek()
        return "end of input" if tok.kind == EOF else repr(tok.text)

    def expect_punct(self, punct: str) -> Token:
        tok = self.peek()
        if tok.kind != PUNCT or tok.text != punct:
            self.error(f"expected {punct!r}, found {self.describe()}")
        return self.advance()

    def match_punct(self, punct: str) -> bool:
        tok = self.peek()
        if tok.kind == PUNCT and tok.text == punct:
            self.advance()
            return True
        return False

    def expect(self, kind: str, what: str) -> Token:
        tok = self.peek()
        if tok.kind != kind:
            self.error(f"expected {what}, found {self.describe()}")
        return self.advance()
