"""Tiny expression language for metric config files.

Grammar (precedence climbing)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := atom ('^' unary)?          # right associative
    atom    := NUMBER | 'x1' | 'x2' | NAME '(' expr ')' | '(' expr ')'

Supported functions: sqrt, sin, cos, exp.  Evaluation goes through the
``ad`` wrappers, so parsed expressions differentiate like the built-ins.
"""

from __future__ import annotations

import re

from . import ad
from .errors import ConfigParseError

_FUNCTIONS = {"sqrt": ad.sqrt, "sin": ad.sin, "cos": ad.cos, "exp": ad.exp}

_TOKEN_RE = re.compile(
    r"(?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>\*\*|[-+*/^()])"
)


class _Token:
    __slots__ = ("kind", "text", "line", "column")

    def __init__(self, kind, text, line, column):
        self.kind = kind
        self.text = text
        self.line = line
        self.column = column


def _tokenize(source: str, line: int):
    pos = 0
    tokens = []
    while pos < len(source):
        if source[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise ConfigParseError(f"unexpected character {source[pos]!r}", line, pos + 1)
        if m.group("num") is not None:
            text, kind = m.group("num"), "num"
        elif m.group("name") is not None:
            text, kind = m.group("name"), "name"
        else:
            text, kind = m.group("op"), "op"
            if text == "**":
                text = "^"
        tokens.append(_Token(kind, text, line, pos + 1))
        pos = m.end()
    return tokens


class Expression:
    """Parsed arithmetic expression in the chart variables x1, x2."""

    def __init__(self, source: str, node):
        self.source = source
        self._node = node

    def __call__(self, x1, x2):
        return _eval(self._node, x1, x2)

    def __repr__(self):
        return f"Expression({self.source!r})"


def _eval(node, x1, x2):
    op = node[0]
    if op == "num":
        return node[1]
    if op == "var":
        return x1 if node[1] == "x1" else x2
    if op == "neg":
        return -_eval(node[1], x1, x2)
    if op == "call":
        return _FUNCTIONS[node[1]](_eval(node[2], x1, x2))
    a = _eval(node[1], x1, x2)
    b = _eval(node[2], x1, x2)
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    if op == "^":
        return a ** b
    raise AssertionError(op)


class _Parser:
    def __init__(self, tokens, line, length):
        self.tokens = tokens
        self.pos = 0
        self.line = line
        self.length = length

    def peek(self):
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self):
        tok = self.peek()
        if tok is not None:
            self.pos += 1
        return tok

    def error(self, message, token=None):
        col = token.column if token is not None else self.length + 1
        raise ConfigParseError(message, self.line, col)

    def expect_op(self, text):
        tok = self.next()
        if tok is None or tok.kind != "op" or tok.text != text:
            self.error(f"expected {text!r}", tok)

    def parse(self):
        node = self.expr()
        tok = self.peek()
        if tok is not None:
            self.error(f"unexpected {tok.text!r}", tok)
        return node

    def expr(self):
        node = self.term()
        while (tok := self.peek()) and tok.kind == "op" and tok.text in "+-":
            self.next()
            node = (tok.text, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while (tok := self.peek()) and tok.kind == "op" and tok.text in "*/":
            self.next()
            node = (tok.text, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "-":
            self.next()
            return ("neg", self.unary())
        return self.power()

    def power(self):
        node = self.atom()
        tok = self.peek()
        if tok is not None and tok.kind == "op" and tok.text == "^":
            self.next()
            node = ("^", node, self.unary())
        return node

    def atom(self):
        tok = self.next()
        if tok is None:
            self.error("unexpected end of expression")
        if tok.kind == "num":
            return ("num", float(tok.text))
        if tok.kind == "name":
            if tok.text in ("x1", "x2"):
                return ("var", tok.text)
            if tok.text in _FUNCTIONS:
                self.expect_op("(")
                node = self.expr()
                self.expect_op(")")
                return ("call", tok.text, node)
            self.error(f"unknown name {tok.text!r}", tok)
        if tok.kind == "op" and tok.text == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        self.error(f"unexpected {tok.text!r}", tok)


def parse_expression(source: str, line: int = 1) -> Expression:
    """Parse one expression; raises ConfigParseError with line/column."""
    tokens = _tokenize(source, line)
    if not tokens:
        raise ConfigParseError("empty expression", line, 1)
    node = _Parser(tokens, line, len(source)).parse()
    return Expression(source.strip(), node)
