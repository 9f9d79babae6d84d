"""Operator query language: lexer, AST, parser, printer.

Grammar (keywords case-insensitive, AND binds tighter than OR, NOT tightest):

    query    := or_expr
    or_expr  := and_expr { "OR" and_expr }
    and_expr := unary { "AND" unary }
    unary    := [ "NOT" ] primary
    primary  := "(" query ")" | pred
    pred     := "COUNT" "(" class ")" cmp INT
              | "TIME" "IN" "[" TIME "," TIME "]"
              | "CAMERA" "IN" "{" ID { "," ID } "}"
              | ID cmp literal
    cmp      := ">=" | "<=" | "!=" | "=" | ">" | "<"
    class    := "person" | "vehicle" | "other"
    TIME     := HH ":" MM

Parse errors carry the byte offset and the expected-token set. print_query
is the inverse of parse_query on ASTs (parse(print(ast)) == ast).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .records import Value
from .scenario import CLASSES

CMP_OPS = (">=", "<=", "!=", "=", ">", "<")
KEYWORDS = frozenset({"and", "or", "not", "count", "time", "camera", "in"})


class ParseError(ValueError):
    def __init__(self, offset: int, expected: tuple[str, ...], found: str) -> None:
        super().__init__(
            f"at offset {offset}: expected {' | '.join(expected)}, found {found}"
        )
        self.offset = offset
        self.expected = expected
        self.found = found


# --- AST ---------------------------------------------------------------------

@dataclass(frozen=True)
class KeyPred:
    key: str
    cmp: str
    literal: Value


@dataclass(frozen=True)
class CountPred:
    cls: str
    cmp: str
    count: int


@dataclass(frozen=True)
class TimePred:
    start_min: int  # minutes since midnight, endpoints inclusive
    end_min: int    # may wrap past midnight

    def contains_minute(self, minute: int) -> bool:
        if self.start_min <= self.end_min:
            return self.start_min <= minute <= self.end_min
        return minute >= self.start_min or minute <= self.end_min


@dataclass(frozen=True)
class CameraPred:
    cameras: tuple[str, ...]


@dataclass(frozen=True)
class Not:
    operand: "Node"


@dataclass(frozen=True)
class And:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Or:
    left: "Node"
    right: "Node"


Node = KeyPred | CountPred | TimePred | CameraPred | Not | And | Or
Pred = KeyPred | CountPred | TimePred | CameraPred


# --- Lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<time>\d{1,2}:\d{2})
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<string>"[^"]*")
  | (?P<id>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<cmp>>=|<=|!=|=|>|<)
  | (?P<punct>[()\[\]{},])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # time|number|string|id|cmp|punct|eof
    text: str
    offset: int


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(pos, ("token",), repr(text[pos]))
        if m.lastgroup != "ws":
            tokens.append(Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(Token("eof", "", len(text)))
    return tokens


# --- Parser ------------------------------------------------------------------

class _Parser:
    def __init__(self, text: str) -> None:
        self.tokens = tokenize(text)
        self.pos = 0

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, *expected: str) -> ParseError:
        tok = self.peek()
        found = "end of input" if tok.kind == "eof" else repr(tok.text)
        return ParseError(tok.offset, expected, found)

    def is_keyword(self, word: str) -> bool:
        tok = self.peek()
        return tok.kind == "id" and tok.text.lower() == word

    def expect_keyword(self, word: str) -> Token:
        if not self.is_keyword(word):
            raise self.fail(word.upper())
        return self.advance()

    def expect_punct(self, ch: str) -> Token:
        tok = self.peek()
        if tok.kind != "punct" or tok.text != ch:
            raise self.fail(repr(ch))
        return self.advance()

    def parse(self) -> Node:
        node = self.parse_or()
        if self.peek().kind != "eof":
            raise self.fail("AND", "OR", "end of input")
        return node

    def parse_or(self) -> Node:
        node = self.parse_and()
        while self.is_keyword("or"):
            self.advance()
            node = Or(node, self.parse_and())
        return node

    def parse_and(self) -> Node:
        node = self.parse_unary()
        while self.is_keyword("and"):
            self.advance()
            node = And(node, self.parse_unary())
        return node

    def parse_unary(self) -> Node:
        if self.is_keyword("not"):
            self.advance()
            return Not(self.parse_primary())
        return self.parse_primary()

    def parse_primary(self) -> Node:
        tok = self.peek()
        if tok.kind == "punct" and tok.text == "(":
            self.advance()
            node = self.parse_or()
            self.expect_punct(")")
            return node
        return self.parse_pred()

    def parse_pred(self) -> Pred:
        tok = self.peek()
        if tok.kind != "id":
            raise self.fail("COUNT", "TIME", "CAMERA", "(", "NOT", "identifier")
        word = tok.text.lower()
        if word == "count":
            return self.parse_count()
        if word == "time":
            return self.parse_time()
        if word == "camera":
            return self.parse_camera()
        if word in KEYWORDS:
            raise self.fail("COUNT", "TIME", "CAMERA", "identifier")
        self.advance()
        cmp = self.parse_cmp()
        literal = self.parse_literal()
        return KeyPred(tok.text, cmp, literal)

    def parse_count(self) -> CountPred:
        self.advance()  # COUNT
        self.expect_punct("(")
        tok = self.peek()
        if tok.kind != "id" or tok.text.lower() not in CLASSES:
            raise self.fail(*CLASSES)
        self.advance()
        self.expect_punct(")")
        cmp = self.parse_cmp()
        value = self.peek()
        if value.kind != "number" or "." in value.text:
            raise self.fail("integer")
        self.advance()
        return CountPred(tok.text.lower(), cmp, int(value.text))

    def parse_time(self) -> TimePred:
        self.advance()  # TIME
        self.expect_keyword("in")
        self.expect_punct("[")
        start = self.parse_hhmm()
        self.expect_punct(",")
        end = self.parse_hhmm()
        self.expect_punct("]")
        return TimePred(start, end)

    def parse_hhmm(self) -> int:
        tok = self.peek()
        if tok.kind != "time":
            raise self.fail("HH:MM")
        hh, mm = tok.text.split(":")
        if int(hh) > 23 or int(mm) > 59:
            raise ParseError(tok.offset, ("valid HH:MM",), repr(tok.text))
        self.advance()
        return int(hh) * 60 + int(mm)

    def parse_camera(self) -> CameraPred:
        self.advance()  # CAMERA
        self.expect_keyword("in")
        self.expect_punct("{")
        ids = [self.parse_camera_id()]
        while self.peek().kind == "punct" and self.peek().text == ",":
            self.advance()
            ids.append(self.parse_camera_id())
        self.expect_punct("}")
        return CameraPred(tuple(ids))

    def parse_camera_id(self) -> str:
        tok = self.peek()
        if tok.kind != "id":
            raise self.fail("camera id")
        self.advance()
        return tok.text

    def parse_cmp(self) -> str:
        tok = self.peek()
        if tok.kind != "cmp":
            raise self.fail(*CMP_OPS)
        self.advance()
        return tok.text

    def parse_literal(self) -> Value:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return float(tok.text) if "." in tok.text else int(tok.text)
        if tok.kind == "string":
            self.advance()
            return tok.text[1:-1]
        if tok.kind == "id" and tok.text.lower() not in KEYWORDS:
            # Bare words read as string literals: event = congestion
            self.advance()
            return tok.text
        raise self.fail("number", "string", "identifier")


def parse_query(text: str) -> Node:
    """Parse a query string into its AST; ParseError carries the offset."""
    return _Parser(text).parse()


# --- Printer -----------------------------------------------------------------

_PREC = {Or: 1, And: 2, Not: 3}


def _prec(node: Node) -> int:
    return _PREC.get(type(node), 4)


def _fmt_literal(literal: Value) -> str:
    if isinstance(literal, str):
        return f'"{literal}"'
    if isinstance(literal, float):
        return repr(literal)
    return str(literal)


def _fmt_minutes(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def print_query(node: Node) -> str:
    """Render a query AST; inverse of parse_query up to AST equality."""

    def wrap(child: Node, min_prec: int) -> str:
        text = print_query(child)
        return f"({text})" if _prec(child) < min_prec else text

    if isinstance(node, Or):
        return f"{wrap(node.left, 1)} OR {wrap(node.right, 2)}"
    if isinstance(node, And):
        return f"{wrap(node.left, 2)} AND {wrap(node.right, 3)}"
    if isinstance(node, Not):
        return f"NOT {wrap(node.operand, 4)}"
    if isinstance(node, KeyPred):
        return f"{node.key} {node.cmp} {_fmt_literal(node.literal)}"
    if isinstance(node, CountPred):
        return f"COUNT({node.cls}) {node.cmp} {node.count}"
    if isinstance(node, TimePred):
        return f"TIME IN [{_fmt_minutes(node.start_min)},{_fmt_minutes(node.end_min)}]"
    if isinstance(node, CameraPred):
        return "CAMERA IN {" + ", ".join(node.cameras) + "}"
    raise TypeError(f"not a query node: {node!r}")
