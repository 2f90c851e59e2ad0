"""Lexer and recursive-descent parser for the formula language.

Grammar (EBNF) and semantics live in ``docs/formula-grammar.md``. Operator
precedence, loosest first: comparisons, ``&``, ``+ -``, ``* /``, ``^``,
unary minus. Unary minus binds tighter than ``^``, so ``=-2^2`` is 4,
matching mainstream spreadsheets. Same-level operators associate left.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Mapping

from ..cells import MAX_COLUMN, MAX_ROW, CellRef, CellValue, RangeRef, RefError, column_index

BINARY_OPS = ("+", "-", "*", "/", "^", "&", "=", "<>", "<", "<=", ">", ">=")


class FormulaParseError(ValueError):
    """Syntax error in formula text; ``offset`` is a 0-based character index."""

    def __init__(self, message: str, offset: int):
        self.offset = offset
        super().__init__(f"{message} (at offset {offset})")


@dataclass(frozen=True)
class Lit:
    value: CellValue


@dataclass(frozen=True)
class Ref:
    ref: CellRef


@dataclass(frozen=True)
class RangeNode:
    rng: RangeRef


@dataclass(frozen=True)
class NameNode:
    name: str
    target: RangeRef | None  # None: unknown name, evaluates to #NAME?


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "+"
    operand: "FormulaAst"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "FormulaAst"
    right: "FormulaAst"


@dataclass(frozen=True)
class Call:
    name: str  # upper-cased at parse time
    args: tuple["FormulaAst", ...]


FormulaAst = Lit | Ref | RangeNode | NameNode | Unary | Binary | Call


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:[0-9]+\.?[0-9]*|\.[0-9]+)(?:[eE][+-]?[0-9]+)?)
  | (?P<string>"(?:[^"]|"")*")
  | (?P<cellref>\$?[A-Za-z]{1,3}\$?[1-9][0-9]{0,6}(?![A-Za-z0-9_.!]))
  | (?P<ident>[A-Za-z_][A-Za-z0-9_.]*)
  | (?P<quoted>'(?:[^']|'')*')
  | (?P<op><=|>=|<>|[=<>+\-*/^&(),:!])
    """,
    re.VERBOSE,
)

_A1_TOKEN_RE = re.compile(r"\$?([A-Za-z]{1,3})\$?([1-9][0-9]{0,6})\Z")


@dataclass(frozen=True)
class _Token:
    kind: str  # number | string | cellref | ident | quoted | op | end
    text: str
    offset: int


def _tokenize(source: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 1  # skip leading "="
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if not m:
            raise FormulaParseError(f"unexpected character {source[pos]!r}", pos)
        if m.lastgroup != "ws":
            tokens.append(_Token(m.lastgroup, m.group(), pos))
        pos = m.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str, host: CellRef, names: Mapping[str, RangeRef]):
        self.source = source
        self.host = host
        self.names = {n.casefold(): rng for n, rng in names.items()}
        self.tokens = _tokenize(source)
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def take(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect_op(self, op: str) -> _Token:
        tok = self.peek()
        if tok.kind != "op" or tok.text != op:
            raise FormulaParseError(f"expected {op!r}", tok.offset)
        return self.take()

    def at_op(self, *ops: str) -> bool:
        tok = self.peek()
        return tok.kind == "op" and tok.text in ops

    # precedence ladder, loosest binding first

    def parse(self) -> FormulaAst:
        node = self.comparison()
        tok = self.peek()
        if tok.kind != "end":
            raise FormulaParseError(f"unexpected {tok.text!r}", tok.offset)
        return node

    def comparison(self) -> FormulaAst:
        node = self.concat()
        while self.at_op("=", "<>", "<", "<=", ">", ">="):
            op = self.take().text
            node = Binary(op, node, self.concat())
        return node

    def concat(self) -> FormulaAst:
        node = self.additive()
        while self.at_op("&"):
            self.take()
            node = Binary("&", node, self.additive())
        return node

    def additive(self) -> FormulaAst:
        node = self.term()
        while self.at_op("+", "-"):
            op = self.take().text
            node = Binary(op, node, self.term())
        return node

    def term(self) -> FormulaAst:
        node = self.power()
        while self.at_op("*", "/"):
            op = self.take().text
            node = Binary(op, node, self.power())
        return node

    def power(self) -> FormulaAst:
        node = self.unary()
        while self.at_op("^"):
            self.take()
            node = Binary("^", node, self.unary())
        return node

    def unary(self) -> FormulaAst:
        if self.at_op("-", "+"):
            op = self.take().text
            return Unary(op, self.unary())
        return self.primary()

    def primary(self) -> FormulaAst:
        tok = self.peek()
        if tok.kind == "number":
            self.take()
            value = float(tok.text)
            if not math.isfinite(value):
                raise FormulaParseError("number literal out of range", tok.offset)
            return Lit(value)
        if tok.kind == "string":
            self.take()
            return Lit(tok.text[1:-1].replace('""', '"'))
        if tok.kind == "cellref":
            return self.ref_or_range(self.host.sheet, self.take())
        if tok.kind == "quoted":
            self.take()
            sheet = tok.text[1:-1].replace("''", "'")
            if not sheet:
                raise FormulaParseError("empty sheet name", tok.offset)
            self.expect_op("!")
            return self.ref_or_range(sheet, self.take_cellref())
        if tok.kind == "ident":
            return self.ident(self.take())
        if self.at_op("("):
            self.take()
            node = self.comparison()
            self.expect_op(")")
            return node
        raise FormulaParseError(f"expected a value, got {tok.text or 'end of formula'!r}", tok.offset)

    def take_cellref(self) -> _Token:
        tok = self.peek()
        if tok.kind != "cellref":
            raise FormulaParseError("expected a cell address", tok.offset)
        return self.take()

    def ident(self, tok: _Token) -> FormulaAst:
        if self.at_op("("):  # function call
            self.take()
            args: list[FormulaAst] = []
            if not self.at_op(")"):
                args.append(self.comparison())
                while self.at_op(","):
                    self.take()
                    args.append(self.comparison())
            self.expect_op(")")
            return Call(tok.text.upper(), tuple(args))
        if self.at_op("!"):  # unquoted sheet qualifier
            self.take()
            return self.ref_or_range(tok.text, self.take_cellref())
        upper = tok.text.upper()
        if upper == "TRUE":
            return Lit(True)
        if upper == "FALSE":
            return Lit(False)
        return NameNode(tok.text, self.names.get(tok.text.casefold()))

    def ref_or_range(self, sheet: str, first: _Token) -> FormulaAst:
        col1, row1 = self.parse_a1_token(first)
        if self.at_op(":"):
            self.take()
            second = self.take_cellref()
            col2, row2 = self.parse_a1_token(second)
            return RangeNode(
                RangeRef(sheet, min(col1, col2), min(row1, row2), max(col1, col2), max(row1, row2))
            )
        try:
            return Ref(CellRef(sheet, col1, row1))
        except RefError as exc:
            raise FormulaParseError(str(exc), first.offset) from None

    def parse_a1_token(self, tok: _Token) -> tuple[int, int]:
        m = _A1_TOKEN_RE.match(tok.text)
        if not m:  # unreachable given the lexer pattern
            raise FormulaParseError(f"invalid cell address {tok.text!r}", tok.offset)
        col = column_index(m.group(1))
        row = int(m.group(2))
        if col > MAX_COLUMN or row > MAX_ROW:
            raise FormulaParseError(f"address {tok.text!r} out of sheet bounds", tok.offset)
        return col, row


def parse_formula(
    source: str, host: CellRef, names: Mapping[str, RangeRef] | None = None
) -> FormulaAst:
    """Parse formula text (must start with ``=``) into an AST.

    Unqualified references resolve to the host cell's sheet. Named ranges
    resolve at parse time against ``names``; unknown names still parse and
    evaluate to #NAME? later. Unknown function names also parse.
    """
    if not source.startswith("="):
        raise FormulaParseError("formula must start with '='", 0)
    parser = _Parser(source, host, names or {})
    return parser.parse()


def walk(ast: FormulaAst) -> Iterator[FormulaAst]:
    yield ast
    if isinstance(ast, Unary):
        yield from walk(ast.operand)
    elif isinstance(ast, Binary):
        yield from walk(ast.left)
        yield from walk(ast.right)
    elif isinstance(ast, Call):
        for arg in ast.args:
            yield from walk(arg)


def extract_dependencies(ast: FormulaAst) -> set[CellRef]:
    """Every cell any evaluation of ``ast`` may read (ranges fully expanded).

    Dependence is static: both branches of IF contribute, so the result
    over-approximates a lazy evaluation -- which only ever costs extra
    recomputation, never correctness.
    """
    deps: set[CellRef] = set()
    for node in walk(ast):
        if isinstance(node, Ref):
            deps.add(node.ref)
        elif isinstance(node, RangeNode):
            deps.update(node.rng.cells())
        elif isinstance(node, NameNode) and node.target is not None:
            deps.update(node.target.cells())
    return deps
