"""Episode filter expressions.

Dataset selection accepts a small, explicitly validated subset of SQL WHERE
syntax: comparisons between game columns and literals (or ? placeholders),
combined with AND / OR / NOT and parentheses.  Parsing produces a canonical
SQL string whose identifiers have all been checked against the games table,
so the result is safe to splice into a query; values always travel as
literals it re-renders itself or as bound placeholders.

Grammar (case-insensitive keywords and column names):

    expr       := and_expr ( OR and_expr )*
    and_expr   := unary ( AND unary )*
    unary      := NOT unary | '(' expr ')' | comparison
    comparison := operand op operand
    op         := '=' | '==' | '!=' | '<>' | '<' | '<=' | '>' | '>='
    operand    := column | integer | float | 'string' | '?'

Examples: "points > 1000 AND turns < 50000", "role = 'Val'",
"achieve_ascended = 1 OR conduct_pacifist = 1", "death = ?".
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .errors import PredicateError
from .xlog import ACHIEVEMENT_BITS, CONDUCT_BITS, FIELD_ORDER, GAME_FLAG_BITS

__all__ = ["Predicate", "compile_predicate", "QUERYABLE_COLUMNS"]


def _queryable_columns() -> frozenset[str]:
    cols = {"gameid"}
    cols.update(FIELD_ORDER)
    cols.update(("conduct_value", "achieve_value", "flags_value"))
    for table in (CONDUCT_BITS, ACHIEVEMENT_BITS, GAME_FLAG_BITS):
        cols.update(slug for _, _, slug in table)
    return frozenset(cols)


QUERYABLE_COLUMNS = _queryable_columns()

_TOKEN = re.compile(r"""
    (?P<ws>\s+)
  | (?P<string>'(?:[^']|'')*')
  | (?P<number>-?\d+(?:\.\d+)?)
  | (?P<op><=|>=|==|!=|<>|<|>|=)
  | (?P<lparen>\()
  | (?P<rparen>\))
  | (?P<placeholder>\?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)

_KEYWORDS = frozenset({"AND", "OR", "NOT"})


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


@dataclass(frozen=True)
class Predicate:
    """Validated filter: canonical SQL text plus placeholder count."""

    sql: str
    param_count: int
    columns: frozenset[str]


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise PredicateError(
                f"unexpected character {text[pos]!r}", position=pos)
        pos = m.end()
        kind = m.lastgroup
        if kind == "ws":
            continue
        value = m.group()
        if kind == "ident" and value.upper() in _KEYWORDS:
            kind = value.upper()
        tokens.append(_Token(kind, value, m.start()))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], source_len: int) -> None:
        self._tokens = tokens
        self._index = 0
        self._end = source_len
        self.param_count = 0
        self.columns: set[str] = set()

    def _peek(self) -> _Token | None:
        if self._index < len(self._tokens):
            return self._tokens[self._index]
        return None

    def _next(self, expected: str | None = None) -> _Token:
        tok = self._peek()
        if tok is None:
            raise PredicateError("expression ended unexpectedly",
                                 position=self._end)
        if expected is not None and tok.kind != expected:
            raise PredicateError(
                f"expected {expected}, found {tok.text!r}", position=tok.pos)
        self._index += 1
        return tok

    def parse(self) -> str:
        if not self._tokens:
            raise PredicateError("empty expression", position=0)
        sql = self._or_expr()
        leftover = self._peek()
        if leftover is not None:
            raise PredicateError(
                f"unexpected trailing input {leftover.text!r}",
                position=leftover.pos)
        return sql

    def _or_expr(self) -> str:
        parts = [self._and_expr()]
        while (tok := self._peek()) is not None and tok.kind == "OR":
            self._next()
            parts.append(self._and_expr())
        if len(parts) == 1:
            return parts[0]
        return "(" + " OR ".join(parts) + ")"

    def _and_expr(self) -> str:
        parts = [self._unary()]
        while (tok := self._peek()) is not None and tok.kind == "AND":
            self._next()
            parts.append(self._unary())
        if len(parts) == 1:
            return parts[0]
        return "(" + " AND ".join(parts) + ")"

    def _unary(self) -> str:
        tok = self._peek()
        if tok is not None and tok.kind == "NOT":
            self._next()
            return f"NOT {self._unary()}"
        if tok is not None and tok.kind == "lparen":
            self._next()
            inner = self._or_expr()
            self._next("rparen")
            return f"({inner})"
        return self._comparison()

    def _comparison(self) -> str:
        lhs = self._operand()
        op = self._next("op").text
        if op == "==":
            op = "="
        elif op == "<>":
            op = "!="
        rhs = self._operand()
        return f"{lhs} {op} {rhs}"

    def _operand(self) -> str:
        tok = self._next()
        if tok.kind == "ident":
            column = tok.text.lower()
            if column not in QUERYABLE_COLUMNS:
                raise PredicateError(
                    f"unknown column {tok.text!r}", position=tok.pos)
            self.columns.add(column)
            return column
        if tok.kind == "number":
            return tok.text
        if tok.kind == "string":
            return tok.text
        if tok.kind == "placeholder":
            self.param_count += 1
            return "?"
        raise PredicateError(
            f"expected a column, literal, or ?, found {tok.text!r}",
            position=tok.pos)


def compile_predicate(text: str) -> Predicate:
    """Parse and validate a filter expression.

    Raises PredicateError (with character position) on syntax errors,
    unknown columns, or trailing input.
    """
    parser = _Parser(_tokenize(text), len(text))
    sql = parser.parse()
    return Predicate(sql=sql, param_count=parser.param_count,
                     columns=frozenset(parser.columns))
