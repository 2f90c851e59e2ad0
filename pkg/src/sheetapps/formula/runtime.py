"""Shared evaluation machinery: coercions, range views, criteria matching.

Error values travel through evaluation as the internal ``Halt`` signal and
are returned as ordinary cell values at the evaluator boundary -- evaluation
never raises past that boundary on a well-formed AST.
"""
from __future__ import annotations

import math
from typing import TYPE_CHECKING, Callable, Iterator

from ..cells import (
    DIV0,
    NA,
    VALUE_ERROR,
    CellError,
    CellRef,
    CellValue,
    RangeRef,
    to_display_text,
)

if TYPE_CHECKING:  # pragma: no cover
    from .evaluate import ValueView


class Halt(Exception):
    """Internal error-propagation signal; never escapes ``evaluate``."""

    def __init__(self, error: CellError):
        self.error = error
        super().__init__(error.code)


def chk(value: CellValue) -> CellValue:
    if isinstance(value, CellError):
        raise Halt(value)
    return value


def num(value: CellValue) -> float:
    """Arithmetic coercion: blank is 0, bools are 1/0, text never coerces."""
    if isinstance(value, bool):
        return 1.0 if value else 0.0
    if isinstance(value, float):
        return value
    if value is None:
        return 0.0
    if isinstance(value, CellError):
        raise Halt(value)
    raise Halt(VALUE_ERROR)


def text(value: CellValue) -> str:
    if isinstance(value, CellError):
        raise Halt(value)
    return to_display_text(value)


def boolean(value: CellValue) -> bool:
    """Condition coercion: numbers are true when non-zero, blank is false."""
    if isinstance(value, bool):
        return value
    if isinstance(value, float):
        return value != 0.0
    if value is None:
        return False
    if isinstance(value, CellError):
        raise Halt(value)
    raise Halt(VALUE_ERROR)


def finite(value: float) -> float:
    if not math.isfinite(value):
        raise Halt(VALUE_ERROR)
    return value


class RangeValues:
    """Lazy read-only view of a range's cell values (column-major order)."""

    __slots__ = ("view", "rng")

    def __init__(self, view: "ValueView", rng: RangeRef):
        self.view = view
        self.rng = rng

    @property
    def width(self) -> int:
        return self.rng.width

    @property
    def height(self) -> int:
        return self.rng.height

    @property
    def is_single(self) -> bool:
        return self.rng.size == 1

    def at(self, row_offset: int, col_offset: int) -> CellValue:
        return self.view.cell_value(self.rng.cell_at(row_offset, col_offset))

    def values(self) -> Iterator[CellValue]:
        for ref in self.rng.cells():
            yield self.view.cell_value(ref)

    def scalar(self) -> CellValue:
        """1x1 ranges coerce to their single value; anything larger cannot."""
        if self.is_single:
            return self.at(0, 0)
        raise Halt(VALUE_ERROR)


ArgValue = CellValue | RangeValues


def scalarize(value: ArgValue) -> CellValue:
    return value.scalar() if isinstance(value, RangeValues) else value


_TYPE_RANK = {"number": 0, "text": 1, "bool": 2}


def _compare_key(value: CellValue) -> tuple[int, float | str | bool]:
    if isinstance(value, bool):
        return (_TYPE_RANK["bool"], value)
    if isinstance(value, float):
        return (_TYPE_RANK["number"], value)
    return (_TYPE_RANK["text"], value.casefold())  # type: ignore[union-attr]


def compare(op: str, left: CellValue, right: CellValue) -> bool:
    """Ordering across the spreadsheet total order: numbers < text < bools.

    Text compares case-insensitively. A blank operand coerces to the other
    side's zero value (0, "", or FALSE); two blanks are equal.
    """
    left = chk(left)
    right = chk(right)
    if left is None and right is None:
        left = right = 0.0
    elif left is None:
        left = _zero_like(right)
    elif right is None:
        right = _zero_like(left)
    lk, rk = _compare_key(left), _compare_key(right)
    if op == "=":
        return lk == rk
    if op == "<>":
        return lk != rk
    if op == "<":
        return lk < rk
    if op == "<=":
        return lk <= rk
    if op == ">":
        return lk > rk
    if op == ">=":
        return lk >= rk
    raise AssertionError(f"unknown comparison {op!r}")


def _zero_like(value: CellValue) -> CellValue:
    if isinstance(value, bool):
        return False
    if isinstance(value, float):
        return 0.0
    return ""


def lookup_eq(cell: CellValue, key: CellValue) -> bool:
    """Exact-match equality used by VLOOKUP and MATCH.

    Matches only within a type class; text matches case-insensitively;
    error cells never match.
    """
    if isinstance(cell, CellError) or isinstance(key, CellError):
        return False
    if isinstance(cell, bool) or isinstance(key, bool):
        return isinstance(cell, bool) and isinstance(key, bool) and cell == key
    if isinstance(cell, float) or isinstance(key, float):
        return isinstance(cell, float) and isinstance(key, float) and cell == key
    if cell is None or key is None:
        return cell is None and key is None
    return cell.casefold() == key.casefold()


_CRITERIA_OPS = ("<=", ">=", "<>", "=", "<", ">")


def parse_criteria(criteria: CellValue) -> tuple[str, CellValue]:
    """COUNTIF/SUMIF criteria: optional comparison operator, then a number
    or text literal. A bare value means equality."""
    if isinstance(criteria, CellError):
        raise Halt(criteria)
    if criteria is None:
        return ("=", "")
    if isinstance(criteria, (bool, float)):
        return ("=", criteria)
    for op in _CRITERIA_OPS:
        if criteria.startswith(op):
            rest = criteria[len(op) :]
            return (op, _criteria_literal(rest))
    return ("=", _criteria_literal(criteria))


def _criteria_literal(token: str) -> CellValue:
    try:
        value = float(token)
    except ValueError:
        return token
    return value if math.isfinite(value) else token


def criteria_match(cell: CellValue, op: str, operand: CellValue) -> bool:
    """Does a cell satisfy a parsed criteria?

    Cells of a different type class never match, except under ``<>`` where
    any non-blank, non-error cell of another type counts as "not equal".
    Blank cells match only the empty-text equality criteria. Error cells
    never match.
    """
    if isinstance(cell, CellError):
        return False
    same_class = (
        (isinstance(operand, bool) and isinstance(cell, bool))
        or (isinstance(operand, float) and isinstance(cell, float) and not isinstance(cell, bool))
        or (isinstance(operand, str) and isinstance(cell, str))
    )
    if cell is None:
        return op == "=" and operand == ""
    if not same_class:
        return op == "<>"
    return compare(op, cell, operand)


def half_away_round(value: float, digits: int) -> float:
    """Round half away from zero at ``digits`` decimal places (may be < 0)."""
    try:
        scale = 10.0 ** digits
    except OverflowError:
        raise Halt(VALUE_ERROR) from None
    scaled = value * scale
    if scale == 0.0 or not math.isfinite(scaled):
        raise Halt(VALUE_ERROR)
    rounded = math.floor(abs(scaled) + 0.5)
    return finite(math.copysign(rounded, value) / scale)
