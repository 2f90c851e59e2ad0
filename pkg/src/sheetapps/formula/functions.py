"""The built-in function library (exact-match semantics throughout).

Every function receives a :class:`~sheetapps.formula.evaluate.CallCtx` and
returns a cell value, signalling errors via ``Halt``. Aggregates pull
numbers from their arguments uniformly: reference arguments (cells, ranges,
names) contribute only their Number cells, while computed scalars coerce
bools to 1/0 and skip blanks; text never silently becomes a number. Error
values anywhere propagate, first in left-to-right order (range cells in
column-major order).
"""
from __future__ import annotations

import math
from typing import TYPE_CHECKING, Callable, Iterator

from ..cells import DIV0, NA, REF_ERROR, VALUE_ERROR, CellError, CellValue
from .runtime import (
    Halt,
    RangeValues,
    boolean,
    criteria_match,
    finite,
    half_away_round,
    lookup_eq,
    num,
    parse_criteria,
    text,
)

if TYPE_CHECKING:  # pragma: no cover
    from .evaluate import CallCtx


def _arity(ctx: "CallCtx", low: int, high: int | None = None) -> None:
    high = low if high is None else high
    if not low <= ctx.n <= high:
        raise Halt(VALUE_ERROR)


def _at_least(ctx: "CallCtx", low: int) -> None:
    if ctx.n < low:
        raise Halt(VALUE_ERROR)


def _numbers(ctx: "CallCtx") -> Iterator[float]:
    for i in range(ctx.n):
        arg = ctx.arg(i)
        if isinstance(arg, RangeValues):
            for cell in arg.values():
                if isinstance(cell, CellError):
                    raise Halt(cell)
                if isinstance(cell, float) and not isinstance(cell, bool):
                    yield cell
        elif isinstance(arg, bool):
            yield 1.0 if arg else 0.0
        elif isinstance(arg, float):
            yield arg
        elif arg is None:
            continue
        else:
            raise Halt(VALUE_ERROR)


def fn_sum(ctx: "CallCtx") -> CellValue:
    _at_least(ctx, 1)
    total = 0.0
    for v in _numbers(ctx):
        total += v
    return finite(total)


def fn_count(ctx: "CallCtx") -> CellValue:
    _at_least(ctx, 1)
    return float(sum(1 for _ in _numbers(ctx)))


def fn_average(ctx: "CallCtx") -> CellValue:
    _at_least(ctx, 1)
    total, count = 0.0, 0
    for v in _numbers(ctx):
        total += v
        count += 1
    if count == 0:
        raise Halt(DIV0)
    return finite(total / count)


def fn_min(ctx: "CallCtx") -> CellValue:
    _at_least(ctx, 1)
    best: float | None = None
    for v in _numbers(ctx):
        if best is None or v < best:
            best = v
    return 0.0 if best is None else best


def fn_max(ctx: "CallCtx") -> CellValue:
    _at_least(ctx, 1)
    best: float | None = None
    for v in _numbers(ctx):
        if best is None or v > best:
            best = v
    return 0.0 if best is None else best


def fn_countif(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 2)
    rng = ctx.range_arg(0)
    op, operand = parse_criteria(ctx.scalar(1))
    return float(sum(1 for cell in rng.values() if criteria_match(cell, op, operand)))


def fn_sumif(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 2, 3)
    rng = ctx.range_arg(0)
    op, operand = parse_criteria(ctx.scalar(1))
    summed = ctx.range_arg(2) if ctx.n == 3 else rng
    if (summed.width, summed.height) != (rng.width, rng.height):
        raise Halt(VALUE_ERROR)
    total = 0.0
    for col in range(rng.width):
        for row in range(rng.height):
            if criteria_match(rng.at(row, col), op, operand):
                value = summed.at(row, col)
                if isinstance(value, CellError):
                    raise Halt(value)
                if isinstance(value, float) and not isinstance(value, bool):
                    total += value
    return finite(total)


def fn_if(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 2, 3)
    # Lazy: only the taken branch evaluates (dependence is still static).
    if boolean(ctx.scalar(0)):
        return ctx.scalar(1)
    return ctx.scalar(2) if ctx.n == 3 else False


def _truth_stream(ctx: "CallCtx") -> Iterator[bool]:
    for i in range(ctx.n):
        arg = ctx.arg(i)
        if isinstance(arg, RangeValues):
            for cell in arg.values():
                if isinstance(cell, CellError):
                    raise Halt(cell)
                if isinstance(cell, bool):
                    yield cell
                elif isinstance(cell, float):
                    yield cell != 0.0
        elif isinstance(arg, bool):
            yield arg
        elif isinstance(arg, float):
            yield arg != 0.0
        elif arg is None:
            continue
        else:
            raise Halt(VALUE_ERROR)


def fn_and(ctx: "CallCtx") -> CellValue:
    values = list(_truth_stream(ctx))  # eager: errors propagate from every arg
    if not values:
        raise Halt(VALUE_ERROR)
    return all(values)


def fn_or(ctx: "CallCtx") -> CellValue:
    values = list(_truth_stream(ctx))
    if not values:
        raise Halt(VALUE_ERROR)
    return any(values)


def fn_not(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 1)
    return not boolean(ctx.scalar(0))


def fn_round(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 2)
    value = num(ctx.scalar(0))
    digits = int(num(ctx.scalar(1)))
    return half_away_round(value, digits)


def fn_abs(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 1)
    return abs(num(ctx.scalar(0)))


def fn_sqrt(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 1)
    value = num(ctx.scalar(0))
    if value < 0:
        raise Halt(VALUE_ERROR)
    return math.sqrt(value)


def fn_concatenate(ctx: "CallCtx") -> CellValue:
    _at_least(ctx, 1)
    return "".join(text(ctx.scalar(i)) for i in range(ctx.n))


def fn_vlookup(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 3, 4)
    key = ctx.scalar(0)
    table = ctx.range_arg(1)
    col = int(num(ctx.scalar(2)))
    if ctx.n == 4 and boolean(ctx.scalar(3)):
        raise Halt(VALUE_ERROR)  # approximate mode is not supported
    if col < 1:
        raise Halt(VALUE_ERROR)
    if col > table.width:
        raise Halt(REF_ERROR)
    for row in range(table.height):
        if lookup_eq(table.at(row, 0), key):
            return table.at(row, col - 1)
    return NA


def fn_index(ctx: "CallCtx") -> CellValue:
    _arity(ctx, 2, 3)
    rng = ctx.range_arg(0)
    first = int(num(ctx.scalar(1)))
    if ctx.n == 3:
        row, col = first, int(num(ctx.scalar(2)))
    elif rng.height == 1:
        row, col = 1, first
    elif rng.width == 1:
        row, col = first, 1
    else:
        raise Halt(VALUE_ERROR)  # a 2-D range needs both indexes
    if row < 1 or col < 1:
        raise Halt(VALUE_ERROR)
    if row > rng.height or col > rng.width:
        raise Halt(REF_ERROR)
    return rng.at(row - 1, col - 1)


def fn_match(ctx: "CallCtx") -> CellValue:
    # The match-type argument is required and must be 0: exact match has to
    # be asked for, never inherited as a default.
    _arity(ctx, 3)
    key = ctx.scalar(0)
    vector = ctx.range_arg(1)
    if num(ctx.scalar(2)) != 0.0:
        raise Halt(VALUE_ERROR)
    if vector.height == 1:
        cells = [vector.at(0, c) for c in range(vector.width)]
    elif vector.width == 1:
        cells = [vector.at(r, 0) for r in range(vector.height)]
    else:
        raise Halt(VALUE_ERROR)
    for pos, cell in enumerate(cells, start=1):
        if lookup_eq(cell, key):
            return float(pos)
    return NA


FUNCTIONS: dict[str, Callable[["CallCtx"], CellValue]] = {
    "SUM": fn_sum,
    "AVERAGE": fn_average,
    "MIN": fn_min,
    "MAX": fn_max,
    "COUNT": fn_count,
    "COUNTIF": fn_countif,
    "SUMIF": fn_sumif,
    "IF": fn_if,
    "AND": fn_and,
    "OR": fn_or,
    "NOT": fn_not,
    "ROUND": fn_round,
    "ABS": fn_abs,
    "SQRT": fn_sqrt,
    "CONCATENATE": fn_concatenate,
    "VLOOKUP": fn_vlookup,
    "INDEX": fn_index,
    "MATCH": fn_match,
}
