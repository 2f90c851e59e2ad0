"""AST evaluation over a read-only view of workbook values.

``evaluate`` is a pure function of the AST and the view, and is total:
every failure mode is an error cell value, never an exception.
"""
from __future__ import annotations

import math
from typing import Mapping, Protocol

from ..cells import (
    DIV0,
    NAME_ERROR,
    REF_ERROR,
    VALUE_ERROR,
    CellRef,
    CellValue,
    RangeRef,
)
from ..workbook import Workbook
from .functions import FUNCTIONS
from .parser import Binary, Call, FormulaAst, Lit, NameNode, RangeNode, Ref, Unary
from .runtime import ArgValue, Halt, RangeValues, chk, compare, finite, num, scalarize, text


class ValueView(Protocol):
    """Read-only cell values; unknown sheets surface as #REF! per cell."""

    def cell_value(self, ref: CellRef) -> CellValue: ...

    def has_sheet(self, name: str) -> bool: ...


class WorkbookValues:
    """View over a workbook's literals plus (optionally) computed values."""

    __slots__ = ("_values", "_sheets")

    def __init__(self, wb: Workbook, *, literals_only: bool = False):
        self._sheets = {sheet.name.casefold() for sheet in wb.sheets}
        values: dict[tuple[str, int, int], CellValue] = {}
        for sheet in wb.sheets:
            folded = sheet.name.casefold()
            for (col, row), cell in sheet.cells.items():
                if cell.is_formula and literals_only:
                    continue
                if cell.value is not None:
                    values[(folded, col, row)] = cell.value
        self._values = values

    def set_value(self, ref: CellRef, value: CellValue) -> None:
        self._values[ref.key] = value

    def cell_value(self, ref: CellRef) -> CellValue:
        if ref.sheet.casefold() not in self._sheets:
            return REF_ERROR
        return self._values.get(ref.key)

    def has_sheet(self, name: str) -> bool:
        return name.casefold() in self._sheets


class MapValues:
    """Dict-backed view for tests and standalone evaluation."""

    def __init__(self, values: Mapping[CellRef, CellValue] | None = None, sheets: set[str] | None = None):
        self._values = {ref.key: value for ref, value in (values or {}).items()}
        self._sheets = {s.casefold() for s in (sheets or set())}
        self._sheets.update(key[0] for key in self._values)

    def cell_value(self, ref: CellRef) -> CellValue:
        if ref.sheet.casefold() not in self._sheets:
            return REF_ERROR
        return self._values.get(ref.key)

    def has_sheet(self, name: str) -> bool:
        return name.casefold() in self._sheets


class CallCtx:
    """Function-call argument access; ranges stay ranges, scalars get
    error-checked. Branch-lazy functions evaluate arguments on demand."""

    __slots__ = ("_ev", "_args")

    def __init__(self, ev: "_Evaluator", args: tuple[FormulaAst, ...]):
        self._ev = ev
        self._args = args

    @property
    def n(self) -> int:
        return len(self._args)

    def scalar(self, i: int) -> CellValue:
        return chk(scalarize(self._ev.eval(self._args[i])))

    def arg(self, i: int) -> ArgValue:
        """Reference arguments (cell, range, name) as RangeValues; computed
        scalars error-checked."""
        node = self._args[i]
        if isinstance(node, Ref):
            r = node.ref
            return RangeValues(self._ev.view, RangeRef(r.sheet, r.col, r.row, r.col, r.row))
        value = self._ev.eval(node)
        if isinstance(value, RangeValues):
            return value
        return chk(value)

    def range_arg(self, i: int) -> RangeValues:
        value = self.arg(i)
        if not isinstance(value, RangeValues):
            raise Halt(VALUE_ERROR)
        return value


class _Evaluator:
    __slots__ = ("view",)

    def __init__(self, view: ValueView):
        self.view = view

    def eval(self, node: FormulaAst) -> ArgValue:
        if isinstance(node, Lit):
            return node.value
        if isinstance(node, Ref):
            return self.view.cell_value(node.ref)
        if isinstance(node, RangeNode):
            if not self.view.has_sheet(node.rng.sheet):
                return REF_ERROR
            return RangeValues(self.view, node.rng)
        if isinstance(node, NameNode):
            if node.target is None:
                return NAME_ERROR
            if not self.view.has_sheet(node.target.sheet):
                return REF_ERROR
            return RangeValues(self.view, node.target)
        if isinstance(node, Unary):
            value = num(chk(scalarize(self.eval(node.operand))))
            return -value if node.op == "-" else value
        if isinstance(node, Binary):
            return self._binary(node)
        if isinstance(node, Call):
            fn = FUNCTIONS.get(node.name)
            if fn is None:
                return NAME_ERROR
            return fn(CallCtx(self, node.args))
        raise AssertionError(f"unknown AST node {node!r}")

    def _binary(self, node: Binary) -> CellValue:
        op = node.op
        if op in ("+", "-", "*", "/", "^"):
            left = num(chk(scalarize(self.eval(node.left))))
            right = num(chk(scalarize(self.eval(node.right))))
            return self._arith(op, left, right)
        if op == "&":
            left = text(chk(scalarize(self.eval(node.left))))
            right = text(chk(scalarize(self.eval(node.right))))
            return left + right
        left_v = chk(scalarize(self.eval(node.left)))
        right_v = chk(scalarize(self.eval(node.right)))
        return compare(op, left_v, right_v)

    @staticmethod
    def _arith(op: str, left: float, right: float) -> float:
        if op == "+":
            return finite(left + right)
        if op == "-":
            return finite(left - right)
        if op == "*":
            return finite(left * right)
        if op == "/":
            if right == 0.0:
                raise Halt(DIV0)
            return finite(left / right)
        # "^"
        if left == 0.0 and right < 0.0:
            raise Halt(DIV0)
        if left == 0.0 and right == 0.0:
            raise Halt(VALUE_ERROR)
        try:
            return finite(math.pow(left, right))
        except (ValueError, OverflowError):
            raise Halt(VALUE_ERROR) from None


def evaluate(ast: FormulaAst, view: ValueView) -> CellValue:
    """Evaluate an AST to a scalar cell value; errors are values.

    Precedents visible through ``view`` must already hold final values.
    """
    try:
        return chk(scalarize(_Evaluator(view).eval(ast)))
    except Halt as halt:
        return halt.error
