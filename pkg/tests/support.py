"""Shared helpers for the test suite."""
from __future__ import annotations

import struct

from sheetapps.cells import CellError, CellRef, CellValue
from sheetapps.workbook import Workbook


def value_token(value: CellValue) -> tuple:
    """Comparison token: floats by exact bit pattern, others by type+value."""
    if isinstance(value, bool):
        return ("bool", value)
    if isinstance(value, float):
        return ("num", struct.pack("<d", value))
    if isinstance(value, CellError):
        return ("err", value.code)
    if value is None:
        return ("blank",)
    return ("text", value)


def all_values(wb: Workbook) -> dict[tuple[str, int, int], tuple]:
    out = {}
    for sheet in wb.sheets:
        for (col, row), cell in sheet.cells.items():
            out[(sheet.name, col, row)] = value_token(cell.value)
    return out


def assert_same_values(a: Workbook, b: Workbook) -> None:
    va, vb = all_values(a), all_values(b)
    assert va.keys() == vb.keys()
    for key, token in va.items():
        assert token == vb[key], f"{key}: {token!r} != {vb[key]!r}"


def cell_value(wb: Workbook, sheet: str, a1: str) -> CellValue:
    from sheetapps.cells import parse_a1

    col, row = parse_a1(a1)
    cell = wb.cell(CellRef(sheet, col, row))
    return None if cell is None else cell.value
