"""In-memory workbook model and its textual (JSON) file format.

Workbooks are immutable snapshots: every edit produces a fresh value, so
snapshots can be shared across concurrent runs without coordination. The
file format is documented in ``docs/workbook-format.md``; serialization is
canonical, so value-equal workbooks serialize to identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import re
from collections.abc import Mapping
from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .cells import (
    MAX_COLUMN,
    MAX_ROW,
    CellError,
    CellRef,
    CellValue,
    RangeRef,
    RefError,
    as_cell_value,
    column_letters,
    is_valid_sheet_name,
    parse_a1,
    parse_range_ref,
)


class WorkbookError(ValueError):
    """Malformed workbook document; carries a sheet/cell location."""

    def __init__(self, message: str, *, location: str | None = None):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class BindingError(ValueError):
    """An input edit targeted a cell that must not be overwritten."""


@dataclass(frozen=True)
class Cell:
    """Either a literal value or a formula (source starting with ``=``).

    For formula cells ``value`` holds the last computed result, or ``None``
    before any recalculation.
    """

    formula: str | None = None
    value: CellValue = None

    @property
    def is_formula(self) -> bool:
        return self.formula is not None


@dataclass
class Sheet:
    name: str
    cells: dict[tuple[int, int], Cell] = field(default_factory=dict)

    def cell(self, col: int, row: int) -> Cell | None:
        return self.cells.get((col, row))


class Workbook:
    """Ordered sheets of cells plus named ranges. Treat as immutable."""

    def __init__(self, sheets: Iterable[Sheet], names: Mapping[str, RangeRef] | None = None):
        self.sheets: tuple[Sheet, ...] = tuple(sheets)
        self.names: dict[str, RangeRef] = dict(names or {})
        self._sheet_index: dict[str, int] = {}
        for i, sheet in enumerate(self.sheets):
            if not is_valid_sheet_name(sheet.name):
                raise WorkbookError(f"invalid sheet name {sheet.name!r}")
            folded = sheet.name.casefold()
            if folded in self._sheet_index:
                raise WorkbookError(f"duplicate sheet name {sheet.name!r}")
            self._sheet_index[folded] = i
        self._names_folded = {n.casefold(): rng for n, rng in self.names.items()}
        if len(self._names_folded) != len(self.names):
            raise WorkbookError("duplicate named range (names are case-insensitive)")
        for name, rng in self.names.items():
            if rng.sheet.casefold() not in self._sheet_index:
                raise WorkbookError(f"named range {name!r} references unknown sheet {rng.sheet!r}")
        self._id: str | None = None

    def sheet(self, name: str) -> Sheet | None:
        i = self._sheet_index.get(name.casefold())
        return self.sheets[i] if i is not None else None

    def sheet_order(self, name: str) -> int | None:
        return self._sheet_index.get(name.casefold())

    def has_sheet(self, name: str) -> bool:
        return name.casefold() in self._sheet_index

    def cell(self, ref: CellRef) -> Cell | None:
        sheet = self.sheet(ref.sheet)
        return sheet.cell(ref.col, ref.row) if sheet else None

    def resolve_name(self, name: str) -> RangeRef | None:
        return self._names_folded.get(name.casefold())

    def canonical_ref(self, ref: CellRef) -> CellRef:
        """Ref with the sheet's declared casing; raises RefError if unknown."""
        i = self._sheet_index.get(ref.sheet.casefold())
        if i is None:
            raise RefError(f"unknown sheet {ref.sheet!r}")
        return CellRef(self.sheets[i].name, ref.col, ref.row)

    def formula_cells(self) -> Iterator[tuple[CellRef, Cell]]:
        for sheet in self.sheets:
            for (col, row), cell in sheet.cells.items():
                if cell.is_formula:
                    yield CellRef(sheet.name, col, row), cell

    def ref_sort_key(self, ref: CellRef) -> tuple[int, int, int]:
        return (self._sheet_index[ref.sheet.casefold()], ref.col, ref.row)

    @property
    def id(self) -> str:
        """Content hash of the value model (formatting-independent)."""
        if self._id is None:
            digest = hashlib.sha256(serialize_workbook(self).encode("utf-8"))
            self._id = digest.hexdigest()
        return self._id

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Workbook):
            return NotImplemented
        return serialize_workbook(self) == serialize_workbook(other)

    def __hash__(self) -> int:
        return hash(self.id)

    def __repr__(self) -> str:
        return f"<Workbook {', '.join(s.name for s in self.sheets)} id={self.id[:10]}>"


def _literal_from_json(raw: object, location: str) -> CellValue:
    if isinstance(raw, bool) or isinstance(raw, str):
        return raw
    if isinstance(raw, (int, float)):
        try:
            return as_cell_value(raw)
        except ValueError as exc:
            raise WorkbookError(str(exc), location=location) from None
    raise WorkbookError(f"literal must be number, text, or bool, got {type(raw).__name__}", location=location)


def _reject_constant(token: str) -> float:
    raise WorkbookError(f"non-finite number {token} is not allowed")


def load_workbook(document: str) -> Workbook:
    """Parse a workbook file (UTF-8 JSON text) into a Workbook value."""
    try:
        doc = json.loads(document, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise WorkbookError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise WorkbookError("top level must be an object")
    raw_sheets = doc.get("sheets")
    if not isinstance(raw_sheets, list) or not raw_sheets:
        raise WorkbookError("'sheets' must be a non-empty array")

    sheets: list[Sheet] = []
    for i, raw_sheet in enumerate(raw_sheets):
        where = f"sheets[{i}]"
        if not isinstance(raw_sheet, dict):
            raise WorkbookError("sheet must be an object", location=where)
        name = raw_sheet.get("name")
        if not isinstance(name, str) or not is_valid_sheet_name(name):
            raise WorkbookError(f"invalid sheet name {name!r}", location=where)
        cells: dict[tuple[int, int], Cell] = {}
        raw_cells = raw_sheet.get("cells", {})
        if not isinstance(raw_cells, dict):
            raise WorkbookError("'cells' must be an object", location=f"{where}.cells")
        for addr, spec in raw_cells.items():
            loc = f"{name}!{addr}"
            try:
                col, row = parse_a1(addr)
            except RefError as exc:
                raise WorkbookError(str(exc), location=loc) from None
            if not isinstance(spec, dict) or len(spec) != 1 or next(iter(spec)) not in ("v", "f"):
                raise WorkbookError("cell must be {'v': literal} or {'f': '=...'}", location=loc)
            if "f" in spec:
                formula = spec["f"]
                if not isinstance(formula, str) or not formula.startswith("="):
                    raise WorkbookError("formula must be a string starting with '='", location=loc)
                cells[(col, row)] = Cell(formula=formula)
            else:
                value = _literal_from_json(spec["v"], loc)
                cells[(col, row)] = Cell(value=value)
        sheets.append(Sheet(name, cells))

    names: dict[str, RangeRef] = {}
    raw_names = doc.get("names", {})
    if not isinstance(raw_names, dict):
        raise WorkbookError("'names' must be an object")
    for name, target in raw_names.items():
        loc = f"names.{name}"
        if not _valid_range_name(name):
            raise WorkbookError(f"invalid range name {name!r}", location=loc)
        if not isinstance(target, str):
            raise WorkbookError("named range target must be a string", location=loc)
        try:
            names[name] = parse_range_ref(target)
        except RefError as exc:
            raise WorkbookError(str(exc), location=loc) from None

    try:
        wb = Workbook(sheets, names)
    except WorkbookError:
        raise
    # Normalize name targets to the declared sheet casing.
    canonical_names = {}
    for name, rng in wb.names.items():
        sheet = wb.sheet(rng.sheet)
        assert sheet is not None
        canonical_names[name] = RangeRef(sheet.name, rng.col1, rng.row1, rng.col2, rng.row2)
    return Workbook(wb.sheets, canonical_names)


_NAME_BAD = {"true", "false"}


def _valid_range_name(name: str) -> bool:
    if not re.fullmatch(r"[A-Za-z_][A-Za-z0-9_.]*", name):
        return False
    if name.casefold() in _NAME_BAD:
        return False
    try:  # names that look like cell addresses are ambiguous in formulas
        parse_a1(name)
        return False
    except RefError:
        return True


def serialize_workbook(wb: Workbook) -> str:
    """Canonical file-format text: equal workbooks serialize byte-identically.

    Sheets keep declared order; cell keys sort column-major then row; names
    sort lexicographically. Computed formula values are derived data and are
    not serialized.
    """
    out_sheets = []
    for sheet in wb.sheets:
        out_cells = {}
        for (col, row) in sorted(sheet.cells):
            cell = sheet.cells[(col, row)]
            addr = f"{column_letters(col)}{row}"
            if cell.is_formula:
                out_cells[addr] = {"f": cell.formula}
            elif cell.value is None:
                continue  # blank literal cells are simply absent
            elif isinstance(cell.value, CellError):
                raise ValueError(f"error value {cell.value} in {sheet.name}!{addr} cannot be serialized")
            else:
                out_cells[addr] = {"v": cell.value}
        out_sheets.append({"name": sheet.name, "cells": out_cells})
    out_names = {name: wb.names[name].text() for name in sorted(wb.names)}
    return json.dumps(
        {"sheets": out_sheets, "names": out_names},
        separators=(",", ":"),
        ensure_ascii=False,
        allow_nan=False,
    )


def set_inputs(
    wb: Workbook,
    edits: Mapping[CellRef, CellValue] | Iterable[tuple[CellRef, CellValue]],
) -> Workbook:
    """Return a new snapshot with literal cells replaced by ``edits``.

    Formula cells are protected: targeting one raises :class:`BindingError`
    (it signals a mis-authored definition, never a silent overwrite). Error
    values are not accepted as inputs. A ``None`` value blanks the cell.
    """
    pairs = edits.items() if isinstance(edits, Mapping) else edits
    staged: dict[int, dict[tuple[int, int], Cell]] = {}
    for ref, raw_value in pairs:
        idx = wb.sheet_order(ref.sheet)
        if idx is None:
            raise BindingError(f"input targets unknown sheet {ref.sheet!r}")
        value = as_cell_value(raw_value)
        if isinstance(value, CellError):
            raise BindingError(f"error value {value} cannot be written to {ref.text()}")
        existing = wb.sheets[idx].cell(ref.col, ref.row)
        if existing is not None and existing.is_formula:
            raise BindingError(f"input binding targets formula cell {ref.text()}")
        staged.setdefault(idx, {})[(ref.col, ref.row)] = Cell(value=value)

    if not staged:
        return Workbook(wb.sheets, wb.names)

    new_sheets = []
    for i, sheet in enumerate(wb.sheets):
        if i not in staged:
            new_sheets.append(sheet)
            continue
        cells = dict(sheet.cells)
        for key, cell in staged[i].items():
            if cell.value is None:
                cells.pop(key, None)
            else:
                cells[key] = cell
        new_sheets.append(Sheet(sheet.name, cells))
    return Workbook(new_sheets, wb.names)
