"""Cell addressing (A1 notation, ranges) and the scalar cell value model.

A cell value is one of: a finite 64-bit float, a string, a bool, blank
(represented as ``None``), or a :class:`CellError`. Everything that flows
through the calculation engine, bindings, and reports is made of these.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Iterator, Union

MAX_COLUMN = 16_384  # column XFD
MAX_ROW = 1_048_576

ERROR_CODES = ("#DIV/0!", "#VALUE!", "#REF!", "#NAME?", "#N/A", "#CYCLE!")


class CellError:
    """A spreadsheet error value (not an exception -- errors are data)."""

    __slots__ = ("code",)

    def __init__(self, code: str):
        if code not in ERROR_CODES:
            raise ValueError(f"unknown error code {code!r}")
        self.code = code

    def __repr__(self) -> str:
        return f"CellError({self.code!r})"

    def __str__(self) -> str:
        return self.code

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CellError) and other.code == self.code

    def __hash__(self) -> int:
        return hash(("CellError", self.code))


DIV0 = CellError("#DIV/0!")
VALUE_ERROR = CellError("#VALUE!")
REF_ERROR = CellError("#REF!")
NAME_ERROR = CellError("#NAME?")
NA = CellError("#N/A")
CYCLE = CellError("#CYCLE!")

CellValue = Union[float, str, bool, None, CellError]


def is_number(value: object) -> bool:
    """True for numeric cell values (bool is not a number)."""
    return isinstance(value, float) or (isinstance(value, int) and not isinstance(value, bool))


def as_cell_value(raw: object) -> CellValue:
    """Normalize a Python value into a cell value.

    Ints become floats; non-finite numbers and unsupported types are
    rejected with ``ValueError``.
    """
    if raw is None or isinstance(raw, (str, bool, CellError)):
        return raw
    if isinstance(raw, (int, float)):
        value = float(raw)
        if not math.isfinite(value):
            raise ValueError(f"non-finite number {raw!r} is not a valid cell value")
        return value
    raise ValueError(f"{type(raw).__name__} is not a valid cell value")


def format_number(value: float) -> str:
    """Shortest round-trip decimal form; integral values drop the fraction."""
    if value == int(value) and abs(value) < 1e16:
        return str(int(value))
    return repr(value)


def to_display_text(value: CellValue) -> str:
    """Text form used by concatenation and report substitution."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "TRUE" if value else "FALSE"
    if isinstance(value, float):
        return format_number(value)
    if isinstance(value, CellError):
        return value.code
    return value


def column_letters(col: int) -> str:
    if not 1 <= col <= MAX_COLUMN:
        raise ValueError(f"column index {col} out of range")
    letters = ""
    while col:
        col, rem = divmod(col - 1, 26)
        letters = chr(ord("A") + rem) + letters
    return letters


def column_index(letters: str) -> int:
    col = 0
    for ch in letters.upper():
        if not "A" <= ch <= "Z":
            raise ValueError(f"invalid column letters {letters!r}")
        col = col * 26 + (ord(ch) - ord("A") + 1)
    return col


_SHEET_NAME_RE = re.compile(r"[^!:\[\]\x00-\x1f]+")
_PLAIN_SHEET_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
_A1_RE = re.compile(r"(\$?)([A-Za-z]{1,3})(\$?)([1-9][0-9]{0,6})\Z")


def is_valid_sheet_name(name: str) -> bool:
    return (
        bool(name)
        and name == name.strip()
        and _SHEET_NAME_RE.fullmatch(name) is not None
        and not name.startswith("'")
    )


def quote_sheet_name(name: str) -> str:
    """Sheet name as it appears in a qualified reference."""
    if _PLAIN_SHEET_RE.match(name) and not _A1_RE.match(name):
        return name
    return "'" + name.replace("'", "''") + "'"


class RefError(ValueError):
    """Raised when reference text cannot be parsed or is out of bounds."""


@dataclass(frozen=True, eq=False)
class CellRef:
    """A single cell address. Sheet comparison is case-insensitive."""

    sheet: str
    col: int
    row: int

    def __post_init__(self):
        if not 1 <= self.col <= MAX_COLUMN:
            raise RefError(f"column {self.col} out of range 1..{MAX_COLUMN}")
        if not 1 <= self.row <= MAX_ROW:
            raise RefError(f"row {self.row} out of range 1..{MAX_ROW}")

    @property
    def key(self) -> tuple[str, int, int]:
        return (self.sheet.casefold(), self.col, self.row)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, CellRef) and other.key == self.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def a1(self) -> str:
        """Unqualified A1 form, e.g. ``B7``."""
        return f"{column_letters(self.col)}{self.row}"

    def text(self, *, default_sheet: str | None = None) -> str:
        """Qualified form unless the sheet matches ``default_sheet``."""
        if default_sheet is not None and self.sheet.casefold() == default_sheet.casefold():
            return self.a1
        return f"{quote_sheet_name(self.sheet)}!{self.a1}"

    def __repr__(self) -> str:
        return f"CellRef({self.text()})"


@dataclass(frozen=True, eq=False)
class RangeRef:
    """A rectangular cell range on a single sheet (corners normalized)."""

    sheet: str
    col1: int
    row1: int
    col2: int
    row2: int

    def __post_init__(self):
        if self.col1 > self.col2 or self.row1 > self.row2:
            c1, c2 = sorted((self.col1, self.col2))
            r1, r2 = sorted((self.row1, self.row2))
            object.__setattr__(self, "col1", c1)
            object.__setattr__(self, "col2", c2)
            object.__setattr__(self, "row1", r1)
            object.__setattr__(self, "row2", r2)
        CellRef(self.sheet, self.col1, self.row1)
        CellRef(self.sheet, self.col2, self.row2)

    @property
    def key(self) -> tuple[str, int, int, int, int]:
        return (self.sheet.casefold(), self.col1, self.row1, self.col2, self.row2)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, RangeRef) and other.key == self.key

    def __hash__(self) -> int:
        return hash(self.key)

    @property
    def width(self) -> int:
        return self.col2 - self.col1 + 1

    @property
    def height(self) -> int:
        return self.row2 - self.row1 + 1

    @property
    def size(self) -> int:
        return self.width * self.height

    def cells(self) -> Iterator[CellRef]:
        """All covered cells, column-major (A1, A2, ..., B1, B2, ...)."""
        for col in range(self.col1, self.col2 + 1):
            for row in range(self.row1, self.row2 + 1):
                yield CellRef(self.sheet, col, row)

    def cell_at(self, row_offset: int, col_offset: int) -> CellRef:
        """Cell by 0-based offsets from the top-left corner."""
        return CellRef(self.sheet, self.col1 + col_offset, self.row1 + row_offset)

    def contains(self, ref: CellRef) -> bool:
        return (
            ref.sheet.casefold() == self.sheet.casefold()
            and self.col1 <= ref.col <= self.col2
            and self.row1 <= ref.row <= self.row2
        )

    def text(self, default_sheet: str | None = None) -> str:
        start = f"{column_letters(self.col1)}{self.row1}"
        if (self.col1, self.row1) == (self.col2, self.row2):
            body = start
        else:
            body = f"{start}:{column_letters(self.col2)}{self.row2}"
        if default_sheet is not None and default_sheet.casefold() == self.sheet.casefold():
            return body
        return f"{quote_sheet_name(self.sheet)}!{body}"

    def __repr__(self) -> str:
        return f"RangeRef({self.text()})"


def parse_a1(text: str) -> tuple[int, int]:
    """``"B7"`` -> ``(col, row)``; ``$`` anchors are accepted and ignored."""
    m = _A1_RE.match(text)
    if not m:
        raise RefError(f"invalid cell address {text!r}")
    col = column_index(m.group(2))
    row = int(m.group(4))
    if col > MAX_COLUMN:
        raise RefError(f"column in {text!r} out of range")
    if row > MAX_ROW:
        raise RefError(f"row in {text!r} out of range")
    return col, row


def _split_sheet(text: str) -> tuple[str | None, str]:
    """Split an optional sheet qualifier off a reference string."""
    if text.startswith("'"):
        i = 1
        name_chars: list[str] = []
        while i < len(text):
            if text[i] == "'":
                if i + 1 < len(text) and text[i + 1] == "'":
                    name_chars.append("'")
                    i += 2
                    continue
                break
            name_chars.append(text[i])
            i += 1
        else:
            raise RefError(f"unterminated sheet name in {text!r}")
        if i + 1 >= len(text) or text[i + 1] != "!":
            raise RefError(f"expected '!' after sheet name in {text!r}")
        return "".join(name_chars), text[i + 2 :]
    if "!" in text:
        sheet, _, rest = text.partition("!")
        if not is_valid_sheet_name(sheet):
            raise RefError(f"invalid sheet name {sheet!r}")
        return sheet, rest
    return None, text


def parse_cell_ref(text: str, *, default_sheet: str | None = None) -> CellRef:
    """Parse ``A1`` or ``Sheet!A1`` (quoted sheet names supported)."""
    sheet, rest = _split_sheet(text.strip())
    if sheet is None:
        if default_sheet is None:
            raise RefError(f"reference {text!r} needs a sheet qualifier")
        sheet = default_sheet
    col, row = parse_a1(rest)
    return CellRef(sheet, col, row)


def parse_range_ref(text: str, *, default_sheet: str | None = None) -> RangeRef:
    """Parse ``Sheet!A1:B3`` or single-cell ``Sheet!A1`` as a 1x1 range."""
    sheet, rest = _split_sheet(text.strip())
    if sheet is None:
        if default_sheet is None:
            raise RefError(f"range {text!r} needs a sheet qualifier")
        sheet = default_sheet
    first, sep, second = rest.partition(":")
    col1, row1 = parse_a1(first)
    if sep:
        col2, row2 = parse_a1(second)
    else:
        col2, row2 = col1, row1
    return RangeRef(sheet, min(col1, col2), min(row1, row2), max(col1, col2), max(row1, row2))
