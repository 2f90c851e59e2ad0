"""Centrally stored, versioned workbooks wrapped in declarative web apps.

The pieces, bottom up: a workbook model with canonical serialization and
content hashing, a formula engine with dependency-tracked recalculation, an
app definition schema binding form fields to cells, an append-only
publication store, an HTTP run service with queued execution and an audit
trail, and aggregation plus report rendering over collected submissions.
"""
from .cells import (
    CYCLE,
    DIV0,
    ERROR_CODES,
    NA,
    NAME_ERROR,
    REF_ERROR,
    VALUE_ERROR,
    CellError,
    CellRef,
    CellValue,
    RangeRef,
    RefError,
    parse_cell_ref,
    parse_range_ref,
)
from .formula import (
    DependencyGraph,
    FormulaParseError,
    RecalcStats,
    RecalcTimeout,
    build_graph,
    evaluate,
    full_recalculate,
    parse_formula,
    recalculate,
)
from .workbook import (
    BindingError,
    Cell,
    Sheet,
    Workbook,
    WorkbookError,
    load_workbook,
    serialize_workbook,
    set_inputs,
)

__version__ = "0.1.0"

__all__ = [
    "BindingError",
    "CYCLE",
    "Cell",
    "CellError",
    "CellRef",
    "CellValue",
    "DIV0",
    "DependencyGraph",
    "ERROR_CODES",
    "FormulaParseError",
    "NA",
    "NAME_ERROR",
    "REF_ERROR",
    "RangeRef",
    "RecalcStats",
    "RecalcTimeout",
    "RefError",
    "Sheet",
    "VALUE_ERROR",
    "Workbook",
    "WorkbookError",
    "build_graph",
    "evaluate",
    "full_recalculate",
    "load_workbook",
    "parse_cell_ref",
    "parse_formula",
    "parse_range_ref",
    "recalculate",
    "serialize_workbook",
    "set_inputs",
    "__version__",
]
