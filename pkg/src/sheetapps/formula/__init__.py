"""Formula language: parser, evaluator, dependency graph, recalculation."""
from .evaluate import MapValues, ValueView, WorkbookValues, evaluate
from .graph import (
    DependencyGraph,
    RecalcStats,
    RecalcTimeout,
    build_graph,
    full_recalculate,
    recalculate,
)
from .parser import (
    Binary,
    Call,
    FormulaAst,
    FormulaParseError,
    Lit,
    NameNode,
    RangeNode,
    Ref,
    Unary,
    extract_dependencies,
    parse_formula,
    walk,
)

__all__ = [
    "Binary",
    "Call",
    "DependencyGraph",
    "FormulaAst",
    "FormulaParseError",
    "Lit",
    "MapValues",
    "NameNode",
    "RangeNode",
    "RecalcStats",
    "RecalcTimeout",
    "Ref",
    "Unary",
    "ValueView",
    "WorkbookValues",
    "build_graph",
    "evaluate",
    "extract_dependencies",
    "full_recalculate",
    "parse_formula",
    "recalculate",
    "walk",
]
