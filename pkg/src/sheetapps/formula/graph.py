"""Dependency graph over formula cells, and the two recalculation modes.

The graph is built from formula text, named ranges and the sheet list only,
all of which survive ``set_inputs`` unchanged, so one graph can be reused
across every input edit of a published workbook.
"""
from __future__ import annotations

import heapq
import time
from dataclasses import dataclass
from typing import Iterable, Mapping

from ..cells import CYCLE, CellRef, CellValue, RefError
from ..workbook import Cell, Sheet, Workbook, WorkbookError
from .evaluate import WorkbookValues, evaluate
from .parser import FormulaAst, FormulaParseError, extract_dependencies, parse_formula


@dataclass
class RecalcStats:
    """Work counter: number of formula evaluations actually performed."""

    evaluated: int = 0


class RecalcTimeout(Exception):
    """A recalculation ran past its deadline and was abandoned."""


class DependencyGraph:
    """Parsed formulas plus precedent/dependent edges and evaluation order.

    ``order`` lists the formula cells that admit a topological order;
    ``cyclic`` holds the rest: every cell on a reference cycle or downstream
    of one. The two partition the formula cells.
    """

    __slots__ = ("asts", "precedents", "dependents", "order", "cyclic", "_pos")

    def __init__(
        self,
        asts: dict[CellRef, FormulaAst],
        precedents: dict[CellRef, frozenset[CellRef]],
        dependents: dict[CellRef, frozenset[CellRef]],
        order: tuple[CellRef, ...],
        cyclic: frozenset[CellRef],
    ):
        self.asts = asts
        self.precedents = precedents
        self.dependents = dependents
        self.order = order
        self.cyclic = cyclic
        self._pos = {ref: i for i, ref in enumerate(order)}

    def affected_by(self, dirty: Iterable[CellRef]) -> set[CellRef]:
        """Formula cells whose value may change after editing ``dirty``."""
        seen: set[CellRef] = set()
        stack = list(dirty)
        while stack:
            ref = stack.pop()
            for dep in self.dependents.get(ref, ()):
                if dep not in seen:
                    seen.add(dep)
                    stack.append(dep)
        return seen


def build_graph(wb: Workbook) -> DependencyGraph:
    """Parse every formula once and wire the dependency edges.

    Unparseable formula text raises WorkbookError: publishing validates
    workbooks through this path, so broken formulas never reach a run.
    """
    asts: dict[CellRef, FormulaAst] = {}
    precedents: dict[CellRef, frozenset[CellRef]] = {}
    for ref, cell in wb.formula_cells():
        try:
            ast = parse_formula(cell.formula, ref, wb.names)
        except FormulaParseError as exc:
            raise WorkbookError(str(exc), location=ref.text()) from exc
        deps: set[CellRef] = set()
        for dep in extract_dependencies(ast):
            try:
                deps.add(wb.canonical_ref(dep))
            except RefError:
                continue  # unknown sheet: evaluates to #REF! and never changes
        asts[ref] = ast
        precedents[ref] = frozenset(deps)

    dependents_mut: dict[CellRef, set[CellRef]] = {}
    for ref, deps in precedents.items():
        for dep in deps:
            dependents_mut.setdefault(dep, set()).add(ref)
    dependents = {ref: frozenset(deps) for ref, deps in dependents_mut.items()}

    # Kahn's algorithm over formula-to-formula edges, heap-ordered by sheet
    # position so the evaluation order is canonical. Whatever cannot be
    # scheduled is on a cycle or fed by one.
    indegree = {
        ref: sum(1 for dep in deps if dep in asts) for ref, deps in precedents.items()
    }
    ready = [(wb.ref_sort_key(ref), ref) for ref, n in indegree.items() if n == 0]
    heapq.heapify(ready)
    order: list[CellRef] = []
    while ready:
        _, ref = heapq.heappop(ready)
        order.append(ref)
        for dep in dependents.get(ref, ()):
            indegree[dep] -= 1
            if indegree[dep] == 0:
                heapq.heappush(ready, (wb.ref_sort_key(dep), dep))
    cyclic = frozenset(asts.keys() - set(order))
    return DependencyGraph(asts, precedents, dependents, tuple(order), cyclic)


def _check_deadline(deadline: float | None) -> None:
    if deadline is not None and time.monotonic() > deadline:
        raise RecalcTimeout("recalculation deadline exceeded")


def _with_values(wb: Workbook, results: Mapping[CellRef, CellValue]) -> Workbook:
    """Copy of ``wb`` with formula cells' computed values replaced."""
    if not results:
        return wb
    by_sheet: dict[str, dict[tuple[int, int], CellValue]] = {}
    for ref, value in results.items():
        by_sheet.setdefault(ref.sheet.casefold(), {})[(ref.col, ref.row)] = value
    sheets = []
    for sheet in wb.sheets:
        updates = by_sheet.get(sheet.name.casefold())
        if not updates:
            sheets.append(sheet)
            continue
        cells = dict(sheet.cells)
        for key, value in updates.items():
            cells[key] = Cell(cells[key].formula, value)
        sheets.append(Sheet(sheet.name, cells))
    return Workbook(sheets, wb.names)


def _evaluate_cells(
    graph: DependencyGraph,
    values: WorkbookValues,
    refs: Iterable[CellRef],
    stats: RecalcStats | None,
    deadline: float | None,
) -> dict[CellRef, CellValue]:
    results: dict[CellRef, CellValue] = {}
    # Cyclic cells are assigned, never evaluated; doing it up front keeps
    # freshly loaded workbooks (no cached values) correct too.
    for ref in graph.cyclic:
        values.set_value(ref, CYCLE)
        results[ref] = CYCLE
    for ref in refs:
        _check_deadline(deadline)
        value = evaluate(graph.asts[ref], values)
        if stats is not None:
            stats.evaluated += 1
        values.set_value(ref, value)
        results[ref] = value
    return results


def full_recalculate(
    wb: Workbook,
    *,
    graph: DependencyGraph | None = None,
    stats: RecalcStats | None = None,
    deadline: float | None = None,
) -> Workbook:
    """Evaluate every formula cell from scratch, in topological order.

    This is the reference semantics; ``recalculate`` must agree with it
    cell for cell.
    """
    if graph is None:
        graph = build_graph(wb)
    values = WorkbookValues(wb, literals_only=True)
    results = _evaluate_cells(graph, values, graph.order, stats, deadline)
    return _with_values(wb, results)


def recalculate(
    wb: Workbook,
    dirty: Iterable[CellRef],
    *,
    graph: DependencyGraph | None = None,
    stats: RecalcStats | None = None,
    deadline: float | None = None,
) -> Workbook:
    """Recompute exactly the transitive dependents of the edited cells.

    ``wb`` must hold computed values from an earlier recalculation (or be
    fresh with ``dirty`` covering every cell); only then is the result
    value-identical to ``full_recalculate(wb)``.
    """
    if graph is None:
        graph = build_graph(wb)
    dirty_canon: set[CellRef] = set()
    for ref in dirty:
        try:
            dirty_canon.add(wb.canonical_ref(ref))
        except RefError:
            continue
    affected = graph.affected_by(dirty_canon)
    # Initial-load callers pass formula cells in dirty; those re-evaluate too.
    affected |= dirty_canon & graph.asts.keys()
    todo = [ref for ref in graph.order if ref in affected]
    values = WorkbookValues(wb)
    results = _evaluate_cells(graph, values, todo, stats, deadline)
    return _with_values(wb, results)
