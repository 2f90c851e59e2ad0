"""The run pipeline shared by the service worker and local execution:
apply typed edits, recalculate, extract bound outputs, derive submission
rows. Both paths call the same function, so a local run and a server run
of the same revision and inputs produce identical results.

Also holds the tagged JSON encoding for cell values. Plain JSON cannot
carry error codes or distinguish blank from text, so values cross the
wire as {"kind": ..., ...} objects.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

from .appdef import EasapDefinition
from .cells import CellError, CellRef, CellValue, to_display_text
from .formula import DependencyGraph, build_graph, full_recalculate
from .workbook import Workbook, set_inputs


def encode_value(value: CellValue) -> dict:
    if value is None:
        return {"kind": "blank"}
    if isinstance(value, bool):
        return {"kind": "bool", "value": value}
    if isinstance(value, float):
        return {"kind": "number", "value": value}
    if isinstance(value, str):
        return {"kind": "text", "value": value}
    if isinstance(value, CellError):
        return {"kind": "error", "code": value.code}
    raise TypeError(f"not a cell value: {value!r}")


def decode_value(doc: dict) -> CellValue:
    kind = doc.get("kind")
    if kind == "blank":
        return None
    if kind == "bool":
        return bool(doc["value"])
    if kind == "number":
        return float(doc["value"])
    if kind == "text":
        return str(doc["value"])
    if kind == "error":
        return CellError(doc["code"])
    raise ValueError(f"unknown value kind {kind!r}")


def encode_output(value) -> dict:
    """Scalar cell value or table (list of rows of cell values)."""
    if isinstance(value, list):
        return {"kind": "table", "rows": [[encode_value(v) for v in row] for row in value]}
    return encode_value(value)


def decode_output(doc: dict):
    if doc.get("kind") == "table":
        return [[decode_value(v) for v in row] for row in doc["rows"]]
    return decode_value(doc)


def encode_typed_inputs(typed: dict[str, CellValue]) -> str:
    """Canonical JSON for persistence; stable across processes."""
    doc = {cid: encode_value(v) for cid, v in typed.items()}
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def decode_typed_inputs(text: str) -> dict[str, CellValue]:
    return {cid: decode_value(doc) for cid, doc in json.loads(text).items()}


def input_digest(typed: dict[str, CellValue]) -> str:
    """Hash of the canonical typed inputs, recorded in the audit trail."""
    return hashlib.sha256(encode_typed_inputs(typed).encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class SubmissionRowData:
    """One keyed output row bound for the submission store."""

    key: tuple[str, ...]
    measures: dict[str, float]


@dataclass
class RunOutcome:
    outputs: dict[str, object]  # output id -> CellValue or list of rows
    rows: list[SubmissionRowData] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)


def build_edits(
    defn: EasapDefinition, typed: dict[str, CellValue]
) -> dict[str, dict[CellRef, CellValue]]:
    """Typed component values -> per-workbook cell edits."""
    edits: dict[str, dict[CellRef, CellValue]] = {}
    for cid, value in typed.items():
        binding = defn.inputs[cid]
        edits.setdefault(binding.workbook, {})[binding.cell] = value
    return edits


def extract_outputs(defn: EasapDefinition, calculated: dict[str, Workbook]) -> dict[str, object]:
    outputs: dict[str, object] = {}
    for oid, binding in defn.outputs.items():
        wb = calculated[binding.workbook]
        if binding.is_scalar:
            cell = wb.cell(binding.cell)
            outputs[oid] = None if cell is None else cell.value
        else:
            rng = binding.range
            rows = []
            for r in range(rng.height):
                row = []
                for c in range(rng.width):
                    cell = wb.cell(rng.cell_at(r, c))
                    row.append(None if cell is None else cell.value)
                rows.append(row)
            outputs[oid] = rows
    return outputs


def derive_submission_rows(
    defn: EasapDefinition, outputs: dict[str, object]
) -> tuple[list[SubmissionRowData], list[str]]:
    """One row per declared key tuple; non-numeric measures skip the row.

    A skipped row is not an execution failure: the flag travels with the
    run so the gap is visible, but the remaining rows still land.
    """
    schema = defn.submission
    if schema is None:
        return [], []
    rows: list[SubmissionRowData] = []
    flags: list[str] = []
    for spec in schema.rows:
        measures: dict[str, float] = {}
        bad = None
        for name, oid in zip(schema.measures, spec.measures):
            value = outputs.get(oid)
            if isinstance(value, float) and not isinstance(value, bool):
                measures[name] = value
            else:
                bad = (name, value)
                break
        if bad is None:
            rows.append(SubmissionRowData(key=spec.keys, measures=measures))
        else:
            name, value = bad
            shown = to_display_text(value) if not isinstance(value, list) else "table"
            key_text = ", ".join(spec.keys)
            flags.append(f"row ({key_text}) skipped: measure {name} is {shown or 'blank'}")
    return rows, flags


def execute_pipeline(
    defn: EasapDefinition,
    workbooks: dict[str, Workbook],
    edits_by_wb: dict[str, dict[CellRef, CellValue]],
    *,
    graphs: dict[str, DependencyGraph] | None = None,
    deadline: float | None = None,
) -> RunOutcome:
    """Apply edits, recalculate every workbook, extract outputs and rows.

    Workbooks are independent calculations; each is recalculated in full
    against its own dependency graph (passed in when the caller caches
    them per revision). Raises RecalcTimeout past the deadline.
    """
    calculated: dict[str, Workbook] = {}
    for wid, wb in workbooks.items():
        edits = edits_by_wb.get(wid)
        working = set_inputs(wb, edits) if edits else wb
        graph = graphs.get(wid) if graphs else None
        if graph is None:
            graph = build_graph(working)
        calculated[wid] = full_recalculate(working, graph=graph, deadline=deadline)
    outputs = extract_outputs(defn, calculated)
    rows, flags = derive_submission_rows(defn, outputs)
    return RunOutcome(outputs=outputs, rows=rows, flags=flags)
