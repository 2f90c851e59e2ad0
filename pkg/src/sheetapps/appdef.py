"""App definitions: the declarative document binding a form UI to workbook
cells, plus structural validation and run-time input validation.

Definitions are authored as JSON text (reviewable and diffable); the file
format is documented in ``docs/definition-schema.md``. Parsing is strict:
unknown keys and malformed shapes are rejected with a path into the
document, so author mistakes surface at validate/publish time rather than
as odd run behavior later.
"""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping

from .cells import (
    CellRef,
    CellValue,
    RangeRef,
    RefError,
    format_number,
    parse_cell_ref,
    parse_range_ref,
)
from .formula import build_graph, full_recalculate
from .workbook import Workbook, WorkbookError

APP_NAME_RE = re.compile(r"[a-z][a-z0-9-]{0,63}\Z")
IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_-]{0,63}\Z")
WB_FILE_RE = re.compile(r"[A-Za-z0-9][A-Za-z0-9_.-]{0,63}\.json\Z")
PLACEHOLDER_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_-]*)\}")
RESERVED_FILES = ("definition.json", "manifest.json")

CONTAINER_KINDS = ("tabbed-pane", "group")
INPUT_KINDS = ("input-field", "choice-list", "radio-buttons")
COMPONENT_KINDS = CONTAINER_KINDS + INPUT_KINDS + ("output-display", "static-text")
INPUT_TYPES = ("number", "text", "bool")
VALIDATOR_KINDS = ("required", "number-range", "pattern", "one-of")
REPORT_SCOPES = ("run", "aggregate", "both")


class DefinitionError(ValueError):
    """Malformed definition document; ``path`` points into the JSON."""

    def __init__(self, message: str, path: str):
        self.path = path
        self.message = message
        super().__init__(f"{path}: {message}")


@dataclass(frozen=True)
class Issue:
    """One validation finding; issues are data, not exceptions."""

    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


@dataclass(frozen=True)
class Validator:
    kind: str
    min: float | None = None
    max: float | None = None
    pattern: str | None = None
    options: tuple[str, ...] | None = None


@dataclass(frozen=True)
class Component:
    kind: str
    id: str
    label: str = ""
    children: tuple["Component", ...] = ()
    validators: tuple[Validator, ...] = ()
    input_type: str | None = None  # input-field only
    options: tuple[str, ...] | None = None  # choice-list / radio-buttons
    text: str | None = None  # static-text
    source: str | None = None  # output-display: output id
    display: str | None = None  # output-display: scalar | table

    def walk(self) -> Iterator["Component"]:
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class InputBinding:
    workbook: str
    cell: CellRef


@dataclass(frozen=True)
class OutputBinding:
    workbook: str
    cell: CellRef | None = None
    range: RangeRef | None = None

    @property
    def is_scalar(self) -> bool:
        return self.cell is not None


@dataclass(frozen=True)
class ReportBlock:
    kind: str  # text | table | chart
    scope: str = "both"
    content: str | None = None  # text blocks
    source: str | None = None  # table blocks: range-bound output id
    labels: str | None = None  # chart blocks: range-bound output id
    series: tuple[str, ...] = ()  # chart blocks: range-bound output ids
    title: str | None = None


@dataclass(frozen=True)
class AggregateSpec:
    """Where the aggregate table lands in the report template workbook."""

    workbook: str
    region: RangeRef


@dataclass(frozen=True)
class ReportTemplate:
    blocks: tuple[ReportBlock, ...] = ()
    aggregate: AggregateSpec | None = None


@dataclass(frozen=True)
class SubmissionRowSpec:
    """One persisted row: literal key values plus measure output ids."""

    keys: tuple[str, ...]
    measures: tuple[str, ...]


@dataclass(frozen=True)
class SubmissionSchema:
    keys: tuple[str, ...]
    measures: tuple[str, ...]
    rows: tuple[SubmissionRowSpec, ...]


@dataclass(frozen=True)
class EasapDefinition:
    name: str
    label: str
    workbooks: dict[str, str] = field(default_factory=dict)  # id -> file name
    ui: Component = field(default=None)  # type: ignore[assignment]
    inputs: dict[str, InputBinding] = field(default_factory=dict)
    outputs: dict[str, OutputBinding] = field(default_factory=dict)
    report: ReportTemplate = field(default_factory=ReportTemplate)
    submission: SubmissionSchema | None = None

    def input_components(self) -> dict[str, Component]:
        return {c.id: c for c in self.ui.walk() if c.kind in INPUT_KINDS}


def _require(obj: dict, key: str, path: str):
    if key not in obj:
        raise DefinitionError(f"missing required key {key!r}", path)
    return obj[key]


def _reject_unknown(obj: dict, allowed: tuple[str, ...], path: str) -> None:
    for key in obj:
        if key not in allowed:
            raise DefinitionError(f"unknown key {key!r}", path)


def _str(value, path: str, *, pattern: re.Pattern | None = None) -> str:
    if not isinstance(value, str):
        raise DefinitionError("expected a string", path)
    if pattern and not pattern.match(value):
        raise DefinitionError(f"invalid identifier {value!r}", path)
    return value


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DefinitionError("expected a number", path)
    value = float(value)
    if not math.isfinite(value):
        raise DefinitionError("number must be finite", path)
    return value


_BACKREF_RE = re.compile(r"\\[1-9]|\(\?P=")


def _compile_pattern(source: str, path: str) -> None:
    if _BACKREF_RE.search(source):
        raise DefinitionError("backreferences are not allowed in patterns", path)
    try:
        re.compile(source)
    except re.error as exc:
        raise DefinitionError(f"bad pattern: {exc}", path) from None


def _parse_validator(obj, path: str) -> Validator:
    if not isinstance(obj, dict):
        raise DefinitionError("validator must be an object", path)
    kind = _str(_require(obj, "kind", path), f"{path}.kind")
    if kind not in VALIDATOR_KINDS:
        raise DefinitionError(f"unknown validator kind {kind!r}", f"{path}.kind")
    if kind == "required":
        _reject_unknown(obj, ("kind",), path)
        return Validator("required")
    if kind == "number-range":
        _reject_unknown(obj, ("kind", "min", "max"), path)
        lo = _number(obj["min"], f"{path}.min") if "min" in obj else None
        hi = _number(obj["max"], f"{path}.max") if "max" in obj else None
        if lo is None and hi is None:
            raise DefinitionError("number-range needs min or max", path)
        if lo is not None and hi is not None and lo > hi:
            raise DefinitionError("min exceeds max", path)
        return Validator("number-range", min=lo, max=hi)
    if kind == "pattern":
        _reject_unknown(obj, ("kind", "pattern"), path)
        source = _str(_require(obj, "pattern", path), f"{path}.pattern")
        _compile_pattern(source, f"{path}.pattern")
        return Validator("pattern", pattern=source)
    _reject_unknown(obj, ("kind", "options"), path)
    options = _require(obj, "options", path)
    if not isinstance(options, list) or not options:
        raise DefinitionError("one-of needs a non-empty options list", f"{path}.options")
    return Validator("one-of", options=tuple(_str(o, f"{path}.options[{i}]") for i, o in enumerate(options)))


_COMPONENT_KEYS = {
    "tabbed-pane": ("kind", "id", "label", "children"),
    "group": ("kind", "id", "label", "children"),
    "input-field": ("kind", "id", "label", "type", "validators"),
    "choice-list": ("kind", "id", "label", "options", "validators"),
    "radio-buttons": ("kind", "id", "label", "options", "validators"),
    "output-display": ("kind", "id", "label", "source", "display"),
    "static-text": ("kind", "id", "label", "text"),
}


def _parse_component(obj, path: str, seen_ids: set[str]) -> Component:
    if not isinstance(obj, dict):
        raise DefinitionError("component must be an object", path)
    kind = _str(_require(obj, "kind", path), f"{path}.kind")
    if kind not in COMPONENT_KINDS:
        raise DefinitionError(f"unknown component kind {kind!r}", f"{path}.kind")
    _reject_unknown(obj, _COMPONENT_KEYS[kind], path)
    cid = _str(_require(obj, "id", path), f"{path}.id", pattern=IDENT_RE)
    if cid in seen_ids:
        raise DefinitionError(f"duplicate component id {cid!r}", f"{path}.id")
    seen_ids.add(cid)
    label = _str(obj.get("label", ""), f"{path}.label")

    children: tuple[Component, ...] = ()
    if kind in CONTAINER_KINDS:
        raw = obj.get("children", [])
        if not isinstance(raw, list):
            raise DefinitionError("children must be a list", f"{path}.children")
        children = tuple(
            _parse_component(c, f"{path}.children[{i}]", seen_ids) for i, c in enumerate(raw)
        )

    validators: tuple[Validator, ...] = ()
    if kind in INPUT_KINDS:
        raw = obj.get("validators", [])
        if not isinstance(raw, list):
            raise DefinitionError("validators must be a list", f"{path}.validators")
        validators = tuple(
            _parse_validator(v, f"{path}.validators[{i}]") for i, v in enumerate(raw)
        )

    input_type = None
    if kind == "input-field":
        input_type = _str(_require(obj, "type", path), f"{path}.type")
        if input_type not in INPUT_TYPES:
            raise DefinitionError(f"unknown input type {input_type!r}", f"{path}.type")
        for i, v in enumerate(validators):
            vpath = f"{path}.validators[{i}]"
            if v.kind == "number-range" and input_type != "number":
                raise DefinitionError("number-range only applies to number fields", vpath)
            if v.kind in ("pattern", "one-of") and input_type != "text":
                raise DefinitionError(f"{v.kind} only applies to text fields", vpath)

    options = None
    if kind in ("choice-list", "radio-buttons"):
        raw = _require(obj, "options", path)
        if not isinstance(raw, list) or not raw:
            raise DefinitionError("options must be a non-empty list", f"{path}.options")
        options = tuple(_str(o, f"{path}.options[{i}]") for i, o in enumerate(raw))
        for i, v in enumerate(validators):
            if v.kind != "required":
                raise DefinitionError(
                    "only the required validator applies to selection components",
                    f"{path}.validators[{i}]",
                )

    text = None
    if kind == "static-text":
        text = _str(_require(obj, "text", path), f"{path}.text")

    source = display = None
    if kind == "output-display":
        source = _str(_require(obj, "source", path), f"{path}.source", pattern=IDENT_RE)
        display = _str(obj.get("display", "scalar"), f"{path}.display")
        if display not in ("scalar", "table"):
            raise DefinitionError(f"unknown display {display!r}", f"{path}.display")

    return Component(
        kind=kind,
        id=cid,
        label=label,
        children=children,
        validators=validators,
        input_type=input_type,
        options=options,
        text=text,
        source=source,
        display=display,
    )


def _parse_cell(text_value, path: str) -> CellRef:
    source = _str(text_value, path)
    try:
        return parse_cell_ref(source)
    except RefError as exc:
        raise DefinitionError(str(exc), path) from None


def _parse_range(text_value, path: str) -> RangeRef:
    source = _str(text_value, path)
    try:
        return parse_range_ref(source)
    except RefError as exc:
        raise DefinitionError(str(exc), path) from None


def _parse_report(obj, path: str, outputs: dict[str, OutputBinding]) -> ReportTemplate:
    if not isinstance(obj, dict):
        raise DefinitionError("report must be an object", path)
    _reject_unknown(obj, ("blocks", "aggregate"), path)
    blocks = []
    raw_blocks = obj.get("blocks", [])
    if not isinstance(raw_blocks, list):
        raise DefinitionError("blocks must be a list", f"{path}.blocks")
    for i, raw in enumerate(raw_blocks):
        bpath = f"{path}.blocks[{i}]"
        if not isinstance(raw, dict):
            raise DefinitionError("block must be an object", bpath)
        kind = _str(_require(raw, "kind", bpath), f"{bpath}.kind")
        scope = _str(raw.get("scope", "both"), f"{bpath}.scope")
        if scope not in REPORT_SCOPES:
            raise DefinitionError(f"unknown scope {scope!r}", f"{bpath}.scope")
        title = _str(raw.get("title", ""), f"{bpath}.title") or None
        if kind == "text":
            _reject_unknown(raw, ("kind", "scope", "content", "title"), bpath)
            content = _str(_require(raw, "content", bpath), f"{bpath}.content")
            blocks.append(ReportBlock("text", scope=scope, content=content, title=title))
        elif kind == "table":
            _reject_unknown(raw, ("kind", "scope", "source", "title"), bpath)
            source = _str(_require(raw, "source", bpath), f"{bpath}.source", pattern=IDENT_RE)
            _require_range_output(source, outputs, f"{bpath}.source")
            blocks.append(ReportBlock("table", scope=scope, source=source, title=title))
        elif kind == "chart":
            _reject_unknown(raw, ("kind", "scope", "labels", "series", "title"), bpath)
            labels = _str(_require(raw, "labels", bpath), f"{bpath}.labels", pattern=IDENT_RE)
            _require_range_output(labels, outputs, f"{bpath}.labels")
            raw_series = _require(raw, "series", bpath)
            if not isinstance(raw_series, list) or not raw_series:
                raise DefinitionError("series must be a non-empty list", f"{bpath}.series")
            series = tuple(
                _str(s, f"{bpath}.series[{j}]", pattern=IDENT_RE) for j, s in enumerate(raw_series)
            )
            for j, oid in enumerate(series):
                _require_range_output(oid, outputs, f"{bpath}.series[{j}]")
            blocks.append(ReportBlock("chart", scope=scope, labels=labels, series=series, title=title))
        else:
            raise DefinitionError(f"unknown block kind {kind!r}", f"{bpath}.kind")

    aggregate = None
    if "aggregate" in obj:
        raw = obj["aggregate"]
        apath = f"{path}.aggregate"
        if not isinstance(raw, dict):
            raise DefinitionError("aggregate must be an object", apath)
        _reject_unknown(raw, ("workbook", "region"), apath)
        wb = _str(_require(raw, "workbook", apath), f"{apath}.workbook", pattern=IDENT_RE)
        region = _parse_range(_require(raw, "region", apath), f"{apath}.region")
        aggregate = AggregateSpec(workbook=wb, region=region)
    return ReportTemplate(blocks=tuple(blocks), aggregate=aggregate)


def _require_range_output(oid: str, outputs: dict[str, OutputBinding], path: str) -> None:
    binding = outputs.get(oid)
    if binding is None:
        raise DefinitionError(f"unknown output id {oid!r}", path)
    if binding.range is None:
        raise DefinitionError(f"output {oid!r} must be range-bound here", path)


def parse_definition(document: str) -> EasapDefinition:
    """Parse definition JSON into a fully resolved, immutable tree."""
    try:
        data = json.loads(document)
    except json.JSONDecodeError as exc:
        raise DefinitionError(f"invalid JSON: {exc.msg}", f"line {exc.lineno}") from None
    if not isinstance(data, dict):
        raise DefinitionError("definition must be a JSON object", "$")
    _reject_unknown(
        data,
        ("name", "label", "workbooks", "ui", "bindings", "report", "submission"),
        "$",
    )
    name = _str(_require(data, "name", "$"), "name", pattern=APP_NAME_RE)
    label = _str(data.get("label", name), "label")

    raw_wbs = _require(data, "workbooks", "$")
    if not isinstance(raw_wbs, dict) or not raw_wbs:
        raise DefinitionError("workbooks must be a non-empty object", "workbooks")
    workbooks: dict[str, str] = {}
    for wid, fname in raw_wbs.items():
        _str(wid, f"workbooks.{wid}", pattern=IDENT_RE)
        fname = _str(fname, f"workbooks.{wid}")
        if not WB_FILE_RE.match(fname) or fname in RESERVED_FILES:
            raise DefinitionError(f"invalid workbook file name {fname!r}", f"workbooks.{wid}")
        if fname in workbooks.values():
            raise DefinitionError(f"duplicate workbook file name {fname!r}", f"workbooks.{wid}")
        workbooks[wid] = fname

    seen_ids: set[str] = set()
    ui = _parse_component(_require(data, "ui", "$"), "ui", seen_ids)

    raw_bindings = _require(data, "bindings", "$")
    if not isinstance(raw_bindings, dict):
        raise DefinitionError("bindings must be an object", "bindings")
    _reject_unknown(raw_bindings, ("inputs", "outputs"), "bindings")

    inputs: dict[str, InputBinding] = {}
    raw_inputs = raw_bindings.get("inputs", {})
    if not isinstance(raw_inputs, dict):
        raise DefinitionError("bindings.inputs must be an object", "bindings.inputs")
    for cid, raw in raw_inputs.items():
        path = f"bindings.inputs.{cid}"
        if not isinstance(raw, dict):
            raise DefinitionError("binding must be an object", path)
        _reject_unknown(raw, ("wb", "cell"), path)
        wb = _str(_require(raw, "wb", path), f"{path}.wb")
        if wb not in workbooks:
            raise DefinitionError(f"undeclared workbook id {wb!r}", f"{path}.wb")
        inputs[cid] = InputBinding(wb, _parse_cell(_require(raw, "cell", path), f"{path}.cell"))

    outputs: dict[str, OutputBinding] = {}
    raw_outputs = raw_bindings.get("outputs", {})
    if not isinstance(raw_outputs, dict):
        raise DefinitionError("bindings.outputs must be an object", "bindings.outputs")
    for oid, raw in raw_outputs.items():
        path = f"bindings.outputs.{oid}"
        _str(oid, path, pattern=IDENT_RE)
        if not isinstance(raw, dict):
            raise DefinitionError("binding must be an object", path)
        _reject_unknown(raw, ("wb", "cell", "range"), path)
        wb = _str(_require(raw, "wb", path), f"{path}.wb")
        if wb not in workbooks:
            raise DefinitionError(f"undeclared workbook id {wb!r}", f"{path}.wb")
        has_cell, has_range = "cell" in raw, "range" in raw
        if has_cell == has_range:
            raise DefinitionError("exactly one of cell or range required", path)
        if has_cell:
            outputs[oid] = OutputBinding(wb, cell=_parse_cell(raw["cell"], f"{path}.cell"))
        else:
            outputs[oid] = OutputBinding(wb, range=_parse_range(raw["range"], f"{path}.range"))

    components = {c.id: c for c in ui.walk()}
    for cid in inputs:
        comp = components.get(cid)
        if comp is None:
            raise DefinitionError(f"input binding for unknown component {cid!r}", f"bindings.inputs.{cid}")
        if comp.kind not in INPUT_KINDS:
            raise DefinitionError(
                f"component {cid!r} is a {comp.kind}, not an input", f"bindings.inputs.{cid}"
            )
    for cid, comp in components.items():
        if comp.kind in INPUT_KINDS and cid not in inputs:
            raise DefinitionError(f"input component {cid!r} has no binding", "bindings.inputs")
        if comp.kind == "output-display":
            binding = outputs.get(comp.source)
            if binding is None:
                raise DefinitionError(
                    f"output-display {cid!r} references unknown output {comp.source!r}", "ui"
                )
            if comp.display == "table" and binding.range is None:
                raise DefinitionError(
                    f"output-display {cid!r} shows a table but {comp.source!r} is cell-bound", "ui"
                )

    report = _parse_report(data.get("report", {}), "report", outputs)
    if report.aggregate is not None and report.aggregate.workbook not in workbooks:
        raise DefinitionError(
            f"undeclared workbook id {report.aggregate.workbook!r}", "report.aggregate.workbook"
        )

    submission = None
    if "submission" in data and data["submission"] is not None:
        raw = data["submission"]
        path = "submission"
        if not isinstance(raw, dict):
            raise DefinitionError("submission must be an object", path)
        _reject_unknown(raw, ("keys", "measures", "rows"), path)
        raw_keys = _require(raw, "keys", path)
        raw_measures = _require(raw, "measures", path)
        if not isinstance(raw_keys, list) or not raw_keys:
            raise DefinitionError("keys must be a non-empty list", f"{path}.keys")
        if not isinstance(raw_measures, list) or not raw_measures:
            raise DefinitionError("measures must be a non-empty list", f"{path}.measures")
        keys = tuple(_str(k, f"{path}.keys[{i}]", pattern=IDENT_RE) for i, k in enumerate(raw_keys))
        measures = tuple(
            _str(m, f"{path}.measures[{i}]", pattern=IDENT_RE) for i, m in enumerate(raw_measures)
        )
        if len(set(keys)) != len(keys) or len(set(measures)) != len(measures):
            raise DefinitionError("duplicate column name", path)
        if set(keys) & set(measures):
            raise DefinitionError("key and measure names overlap", path)
        raw_rows = _require(raw, "rows", path)
        if not isinstance(raw_rows, list) or not raw_rows:
            raise DefinitionError("rows must be a non-empty list", f"{path}.rows")
        rows = []
        seen_keys: set[tuple[str, ...]] = set()
        for i, rr in enumerate(raw_rows):
            rpath = f"{path}.rows[{i}]"
            if not isinstance(rr, dict):
                raise DefinitionError("row must be an object", rpath)
            _reject_unknown(rr, ("keys", "measures"), rpath)
            kmap = _require(rr, "keys", rpath)
            mmap = _require(rr, "measures", rpath)
            if not isinstance(kmap, dict) or set(kmap) != set(keys):
                raise DefinitionError("row keys must cover the schema keys exactly", f"{rpath}.keys")
            if not isinstance(mmap, dict) or set(mmap) != set(measures):
                raise DefinitionError(
                    "row measures must cover the schema measures exactly", f"{rpath}.measures"
                )
            key_values = tuple(_str(kmap[k], f"{rpath}.keys.{k}") for k in keys)
            if key_values in seen_keys:
                raise DefinitionError(f"duplicate key tuple {key_values!r}", rpath)
            seen_keys.add(key_values)
            measure_oids = []
            for m in measures:
                oid = _str(mmap[m], f"{rpath}.measures.{m}", pattern=IDENT_RE)
                binding = outputs.get(oid)
                if binding is None:
                    raise DefinitionError(f"unknown output id {oid!r}", f"{rpath}.measures.{m}")
                if not binding.is_scalar:
                    raise DefinitionError(
                        f"measure output {oid!r} must be cell-bound", f"{rpath}.measures.{m}"
                    )
                measure_oids.append(oid)
            rows.append(SubmissionRowSpec(keys=key_values, measures=tuple(measure_oids)))
        submission = SubmissionSchema(keys=keys, measures=measures, rows=tuple(rows))

    return EasapDefinition(
        name=name,
        label=label,
        workbooks=workbooks,
        ui=ui,
        inputs=inputs,
        outputs=outputs,
        report=report,
        submission=submission,
    )


def _validator_doc(v: Validator) -> dict:
    doc: dict = {"kind": v.kind}
    if v.min is not None:
        doc["min"] = v.min
    if v.max is not None:
        doc["max"] = v.max
    if v.pattern is not None:
        doc["pattern"] = v.pattern
    if v.options is not None:
        doc["options"] = list(v.options)
    return doc


def _component_doc(c: Component) -> dict:
    doc: dict = {"kind": c.kind, "id": c.id, "label": c.label}
    if c.kind in CONTAINER_KINDS:
        doc["children"] = [_component_doc(ch) for ch in c.children]
    if c.kind in INPUT_KINDS and c.validators:
        doc["validators"] = [_validator_doc(v) for v in c.validators]
    if c.kind == "input-field":
        doc["type"] = c.input_type
    if c.options is not None:
        doc["options"] = list(c.options)
    if c.kind == "static-text":
        doc["text"] = c.text
    if c.kind == "output-display":
        doc["source"] = c.source
        doc["display"] = c.display
    return doc


def _block_doc(b: ReportBlock) -> dict:
    doc: dict = {"kind": b.kind, "scope": b.scope}
    if b.content is not None:
        doc["content"] = b.content
    if b.source is not None:
        doc["source"] = b.source
    if b.labels is not None:
        doc["labels"] = b.labels
    if b.series:
        doc["series"] = list(b.series)
    if b.title is not None:
        doc["title"] = b.title
    return doc


def serialize_definition(defn: EasapDefinition) -> str:
    """Canonical text form; equal definitions serialize to identical bytes."""
    doc: dict = {
        "name": defn.name,
        "label": defn.label,
        "workbooks": dict(sorted(defn.workbooks.items())),
        "ui": _component_doc(defn.ui),
        "bindings": {
            "inputs": {
                cid: {"wb": b.workbook, "cell": b.cell.text()}
                for cid, b in sorted(defn.inputs.items())
            },
            "outputs": {
                oid: (
                    {"wb": b.workbook, "cell": b.cell.text()}
                    if b.is_scalar
                    else {"wb": b.workbook, "range": b.range.text()}
                )
                for oid, b in sorted(defn.outputs.items())
            },
        },
    }
    report: dict = {}
    if defn.report.blocks:
        report["blocks"] = [_block_doc(b) for b in defn.report.blocks]
    if defn.report.aggregate is not None:
        report["aggregate"] = {
            "workbook": defn.report.aggregate.workbook,
            "region": defn.report.aggregate.region.text(),
        }
    doc["report"] = report
    if defn.submission is not None:
        doc["submission"] = {
            "keys": list(defn.submission.keys),
            "measures": list(defn.submission.measures),
            "rows": [
                {
                    "keys": dict(zip(defn.submission.keys, row.keys)),
                    "measures": dict(zip(defn.submission.measures, row.measures)),
                }
                for row in defn.submission.rows
            ],
        }
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False)


def validate_definition(
    defn: EasapDefinition, workbooks: Mapping[str, Workbook]
) -> list[Issue]:
    """Structural validation against loaded workbooks; empty = publishable.

    Sound for bindings: with no issues, applying any validate_inputs result
    via set_inputs cannot raise a binding error.
    """
    issues: list[Issue] = []
    for wid in defn.workbooks:
        if wid not in workbooks:
            issues.append(Issue(f"workbooks.{wid}", "workbook not provided"))
    for wid in workbooks:
        if wid not in defn.workbooks:
            issues.append(Issue("workbooks", f"undeclared workbook {wid!r} provided"))

    graphs = {}
    calculated = {}
    for wid, wb in workbooks.items():
        try:
            graphs[wid] = build_graph(wb)
            calculated[wid] = full_recalculate(wb, graph=graphs[wid])
        except WorkbookError as exc:
            issues.append(Issue(f"workbooks.{wid}", f"workbook formula error: {exc}"))

    def sheet_known(wid: str, sheet: str) -> bool:
        wb = workbooks.get(wid)
        return wb is not None and wb.has_sheet(sheet)

    for cid, binding in sorted(defn.inputs.items()):
        path = f"bindings.inputs.{cid}"
        wb = workbooks.get(binding.workbook)
        if wb is None:
            continue  # already reported above
        if not wb.has_sheet(binding.cell.sheet):
            issues.append(Issue(path, f"unknown sheet {binding.cell.sheet!r}"))
            continue
        cell = wb.cell(binding.cell)
        if cell is not None and cell.is_formula:
            issues.append(Issue(path, "input binding targets formula cell"))

    for oid, binding in sorted(defn.outputs.items()):
        path = f"bindings.outputs.{oid}"
        ref = binding.cell if binding.is_scalar else binding.range
        if binding.workbook in workbooks and not sheet_known(binding.workbook, ref.sheet):
            issues.append(Issue(path, f"unknown sheet {ref.sheet!r}"))

    for i, block in enumerate(defn.report.blocks):
        if block.kind == "text":
            for oid in PLACEHOLDER_RE.findall(block.content or ""):
                if oid not in defn.outputs:
                    issues.append(
                        Issue(f"report.blocks[{i}]", f"placeholder {{{oid}}} has no matching output")
                    )

    agg = defn.report.aggregate
    if agg is not None:
        path = "report.aggregate"
        wb = workbooks.get(agg.workbook)
        if wb is not None:
            if not wb.has_sheet(agg.region.sheet):
                issues.append(Issue(path, f"unknown sheet {agg.region.sheet!r}"))
            else:
                for ref in agg.region.cells():
                    cell = wb.cell(ref)
                    if cell is not None and cell.is_formula:
                        issues.append(
                            Issue(path, f"aggregate region covers formula cell {ref.text()}")
                        )
                        break
        if defn.submission is None:
            issues.append(Issue(path, "aggregate region declared without a submission schema"))
        else:
            want = len(defn.submission.keys) + len(defn.submission.measures)
            if agg.region.width != want:
                issues.append(
                    Issue(path, f"region is {agg.region.width} columns wide, schema needs {want}")
                )

    if defn.submission is not None:
        seen_measure_oids = {oid for row in defn.submission.rows for oid in row.measures}
        for oid in sorted(seen_measure_oids):
            binding = defn.outputs[oid]
            wid = binding.workbook
            if wid not in calculated:
                continue
            cell = calculated[wid].cell(binding.cell)
            value = None if cell is None else cell.value
            if not isinstance(value, float) or isinstance(value, bool):
                issues.append(
                    Issue(
                        "submission",
                        f"measure output {oid!r} is not numeric at fixture values (got {value!r})",
                    )
                )
    return issues


@dataclass
class InputValidation:
    """Outcome of validate_inputs: typed edits or per-field errors."""

    edits: dict[str, dict[CellRef, CellValue]]
    typed: dict[str, CellValue]
    errors: dict[str, str]

    @property
    def ok(self) -> bool:
        return not self.errors


def _parse_number_input(raw, cid: str, errors: dict[str, str]) -> float | None:
    if isinstance(raw, bool):
        errors[cid] = "not a number"
        return None
    if isinstance(raw, (int, float)):
        value = float(raw)
    elif isinstance(raw, str):
        try:
            value = float(raw.strip())
        except ValueError:
            errors[cid] = "not a number"
            return None
    else:
        errors[cid] = "not a number"
        return None
    if not math.isfinite(value):
        errors[cid] = "not a finite number"
        return None
    return value


def _parse_bool_input(raw, cid: str, errors: dict[str, str]) -> bool | None:
    if isinstance(raw, bool):
        return raw
    if isinstance(raw, str):
        folded = raw.strip().casefold()
        if folded in ("true", "false"):
            return folded == "true"
    errors[cid] = "not a boolean"
    return None


def validate_inputs(defn: EasapDefinition, inputs: Mapping[str, object]) -> InputValidation:
    """Validate raw inputs into typed cell edits, or per-field errors.

    Absent and empty-string values mean "leave the cell blank"; required
    fields reject both. Validators run against the typed value in declared
    order; the first failure per field is reported.
    """
    errors: dict[str, str] = {}
    typed: dict[str, CellValue] = {}
    components = defn.input_components()

    for cid in inputs:
        if cid not in components:
            errors[cid] = "unknown input"

    for cid, comp in components.items():
        raw = inputs.get(cid)
        required = any(v.kind == "required" for v in comp.validators)
        empty = raw is None or (isinstance(raw, str) and raw.strip() == "")
        if empty:
            if required:
                errors[cid] = "required"
            else:
                typed[cid] = None
            continue

        if comp.kind in ("choice-list", "radio-buttons"):
            if not isinstance(raw, str) or raw not in comp.options:
                errors[cid] = "not one of the allowed options"
                continue
            typed[cid] = raw
            continue

        if comp.input_type == "number":
            value = _parse_number_input(raw, cid, errors)
            if value is None:
                continue
            failed = False
            for v in comp.validators:
                if v.kind != "number-range":
                    continue
                if v.min is not None and value < v.min:
                    errors[cid] = f"below minimum {format_number(v.min)}"
                    failed = True
                    break
                if v.max is not None and value > v.max:
                    errors[cid] = f"above maximum {format_number(v.max)}"
                    failed = True
                    break
            if not failed:
                typed[cid] = value
        elif comp.input_type == "bool":
            value = _parse_bool_input(raw, cid, errors)
            if value is not None:
                typed[cid] = value
        else:  # text
            if not isinstance(raw, str):
                errors[cid] = "expected text"
                continue
            failed = False
            for v in comp.validators:
                if v.kind == "pattern" and not re.fullmatch(v.pattern, raw):
                    errors[cid] = "does not match the required pattern"
                    failed = True
                    break
                if v.kind == "one-of" and raw not in v.options:
                    errors[cid] = "not one of the allowed options"
                    failed = True
                    break
            if not failed:
                typed[cid] = raw

    edits: dict[str, dict[CellRef, CellValue]] = {}
    if not errors:
        for cid, value in typed.items():
            binding = defn.inputs[cid]
            edits.setdefault(binding.workbook, {})[binding.cell] = value
    return InputValidation(edits=edits, typed=typed, errors=errors)
