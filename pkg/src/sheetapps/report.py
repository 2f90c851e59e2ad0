"""Deterministic report rendering: one self-contained HTML document per
run (or per aggregate view), built from the definition's report blocks.

Text blocks substitute {output-id} placeholders, table blocks render
range outputs as grids, chart blocks embed their (label, series) data as
a machine-readable JSON island for a client to draw. No timestamps or
random ids are introduced here: identical inputs give identical bytes.
"""
from __future__ import annotations

import html
import json

from .appdef import PLACEHOLDER_RE, EasapDefinition, ReportBlock
from .cells import CellError, to_display_text

_STYLE = (
    "body{font-family:system-ui,sans-serif;margin:2rem;color:#222}"
    "h1{font-size:1.4rem}h2{font-size:1.1rem;margin-top:1.5rem}"
    "table{border-collapse:collapse;margin:.75rem 0}"
    "td,th{border:1px solid #bbb;padding:.3rem .6rem;text-align:left}"
    "td.num{text-align:right}td.err{color:#a00;font-weight:bold}"
    "dl.meta{display:grid;grid-template-columns:max-content auto;gap:.2rem .8rem}"
    "dl.meta dt{font-weight:bold}dl.meta dd{margin:0}"
    "p.flag{color:#a50;margin:.2rem 0}"
)


def _display(value) -> str:
    if isinstance(value, list):
        rows = len(value)
        cols = len(value[0]) if value else 0
        return f"({rows}x{cols} table)"
    return to_display_text(value)


def _cell_html(value) -> str:
    if isinstance(value, CellError):
        return f'<td class="err">{html.escape(value.code)}</td>'
    text = to_display_text(value)
    cls = ' class="num"' if isinstance(value, float) and not isinstance(value, bool) else ""
    return f"<td{cls}>{html.escape(text)}</td>"


def _table_html(rows: list[list], title: str | None) -> str:
    parts = []
    if title:
        parts.append(f"<h2>{html.escape(title)}</h2>")
    parts.append("<table>")
    for row in rows:
        parts.append("<tr>" + "".join(_cell_html(v) for v in row) + "</tr>")
    parts.append("</table>")
    return "".join(parts)


def _series_values(value) -> list:
    """Flatten a range output row-major into chart-friendly numbers."""
    flat = []
    for row in value:
        for v in row:
            if isinstance(v, float) and not isinstance(v, bool):
                flat.append(v)
            else:
                flat.append(None)
    return flat


def _labels(value) -> list[str]:
    return [to_display_text(v) for row in value for v in row]


def _chart_html(block: ReportBlock, outputs: dict) -> str:
    data = {
        "labels": _labels(outputs.get(block.labels) or []),
        "series": [
            {"name": oid, "values": _series_values(outputs.get(oid) or [])}
            for oid in block.series
        ],
    }
    payload = json.dumps(data, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    title = html.escape(block.title or "Chart")
    return (
        f'<figure class="chart"><figcaption>{title}</figcaption>'
        f'<script type="application/json" class="chart-data">{html.escape(payload, quote=False)}</script>'
        "</figure>"
    )


def _text_html(block: ReportBlock, outputs: dict) -> str:
    def sub(match) -> str:
        oid = match.group(1)
        if oid not in outputs:
            return match.group(0)
        return _display(outputs[oid])

    content = PLACEHOLDER_RE.sub(sub, block.content or "")
    parts = []
    if block.title:
        parts.append(f"<h2>{html.escape(block.title)}</h2>")
    parts.append(f"<p>{html.escape(content)}</p>")
    return "".join(parts)


def render_report(
    defn: EasapDefinition,
    outputs: dict,
    *,
    scope: str,
    title: str,
    meta: list[tuple[str, str]],
    flags: list[str] | None = None,
) -> str:
    """Render blocks whose scope matches (`both` always matches)."""
    body = [f"<h1>{html.escape(title)}</h1>"]
    if meta:
        items = "".join(
            f"<dt>{html.escape(k)}</dt><dd>{html.escape(v)}</dd>" for k, v in meta
        )
        body.append(f'<dl class="meta">{items}</dl>')
    for flag in flags or []:
        body.append(f'<p class="flag">{html.escape(flag)}</p>')
    for block in defn.report.blocks:
        if block.scope not in (scope, "both"):
            continue
        if block.kind == "text":
            body.append(_text_html(block, outputs))
        elif block.kind == "table":
            value = outputs.get(block.source)
            if isinstance(value, list):
                body.append(_table_html(value, block.title))
        elif block.kind == "chart":
            body.append(_chart_html(block, outputs))
    content = "".join(body)
    return (
        "<!DOCTYPE html><html><head><meta charset=\"utf-8\">"
        f"<title>{html.escape(title)}</title><style>{_STYLE}</style></head>"
        f"<body>{content}</body></html>"
    )
