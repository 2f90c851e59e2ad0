/** Filling output displays and embedding report pages.
 *
 * Outputs arrive as tagged values; scalars render as text (errors get a
 * flagged style, they are data here, not failures), tables render as
 * grids. Reports arrive as complete server-rendered HTML documents whose
 * chart blocks carry a JSON data island; we adopt the body and draw each
 * island as an SVG plot.
 */
import type { ChartData, RunView, TaggedValue } from "./types.js";
import type { RenderedForm } from "./render.js";
import { displayText } from "./format.js";
import { drawChart } from "./chart.js";

function scalarInto(el: HTMLElement, value: TaggedValue): void {
  el.textContent = displayText(value);
  el.classList.toggle("error-value", value.kind === "error");
}

function tableInto(doc: Document, el: HTMLElement, value: TaggedValue): void {
  if (value.kind !== "table") {
    scalarInto(el, value);
    return;
  }
  const table = doc.createElement("table");
  table.className = "output-table";
  for (const row of value.rows) {
    const tr = doc.createElement("tr");
    for (const cell of row) {
      const td = doc.createElement("td");
      td.textContent = displayText(cell);
      if (cell.kind === "number") td.className = "num";
      if (cell.kind === "error") td.className = "err";
      tr.appendChild(td);
    }
    table.appendChild(tr);
  }
  el.replaceChildren(table);
}

/** Fill every output display that has a value in the completed run. */
export function renderOutputs(rendered: RenderedForm, run: RunView): void {
  const outputs = run.outputs ?? {};
  for (const slot of rendered.outputs.values()) {
    const value = outputs[slot.source];
    slot.el.classList.remove("output-empty");
    if (value === undefined) {
      slot.el.textContent = "(no value)";
      continue;
    }
    if (slot.display === "table") {
      tableInto(slot.el.ownerDocument, slot.el, value);
    } else {
      scalarInto(slot.el, value);
    }
  }
}

/** Reset output displays to the pre-run placeholder state. */
export function clearOutputs(rendered: RenderedForm): void {
  for (const slot of rendered.outputs.values()) {
    slot.el.replaceChildren();
    slot.el.classList.remove("error-value");
    slot.el.classList.add("output-empty");
  }
}

/** Adopt a report document's body into the container and draw its charts.
 *
 * The report endpoint needs the auth header, so a plain link cannot show
 * it; the caller fetches the HTML and we inline it. Tables are already
 * grids; each figure.chart JSON island is replaced by a drawn SVG.
 */
export function embedReport(container: HTMLElement, reportHtml: string): void {
  const doc = container.ownerDocument;
  const win = doc.defaultView as (Window & typeof globalThis) | null;
  const ParserCtor = win?.DOMParser ?? DOMParser;
  const parsed = new ParserCtor().parseFromString(reportHtml, "text/html");

  container.replaceChildren();
  const body = parsed.body;
  for (const child of Array.from(body.children)) {
    container.appendChild(doc.importNode(child, true));
  }

  for (const figure of Array.from(container.querySelectorAll("figure.chart"))) {
    const island = figure.querySelector("script.chart-data");
    if (!island) continue;
    let data: ChartData;
    try {
      data = JSON.parse(island.textContent ?? "") as ChartData;
    } catch {
      continue; // leave the island as-is rather than crash the report
    }
    figure.appendChild(drawChart(doc, data));
  }
}
