/** Tiny dependency-free SVG chart for report chart blocks.
 *
 * Report pages embed their chart data as a JSON island (labels plus one
 * or more named series); this draws it as grouped vertical bars with a
 * baseline and per-series colors. Null entries (non-numeric cells) leave
 * a gap. Nothing fancy: the goal is a readable series plot, not a
 * charting library.
 */
import type { ChartData } from "./types.js";
import { formatNumber } from "./format.js";

const SVG_NS = "http://www.w3.org/2000/svg";
const COLORS = ["#36618e", "#a8553a", "#4f7d4f", "#7d5a8a", "#9a7b2d"];

const WIDTH = 640;
const HEIGHT = 280;
const MARGIN = { top: 14, right: 10, bottom: 58, left: 10 };

function svgEl(doc: Document, tag: string, attrs: Record<string, string>): SVGElement {
  const node = doc.createElementNS(SVG_NS, tag) as SVGElement;
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  return node;
}

export function drawChart(doc: Document, data: ChartData): SVGElement {
  const svg = svgEl(doc, "svg", {
    viewBox: `0 0 ${WIDTH} ${HEIGHT}`,
    width: String(WIDTH),
    height: String(HEIGHT),
    class: "chart-plot",
    role: "img",
  });

  const labels = data.labels;
  const series = data.series;
  const values = series.flatMap((s) => s.values).filter((v): v is number => v !== null);
  if (!labels.length || !values.length) {
    const note = svgEl(doc, "text", { x: "10", y: "24", class: "chart-empty" });
    note.textContent = "no chart data";
    svg.appendChild(note);
    return svg;
  }

  const top = Math.max(0, ...values);
  const bottom = Math.min(0, ...values);
  const span = top - bottom || 1;
  const plotW = WIDTH - MARGIN.left - MARGIN.right;
  const plotH = HEIGHT - MARGIN.top - MARGIN.bottom;
  const yFor = (v: number): number => MARGIN.top + ((top - v) / span) * plotH;

  const slot = plotW / labels.length;
  const barGap = Math.min(6, slot * 0.15);
  const barW = (slot - barGap) / series.length;

  series.forEach((s, si) => {
    const color = COLORS[si % COLORS.length]!;
    labels.forEach((_, li) => {
      const v = s.values[li];
      if (v === null || v === undefined) return;
      const x = MARGIN.left + li * slot + barGap / 2 + si * barW;
      const y0 = yFor(0);
      const y1 = yFor(v);
      const bar = svgEl(doc, "rect", {
        x: x.toFixed(1),
        y: Math.min(y0, y1).toFixed(1),
        width: Math.max(1, barW).toFixed(1),
        height: Math.max(1, Math.abs(y0 - y1)).toFixed(1),
        fill: color,
        class: "chart-bar",
        "data-series": s.name,
        "data-value": formatNumber(v),
      });
      const title = svgEl(doc, "title", {});
      title.textContent = `${labels[li]} ${s.name}: ${formatNumber(v)}`;
      bar.appendChild(title);
      svg.appendChild(bar);
    });
  });

  // baseline
  svg.appendChild(
    svgEl(doc, "line", {
      x1: String(MARGIN.left),
      x2: String(WIDTH - MARGIN.right),
      y1: yFor(0).toFixed(1),
      y2: yFor(0).toFixed(1),
      stroke: "#555",
      "stroke-width": "1",
    }),
  );

  // category labels, angled so a dozen fit
  labels.forEach((label, li) => {
    const x = MARGIN.left + li * slot + slot / 2;
    const y = HEIGHT - MARGIN.bottom + 14;
    const text = svgEl(doc, "text", {
      x: x.toFixed(1),
      y: String(y),
      class: "chart-label",
      "text-anchor": "end",
      transform: `rotate(-35 ${x.toFixed(1)} ${y})`,
    });
    text.textContent = label;
    svg.appendChild(text);
  });

  if (series.length > 1) {
    series.forEach((s, si) => {
      const text = svgEl(doc, "text", {
        x: String(MARGIN.left + 4),
        y: String(MARGIN.top + 12 + si * 14),
        class: "chart-legend",
        fill: COLORS[si % COLORS.length]!,
      });
      text.textContent = s.name;
      svg.appendChild(text);
    });
  }

  return svg;
}
