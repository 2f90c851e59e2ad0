/** Wire types for the workbook app service.
 *
 * These mirror the JSON the service actually sends; the definition
 * document shapes are the consumer view of the format described in
 * docs/definition-schema.md (cell bindings are elided server-side for
 * consumers, so they never appear here).
 */

export interface ValidatorDoc {
  kind: "required" | "number-range" | "pattern" | "one-of" | string;
  min?: number;
  max?: number;
  pattern?: string;
  options?: string[];
}

export interface ComponentDoc {
  kind: string;
  id: string;
  label?: string;
  children?: ComponentDoc[];
  /** input-field */
  type?: "number" | "text" | "bool" | string;
  validators?: ValidatorDoc[];
  /** choice-list / radio-buttons */
  options?: string[];
  /** output-display */
  source?: string;
  display?: "scalar" | "table" | string;
  /** static-text */
  text?: string;
}

export interface DefinitionDoc {
  name: string;
  label?: string;
  ui: ComponentDoc;
  report?: unknown;
}

/** GET /api/apps/{name} */
export interface AppEnvelope {
  name: string;
  label: string;
  revision: number;
  origin: string;
  definition: DefinitionDoc;
}

/** GET /api/apps */
export interface CatalogEntry {
  name: string;
  label: string;
  latest_revision: number;
}

export type TaggedValue =
  | { kind: "blank" }
  | { kind: "bool"; value: boolean }
  | { kind: "number"; value: number }
  | { kind: "text"; value: string }
  | { kind: "error"; code: string }
  | { kind: "table"; rows: TaggedValue[][] };

export type RunStatus = "QUEUED" | "RUNNING" | "COMPLETED" | "FAILED";

/** GET /api/runs/{id} */
export interface RunView {
  run_id: string;
  status: RunStatus;
  app: string;
  revision: number;
  period: string;
  enqueued_at: string | null;
  started_at: string | null;
  finished_at: string | null;
  outputs?: Record<string, TaggedValue>;
  flags?: string[];
  report_url?: string;
  failure?: string;
}

/** POST /api/runs happy path */
export interface RunAccepted {
  run_id: string;
  revision: number;
}

/** Chart data island embedded in report HTML. */
export interface ChartData {
  labels: string[];
  series: { name: string; values: (number | null)[] }[];
}

export function isTerminal(status: RunStatus): boolean {
  return status === "COMPLETED" || status === "FAILED";
}
