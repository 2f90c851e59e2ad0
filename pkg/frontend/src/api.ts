/** Thin typed client for the service's HTTP/JSON API.
 *
 * Every request carries the session token in X-Auth-Token. Errors keep
 * the parsed body around because 422 responses carry structured payloads
 * (field_errors on runs, issues on publish) that the UI maps back onto
 * the form.
 */
import type { AppEnvelope, CatalogEntry, RunAccepted, RunView } from "./types.js";
import { isTerminal } from "./types.js";

export class ApiError extends Error {
  readonly status: number;
  readonly body: unknown;

  constructor(status: number, body: unknown) {
    super(ApiError.describe(status, body));
    this.name = "ApiError";
    this.status = status;
    this.body = body;
  }

  static describe(status: number, body: unknown): string {
    if (body && typeof body === "object") {
      const detail = (body as { detail?: unknown }).detail;
      if (typeof detail === "string") return detail;
      if ("field_errors" in body) return "input validation failed";
      if ("issues" in body) return "definition validation failed";
    }
    return `request failed with status ${status}`;
  }

  /** The per-field messages of a run rejection, if that is what this is. */
  fieldErrors(): Record<string, string> | null {
    if (this.status !== 422 || !this.body || typeof this.body !== "object") return null;
    const fe = (this.body as { field_errors?: unknown }).field_errors;
    if (!fe || typeof fe !== "object") return null;
    return fe as Record<string, string>;
  }
}

export interface SubmitRequest {
  app: string;
  inputs: Record<string, unknown>;
  period?: string;
  rev?: number;
}

export interface PollOptions {
  /** Abort between polls; an in-flight request still completes. */
  signal?: AbortSignal;
  /** Test seam; defaults to setTimeout-based sleep. */
  sleep?: (ms: number) => Promise<void>;
  /** Give up after this many milliseconds of polling. */
  deadlineMs?: number;
}

const POLL_START_MS = 250;
const POLL_CAP_MS = 5000;

/** Delay before poll attempt n (0-based): 250ms doubling to a 5s cap. */
export function pollDelay(attempt: number): number {
  return Math.min(POLL_START_MS * 2 ** attempt, POLL_CAP_MS);
}

function defaultSleep(ms: number): Promise<void> {
  return new Promise((resolve) => setTimeout(resolve, ms));
}

export class ApiClient {
  private readonly base: string;
  private readonly token: string;
  private readonly fetchFn: typeof fetch;

  constructor(baseUrl: string, token: string, fetchFn?: typeof fetch) {
    this.base = baseUrl.replace(/\/$/, "");
    this.token = token;
    this.fetchFn = fetchFn ?? ((...args) => globalThis.fetch(...args));
  }

  private async request(path: string, init?: RequestInit): Promise<Response> {
    // plain object, not Headers: fetch implementations disagree on
    // foreign Headers instances but all accept records
    const headers: Record<string, string> = { "X-Auth-Token": this.token };
    if (init?.body !== undefined) headers["Content-Type"] = "application/json";
    return this.fetchFn(this.base + path, { ...init, headers });
  }

  private async requestJson<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.request(path, init);
    const text = await response.text();
    let body: unknown = null;
    try {
      body = text ? JSON.parse(text) : null;
    } catch {
      body = text;
    }
    if (!response.ok) throw new ApiError(response.status, body);
    return body as T;
  }

  listApps(): Promise<CatalogEntry[]> {
    return this.requestJson("/api/apps");
  }

  fetchApp(name: string, rev?: number): Promise<AppEnvelope> {
    const suffix = rev === undefined ? "" : `?rev=${rev}`;
    return this.requestJson(`/api/apps/${encodeURIComponent(name)}${suffix}`);
  }

  submitRun(req: SubmitRequest): Promise<RunAccepted> {
    return this.requestJson("/api/runs", { method: "POST", body: JSON.stringify(req) });
  }

  getRun(runId: string): Promise<RunView> {
    return this.requestJson(`/api/runs/${encodeURIComponent(runId)}`);
  }

  /** Fetch a server-rendered report page (HTML text). */
  async fetchReport(url: string): Promise<string> {
    const response = await this.request(url);
    if (!response.ok) throw new ApiError(response.status, await response.text());
    return response.text();
  }

  /** Poll a run until it reaches a terminal status.
   *
   * Backoff doubles from 250ms and caps at 5s; there is no push channel,
   * so this is the one follow mechanism. Abort or deadline expiry raises
   * rather than returning a non-terminal view.
   */
  async pollRun(runId: string, opts: PollOptions = {}): Promise<RunView> {
    const sleep = opts.sleep ?? defaultSleep;
    const startedAt = Date.now();
    for (let attempt = 0; ; attempt++) {
      const view = await this.getRun(runId);
      if (isTerminal(view.status)) return view;
      if (opts.signal?.aborted) throw new Error("polling aborted");
      if (opts.deadlineMs !== undefined && Date.now() - startedAt > opts.deadlineMs) {
        throw new Error(`run still ${view.status} after ${opts.deadlineMs}ms`);
      }
      await sleep(pollDelay(attempt));
    }
  }
}
