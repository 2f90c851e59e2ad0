/** Form session state: raw values, per-field validation, run lifecycle.
 *
 * One FormState instance wraps one fetched app revision. The instance
 * never re-resolves "latest": every run it submits pins the revision it
 * was built from, so a form can never mix two revisions even if an
 * author publishes mid-session.
 *
 * Lifecycle: idle -> submitting -> polling(run id) -> done, with
 * rejected(field errors) when the server turns the inputs away. At most
 * one run is in flight per instance; submit() while submitting or
 * polling is a no-op.
 */
import type { PollOptions, SubmitRequest } from "./api.js";
import { ApiError } from "./api.js";
import type { AppEnvelope, RunAccepted, RunView } from "./types.js";
import type { FieldSpec } from "./validate.js";
import { checkAll, checkField, collectFields } from "./validate.js";

/** What submit() needs from the API client (ApiClient satisfies this). */
export interface RunClient {
  submitRun(req: SubmitRequest): Promise<RunAccepted>;
  pollRun(runId: string, opts?: PollOptions): Promise<RunView>;
}

export type Phase =
  | { kind: "idle" }
  | { kind: "submitting" }
  | { kind: "polling"; runId: string }
  | { kind: "done"; run: RunView }
  | { kind: "rejected"; fieldErrors: Record<string, string> };

export interface SubmitOptions {
  period?: string;
  onPhase?: (phase: Phase) => void;
  deadlineMs?: number;
  sleep?: (ms: number) => Promise<void>;
}

export class FormState {
  readonly app: string;
  readonly label: string;
  readonly revision: number;
  readonly fields: Map<string, FieldSpec>;
  readonly values = new Map<string, unknown>();
  /** Current validation message per field; empty map means clean. */
  fieldErrors = new Map<string, string>();
  /** Fields the user has edited; untouched fields stay quiet in the UI. */
  readonly touched = new Set<string>();
  phase: Phase = { kind: "idle" };
  /** One-line user-facing notice (queue full, transport trouble). */
  notice: string | null = null;

  constructor(envelope: AppEnvelope) {
    this.app = envelope.name;
    this.label = envelope.label;
    this.revision = envelope.revision;
    this.fields = collectFields(envelope.definition.ui);
    this.fieldErrors = checkAll(this.fields, this.values);
  }

  setValue(id: string, raw: unknown): void {
    if (!this.fields.has(id)) return;
    this.values.set(id, raw);
    this.touched.add(id);
    const message = checkField(this.fields.get(id)!, raw);
    if (message === null) this.fieldErrors.delete(id);
    else this.fieldErrors.set(id, message);
  }

  /** Re-check everything (used on submit, where untouched counts too). */
  validateAll(): boolean {
    this.fieldErrors = checkAll(this.fields, this.values);
    return this.fieldErrors.size === 0;
  }

  get inFlight(): boolean {
    return this.phase.kind === "submitting" || this.phase.kind === "polling";
  }

  /** Submit is enabled exactly when every client-side check passes. */
  canSubmit(): boolean {
    if (this.inFlight) return false;
    return checkAll(this.fields, this.values).size === 0;
  }

  /** Raw values as the flat inputs object the API takes. */
  inputsPayload(): Record<string, unknown> {
    const payload: Record<string, unknown> = {};
    for (const [id, raw] of this.values) payload[id] = raw;
    return payload;
  }

  /** Validate, submit, and follow the run to a terminal state.
   *
   * Returns the phase it settled in. Client validation failing leaves
   * the form idle with fieldErrors set and sends nothing. A server 422
   * moves to rejected with the server's messages painted over ours (the
   * server is authoritative). A 409 sets a retry notice and returns to
   * idle.
   */
  async submit(client: RunClient, opts: SubmitOptions = {}): Promise<Phase> {
    if (this.inFlight) return this.phase;
    this.notice = null;
    const setPhase = (phase: Phase): Phase => {
      this.phase = phase;
      opts.onPhase?.(phase);
      return phase;
    };

    if (!this.validateAll()) {
      return setPhase({ kind: "idle" });
    }

    setPhase({ kind: "submitting" });
    let accepted;
    try {
      accepted = await client.submitRun({
        app: this.app,
        inputs: this.inputsPayload(),
        rev: this.revision,
        ...(opts.period ? { period: opts.period } : {}),
      });
    } catch (exc) {
      if (exc instanceof ApiError) {
        const fieldErrors = exc.fieldErrors();
        if (fieldErrors !== null) {
          this.fieldErrors = new Map(Object.entries(fieldErrors));
          return setPhase({ kind: "rejected", fieldErrors });
        }
        if (exc.status === 409) {
          this.notice = "The run queue is full right now; try again in a moment.";
          return setPhase({ kind: "idle" });
        }
        this.notice = exc.message;
        return setPhase({ kind: "idle" });
      }
      this.notice = exc instanceof Error ? exc.message : String(exc);
      return setPhase({ kind: "idle" });
    }

    setPhase({ kind: "polling", runId: accepted.run_id });
    try {
      const run = await client.pollRun(accepted.run_id, {
        deadlineMs: opts.deadlineMs,
        ...(opts.sleep ? { sleep: opts.sleep } : {}),
      });
      return setPhase({ kind: "done", run });
    } catch (exc) {
      this.notice = exc instanceof Error ? exc.message : String(exc);
      return setPhase({ kind: "idle" });
    }
  }
}
