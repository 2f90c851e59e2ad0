/** Page wiring: session header, app picker, form lifecycle.
 *
 * The page is served by the run service itself, so API calls use
 * relative URLs and the token travels in X-Auth-Token. One loaded app
 * means one FormState pinned to the fetched revision; loading another
 * app (or reloading) replaces the whole form rather than mutating it.
 */
import { ApiClient } from "./api.js";
import { FormState, type Phase } from "./state.js";
import { paintFieldErrors, renderForm, type RenderedForm } from "./render.js";
import { clearOutputs, embedReport, renderOutputs } from "./results.js";
import type { RunView } from "./types.js";

interface PageEls {
  token: HTMLInputElement;
  connect: HTMLButtonElement;
  appPick: HTMLSelectElement;
  load: HTMLButtonElement;
  appHead: HTMLElement;
  formHost: HTMLElement;
  period: HTMLInputElement;
  submit: HTMLButtonElement;
  status: HTMLElement;
  notice: HTMLElement;
  flags: HTMLElement;
  report: HTMLElement;
}

function grab(doc: Document): PageEls {
  const byId = <T extends HTMLElement>(id: string): T => {
    const node = doc.getElementById(id);
    if (!node) throw new Error(`page is missing #${id}`);
    return node as T;
  };
  return {
    token: byId("token"),
    connect: byId("connect"),
    appPick: byId("app-pick"),
    load: byId("load-app"),
    appHead: byId("app-head"),
    formHost: byId("form-host"),
    period: byId("period"),
    submit: byId("submit-run"),
    status: byId("run-status"),
    notice: byId("notice"),
    flags: byId("run-flags"),
    report: byId("report"),
  };
}

export class Page {
  private readonly doc: Document;
  private readonly els: PageEls;
  private client: ApiClient | null = null;
  private state: FormState | null = null;
  private rendered: RenderedForm | null = null;

  constructor(doc: Document) {
    this.doc = doc;
    this.els = grab(doc);
    this.els.connect.addEventListener("click", () => void this.connect());
    this.els.load.addEventListener("click", () => void this.loadPicked());
    this.els.submit.addEventListener("click", () => void this.submit());

    const stored = this.storage()?.getItem("sheetapps-token");
    if (stored) this.els.token.value = stored;
  }

  private storage(): Storage | null {
    try {
      return this.doc.defaultView?.sessionStorage ?? null;
    } catch {
      return null;
    }
  }

  private setNotice(text: string | null): void {
    this.els.notice.textContent = text ?? "";
    this.els.notice.hidden = !text;
  }

  async start(): Promise<void> {
    if (!this.els.token.value) return;
    await this.connect();
    if (!this.client) return;
    const wanted = new URL(this.doc.defaultView!.location.href).searchParams.get("app");
    if (wanted) {
      this.els.appPick.value = wanted;
      await this.loadApp(wanted);
    }
  }

  async connect(): Promise<void> {
    const token = this.els.token.value.trim();
    if (!token) {
      this.setNotice("Enter your access token first.");
      return;
    }
    // the page's own fetch resolves relative URLs against its origin
    const win = this.doc.defaultView as (Window & typeof globalThis) | null;
    this.client = win ? new ApiClient("", token, win.fetch.bind(win)) : new ApiClient("", token);
    try {
      const catalog = await this.client.listApps();
      this.storage()?.setItem("sheetapps-token", token);
      this.els.appPick.replaceChildren();
      for (const entry of catalog) {
        const option = this.doc.createElement("option");
        option.value = entry.name;
        option.textContent = `${entry.label} (r${entry.latest_revision})`;
        this.els.appPick.appendChild(option);
      }
      this.setNotice(catalog.length ? null : "No apps are published yet.");
    } catch (exc) {
      this.client = null;
      this.setNotice(exc instanceof Error ? exc.message : String(exc));
    }
  }

  private async loadPicked(): Promise<void> {
    const name = this.els.appPick.value;
    if (name) await this.loadApp(name);
  }

  async loadApp(name: string): Promise<void> {
    if (!this.client) {
      this.setNotice("Connect with a token first.");
      return;
    }
    this.setNotice(null);
    this.els.report.replaceChildren();
    this.els.flags.replaceChildren();
    this.els.status.textContent = "";
    try {
      const envelope = await this.client.fetchApp(name);
      this.state = new FormState(envelope);
      this.rendered = renderForm(this.doc, envelope.definition, {
        onInput: (id, raw) => this.onInput(id, raw),
      });
      this.els.formHost.replaceChildren(this.rendered.root);
      // the header names exactly the revision this form was fetched for
      this.els.appHead.textContent = `${envelope.label} - revision ${envelope.revision} (${envelope.origin})`;
      this.els.submit.disabled = !this.state.canSubmit();
    } catch (exc) {
      this.state = null;
      this.rendered = null;
      this.els.formHost.replaceChildren();
      this.els.appHead.textContent = "";
      this.setNotice(exc instanceof Error ? exc.message : String(exc));
    }
  }

  private onInput(id: string, raw: unknown): void {
    if (!this.state || !this.rendered) return;
    this.state.setValue(id, raw);
    paintFieldErrors(this.rendered, this.state.fieldErrors, (fid) =>
      this.state!.touched.has(fid),
    );
    this.els.submit.disabled = !this.state.canSubmit();
  }

  private describePhase(phase: Phase): string {
    switch (phase.kind) {
      case "idle":
        return "";
      case "submitting":
        return "Submitting...";
      case "polling":
        return `Running (${phase.runId.slice(0, 8)}...)`;
      case "rejected":
        return "The server rejected some inputs; see the marked fields.";
      case "done":
        return phase.run.status === "COMPLETED"
          ? "Completed"
          : `Run failed: ${phase.run.failure ?? "unknown failure"}`;
    }
  }

  async submit(): Promise<void> {
    if (!this.state || !this.rendered || !this.client) return;
    const state = this.state;
    const rendered = this.rendered;
    if (!state.canSubmit()) {
      paintFieldErrors(rendered, state.fieldErrors);
      return;
    }
    clearOutputs(rendered);
    this.els.report.replaceChildren();
    this.els.flags.replaceChildren();
    this.els.submit.disabled = true;

    const period = this.els.period.value.trim();
    const phase = await state.submit(this.client, {
      ...(period ? { period } : {}),
      onPhase: (p) => {
        this.els.status.textContent = this.describePhase(p);
      },
    });
    this.setNotice(state.notice);

    if (phase.kind === "rejected") {
      paintFieldErrors(rendered, state.fieldErrors);
    } else if (phase.kind === "done" && phase.run.status === "COMPLETED") {
      renderOutputs(rendered, phase.run);
      this.showFlags(phase.run);
      await this.showReport(phase.run);
    }
    this.els.submit.disabled = !state.canSubmit();
  }

  private showFlags(run: RunView): void {
    this.els.flags.replaceChildren();
    for (const flag of run.flags ?? []) {
      const p = this.doc.createElement("p");
      p.className = "flag";
      p.textContent = flag;
      this.els.flags.appendChild(p);
    }
  }

  private async showReport(run: RunView): Promise<void> {
    if (!run.report_url || !this.client) return;
    try {
      const html = await this.client.fetchReport(run.report_url);
      embedReport(this.els.report, html);
    } catch (exc) {
      const p = this.doc.createElement("p");
      p.className = "report-error";
      p.textContent = `Report unavailable: ${exc instanceof Error ? exc.message : exc}`;
      this.els.report.replaceChildren(p);
    }
  }
}

declare const document: Document | undefined;

if (typeof document !== "undefined") {
  const page = new Page(document);
  void page.start();
}
