/** Shared test scaffolding: the exposure-return fixture from the main
 * repo, consumer-view reduction (what the service sends non-authors),
 * and a synthetic DOM per test.
 */
import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { Event as HappyEvent, Window } from "happy-dom";

import type { AppEnvelope, ComponentDoc, DefinitionDoc } from "../src/types.js";

const HERE = dirname(fileURLToPath(import.meta.url));
export const REPO_ROOT = join(HERE, "..", "..");
export const RDS_DIR = join(REPO_ROOT, "fixtures", "rds");

export function rdsDefinitionText(): string {
  return readFileSync(join(RDS_DIR, "rds.json"), "utf-8");
}

export function rdsWorkbookTexts(): Record<string, string> {
  return {
    calc: readFileSync(join(RDS_DIR, "calc.json"), "utf-8"),
    report: readFileSync(join(RDS_DIR, "report.json"), "utf-8"),
  };
}

/** The document as consumers receive it: no cell wiring. */
export function consumerView(definitionText: string): DefinitionDoc {
  const doc = JSON.parse(definitionText) as Record<string, unknown>;
  delete doc["bindings"];
  delete doc["submission"];
  delete doc["workbooks"];
  return doc as unknown as DefinitionDoc;
}

export function rdsEnvelope(revision = 1): AppEnvelope {
  const definition = consumerView(rdsDefinitionText());
  return {
    name: definition.name,
    label: definition.label ?? definition.name,
    revision,
    origin: "publish",
    definition,
  };
}

export function envelopeFor(ui: ComponentDoc, name = "mini"): AppEnvelope {
  return {
    name,
    label: name,
    revision: 1,
    origin: "publish",
    definition: { name, ui },
  };
}

/** A fresh detached document; render code takes it explicitly. */
export function makeDocument(): Document {
  const window = new Window();
  return window.document as unknown as Document;
}

/** Dispatch a bubbling DOM event on a synthetic-DOM element. */
export function fire(el: Element, type: string): void {
  el.dispatchEvent(new HappyEvent(type, { bubbles: true }) as unknown as Event);
}

/** Valid raw values for every input in the exposure fixture. */
export function validRdsValues(): Record<string, string> {
  const values: Record<string, string> = { office: "London", basis: "gross" };
  const scenarios = ["ws", "eq", "fl"];
  const codes = ["rc01", "rc02", "rc03", "rc04"];
  scenarios.forEach((scenario, si) => {
    codes.forEach((code, ci) => {
      values[`${scenario}_${code}`] = String((si * 4 + ci + 1) * 10);
    });
  });
  return values;
}
