/** Client-side input validation, derived from the definition document.
 *
 * The rules come from the document itself (the same one the server
 * validates against), never from hand-maintained per-app tables. The
 * checking semantics and message strings match the service so a field
 * reads the same whether the client or the server caught it. The server
 * stays authoritative: anything the client lets through and the server
 * rejects comes back as a 422 and is painted onto the field.
 */
import type { ComponentDoc, ValidatorDoc } from "./types.js";
import { formatNumber } from "./format.js";

export const INPUT_KINDS = ["input-field", "choice-list", "radio-buttons"] as const;

export interface FieldSpec {
  id: string;
  kind: string;
  /** input-field only */
  inputType: string | null;
  /** choice-list / radio-buttons */
  options: string[] | null;
  validators: ValidatorDoc[];
  required: boolean;
}

/** Every input component in document order, keyed by id. */
export function collectFields(root: ComponentDoc): Map<string, FieldSpec> {
  const fields = new Map<string, FieldSpec>();
  const walk = (c: ComponentDoc): void => {
    if ((INPUT_KINDS as readonly string[]).includes(c.kind)) {
      const validators = c.validators ?? [];
      fields.set(c.id, {
        id: c.id,
        kind: c.kind,
        inputType: c.type ?? null,
        options: c.options ?? null,
        validators,
        required: validators.some((v) => v.kind === "required"),
      });
    }
    for (const child of c.children ?? []) walk(child);
  };
  walk(root);
  return fields;
}

const NUMBER_RE = /^[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?$/;
const NONFINITE_RE = /^[+-]?(?:inf(?:inity)?|nan)$/i;

/** Parse a number the way the server does; null means not a number at
 * all, non-finite values come back as-is so the caller can name them. */
function parseNumber(raw: unknown): number | null {
  if (typeof raw === "boolean") return null;
  if (typeof raw === "number") return raw;
  if (typeof raw !== "string") return null;
  const text = raw.trim();
  if (NONFINITE_RE.test(text)) return text.toLowerCase().includes("nan") ? NaN : Infinity;
  if (!NUMBER_RE.test(text)) return null;
  return Number(text);
}

function isEmpty(raw: unknown): boolean {
  return raw === null || raw === undefined || (typeof raw === "string" && raw.trim() === "");
}

/** First failing rule's message, or null when the value passes.
 *
 * Empty means "leave the cell blank": fine unless the field is required.
 * Validators run in declared order; the first failure wins, exactly as
 * on the server.
 */
export function checkField(spec: FieldSpec, raw: unknown): string | null {
  if (isEmpty(raw)) {
    return spec.required ? "required" : null;
  }

  if (spec.kind === "choice-list" || spec.kind === "radio-buttons") {
    if (typeof raw !== "string" || !(spec.options ?? []).includes(raw)) {
      return "not one of the allowed options";
    }
    return null;
  }

  if (spec.inputType === "number") {
    const value = parseNumber(raw);
    if (value === null) return "not a number";
    if (!Number.isFinite(value)) return "not a finite number";
    for (const v of spec.validators) {
      if (v.kind !== "number-range") continue;
      if (v.min !== undefined && v.min !== null && value < v.min) {
        return `below minimum ${formatNumber(v.min)}`;
      }
      if (v.max !== undefined && v.max !== null && value > v.max) {
        return `above maximum ${formatNumber(v.max)}`;
      }
    }
    return null;
  }

  if (spec.inputType === "bool") {
    if (typeof raw === "boolean") return null;
    if (typeof raw === "string" && ["true", "false"].includes(raw.trim().toLowerCase())) {
      return null;
    }
    return "not a boolean";
  }

  // text
  if (typeof raw !== "string") return "expected text";
  for (const v of spec.validators) {
    if (v.kind === "pattern" && v.pattern !== undefined) {
      // the schema bans backreferences, so patterns stay portable;
      // anchor both ends to match the server's full-match rule
      if (!new RegExp(`^(?:${v.pattern})$`).test(raw)) {
        return "does not match the required pattern";
      }
    }
    if (v.kind === "one-of" && !(v.options ?? []).includes(raw)) {
      return "not one of the allowed options";
    }
  }
  return null;
}

/** Check every field against the raw values; missing means blank. */
export function checkAll(
  fields: Map<string, FieldSpec>,
  values: Map<string, unknown>,
): Map<string, string> {
  const errors = new Map<string, string>();
  for (const [id, spec] of fields) {
    const message = checkField(spec, values.get(id));
    if (message !== null) errors.set(id, message);
  }
  return errors;
}
