/** Display formatting that matches what the service prints.
 *
 * The server formats numbers as the shortest round-trip decimal, with
 * integral values losing the fraction and an exponent regime outside
 * [1e-4, 1e16). Validation messages interpolate bounds through the same
 * formatter, so the client must agree byte-for-byte on realistic values.
 */
import type { TaggedValue } from "./types.js";

export function formatNumber(v: number): string {
  if (Object.is(v, -0)) return "0";
  const a = Math.abs(v);
  if (Number.isInteger(v) && a < 1e16) return String(v);
  if (a >= 1e16 || (a > 0 && a < 1e-4)) {
    // two-digit exponent, explicit sign: 1e-5 -> 1e-05
    return v.toExponential().replace(/e([+-])(\d)$/, "e$10$2");
  }
  return String(v);
}

/** Text form of a tagged scalar; blank is empty, booleans upper-case. */
export function displayText(value: TaggedValue): string {
  switch (value.kind) {
    case "blank":
      return "";
    case "bool":
      return value.value ? "TRUE" : "FALSE";
    case "number":
      return formatNumber(value.value);
    case "text":
      return value.value;
    case "error":
      return value.code;
    case "table": {
      const rows = value.rows.length;
      const cols = rows ? value.rows[0]!.length : 0;
      return `(${rows}x${cols} table)`;
    }
  }
}
