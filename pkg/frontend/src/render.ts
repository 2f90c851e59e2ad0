/** Schema-driven form rendering.
 *
 * Walks the definition's component tree and builds plain DOM: container
 * nesting is preserved, every component kind gets a concrete element,
 * and a kind this client does not know still renders as a visible error
 * placeholder rather than disappearing. Output displays start empty and
 * are filled by results.ts once a run completes.
 *
 * All constructors take the target document explicitly so the same code
 * runs in a browser page and under a synthetic DOM in tests.
 */
import type { ComponentDoc, DefinitionDoc } from "./types.js";

export interface RenderHooks {
  onInput?: (id: string, raw: unknown) => void;
}

export interface OutputSlot {
  el: HTMLElement;
  source: string;
  display: string;
}

export interface RenderedForm {
  root: HTMLElement;
  /** Field wrapper elements, for error placement and focus. */
  fieldWraps: Map<string, HTMLElement>;
  /** The error line inside each field wrapper. */
  errorSlots: Map<string, HTMLElement>;
  /** Output display regions keyed by component id. */
  outputs: Map<string, OutputSlot>;
}

function el<K extends keyof HTMLElementTagNameMap>(
  doc: Document,
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderForm(
  doc: Document,
  definition: DefinitionDoc,
  hooks: RenderHooks = {},
): RenderedForm {
  const rendered: RenderedForm = {
    root: el(doc, "div", "app-form"),
    fieldWraps: new Map(),
    errorSlots: new Map(),
    outputs: new Map(),
  };
  rendered.root.appendChild(renderComponent(doc, definition.ui, rendered, hooks));
  return rendered;
}

function renderComponent(
  doc: Document,
  c: ComponentDoc,
  rendered: RenderedForm,
  hooks: RenderHooks,
): HTMLElement {
  switch (c.kind) {
    case "group":
      return renderGroup(doc, c, rendered, hooks);
    case "tabbed-pane":
      return renderTabs(doc, c, rendered, hooks);
    case "input-field":
      return renderInputField(doc, c, rendered, hooks);
    case "choice-list":
      return renderChoiceList(doc, c, rendered, hooks);
    case "radio-buttons":
      return renderRadioButtons(doc, c, rendered, hooks);
    case "output-display":
      return renderOutputDisplay(doc, c, rendered);
    case "static-text": {
      const p = el(doc, "p", "static-text", c.text ?? "");
      p.dataset.id = c.id;
      return p;
    }
    default: {
      // never drop a component silently; show what we could not draw
      const box = el(doc, "div", "component-error");
      box.setAttribute("role", "alert");
      box.textContent = `This form uses a component kind "${c.kind}" (id ${c.id}) that this client cannot render.`;
      return box;
    }
  }
}

function renderGroup(
  doc: Document,
  c: ComponentDoc,
  rendered: RenderedForm,
  hooks: RenderHooks,
): HTMLElement {
  const box = el(doc, "fieldset", "group");
  box.dataset.id = c.id;
  if (c.label) box.appendChild(el(doc, "legend", "group-label", c.label));
  for (const child of c.children ?? []) {
    box.appendChild(renderComponent(doc, child, rendered, hooks));
  }
  return box;
}

function renderTabs(
  doc: Document,
  c: ComponentDoc,
  rendered: RenderedForm,
  hooks: RenderHooks,
): HTMLElement {
  const box = el(doc, "div", "tabs");
  box.dataset.id = c.id;
  if (c.label) box.appendChild(el(doc, "div", "tabs-label", c.label));
  const bar = el(doc, "div", "tab-bar");
  bar.setAttribute("role", "tablist");
  box.appendChild(bar);

  const children = c.children ?? [];
  const buttons: HTMLButtonElement[] = [];
  const panels: HTMLElement[] = [];
  children.forEach((child, i) => {
    const button = el(doc, "button", "tab-button", child.label || child.id);
    button.type = "button";
    button.setAttribute("role", "tab");
    bar.appendChild(button);
    buttons.push(button);

    const panel = el(doc, "div", "tab-panel");
    panel.setAttribute("role", "tabpanel");
    panel.appendChild(renderComponent(doc, child, rendered, hooks));
    box.appendChild(panel);
    panels.push(panel);

    button.addEventListener("click", () => select(i));
  });

  const select = (active: number): void => {
    buttons.forEach((b, i) => {
      b.classList.toggle("active", i === active);
      b.setAttribute("aria-selected", i === active ? "true" : "false");
    });
    panels.forEach((p, i) => {
      p.classList.toggle("active", i === active);
      if (i === active) p.removeAttribute("hidden");
      else p.setAttribute("hidden", "");
    });
  };
  if (children.length) select(0);
  return box;
}

function fieldShell(doc: Document, c: ComponentDoc, rendered: RenderedForm): HTMLElement {
  const wrap = el(doc, "div", "field");
  wrap.dataset.id = c.id;
  const error = el(doc, "span", "field-error");
  error.setAttribute("role", "alert");
  error.hidden = true;
  rendered.fieldWraps.set(c.id, wrap);
  rendered.errorSlots.set(c.id, error);
  return wrap;
}

function renderInputField(
  doc: Document,
  c: ComponentDoc,
  rendered: RenderedForm,
  hooks: RenderHooks,
): HTMLElement {
  const wrap = fieldShell(doc, c, rendered);
  const label = el(doc, "label", "field-label", c.label || c.id);
  label.htmlFor = `input-${c.id}`;
  wrap.appendChild(label);

  if (c.type === "bool") {
    const input = el(doc, "input");
    input.type = "checkbox";
    input.id = `input-${c.id}`;
    input.addEventListener("change", () => hooks.onInput?.(c.id, input.checked));
    wrap.appendChild(input);
  } else {
    const input = el(doc, "input");
    // text inputs for numbers too: the document's validators are the
    // single gate, not whatever a native number widget happens to allow
    input.type = "text";
    input.id = `input-${c.id}`;
    if (c.type === "number") input.inputMode = "decimal";
    input.addEventListener("input", () => hooks.onInput?.(c.id, input.value));
    wrap.appendChild(input);
  }
  wrap.appendChild(rendered.errorSlots.get(c.id)!);
  return wrap;
}

function renderChoiceList(
  doc: Document,
  c: ComponentDoc,
  rendered: RenderedForm,
  hooks: RenderHooks,
): HTMLElement {
  const wrap = fieldShell(doc, c, rendered);
  const label = el(doc, "label", "field-label", c.label || c.id);
  label.htmlFor = `input-${c.id}`;
  wrap.appendChild(label);

  const select = el(doc, "select");
  select.id = `input-${c.id}`;
  const blank = el(doc, "option", undefined, "(choose)");
  blank.value = "";
  select.appendChild(blank);
  for (const option of c.options ?? []) {
    const node = el(doc, "option", undefined, option);
    node.value = option;
    select.appendChild(node);
  }
  select.addEventListener("change", () => hooks.onInput?.(c.id, select.value));
  wrap.appendChild(select);
  wrap.appendChild(rendered.errorSlots.get(c.id)!);
  return wrap;
}

function renderRadioButtons(
  doc: Document,
  c: ComponentDoc,
  rendered: RenderedForm,
  hooks: RenderHooks,
): HTMLElement {
  const wrap = fieldShell(doc, c, rendered);
  wrap.classList.add("radio-group");
  wrap.setAttribute("role", "radiogroup");
  wrap.appendChild(el(doc, "span", "field-label", c.label || c.id));

  for (const option of c.options ?? []) {
    const item = el(doc, "label", "radio-option");
    const input = el(doc, "input");
    input.type = "radio";
    input.name = `radio-${c.id}`;
    input.value = option;
    input.addEventListener("change", () => {
      if (input.checked) hooks.onInput?.(c.id, option);
    });
    item.appendChild(input);
    item.appendChild(doc.createTextNode(option));
    wrap.appendChild(item);
  }
  wrap.appendChild(rendered.errorSlots.get(c.id)!);
  return wrap;
}

function renderOutputDisplay(
  doc: Document,
  c: ComponentDoc,
  rendered: RenderedForm,
): HTMLElement {
  const wrap = el(doc, "div", "output");
  wrap.dataset.id = c.id;
  wrap.appendChild(el(doc, "span", "output-label", c.label || c.id));
  const value = el(doc, "div", "output-value output-empty");
  wrap.appendChild(value);
  rendered.outputs.set(c.id, {
    el: value,
    source: c.source ?? "",
    display: c.display ?? "scalar",
  });
  return wrap;
}

/** Paint validation messages into the field error slots.
 *
 * Only the given fields show messages; everything else is cleared. The
 * optional filter lets the caller keep untouched fields quiet while the
 * user is still typing.
 */
export function paintFieldErrors(
  rendered: RenderedForm,
  errors: Map<string, string>,
  show: (id: string) => boolean = () => true,
): void {
  for (const [id, slot] of rendered.errorSlots) {
    const message = errors.get(id);
    const wrap = rendered.fieldWraps.get(id)!;
    if (message !== undefined && show(id)) {
      slot.textContent = message;
      slot.hidden = false;
      wrap.classList.add("invalid");
    } else {
      slot.textContent = "";
      slot.hidden = true;
      wrap.classList.remove("invalid");
    }
  }
}
