/** Artifact annotation panel: a dynamic form generated from the focused
 * model's schema, a read-only JSON view of model outputs, and the 1-5
 * satisfaction stars. Switching the focused model re-renders the form in
 * place; no navigation involved.
 */

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import type { ArtifactAnnotationView, FormFieldView, FormSpecView } from "./types.js";

export type PanelMode = "form" | "json_editor";

export class ArtifactPanel {
  mode: PanelMode = "form";
  spec: FormSpecView | null = null;
  annotation: ArtifactAnnotationView | null = null;
  private widgets = new Map<string, HTMLElement>();

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private projectId: string,
    private targetId: string,
    private artifactKind: string,
  ) {}

  async show(model: string): Promise<void> {
    this.spec = await this.api.getForm(
      this.projectId,
      this.artifactKind,
      model,
      this.targetId,
    );
    this.render();
  }

  setMode(mode: PanelMode): void {
    this.mode = mode;
    this.render();
  }

  render(): void {
    this.root.textContent = "";
    if (!this.spec) return;
    const toggle = document.createElement("button");
    toggle.className = "mode-toggle";
    toggle.textContent = this.mode === "form" ? "JSON" : "Form";
    toggle.addEventListener("click", () =>
      this.setMode(this.mode === "form" ? "json_editor" : "form"),
    );
    this.root.appendChild(toggle);
    if (this.mode === "form") {
      this.root.appendChild(this.renderForm(this.spec));
    } else {
      this.root.appendChild(this.renderJson(this.spec));
    }
    this.root.appendChild(this.renderStars());
  }

  private renderForm(spec: FormSpecView): HTMLElement {
    const form = document.createElement("form");
    form.className = "artifact-form";
    this.widgets.clear();
    for (const field of spec.fields) {
      const label = document.createElement("label");
      label.textContent = field.name + (field.required ? " *" : "");
      const widget = this.widgetFor(field);
      widget.setAttribute("name", field.name);
      this.widgets.set(field.name, widget);
      label.appendChild(widget);
      const errorEl = document.createElement("span");
      errorEl.className = "field-error";
      errorEl.dataset.field = field.name;
      label.appendChild(errorEl);
      form.appendChild(label);
    }
    const submit = document.createElement("button");
    submit.type = "submit";
    submit.textContent = "Save";
    form.appendChild(submit);
    form.addEventListener("submit", (ev) => {
      ev.preventDefault();
      void this.submit("annotation");
    });
    return form;
  }

  private widgetFor(field: FormFieldView): HTMLElement {
    const prefill = field.prefill;
    switch (field.field_type) {
      case "textarea": {
        const el = document.createElement("textarea");
        if (typeof prefill === "string") el.value = prefill;
        return el;
      }
      case "number": {
        const el = document.createElement("input");
        el.type = "number";
        if (typeof prefill === "number") el.value = String(prefill);
        return el;
      }
      case "boolean": {
        const el = document.createElement("input");
        el.type = "checkbox";
        el.checked = prefill === true;
        return el;
      }
      case "json":
      case "list_of_text": {
        const el = document.createElement("textarea");
        el.dataset.structured = field.field_type;
        if (prefill !== undefined) el.value = JSON.stringify(prefill, null, 2);
        return el;
      }
      default: {
        const el = document.createElement("input");
        el.type = "text";
        if (typeof prefill === "string") el.value = prefill;
        return el;
      }
    }
  }

  private renderJson(spec: FormSpecView): HTMLElement {
    // Read-only inspection of the model outputs behind the prefills.
    const pre = document.createElement("pre");
    pre.className = "json-view";
    const outputs: Record<string, unknown> = {};
    for (const field of spec.fields) {
      if (field.prefill !== undefined) outputs[field.name] = field.prefill;
    }
    pre.textContent = JSON.stringify(outputs, null, 2);
    return pre;
  }

  private renderStars(): HTMLElement {
    const holder = document.createElement("div");
    holder.className = "stars";
    const current = this.annotation?.satisfaction_rating ?? 0;
    for (let value = 1; value <= 5; value += 1) {
      const star = document.createElement("button");
      star.className = "star" + (value <= current ? " lit" : "");
      star.dataset.value = String(value);
      star.textContent = value <= current ? "★" : "☆";
      star.addEventListener("click", (ev) => {
        ev.preventDefault();
        void this.rate(value);
      });
      holder.appendChild(star);
    }
    return holder;
  }

  values(): Record<string, unknown> {
    const out: Record<string, unknown> = {};
    if (!this.spec) return out;
    for (const field of this.spec.fields) {
      const widget = this.widgets.get(field.name);
      if (!widget) continue;
      const value = this.readWidget(field, widget);
      if (value !== undefined) out[field.name] = value;
    }
    return out;
  }

  private readWidget(field: FormFieldView, widget: HTMLElement): unknown {
    if (widget instanceof HTMLTextAreaElement) {
      if (widget.dataset.structured) {
        if (!widget.value.trim()) return undefined;
        try {
          return JSON.parse(widget.value);
        } catch {
          return widget.value; // server names the offending field
        }
      }
      return widget.value;
    }
    if (widget instanceof HTMLInputElement) {
      if (widget.type === "checkbox") return widget.checked;
      if (widget.type === "number") {
        return widget.value === "" ? undefined : Number(widget.value);
      }
      return widget.value;
    }
    return undefined;
  }

  async submit(mode: "annotation" | "review"): Promise<ArtifactAnnotationView | null> {
    if (!this.spec) return null;
    this.clearFieldErrors();
    try {
      this.annotation = await this.api.submitAnnotation(this.targetId, {
        focused_model: this.spec.model_name,
        values: this.values(),
        mode,
        ...(this.annotation ? { expected_version: this.annotation.version } : {}),
      });
      return this.annotation;
    } catch (err) {
      if (err instanceof ApiError && err.body.fields) {
        this.showFieldErrors(err.body.fields);
        return null;
      }
      throw err;
    }
  }

  async rate(value: number): Promise<void> {
    if (!this.annotation) return;
    this.annotation = await this.api.rate(this.annotation.id, value);
    this.render();
  }

  private clearFieldErrors(): void {
    for (const el of Array.from(this.root.querySelectorAll(".field-error"))) {
      el.textContent = "";
    }
  }

  private showFieldErrors(fields: string[]): void {
    for (const name of fields) {
      const el = this.root.querySelector<HTMLElement>(
        `.field-error[data-field="${name}"]`,
      );
      if (el) el.textContent = "invalid or missing";
    }
  }
}
