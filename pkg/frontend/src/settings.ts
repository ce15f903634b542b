/** Project settings: layout-schema editing and focused-model selection.
 * Server-side rejections (invalid schema, label still in use) surface
 * verbatim next to the controls. */

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import type { ProjectView } from "./types.js";

export class SettingsView {
  project: ProjectView | null = null;
  lastError: string | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private projectId: string,
  ) {}

  async load(): Promise<void> {
    this.project = await this.api.getProject(this.projectId);
    this.render();
  }

  render(): void {
    this.root.textContent = "";
    if (!this.project) return;

    const errorEl = document.createElement("p");
    errorEl.className = "settings-error";
    errorEl.textContent = this.lastError ?? "";
    this.root.appendChild(errorEl);

    const tree = document.createElement("ul");
    tree.className = "schema-tree";
    const byParent = new Map<string | null, typeof this.project.layout_schema.nodes>();
    for (const node of this.project.layout_schema.nodes) {
      const list = byParent.get(node.parent_id) ?? [];
      list.push(node);
      byParent.set(node.parent_id, list);
    }
    const renderLevel = (parent: string | null, into: HTMLElement) => {
      for (const node of byParent.get(parent) ?? []) {
        const item = document.createElement("li");
        item.dataset.nodeId = node.id;
        item.textContent = `${node.name} → ${node.downstream_task}`;
        const children = document.createElement("ul");
        item.appendChild(children);
        into.appendChild(item);
        renderLevel(node.id, children);
      }
    };
    renderLevel(null, tree);
    this.root.appendChild(tree);

    const focused = document.createElement("div");
    focused.className = "focused-models";
    for (const kind of ["figure", "table", "formula"]) {
      const select = document.createElement("select");
      select.dataset.kind = kind;
      const blank = document.createElement("option");
      blank.value = "";
      blank.textContent = `(${kind}: none)`;
      select.appendChild(blank);
      for (const schema of this.project.form_schemas) {
        if (schema.artifact_kind !== kind) continue;
        const option = document.createElement("option");
        option.value = schema.model_name;
        option.textContent = `${schema.model_name} (${schema.output_format})`;
        select.appendChild(option);
      }
      select.value = this.project.focused_models[kind] ?? "";
      select.addEventListener("change", () => {
        void this.setFocusedModel(kind, select.value);
      });
      focused.appendChild(select);
    }
    this.root.appendChild(focused);
  }

  async setFocusedModel(kind: string, model: string): Promise<void> {
    if (!this.project) return;
    const updated = { ...this.project.focused_models };
    if (model) {
      updated[kind] = model;
    } else {
      delete updated[kind];
    }
    await this.apply(() => this.api.putForms(this.projectId, { focused_models: updated }));
  }

  async defineSchema(schema: { nodes: unknown[] }): Promise<void> {
    await this.apply(() => this.api.putSchema(this.projectId, schema));
  }

  private async apply(call: () => Promise<ProjectView>): Promise<void> {
    try {
      this.project = await call();
      this.lastError = null;
    } catch (err) {
      if (err instanceof ApiError) {
        this.lastError = `${err.body.error}: ${err.body.detail}`;
      } else {
        throw err;
      }
    }
    this.render();
  }
}
