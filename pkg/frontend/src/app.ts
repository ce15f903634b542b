/** Composition root: wires the views onto the page shell and polls the
 * document list. Configuration comes from query parameters:
 *   index.html?base=http://localhost:8000&token=...&project=...
 */

import { ApiClient, ApiError } from "./api.js";
import { DashboardView } from "./dashboard.js";
import { DocumentList } from "./documentList.js";
import { LayoutEditor } from "./layoutEditor.js";
import { OcrSplitView } from "./ocrView.js";
import { SettingsView } from "./settings.js";
import type { DocumentView } from "./types.js";

const DOCUMENT_POLL_MS = 5000;

export async function startApp(root: HTMLElement): Promise<void> {
  const params = new URLSearchParams(window.location.search);
  const base = params.get("base") ?? "";
  const token = params.get("token") ?? "";
  const projectId = params.get("project") ?? "";
  const api = new ApiClient(base, token);

  root.textContent = "";
  const nav = document.createElement("nav");
  const main = document.createElement("main");
  root.appendChild(nav);
  root.appendChild(main);

  const listHost = document.createElement("div");
  const workHost = document.createElement("div");
  main.appendChild(listHost);
  main.appendChild(workHost);

  const project = await api.getProject(projectId);

  const openLayout = async (doc: DocumentView) => {
    workHost.textContent = "";
    const pages = await api.getPages(doc.id);
    for (const page of pages) {
      const host = document.createElement("section");
      workHost.appendChild(host);
      const editor = new LayoutEditor(host, api, page, project.layout_schema.nodes, {
        onConflict: () => window.alert("Someone else edited this block; reloaded."),
      });
      await editor.load();
    }
    const save = document.createElement("button");
    save.textContent = "Save layout review";
    save.addEventListener("click", async () => {
      await api.saveLayoutReview(doc.id);
      await documents.refresh();
    });
    workHost.appendChild(save);
  };

  const openOcr = async (doc: DocumentView) => {
    workHost.textContent = "";
    const pages = await api.getPages(doc.id);
    for (const page of pages) {
      const host = document.createElement("section");
      workHost.appendChild(host);
      const view = new OcrSplitView(host, api, page, 1, undefined, () =>
        window.alert("Edit conflict; the latest text was reloaded."),
      );
      await view.load();
    }
    const save = document.createElement("button");
    save.textContent = "Save outputs review";
    save.addEventListener("click", async () => {
      await api.saveOutputsReview(doc.id);
      await documents.refresh();
    });
    workHost.appendChild(save);
  };

  const documents = new DocumentList(listHost, api, projectId, {
    onOpenLayout: (doc) => void openLayout(doc),
    onOpenOcr: (doc) => void openOcr(doc),
  });

  const refreshDocuments = async () => {
    try {
      await documents.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 401) {
        // Session expired: stop polling and ask for a fresh token.
        root.textContent =
          "Session expired or token invalid - reload with a valid ?token=";
        clearInterval(poll);
        return;
      }
      throw err;
    }
  };
  await refreshDocuments();
  const poll = setInterval(() => void refreshDocuments(), DOCUMENT_POLL_MS);

  for (const [label, builder] of [
    ["Documents", async () => documents.refresh()],
    [
      "Settings",
      async () => {
        workHost.textContent = "";
        const view = new SettingsView(workHost, api, projectId);
        await view.load();
      },
    ],
    [
      "Dashboard",
      async () => {
        workHost.textContent = "";
        const view = new DashboardView(workHost, api, projectId);
        await view.refresh();
        view.startPolling();
      },
    ],
  ] as const) {
    const button = document.createElement("button");
    button.textContent = label;
    button.addEventListener("click", () => void builder());
    nav.appendChild(button);
  }
}
