/** Document management table: status badges plus the gated review
 * affordances (layout "eye" at status >= 2, OCR column at status >= 4). */

import type { ApiClient } from "./api.js";
import { STATUS_NAMES } from "./gating.js";
import type { DocumentView } from "./types.js";

export interface DocumentListHandlers {
  onOpenLayout?: (doc: DocumentView) => void;
  onOpenOcr?: (doc: DocumentView) => void;
}

export class DocumentList {
  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private projectId: string,
    private handlers: DocumentListHandlers = {},
  ) {}

  async refresh(): Promise<void> {
    const docs = await this.api.listDocuments(this.projectId);
    this.render(docs);
  }

  render(docs: DocumentView[]): void {
    this.root.textContent = "";
    const table = document.createElement("table");
    table.className = "document-list";
    const head = table.createTHead().insertRow();
    for (const title of ["File", "Status", "Pages", "Layout", "OCR"]) {
      const th = document.createElement("th");
      th.textContent = title;
      head.appendChild(th);
    }
    const body = table.createTBody();
    for (const doc of docs) {
      const row = body.insertRow();
      row.dataset.docId = doc.id;
      row.insertCell().textContent = doc.original_filename;
      const status = row.insertCell();
      status.textContent = `${doc.status} · ${STATUS_NAMES[doc.status] ?? "?"}`;
      status.className = `status status-${doc.status}`;
      row.insertCell().textContent = String(doc.page_count);

      const eye = document.createElement("button");
      eye.className = "eye-icon";
      eye.textContent = "\u{1F441}";
      eye.disabled = !doc.can_view_layout;
      eye.title = doc.can_view_layout
        ? "Review layout"
        : "Available once layout detection completes";
      eye.addEventListener("click", () => this.handlers.onOpenLayout?.(doc));
      row.insertCell().appendChild(eye);

      const ocr = document.createElement("button");
      ocr.className = "ocr-link";
      ocr.textContent = "OCR";
      ocr.disabled = !doc.can_view_ocr;
      ocr.title = doc.can_view_ocr
        ? "Review OCR and outputs"
        : "Available once downstream processing completes";
      ocr.addEventListener("click", () => this.handlers.onOpenOcr?.(doc));
      row.insertCell().appendChild(ocr);
    }
    this.root.appendChild(table);
  }
}
