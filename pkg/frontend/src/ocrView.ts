/** Linked OCR review: page viewer besides a text table.
 *
 * Clicking a box scrolls the table to its row; selecting a row highlights
 * the box. Edits auto-save after a typing pause through version-checked
 * writes.
 */

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import { normalizedToPixel } from "./coords.js";
import type { BlockView, OcrView, PageView } from "./types.js";

export const AUTOSAVE_DEBOUNCE_MS = 800;

interface Row {
  block: BlockView;
  ocr: OcrView | null;
  rowEl: HTMLTableRowElement;
  boxEl: HTMLElement;
  textarea: HTMLTextAreaElement;
}

export class OcrSplitView {
  private rows: Row[] = [];
  private timers = new Map<string, ReturnType<typeof setTimeout>>();
  saveCount = 0;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private page: PageView,
    private zoom = 1,
    private debounceMs = AUTOSAVE_DEBOUNCE_MS,
    private onConflict: (blockId: string) => void = () => {},
  ) {}

  async load(): Promise<void> {
    const blocks = await this.api.getBlocks(this.page.id);
    const ocr = await Promise.all(blocks.map((b) => this.api.getOcr(b.id)));
    this.render(blocks, ocr);
  }

  render(blocks: BlockView[], annotations: (OcrView | null)[]): void {
    this.root.textContent = "";
    const viewer = document.createElement("div");
    viewer.className = "ocr-viewer";
    viewer.style.position = "relative";
    viewer.style.width = `${this.page.width_px * this.zoom}px`;
    viewer.style.height = `${this.page.height_px * this.zoom}px`;
    const img = document.createElement("img");
    img.src = this.api.pageImageUrl(this.page.id);
    viewer.appendChild(img);

    const table = document.createElement("table");
    table.className = "ocr-table";
    const body = table.createTBody();

    this.rows = blocks.map((block, i) => {
      const rect = normalizedToPixel(
        block.bbox,
        this.page.width_px,
        this.page.height_px,
        this.zoom,
      );
      const boxEl = document.createElement("div");
      boxEl.className = "ocr-box";
      boxEl.dataset.blockId = block.id;
      boxEl.style.position = "absolute";
      boxEl.style.left = `${rect.x}px`;
      boxEl.style.top = `${rect.y}px`;
      boxEl.style.width = `${rect.width}px`;
      boxEl.style.height = `${rect.height}px`;
      viewer.appendChild(boxEl);

      const rowEl = body.insertRow();
      rowEl.dataset.blockId = block.id;
      rowEl.insertCell().textContent = block.label_id;
      const cell = rowEl.insertCell();
      const textarea = document.createElement("textarea");
      const ocr = annotations[i];
      textarea.value = ocr ? (ocr.human_text ?? ocr.model_text) : "";
      textarea.disabled = ocr === null;
      cell.appendChild(textarea);

      const row: Row = { block, ocr, rowEl, boxEl, textarea };
      boxEl.addEventListener("click", () => this.selectFromViewer(block.id));
      rowEl.addEventListener("click", () => this.selectFromTable(block.id));
      textarea.addEventListener("input", () => this.scheduleSave(row));
      return row;
    });

    this.root.appendChild(viewer);
    this.root.appendChild(table);
  }

  private row(blockId: string): Row | undefined {
    return this.rows.find((r) => r.block.id === blockId);
  }

  selectFromViewer(blockId: string): void {
    this.highlight(blockId);
    const row = this.row(blockId);
    row?.rowEl.scrollIntoView({ block: "nearest" });
  }

  selectFromTable(blockId: string): void {
    this.highlight(blockId);
  }

  highlight(blockId: string): void {
    for (const row of this.rows) {
      row.boxEl.classList.toggle("highlighted", row.block.id === blockId);
      row.rowEl.classList.toggle("selected", row.block.id === blockId);
    }
  }

  selectedBlockId(): string | null {
    const row = this.rows.find((r) => r.rowEl.classList.contains("selected"));
    return row ? row.block.id : null;
  }

  private scheduleSave(row: Row): void {
    const pending = this.timers.get(row.block.id);
    if (pending) clearTimeout(pending);
    this.timers.set(
      row.block.id,
      setTimeout(() => {
        this.timers.delete(row.block.id);
        void this.commit(row);
      }, this.debounceMs),
    );
  }

  async commit(row: Row): Promise<void> {
    if (!row.ocr) return;
    try {
      row.ocr = await this.api.saveOcr(
        row.block.id,
        row.textarea.value,
        row.ocr.version,
      );
      this.saveCount += 1;
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.onConflict(row.block.id);
        const fresh = await this.api.getOcr(row.block.id);
        if (fresh) {
          row.ocr = fresh;
          row.textarea.value = fresh.human_text ?? fresh.model_text;
        }
        return;
      }
      throw err;
    }
  }

  /** Pending debounce timers, for tests and teardown. */
  pendingSaves(): number {
    return this.timers.size;
  }
}
