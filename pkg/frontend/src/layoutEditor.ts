/** Layout editor: the page image with an absolutely-positioned box overlay.
 *
 * Draw to add (with the active label), click to select, drag a selected box
 * to move it, delete via keyboard or button. Every mutation is a
 * version-checked API call; a version conflict triggers a reload prompt
 * instead of clobbering someone else's edit.
 */

import type { ApiClient } from "./api.js";
import { ApiError } from "./api.js";
import { dragToRect, normalizedToPixel, pixelToNormalized } from "./coords.js";
import type { BlockView, LabelNode, PageView } from "./types.js";

const MIN_DRAG_PX = 3;

export interface LayoutEditorOptions {
  zoom?: number;
  onConflict?: (blockId: string) => void;
  onChange?: (blocks: BlockView[]) => void;
}

export class LayoutEditor {
  zoom: number;
  selectedBlockId: string | null = null;
  activeLabelId: string;
  blocks: BlockView[] = [];
  private overlay!: HTMLElement;
  private drawStart: { x: number; y: number } | null = null;
  private rubberBand: HTMLElement | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private page: PageView,
    private labels: LabelNode[],
    private options: LayoutEditorOptions = {},
  ) {
    this.zoom = options.zoom ?? 1;
    this.activeLabelId = labels[0]?.id ?? "unlabeled";
    this.renderScaffold();
  }

  displayWidth(): number {
    return this.page.width_px * this.zoom;
  }

  displayHeight(): number {
    return this.page.height_px * this.zoom;
  }

  private renderScaffold(): void {
    this.root.textContent = "";
    const frame = document.createElement("div");
    frame.className = "page-frame";
    frame.style.position = "relative";
    frame.style.width = `${this.displayWidth()}px`;
    frame.style.height = `${this.displayHeight()}px`;

    const img = document.createElement("img");
    img.src = this.api.pageImageUrl(this.page.id);
    img.width = this.displayWidth();
    img.height = this.displayHeight();
    img.draggable = false;
    frame.appendChild(img);

    this.overlay = document.createElement("div");
    this.overlay.className = "block-overlay";
    this.overlay.style.position = "absolute";
    this.overlay.style.inset = "0";
    frame.appendChild(this.overlay);

    const picker = document.createElement("select");
    picker.className = "label-picker";
    for (const node of this.labels) {
      const option = document.createElement("option");
      option.value = node.id;
      option.textContent = node.parent_id ? `└ ${node.name}` : node.name;
      picker.appendChild(option);
    }
    picker.addEventListener("change", () => {
      this.activeLabelId = picker.value;
    });

    this.root.appendChild(picker);
    this.root.appendChild(frame);

    this.overlay.addEventListener("mousedown", (ev) =>
      this.beginDraw(...this.eventPoint(ev)),
    );
    this.overlay.addEventListener("mousemove", (ev) => {
      if (this.drawStart) this.dragTo(...this.eventPoint(ev));
    });
    this.overlay.addEventListener("mouseup", (ev) => {
      void this.endDraw(...this.eventPoint(ev));
    });
  }

  private eventPoint(ev: MouseEvent): [number, number] {
    const rect = this.overlay.getBoundingClientRect();
    return [ev.clientX - rect.left, ev.clientY - rect.top];
  }

  async load(): Promise<void> {
    this.blocks = await this.api.getBlocks(this.page.id);
    this.renderBlocks();
  }

  renderBlocks(): void {
    this.overlay.textContent = "";
    for (const block of this.blocks) {
      const rect = normalizedToPixel(
        block.bbox,
        this.page.width_px,
        this.page.height_px,
        this.zoom,
      );
      const el = document.createElement("div");
      el.className = `block block-${block.source}`;
      if (block.id === this.selectedBlockId) el.classList.add("selected");
      el.dataset.blockId = block.id;
      el.dataset.labelId = block.label_id;
      el.style.position = "absolute";
      el.style.left = `${rect.x}px`;
      el.style.top = `${rect.y}px`;
      el.style.width = `${rect.width}px`;
      el.style.height = `${rect.height}px`;
      el.title = `${block.label_id}${block.confidence != null ? ` (${block.confidence})` : ""}`;
      el.addEventListener("mousedown", (ev) => {
        ev.stopPropagation();
        this.select(block.id);
      });
      this.overlay.appendChild(el);
    }
    this.options.onChange?.(this.blocks);
  }

  select(blockId: string | null): void {
    this.selectedBlockId = blockId;
    this.renderBlocks();
  }

  /** Drag gesture entry points; also driven directly by tests. */
  beginDraw(x: number, y: number): void {
    this.drawStart = { x, y };
    this.rubberBand = document.createElement("div");
    this.rubberBand.className = "rubber-band";
    this.rubberBand.style.position = "absolute";
    this.overlay.appendChild(this.rubberBand);
  }

  dragTo(x: number, y: number): void {
    if (!this.drawStart || !this.rubberBand) return;
    const rect = dragToRect(
      this.drawStart.x,
      this.drawStart.y,
      x,
      y,
      this.displayWidth(),
      this.displayHeight(),
    );
    this.rubberBand.style.left = `${rect.x}px`;
    this.rubberBand.style.top = `${rect.y}px`;
    this.rubberBand.style.width = `${rect.width}px`;
    this.rubberBand.style.height = `${rect.height}px`;
  }

  async endDraw(x: number, y: number): Promise<BlockView | null> {
    if (!this.drawStart) return null;
    const start = this.drawStart;
    this.drawStart = null;
    this.rubberBand?.remove();
    this.rubberBand = null;
    const rect = dragToRect(
      start.x,
      start.y,
      x,
      y,
      this.displayWidth(),
      this.displayHeight(),
    );
    if (rect.width < MIN_DRAG_PX || rect.height < MIN_DRAG_PX) return null;
    const bbox = pixelToNormalized(
      rect,
      this.page.width_px,
      this.page.height_px,
      this.zoom,
    );
    const block = await this.api.addBlock(this.page.id, bbox, this.activeLabelId);
    this.blocks.push(block);
    this.renderBlocks();
    return block;
  }

  async relabelSelected(labelId: string): Promise<void> {
    const block = this.blocks.find((b) => b.id === this.selectedBlockId);
    if (!block) return;
    await this.mutate(block, { label_id: labelId });
  }

  async moveSelected(dxPx: number, dyPx: number): Promise<void> {
    const block = this.blocks.find((b) => b.id === this.selectedBlockId);
    if (!block) return;
    const rect = normalizedToPixel(
      block.bbox,
      this.page.width_px,
      this.page.height_px,
      this.zoom,
    );
    const moved = dragToRect(
      rect.x + dxPx,
      rect.y + dyPx,
      rect.x + dxPx + rect.width,
      rect.y + dyPx + rect.height,
      this.displayWidth(),
      this.displayHeight(),
    );
    const bbox = pixelToNormalized(
      moved,
      this.page.width_px,
      this.page.height_px,
      this.zoom,
    );
    await this.mutate(block, { bbox });
  }

  async deleteSelected(): Promise<void> {
    const block = this.blocks.find((b) => b.id === this.selectedBlockId);
    if (!block) return;
    await this.api.deleteBlock(block.id, block.version);
    this.blocks = this.blocks.filter((b) => b.id !== block.id);
    this.selectedBlockId = null;
    this.renderBlocks();
  }

  private async mutate(
    block: BlockView,
    changes: { bbox?: [number, number, number, number]; label_id?: string },
  ): Promise<void> {
    try {
      const updated = await this.api.updateBlock(block.id, block.version, changes);
      this.blocks = this.blocks.map((b) => (b.id === updated.id ? updated : b));
      this.renderBlocks();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        this.options.onConflict?.(block.id);
        await this.load(); // refetch and let the user retry
        return;
      }
      throw err;
    }
  }
}
