/** Model performance dashboard: one row per (output type, model, version),
 * refreshed by polling. Absent aggregates render as an em-width dash, never
 * as zero. */

import type { ApiClient } from "./api.js";
import type { DashboardRowView } from "./types.js";

export const POLL_INTERVAL_MS = 5000;

function fmt(value: number | null, digits = 1): string {
  return value === null ? "—" : value.toFixed(digits);
}

export class DashboardView {
  private timer: ReturnType<typeof setInterval> | null = null;

  constructor(
    private root: HTMLElement,
    private api: ApiClient,
    private projectId: string,
  ) {}

  async refresh(): Promise<void> {
    const rows = await this.api.getDashboard(this.projectId);
    this.render(rows);
  }

  startPolling(intervalMs = POLL_INTERVAL_MS): void {
    this.stopPolling();
    this.timer = setInterval(() => void this.refresh(), intervalMs);
  }

  stopPolling(): void {
    if (this.timer) clearInterval(this.timer);
    this.timer = null;
  }

  render(rows: DashboardRowView[]): void {
    this.root.textContent = "";
    const table = document.createElement("table");
    table.className = "dashboard";
    const head = table.createTHead().insertRow();
    const headers = [
      "Output type",
      "Model",
      "Version",
      "Mean latency (ms)",
      "Satisfaction",
      "Annotated",
      "Reviewed",
      "Quality",
    ];
    for (const title of headers) {
      const th = document.createElement("th");
      th.textContent = title;
      head.appendChild(th);
    }
    const body = table.createTBody();
    for (const row of rows) {
      const tr = body.insertRow();
      tr.insertCell().textContent = row.output_type;
      tr.insertCell().textContent = row.model_name;
      tr.insertCell().textContent = row.model_version;
      tr.insertCell().textContent = fmt(row.mean_latency_ms);
      tr.insertCell().textContent = fmt(row.mean_satisfaction, 2);
      tr.insertCell().textContent = String(row.n_annotated);
      tr.insertCell().textContent = String(row.n_reviewed);
      tr.insertCell().textContent = fmt(row.quality, 3);
    }
    this.root.appendChild(table);
  }
}
