"""Rendering of iteration reports: console table, JSON lines, CSV, and
trend figures written next to the delimited output.

The table shapes metric rows against iteration columns; the first column is
the un-retrained baseline ("Initial"), later columns count retraining
rounds.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .runner import IterationReport


def _column_names(n: int) -> list[str]:
    def ordinal(i: int) -> str:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(i if i < 20 else i % 10, "th")
        return f"{i}{suffix}"

    return ["Initial"] + [ordinal(i) for i in range(1, n)]


def render_table(reports: Sequence[IterationReport]) -> str:
    if not reports:
        raise ValueError("no reports to render")
    columns = _column_names(len(reports))
    rows = [
        ("Metric", *columns),
        ("mAP", *(f"{r.map_score:.3f}" for r in reports)),
        ("mean CER", *(f"{r.mean_cer:.3f}" for r in reports)),
        ("human edits", *(str(r.edit_count) for r in reports)),
        ("pages", *(str(r.n_pages) for r in reports)),
        ("wall seconds", *(f"{r.wall_seconds:.2f}" for r in reports)),
    ]
    widths = [max(len(row[i]) for row in rows) for i in range(len(rows[0]))]
    lines = []
    for idx, row in enumerate(rows):
        lines.append(
            " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)).rstrip()
        )
        if idx == 0:
            lines.append("-+-".join("-" * w for w in widths))
    return "\n".join(lines)


def render_json_lines(reports: Sequence[IterationReport]) -> str:
    if not reports:
        raise ValueError("no reports to render")
    return "\n".join(json.dumps(r.to_wire(), sort_keys=True) for r in reports) + "\n"


def render_csv(reports: Sequence[IterationReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(["iteration", "n_pages", "map", "mean_cer", "edit_count", "wall_seconds"])
    for r in reports:
        writer.writerow(
            [r.iteration, r.n_pages, r.map_score, r.mean_cer, r.edit_count, r.wall_seconds]
        )
    return buf.getvalue()


def save_figures(reports: Sequence[IterationReport], out_dir: str | Path) -> list[Path]:
    """Write mAP and effort trend charts; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    iterations = [r.iteration for r in reports]
    written = []

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(iterations, [r.map_score for r in reports], marker="o", color="tab:blue")
    ax.set_xlabel("iteration")
    ax.set_ylabel("mAP@0.5")
    ax.set_ylim(0, 1.05)
    ax.set_xticks(iterations)
    ax.grid(alpha=0.3)
    ax.set_title("Layout detection quality per iteration")
    fig.tight_layout()
    path = out / "map_trend.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.plot(
        iterations,
        [r.edit_count for r in reports],
        marker="s",
        color="tab:red",
        label="human edits",
    )
    ax2 = ax.twinx()
    ax2.plot(
        iterations,
        [r.mean_cer for r in reports],
        marker="^",
        color="tab:green",
        label="mean CER",
    )
    ax.set_xlabel("iteration")
    ax.set_ylabel("human edits")
    ax2.set_ylabel("mean CER")
    ax.set_xticks(iterations)
    ax.grid(alpha=0.3)
    ax.set_title("Correction effort per iteration")
    lines, labels = ax.get_legend_handles_labels()
    lines2, labels2 = ax2.get_legend_handles_labels()
    ax.legend(lines + lines2, labels + labels2, loc="upper right", fontsize=8)
    fig.tight_layout()
    path = out / "effort_trend.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


def write_outputs(reports: Sequence[IterationReport], out_dir: str | Path) -> dict:
    """Persist json-lines, csv, and figures; returns the path map."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jsonl = out / "reports.jsonl"
    jsonl.write_text(render_json_lines(reports))
    csv_path = out / "reports.csv"
    csv_path.write_text(render_csv(reports))
    figures = save_figures(reports, out)
    return {"jsonl": jsonl, "csv": csv_path, "figures": figures}


def load_reports(path: str | Path) -> list[IterationReport]:
    reports = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        raw = json.loads(line)
        reports.append(
            IterationReport(
                iteration=int(raw["iteration"]),
                n_pages=int(raw["n_pages"]),
                map_score=float(raw["map"]),
                mean_cer=float(raw["mean_cer"]),
                edit_count=int(raw["edit_count"]),
                wall_seconds=float(raw["wall_seconds"]),
            )
        )
    return reports
