"""Synthetic ground-truth corpus for the end-to-end harness.

Each page carries a handful of non-degenerate, pairwise-low-overlap labeled
blocks with synthetic text. Everything is a pure function of the seed, and
the rendered PDF is reproducible byte for byte (reportlab invariant mode).
"""

from __future__ import annotations

import io
import json
import random
from dataclasses import dataclass

from reportlab.pdfgen.canvas import Canvas

from ..model import BoundingBox, DownstreamTask, default_layout_schema

PAGE_WIDTH_PT = 612.0
PAGE_HEIGHT_PT = 792.0

_WORDS = (
    "survey drill core sample assay grade zone fault contact vein quartz "
    "oxide sulfide intercept report section figure basin margin unit "
    "granite schist gravel seam depth metres values anomaly trend target"
).split()

_LABEL_GRAY = {
    "content": 0.75,
    "title": 0.35,
    "footnote": 0.85,
    "figure": 0.55,
    "table": 0.45,
    "formula": 0.65,
    "unlabeled": 0.95,
}


@dataclass(frozen=True)
class SyntheticBlock:
    bbox: BoundingBox
    label_id: str
    text: str


@dataclass(frozen=True)
class SyntheticPage:
    index: int
    width_pt: float
    height_pt: float
    blocks: tuple[SyntheticBlock, ...]


@dataclass(frozen=True)
class Corpus:
    seed: int
    labels: tuple[str, ...]
    pages: tuple[SyntheticPage, ...]


def _overlaps(a: BoundingBox, b: BoundingBox) -> bool:
    ix = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    iy = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    return ix > 0.01 and iy > 0.01


def _block_text(rng: random.Random, label_id: str) -> str:
    task = _downstream(label_id)
    words = " ".join(rng.choice(_WORDS) for _ in range(rng.randint(3, 9)))
    if task == DownstreamTask.TABLE:
        return f"<table><tr><td>{words}</td></tr></table>"
    if task == DownstreamTask.FORMULA:
        return f"y = {rng.randint(1, 9)}x + {rng.randint(1, 99)}"
    if task == DownstreamTask.FIGURE:
        return f"chart showing {words}"
    return words


_DEFAULT_SCHEMA = default_layout_schema()


def _downstream(label_id: str) -> DownstreamTask:
    node = _DEFAULT_SCHEMA.node(label_id)
    return node.downstream_task if node else DownstreamTask.NONE


def default_labels() -> tuple[str, ...]:
    return tuple(
        n.id for n in _DEFAULT_SCHEMA.nodes if n.id != "unlabeled"
    )


def generate_corpus(seed: int, n_pages: int, labels=None) -> Corpus:
    """Deterministic synthetic pages: 3-8 low-overlap blocks each."""
    if n_pages < 1:
        raise ValueError("n_pages must be >= 1")
    labels = tuple(labels) if labels else default_labels()
    pages = []
    for index in range(n_pages):
        rng = random.Random(f"{seed}:corpus:{index}")
        blocks: list[SyntheticBlock] = []
        n_blocks = rng.randint(3, 8)
        attempts = 0
        while len(blocks) < n_blocks and attempts < 200:
            attempts += 1
            w = rng.uniform(0.15, 0.45)
            h = rng.uniform(0.05, 0.2)
            x = rng.uniform(0.02, 0.98 - w)
            y = rng.uniform(0.02, 0.98 - h)
            bbox = BoundingBox(round(x, 4), round(y, 4), round(w, 4), round(h, 4))
            if any(_overlaps(bbox, b.bbox) for b in blocks):
                continue
            label = rng.choice(labels)
            blocks.append(SyntheticBlock(bbox, label, _block_text(rng, label)))
        pages.append(
            SyntheticPage(index, PAGE_WIDTH_PT, PAGE_HEIGHT_PT, tuple(blocks))
        )
    return Corpus(seed=seed, labels=labels, pages=tuple(pages))


def corpus_to_json(corpus: Corpus) -> str:
    payload = {
        "seed": corpus.seed,
        "labels": list(corpus.labels),
        "pages": [
            {
                "index": p.index,
                "width_pt": p.width_pt,
                "height_pt": p.height_pt,
                "blocks": [
                    {
                        "bbox": b.bbox.as_list(),
                        "label_id": b.label_id,
                        "text": b.text,
                    }
                    for b in p.blocks
                ],
            }
            for p in corpus.pages
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def corpus_pdf(corpus: Corpus) -> bytes:
    """Render the corpus as a reproducible PDF, one gray rect per block."""
    buf = io.BytesIO()
    canvas = Canvas(
        buf,
        pagesize=(PAGE_WIDTH_PT, PAGE_HEIGHT_PT),
        invariant=1,
        pageCompression=0,
    )
    for page in corpus.pages:
        for block in page.blocks:
            gray = _LABEL_GRAY.get(block.label_id, 0.5)
            x = block.bbox.x_min * page.width_pt
            w = block.bbox.width * page.width_pt
            h = block.bbox.height * page.height_pt
            # Normalized y runs top-down; PDF user space runs bottom-up.
            y = page.height_pt - (block.bbox.y_min + block.bbox.height) * page.height_pt
            canvas.setFillGray(gray)
            canvas.rect(x, y, w, h, fill=1, stroke=0)
        canvas.showPage()
    canvas.save()
    return buf.getvalue()
