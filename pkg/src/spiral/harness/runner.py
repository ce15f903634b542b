"""End-to-end loop driver.

Each iteration uploads a fresh synthetic corpus through the public HTTP API,
lets mock workers claim and submit noisy predictions, replays a simulated
human who corrects everything toward ground truth (counting edits), pushes
the document to its final status, and scores the pre-correction predictions
against ground truth. Between iterations the predictor's noise parameters
decay, modeling retraining on the newly verified data.

Everything observable in the reports is a pure function of (seed, config):
worker predictions are keyed on content, never on claim order, and the
human's correction pass is single-threaded.
"""

from __future__ import annotations

import math
import random
import threading
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

from fastapi.testclient import TestClient

from ..api import build_app
from ..config import AppConfig, TokenConfig
from ..errors import ConfigInvalid
from ..metrics import Detection, cer, iou, mean_average_precision
from ..model import (
    BoundingBox,
    DownstreamTask,
    default_layout_schema,
    form_schema_from_wire,
)
from ..service import AnnotationService
from . import corpus as corpus_mod
from . import predictor as predictor_mod
from .corpus import Corpus, SyntheticPage
from .predictor import MockPredictorConfig

ARTIFACT_MODELS = {"table": "html", "figure": "describe", "formula": "latex"}

FORM_SCHEMAS = [
    {
        "model_name": "html",
        "artifact_kind": "table",
        "output_format": "html",
        "fields": [{"name": "output", "field_type": "textarea", "required": True}],
    },
    {
        "model_name": "describe",
        "artifact_kind": "figure",
        "output_format": "text",
        "fields": [{"name": "description", "field_type": "textarea", "required": True}],
    },
    {
        "model_name": "latex",
        "artifact_kind": "formula",
        "output_format": "latex",
        "fields": [{"name": "latex", "field_type": "textarea", "required": True}],
    },
]


class HarnessViolation(Exception):
    """A platform invariant failed while the harness was driving it."""


@dataclass(frozen=True)
class SpiralRunConfig:
    iterations: int = 3
    pages_per_iteration: int = 20
    predictor: MockPredictorConfig = field(default_factory=MockPredictorConfig)
    workers: int = 2
    dpi: int = 36
    # A matched box is accepted as-is at or above this overlap; below it the
    # human drags it onto the ground truth (one edit).
    move_tolerance_iou: float = 0.65
    match_iou: float = 0.1

    def check(self):
        if self.iterations < 1:
            raise ConfigInvalid("iterations must be >= 1")
        if self.pages_per_iteration < 1:
            raise ConfigInvalid("pages_per_iteration must be >= 1")
        if self.workers < 1:
            raise ConfigInvalid("workers must be >= 1")
        if self.dpi < 8:
            raise ConfigInvalid("dpi must be >= 8")
        self.predictor.check()
        return self


@dataclass(frozen=True)
class IterationReport:
    iteration: int
    n_pages: int
    map_score: float
    mean_cer: float
    edit_count: int
    wall_seconds: float

    def to_wire(self) -> dict:
        return {
            "iteration": self.iteration,
            "n_pages": self.n_pages,
            "map": self.map_score,
            "mean_cer": self.mean_cer,
            "edit_count": self.edit_count,
            "wall_seconds": self.wall_seconds,
        }


def _harness_app(n_workers: int, dpi: int):
    tokens = [
        TokenConfig("human", "human-secret", frozenset({"annotate", "read_data"})),
        TokenConfig(
            "admin",
            "admin-secret",
            frozenset({"annotate", "read_data", "manage_models", "submit_results"}),
        ),
    ]
    for i in range(n_workers):
        tokens.append(
            TokenConfig(f"worker-{i}", f"worker-{i}-secret", frozenset({"submit_results"}))
        )
    config = AppConfig(ingest_workers=0, raster_dpi=dpi, tokens=tuple(tokens))
    service = AnnotationService(config)
    return build_app(service), service


class _Api:
    """Thin bearer-token client over the app; one per actor.

    The underlying test client is context-entered so a single event-loop
    portal serves all of this actor's requests; call close() when done.
    """

    def __init__(self, app, secret: str):
        self.client = TestClient(app, raise_server_exceptions=False)
        self.client.__enter__()
        self.headers = {"Authorization": f"Bearer {secret}"}

    def close(self):
        self.client.__exit__(None, None, None)

    def call(self, method: str, path: str, expect: int = 200, **kwargs):
        response = self.client.request(method, path, headers=self.headers, **kwargs)
        if response.status_code != expect:
            raise HarnessViolation(
                f"{method} {path} -> {response.status_code}: {response.text[:300]}"
            )
        return response.json() if response.content else None

    def get(self, path, **kw):
        return self.call("GET", path, **kw)

    def post(self, path, **kw):
        return self.call("POST", path, **kw)


def _match_to_ground_truth(
    blocks: list[dict], page: SyntheticPage, min_iou: float
) -> tuple[list[tuple[dict, int, float]], list[dict], list[int]]:
    """Greedy content-based matching of served blocks to corpus blocks.

    Returns (matches as (block, gt_index, iou), unmatched blocks, missed gt
    indices). Sort keys use box content only, never server ids, so the
    outcome is identical across runs.
    """
    candidates = []
    for block in blocks:
        bbox = BoundingBox(*block["bbox"])
        for gi, gt in enumerate(page.blocks):
            overlap = iou(bbox, gt.bbox)
            if overlap >= min_iou:
                candidates.append((-overlap, tuple(block["bbox"]), gi, block))
    candidates.sort(key=lambda c: (c[0], c[1], c[2]))
    matched_blocks: set[str] = set()
    matched_gt: set[int] = set()
    matches = []
    for neg_overlap, _, gi, block in candidates:
        if block["id"] in matched_blocks or gi in matched_gt:
            continue
        matched_blocks.add(block["id"])
        matched_gt.add(gi)
        matches.append((block, gi, -neg_overlap))
    unmatched = [b for b in blocks if b["id"] not in matched_blocks]
    missed = [gi for gi in range(len(page.blocks)) if gi not in matched_gt]
    return matches, unmatched, missed


class _MockWorker(threading.Thread):
    """Claims tasks over HTTP and submits deterministic mock predictions."""

    def __init__(self, app, secret, kinds, context, iteration):
        super().__init__(daemon=True)
        self.app = app
        self.secret = secret
        self.kinds = kinds
        self.ctx = context
        self.iteration = iteration
        self.error: Optional[Exception] = None

    def run(self):
        self.api = _Api(self.app, self.secret)
        try:
            self._drain()
        except Exception as exc:  # surfaced by the runner after join
            self.error = exc
        finally:
            self.api.close()

    def _drain(self):
        idle = set()
        while len(idle) < len(self.kinds):
            for kind in self.kinds:
                if kind in idle:
                    continue
                body = self.api.post(
                    "/api/tasks/claim", json={"kind": kind, "lease_s": 300}
                )
                task = body["task"]
                if task is None:
                    idle.add(kind)
                    continue
                idle.discard(kind)
                self._process(task)

    def _process(self, task):
        kind = task["kind"]
        if kind == "layout":
            self._layout(task)
        elif kind == "ocr":
            self._ocr(task)
        else:
            self._artifact(task)

    def _submit(self, task, payload, model_name, model_version, latency_key):
        rng = random.Random(f"{self.ctx.seed}:latency:{latency_key}")
        self.api.post(
            f"/api/tasks/{task['id']}/result",
            json={
                "payload": payload,
                "latency_ms": round(rng.uniform(80, 240), 1),
                "model_name": model_name,
                "model_version": model_version,
            },
        )

    def _layout(self, task):
        page_index = self.ctx.page_index(task["target_id"])
        page = self.ctx.corpus.pages[page_index]
        preds = predictor_mod.predict_layout(
            self.ctx.predictor, page, self.ctx.corpus.labels, self.iteration
        )
        self.ctx.record_predictions(page_index, preds)
        self._submit(
            task, preds, "mock-layout", self.ctx.generation, f"layout:{page_index}"
        )

    def _target_gt(self, task):
        mapped = self.ctx.block_target(task["target_id"])
        if mapped is not None:
            page_index, gt_index = mapped
            return page_index, gt_index, self.ctx.corpus.pages[page_index].blocks[gt_index].text
        block = self.api.get(f"/api/blocks/{task['target_id']}")
        page_index = self.ctx.page_index(block["page_id"])
        page = self.ctx.corpus.pages[page_index]
        bbox = BoundingBox(*block["bbox"])
        best, best_iou = None, 0.0
        for gi, gt in enumerate(page.blocks):
            overlap = iou(bbox, gt.bbox)
            if overlap > best_iou:
                best, best_iou = gi, overlap
        if best is None or best_iou < 0.5:
            return page_index, None, ""
        return page_index, best, page.blocks[best].text

    def _ocr(self, task):
        page_index, gt_index, text = self._target_gt(task)
        block_key = gt_index if gt_index is not None else -1
        noisy = predictor_mod.corrupt_text(
            self.ctx.predictor, text, self.iteration, page_index, block_key
        )
        self.ctx.record_ocr(page_index, block_key, text, noisy)
        self._submit(
            task, noisy, "mock-ocr", self.ctx.generation, f"ocr:{page_index}:{block_key}"
        )

    def _artifact(self, task):
        kind = task["kind"]
        model = ARTIFACT_MODELS[kind]
        page_index, gt_index, text = self._target_gt(task)
        block_key = gt_index if gt_index is not None else -1
        values = predictor_mod.predict_artifact_values(
            self.ctx.predictor,
            self.ctx.form_fields[model],
            text,
            self.iteration,
            page_index,
            block_key,
        )
        self._submit(
            task, values, model, self.ctx.generation, f"{kind}:{page_index}:{block_key}"
        )


class _IterationContext:
    """Shared, content-keyed state between the runner and its workers."""

    def __init__(self, corpus: Corpus, predictor: MockPredictorConfig, iteration: int, form_fields):
        self.corpus = corpus
        self.predictor = predictor
        self.iteration = iteration
        self.generation = f"gen{iteration}"
        self.seed = predictor.seed
        self.form_fields = form_fields
        self._pages: dict[str, int] = {}
        self._lock = threading.Lock()
        self.predictions: dict[int, list[dict]] = {}
        self.ocr_pairs: dict[tuple[int, int], tuple[str, str]] = {}
        # Server block id -> (page index, ground-truth block index), filled in
        # by the correction pass so downstream mocks skip per-task lookups.
        self.block_gt: dict[str, tuple[int, int]] = {}

    def map_pages(self, pages: list[dict]):
        self._pages = {p["id"]: p["index"] for p in pages}

    def page_index(self, page_id: str) -> int:
        return self._pages[page_id]

    def map_block(self, block_id: str, page_index: int, gt_index: int):
        with self._lock:
            self.block_gt[block_id] = (page_index, gt_index)

    def block_target(self, block_id: str):
        with self._lock:
            return self.block_gt.get(block_id)

    def record_predictions(self, page_index: int, preds: list[dict]):
        with self._lock:
            self.predictions[page_index] = preds

    def record_ocr(self, page_index, gt_index, truth, noisy):
        with self._lock:
            self.ocr_pairs[(page_index, gt_index)] = (truth, noisy)


def _schema_label_nodes():
    schema = default_layout_schema()
    return {n.id: n for n in schema.nodes}


def run_spiral(
    config: SpiralRunConfig,
    seed: Optional[int] = None,
    clock: Callable[[], float] = time.monotonic,
) -> list[IterationReport]:
    """Drive the full loop and return one report per iteration."""
    config.check()
    predictor = config.predictor
    if seed is not None:
        predictor = replace(predictor, seed=seed)
    app, service = _harness_app(config.workers, config.dpi)
    human = _Api(app, "human-secret")
    admin = _Api(app, "admin-secret")

    project = human.post("/api/projects", json={"name": "spiral-harness", "owner": "harness"})
    project_id = project["id"]
    human.call(
        "PUT",
        f"/api/projects/{project_id}/forms",
        json={
            "form_schemas": FORM_SCHEMAS,
            "focused_models": {kind: model for kind, model in ARTIFACT_MODELS.items()},
        },
    )
    form_fields = {}
    for raw in FORM_SCHEMAS:
        schema = form_schema_from_wire(raw)
        form_fields[schema.model_name] = schema.fields

    reports: list[IterationReport] = []
    try:
        for iteration in range(config.iterations):
            started = clock()
            cfg_iter = predictor_mod.decayed(predictor, iteration)
            generation = f"gen{iteration}"
            for name, kind in [("mock-layout", "layout"), ("mock-ocr", "ocr")] + [
                (model, kind) for kind, model in ARTIFACT_MODELS.items()
            ]:
                admin.post(
                    "/api/models",
                    json={
                        "model_name": name,
                        "model_version": generation,
                        "task_kind": kind,
                        "project_id": project_id,
                    },
                )
            corpus = corpus_mod.generate_corpus(
                seed=predictor.seed * 1000 + iteration,
                n_pages=config.pages_per_iteration,
            )
            ctx = _IterationContext(corpus, cfg_iter, iteration, form_fields)
            report = _run_iteration(config, app, human, ctx, project_id, iteration)
            reports.append(
                IterationReport(
                    iteration=iteration,
                    n_pages=config.pages_per_iteration,
                    map_score=report["map"],
                    mean_cer=report["cer"],
                    edit_count=report["edits"],
                    wall_seconds=round(clock() - started, 3),
                )
            )
    finally:
        human.close()
        admin.close()
        service.close()
    return reports


def _run_iteration(config, app, human, ctx, project_id, iteration) -> dict:
    corpus = ctx.corpus
    pdf_bytes = corpus_mod.corpus_pdf(corpus)
    doc = human.post(
        "/api/documents",
        data={"project_id": project_id},
        files={"file": (f"iteration-{iteration}.pdf", pdf_bytes, "application/pdf")},
    )
    doc_id = doc["id"]
    pages = human.get(f"/api/documents/{doc_id}/pages")["pages"]
    if len(pages) != len(corpus.pages):
        raise HarnessViolation(
            f"expected {len(corpus.pages)} pages, rasterized {len(pages)}"
        )
    ctx.map_pages(pages)

    _run_workers(app, config.workers, ["layout"], ctx, iteration)
    doc = human.get(f"/api/documents/{doc_id}")
    if doc["status"] != 2:
        raise HarnessViolation(f"document not at status 2 after layout: {doc['status']}")

    edits = 0
    for page in pages:
        edits += _correct_page(human, page, corpus.pages[page["index"]], config, ctx)

    human.post(f"/api/documents/{doc_id}/layout/review")
    _run_workers(app, config.workers, ["ocr", "table", "figure", "formula"], ctx, iteration)
    doc = human.get(f"/api/documents/{doc_id}")
    if doc["status"] != 4:
        raise HarnessViolation(f"document not at status 4 after downstream: {doc['status']}")

    _review_outputs(human, pages, corpus, ctx)
    human.post(f"/api/documents/{doc_id}/outputs/review")
    doc = human.get(f"/api/documents/{doc_id}")
    if doc["status"] != 5:
        raise HarnessViolation(f"document did not reach status 5: {doc['status']}")
    _check_audit(human, doc_id)

    return {
        "map": _iteration_map(corpus, ctx),
        "cer": _iteration_cer(ctx),
        "edits": edits,
    }


def _run_workers(app, n_workers, kinds, ctx, iteration):
    workers = [
        _MockWorker(app, f"worker-{i}-secret", kinds, ctx, iteration)
        for i in range(n_workers)
    ]
    for w in workers:
        w.start()
    for w in workers:
        w.join(timeout=120)
        if w.is_alive():
            raise HarnessViolation("mock worker stalled")
        if w.error is not None:
            raise HarnessViolation(f"mock worker failed: {w.error}")


def _correct_page(human, page_view, gt_page, config, ctx) -> int:
    """Simulated human pass over one page; returns the number of edits.

    Matched predictions are moved onto their ground-truth box when overlap
    falls below the tolerance and relabeled when wrong; unmatched predictions
    are deleted; missed ground truths are added. Each action is one edit.
    """
    page_index = page_view["index"]
    blocks = human.get(f"/api/pages/{page_view['id']}/blocks")["blocks"]
    matches, unmatched, missed = _match_to_ground_truth(
        blocks, gt_page, config.match_iou
    )
    edits = 0
    for block, gi, overlap in matches:
        gt = gt_page.blocks[gi]
        ctx.map_block(block["id"], page_index, gi)
        need_move = overlap < config.move_tolerance_iou
        need_label = block["label_id"] != gt.label_id
        if not need_move and not need_label:
            continue
        body = {"expected_version": block["version"]}
        if need_move:
            body["bbox"] = gt.bbox.as_list()
            edits += 1
        if need_label:
            body["label_id"] = gt.label_id
            edits += 1
        human.call("PATCH", f"/api/blocks/{block['id']}", json=body)
    for block in unmatched:
        human.call(
            "DELETE",
            f"/api/blocks/{block['id']}?version={block['version']}",
        )
        edits += 1
    for gi in missed:
        gt = gt_page.blocks[gi]
        created = human.post(
            f"/api/pages/{page_view['id']}/blocks",
            json={"bbox": gt.bbox.as_list(), "label_id": gt.label_id},
        )
        ctx.map_block(created["id"], page_index, gi)
        edits += 1
    return edits


def _review_outputs(human, pages, corpus, ctx):
    """Fix OCR text toward ground truth and file artifact annotations."""
    for page_view in pages:
        gt_page = corpus.pages[page_view["index"]]
        blocks = human.get(f"/api/pages/{page_view['id']}/blocks")["blocks"]
        matches, _, _ = _match_to_ground_truth(blocks, gt_page, 0.5)
        for block, gi, _overlap in matches:
            gt = gt_page.blocks[gi]
            node = nodes_for(block["label_id"])
            if node is None:
                continue
            if node.downstream_task == DownstreamTask.OCR:
                recorded = ctx.ocr_pairs.get((page_view["index"], gi))
                if recorded is not None and recorded[1] == gt.text:
                    continue  # model already matched the ground truth
                # Fresh annotations are version 1; fall back to a read when a
                # conflict shows the assumption stale.
                response = human.client.request(
                    "POST",
                    f"/api/blocks/{block['id']}/ocr",
                    headers=human.headers,
                    json={"text": gt.text, "expected_version": 1},
                )
                if response.status_code == 409:
                    ocr = human.get(f"/api/blocks/{block['id']}/ocr")["ocr"]
                    if ocr is None:
                        raise HarnessViolation(f"missing OCR annotation on {block['id']}")
                    human.post(
                        f"/api/blocks/{block['id']}/ocr",
                        json={"text": gt.text, "expected_version": ocr["version"]},
                    )
                elif response.status_code != 200:
                    raise HarnessViolation(
                        f"ocr correction failed: {response.status_code} {response.text[:200]}"
                    )
            elif node.downstream_task in (
                DownstreamTask.TABLE,
                DownstreamTask.FIGURE,
                DownstreamTask.FORMULA,
            ):
                kind = node.downstream_task.value
                model = ARTIFACT_MODELS[kind]
                values = {
                    f.name: _truth_value(f, gt.text) for f in ctx.form_fields[model]
                }
                ann = human.post(
                    f"/api/artifacts/{block['id']}/annotation",
                    json={"focused_model": model, "values": values, "mode": "review"},
                )
                noisy = predictor_mod.corrupt_text(
                    ctx.predictor, gt.text, ctx.iteration, page_view["index"], gi
                )
                rating = _rating_for(gt.text, noisy)
                human.post(
                    f"/api/annotations/{ann['id']}/rating", json={"rating": rating}
                )


_NODES = _schema_label_nodes()


def nodes_for(label_id: str):
    return _NODES.get(label_id)


def _truth_value(field_spec, text: str):
    kind = field_spec.field_type.value
    if kind in ("text", "textarea"):
        return text
    if kind == "number":
        return len(text)
    if kind == "boolean":
        return True
    if kind == "list_of_text":
        return text.split()[:3]
    return {"raw": text}


def _rating_for(truth: str, noisy: str) -> int:
    if not truth:
        return 3
    rate = cer(truth, noisy or "")
    return max(1, min(5, 5 - int(rate * 8)))


def _iteration_map(corpus, ctx) -> float:
    preds_by_image = {}
    gts_by_image = {}
    for page in corpus.pages:
        key = f"page{page.index:04d}"
        preds_by_image[key] = [
            Detection(
                bbox=BoundingBox(*p["bbox"]),
                label_id=p["label"],
                confidence=p["confidence"],
                id=f"{page.index:04d}:{i:03d}",
            )
            for i, p in enumerate(ctx.predictions.get(page.index, []))
        ]
        gts_by_image[key] = [
            Detection(bbox=b.bbox, label_id=b.label_id, id=f"{page.index:04d}:{i:03d}")
            for i, b in enumerate(page.blocks)
        ]
    return mean_average_precision(preds_by_image, gts_by_image, list(corpus.labels))


def _iteration_cer(ctx) -> float:
    rates = []
    for (_page, _block), (truth, noisy) in sorted(ctx.ocr_pairs.items()):
        if not truth:
            continue
        rates.append(cer(truth, noisy))
    return math.fsum(rates) / len(rates) if rates else 0.0


def _check_audit(human, doc_id):
    records = human.get(f"/api/audit?document={doc_id}")["records"]
    trace = [(r["from"], r["to"]) for r in records]
    if trace != [(1, 2), (2, 3), (3, 4), (4, 5)]:
        raise HarnessViolation(f"illegal audit trail for {doc_id}: {trace}")
