"""Application service: every human- and worker-facing operation, wired
through the store, blob storage, ingestion plumbing, and metrics.

The HTTP layer is a thin shell over this class; the harness and tests may
drive it directly. All mutations delegate to the store's atomic operations,
so the service itself holds no mutable state beyond its collaborators.
"""

from __future__ import annotations

import io
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from typing import Any, Callable, Mapping, Optional

from PIL import Image, UnidentifiedImageError

from . import ingest, pdf
from .auth import make_token
from .blobs import BlobStore, open_blob_store
from .config import AppConfig
from .errors import (
    EmptyFile,
    IllegalTransition,
    InvalidBox,
    NodeInUse,
    NotClaimant,
    OutOfRange,
    PayloadShapeMismatch,
    SchemaInvalid,
    SchemaNotFound,
    UndecodableImage,
    UnknownBlock,
    UnknownDocument,
    UnknownLabel,
    UnsupportedFormat,
)
from .forms import FormSpec, generate_form, validate_values
from .ids import new_id
from .lifecycle import EventKind, LifecycleEvent
from .metrics import (
    AnnotationObservation,
    DashboardRow,
    Detection,
    RunObservation,
    cer,
    dashboard_rows,
    mean_average_precision,
)
from .model import (
    UNLABELED_NODE_ID,
    Actor,
    AnnotationMode,
    ArtifactAnnotation,
    ArtifactKind,
    BlockSource,
    BoundingBox,
    Document,
    DocumentStatus,
    DownstreamTask,
    FormSchema,
    LayoutBlock,
    LayoutSchema,
    ModelRegistration,
    ModelRun,
    OcrAnnotation,
    Page,
    Project,
    SourceFormat,
    StandaloneImage,
    TaskKind,
    TaskState,
    WorkerTask,
    bbox_from_wire,
    default_layout_schema,
    utcnow,
    validate,
)
from .store import Store

log = logging.getLogger("spiral")

_ARTIFACT_TASKS = {
    DownstreamTask.FIGURE: TaskKind.FIGURE,
    DownstreamTask.TABLE: TaskKind.TABLE,
    DownstreamTask.FORMULA: TaskKind.FORMULA,
}


class AnnotationService:
    def __init__(
        self,
        config: Optional[AppConfig] = None,
        store: Optional[Store] = None,
        blob_store: Optional[BlobStore] = None,
        clock: Callable[[], float] = time.time,
    ):
        self.config = config or AppConfig()
        self.store = store or Store(clock=clock)
        self.blobs = blob_store or open_blob_store(self.config.blob_root)
        self.clock = clock
        if self.config.ingest_workers > 0:
            self._pool = ThreadPoolExecutor(
                max_workers=self.config.ingest_workers,
                thread_name_prefix="spiral-ingest",
            )
        else:
            self._pool = None
        for tok in self.config.tokens:
            self.store.put_token(make_token(tok.id, tok.secret, tok.scopes))

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    # ------------------------------------------------------------------
    # Projects and settings

    def create_project(self, name: str, owner: str) -> Project:
        project = Project(
            id=new_id(),
            name=name,
            owner=owner,
            layout_schema=default_layout_schema(),
        )
        return self.store.put_project(project)

    def define_schema(self, project_id: str, schema: LayoutSchema) -> Project:
        """Replace the project layout schema, refusing to orphan blocks."""
        schema = schema.with_unlabeled()
        violations = validate(schema)
        if violations:
            raise SchemaInvalid("; ".join(violations))
        with self.store.lock:
            project = self.store.get_project(project_id)
            removed = project.layout_schema.node_ids() - schema.node_ids()
            if removed:
                for block in self.store.blocks.values():
                    if block.label_id in removed and self._block_project_id(block) == project_id:
                        raise NodeInUse(
                            f"label {block.label_id!r} still referenced by block {block.id}"
                        )
            updated = replace(project, layout_schema=schema)
            return self.store.put_project(updated)

    def configure_forms(
        self,
        project_id: str,
        form_schemas: Optional[tuple[FormSchema, ...]] = None,
        focused_models: Optional[Mapping[str, str]] = None,
    ) -> Project:
        with self.store.lock:
            project = self.store.get_project(project_id)
            updated = replace(
                project,
                form_schemas=form_schemas if form_schemas is not None else project.form_schemas,
                focused_models=dict(focused_models)
                if focused_models is not None
                else project.focused_models,
            )
            return self.store.put_project(updated)

    def _block_project_id(self, block: LayoutBlock) -> str:
        page = self.store.get_page(block.page_id)
        return self.store.get_document(page.document_id).project_id

    # ------------------------------------------------------------------
    # Ingestion

    def upload_document(self, project_id: str, filename: str, data: bytes) -> Document:
        self.store.get_project(project_id)
        fmt = ingest.infer_format(filename, data)
        original_key = self.blobs.put(data)
        doc = Document(
            id=new_id(),
            project_id=project_id,
            original_filename=filename,
            source_format=fmt,
            status=DocumentStatus.UPLOADED,
            page_count=0,
            pdf_blob_key=original_key if fmt == SourceFormat.PDF else None,
            created_at=utcnow(),
        )
        self.store.put_document(doc)
        self.store.original_blobs[doc.id] = original_key
        self._schedule(self._ingest_job, doc.id)
        return doc

    def upload_archive(self, project_id: str, data: bytes) -> tuple[list[Document], list[ingest.SkippedMember]]:
        self.store.get_project(project_id)
        members = ingest.iter_archive(
            data, self.config.zip_max_bytes, self.config.zip_max_members
        )
        docs: list[Document] = []
        skipped: list[ingest.SkippedMember] = []
        for name, content in members:
            try:
                docs.append(self.upload_document(project_id, name, content))
            except (UnsupportedFormat, EmptyFile) as exc:
                skipped.append(ingest.SkippedMember(name, f"{type(exc).__name__}: {exc}"))
        return docs, skipped

    def _schedule(self, fn, *args):
        if self._pool is None:
            fn(*args)
        else:
            self._pool.submit(self._run_job, fn, *args)

    def _run_job(self, fn, *args):
        try:
            fn(*args)
        except Exception:
            log.exception("ingest job failed")

    def _ingest_job(self, doc_id: str):
        """Convert (when needed) then rasterize; strict per-document order."""
        doc = self.store.get_document(doc_id)
        try:
            if doc.source_format != SourceFormat.PDF:
                self.convert_to_pdf(doc)
            self.rasterize(self.store.get_document(doc_id))
        except Exception:
            log.exception("ingestion failed for document %s", doc_id)

    def convert_to_pdf(self, document: Document) -> str:
        if document.source_format == SourceFormat.PDF:
            raise UnsupportedFormat("document is already a PDF")
        conv = ingest.pick_converter(self.config, document.source_format)
        original_key = self.store.original_blobs.get(document.id)
        if original_key is None:
            raise UnknownDocument(f"original blob for {document.id} unavailable")
        produced = ingest.run_converter(
            conv, document.source_format, self.blobs.get(original_key)
        )
        key = self.blobs.put(produced)
        self.store.update_document(document.id, pdf_blob_key=key)
        return key

    def rasterize(self, document: Document) -> list[Page]:
        doc = self.store.get_document(document.id)
        if doc.pdf_blob_key is None:
            raise RasterizationFailed("document has no PDF blob yet")
        data = self.blobs.get(doc.pdf_blob_key)
        parsed = pdf.parse_pdf(data)
        dpi = self.config.raster_dpi
        pages = []
        tasks = []
        for index, geom in enumerate(parsed):
            img = pdf.render_page(geom, dpi)
            buf = io.BytesIO()
            img.save(buf, format="PNG")
            key = self.blobs.put(buf.getvalue())
            page = Page(
                id=new_id(),
                document_id=doc.id,
                index=index,
                width_px=img.width,
                height_px=img.height,
                image_blob_key=key,
            )
            pages.append(page)
            tasks.append(
                WorkerTask(
                    id=new_id(),
                    kind=TaskKind.LAYOUT,
                    target_id=page.id,
                    project_id=doc.project_id,
                    document_id=doc.id,
                )
            )
        with self.store.lock:
            self.store.put_pages(doc.id, pages)
            self.store.update_document(doc.id, page_count=len(pages))
            self.store.create_tasks(tasks)
        return pages

    def upload_standalone_image(
        self, project_id: str, data: bytes, artifact_kind: str
    ) -> StandaloneImage:
        self.store.get_project(project_id)
        if artifact_kind not in ArtifactKind:
            raise UnsupportedFormat(f"artifact kind {artifact_kind!r} invalid")
        try:
            Image.open(io.BytesIO(data)).verify()
        except (UnidentifiedImageError, OSError) as exc:
            raise UndecodableImage(str(exc))
        key = self.blobs.put(data)
        image = StandaloneImage(
            id=new_id(),
            project_id=project_id,
            artifact_kind=artifact_kind,
            image_blob_key=key,
            created_at=utcnow(),
        )
        self.store.put_image(image)
        self.store.create_tasks(
            [
                WorkerTask(
                    id=new_id(),
                    kind=TaskKind(artifact_kind),
                    target_id=image.id,
                    project_id=project_id,
                )
            ]
        )
        return image

    # ------------------------------------------------------------------
    # Layout annotation

    def apply_layout_predictions(
        self, page_id: str, predictions: list[Mapping[str, Any]]
    ) -> list[LayoutBlock]:
        """Persist model predictions, quarantining unknown labels.

        Replaces the page's previous model-sourced blocks; human blocks are
        never touched.
        """
        page = self.store.get_page(page_id)
        doc = self.store.get_document(page.document_id)
        schema = self.store.get_project(doc.project_id).layout_schema
        blocks = []
        for pred in predictions:
            bbox = pred["bbox"]
            if not isinstance(bbox, BoundingBox):
                bbox = bbox_from_wire(bbox)
            if validate(bbox):
                raise InvalidBox("; ".join(validate(bbox)))
            node = schema.by_name(str(pred["label"]))
            label_id = node.id if node is not None else UNLABELED_NODE_ID
            blocks.append(
                LayoutBlock(
                    id=new_id(),
                    page_id=page_id,
                    bbox=bbox,
                    label_id=label_id,
                    source=BlockSource.MODEL,
                    confidence=float(pred.get("confidence", 0.0)),
                )
            )
        return self.store.replace_model_blocks(page_id, blocks)

    def add_block(self, page_id: str, bbox: BoundingBox, label_id: str) -> LayoutBlock:
        violations = validate(bbox)
        if violations:
            raise InvalidBox("; ".join(violations))
        page = self.store.get_page(page_id)
        doc = self.store.get_document(page.document_id)
        schema = self.store.get_project(doc.project_id).layout_schema
        if schema.node(label_id) is None:
            raise UnknownLabel(label_id)
        block = LayoutBlock(
            id=new_id(),
            page_id=page_id,
            bbox=bbox,
            label_id=label_id,
            source=BlockSource.HUMAN,
        )
        return self.store.insert_block(block)

    def update_block(
        self,
        block_id: str,
        expected_version: int,
        bbox: Optional[BoundingBox] = None,
        label_id: Optional[str] = None,
    ) -> LayoutBlock:
        changes: dict[str, Any] = {"source": BlockSource.HUMAN, "confidence": None}
        if bbox is not None:
            violations = validate(bbox)
            if violations:
                raise InvalidBox("; ".join(violations))
            changes["bbox"] = bbox
        if label_id is not None:
            block = self.store.get_block(block_id)
            schema = self.store.get_project(
                self._block_project_id(block)
            ).layout_schema
            if schema.node(label_id) is None:
                raise UnknownLabel(label_id)
            changes["label_id"] = label_id
        return self.store.cas_update_block(block_id, expected_version, **changes)

    def delete_block(self, block_id: str, expected_version: int) -> dict:
        block = self.store.cas_delete_block(block_id, expected_version)
        return {"deleted": block.id, "version": block.version}

    def block_reading_order(self, page_id: str) -> list[str]:
        """Deterministic top-to-bottom, left-to-right, id-tiebroken order."""
        blocks = self.store.blocks_of(page_id)
        ordered = sorted(blocks, key=lambda b: (b.bbox.y_min, b.bbox.x_min, b.id))
        return [b.id for b in ordered]

    def save_layout_review(self, document_id: str, actor: Actor) -> list[WorkerTask]:
        """Human sign-off on layout: advance to status 3 and spawn downstream tasks."""
        with self.store.lock:
            doc = self.store.get_document(document_id)
            self.store.apply_lifecycle_event(
                LifecycleEvent(EventKind.HUMAN_LAYOUT_SAVED, document_id, actor)
            )
            schema = self.store.get_project(doc.project_id).layout_schema
            tasks = []
            for page in self.store.pages_of(document_id):
                for block_id in self.block_reading_order(page.id):
                    block = self.store.get_block(block_id)
                    node = schema.node(block.label_id)
                    if node is None or node.downstream_task == DownstreamTask.NONE:
                        continue
                    kind = (
                        TaskKind.OCR
                        if node.downstream_task == DownstreamTask.OCR
                        else _ARTIFACT_TASKS[node.downstream_task]
                    )
                    tasks.append(
                        WorkerTask(
                            id=new_id(),
                            kind=kind,
                            target_id=block.id,
                            project_id=doc.project_id,
                            document_id=document_id,
                        )
                    )
            self.store.create_tasks(tasks)
            self.store.downstream_tasks[document_id] = {t.id for t in tasks}
            if not tasks:
                # Nothing routed downstream; processing is vacuously complete.
                self.store.apply_lifecycle_event(
                    LifecycleEvent(
                        EventKind.DOWNSTREAM_COMPLETE, document_id, Actor.SYSTEM
                    )
                )
            return tasks

    def save_outputs_review(self, document_id: str, actor: Actor) -> Document:
        return self.store.apply_lifecycle_event(
            LifecycleEvent(EventKind.HUMAN_OUTPUTS_SAVED, document_id, actor)
        )

    # ------------------------------------------------------------------
    # OCR annotation

    def edit_ocr_text(self, block_id: str, text: str, expected_version: int) -> OcrAnnotation:
        return self.store.cas_update_ocr(block_id, expected_version, text)

    def ocr_for_block(self, block_id: str) -> Optional[OcrAnnotation]:
        self.store.get_block(block_id)
        return self.store.get_ocr_for_block(block_id)

    # ------------------------------------------------------------------
    # Artifact annotation

    def _artifact_context(self, target_id: str) -> tuple[str, str, str]:
        """(project_id, target_type, artifact_kind) for a block or image target."""
        image = self.store.images.get(target_id)
        if image is not None:
            return image.project_id, "image", image.artifact_kind
        block = self.store.get_block(target_id)
        project_id = self._block_project_id(block)
        schema = self.store.get_project(project_id).layout_schema
        node = schema.node(block.label_id)
        if node is None or node.downstream_task not in _ARTIFACT_TASKS:
            raise UnknownBlock(
                f"block {target_id} does not route to an artifact task"
            )
        return project_id, "block", node.downstream_task.value

    def generate_form_for(
        self,
        project_id: str,
        artifact_kind: str,
        focused_model: str,
        target_id: Optional[str] = None,
        model_outputs: Optional[Mapping[str, Any]] = None,
    ) -> FormSpec:
        project = self.store.get_project(project_id)
        schema = project.form_schema(focused_model, artifact_kind)
        if schema is None:
            raise SchemaNotFound(
                f"no form schema for model {focused_model!r} and kind {artifact_kind!r}"
            )
        if model_outputs is None and target_id is not None:
            model_outputs = self._latest_outputs(target_id, focused_model)
        return generate_form(schema, model_outputs)

    def _latest_outputs(self, target_id: str, model_name: str) -> Optional[Mapping[str, Any]]:
        runs = [
            r
            for r in self.store.runs_for_target(target_id)
            if r.model_name == model_name and isinstance(r.output_payload, dict)
        ]
        return runs[-1].output_payload if runs else None

    def submit_artifact_annotation(
        self,
        target_id: str,
        focused_model: str,
        values: Mapping[str, Any],
        mode: AnnotationMode,
        expected_version: Optional[int] = None,
    ) -> ArtifactAnnotation:
        project_id, target_type, kind = self._artifact_context(target_id)
        project = self.store.get_project(project_id)
        schema = project.form_schema(focused_model, kind)
        if schema is None:
            raise SchemaNotFound(
                f"no form schema for model {focused_model!r} and kind {kind!r}"
            )
        validate_values(schema, values)
        with self.store.lock:
            existing = self.store.artifact_for_target(target_id, focused_model)
            if existing is None:
                annotation = ArtifactAnnotation(
                    id=new_id(),
                    target_id=target_id,
                    target_type=target_type,
                    artifact_kind=kind,
                    focused_model=focused_model,
                    values=dict(values),
                    mode=mode,
                )
                stored = self.store.insert_artifact(annotation)
            else:
                stored = self.store.cas_update_artifact(
                    existing.id,
                    expected_version if expected_version is not None else -1,
                    values=dict(values),
                    mode=mode,
                )
            # Freeze the schema this annotation validated against: later
            # edits to project form schemas must not invalidate old work.
            self.store.artifact_schemas[stored.id] = schema
            return stored

    def revalidate_artifacts(self, project_id: str) -> list[str]:
        """Ids of annotations whose values no longer satisfy their frozen
        schema; empty on a healthy store."""
        bad = []
        with self.store.lock:
            for ann in self.store.artifacts.values():
                if self._annotation_project(ann) != project_id:
                    continue
                schema = self.store.artifact_schemas.get(ann.id)
                if schema is None:
                    bad.append(ann.id)
                    continue
                try:
                    validate_values(schema, ann.values)
                except Exception:
                    bad.append(ann.id)
        return bad

    def rate_satisfaction(self, annotation_id: str, rating: int) -> ArtifactAnnotation:
        if not isinstance(rating, int) or isinstance(rating, bool) or not 1 <= rating <= 5:
            raise OutOfRange(f"rating {rating!r} outside 1..5")
        return self.store.update_artifact_rating(annotation_id, rating)

    def bulk_list_artifacts(
        self,
        project_id: str,
        artifact_kind: Optional[str] = None,
        annotated: Optional[bool] = None,
        rated: Optional[bool] = None,
        model: Optional[str] = None,
        cursor: Optional[str] = None,
        limit: int = 50,
    ) -> tuple[list[dict], Optional[str]]:
        """Stable id-ordered page of artifact targets across the project."""
        self.store.get_project(project_id)
        targets: list[tuple[str, str, str]] = []  # (target_id, type, kind)
        with self.store.lock:
            for block in self.store.blocks.values():
                if self._block_project_id(block) != project_id:
                    continue
                schema = self.store.get_project(project_id).layout_schema
                node = schema.node(block.label_id)
                if node is None or node.downstream_task not in _ARTIFACT_TASKS:
                    continue
                kind = node.downstream_task.value
                if artifact_kind and kind != artifact_kind:
                    continue
                targets.append((block.id, "block", kind))
            for image in self.store.images.values():
                if image.project_id != project_id:
                    continue
                if artifact_kind and image.artifact_kind != artifact_kind:
                    continue
                targets.append((image.id, "image", image.artifact_kind))
            annotations_by_target: dict[str, list[ArtifactAnnotation]] = {}
            for ann in self.store.artifacts.values():
                annotations_by_target.setdefault(ann.target_id, []).append(ann)
        targets.sort(key=lambda t: t[0])
        items = []
        for target_id, target_type, kind in targets:
            if cursor is not None and target_id <= cursor:
                continue
            anns = annotations_by_target.get(target_id, [])
            if model is not None:
                anns = [a for a in anns if a.focused_model == model]
            if annotated is not None and bool(anns) != annotated:
                continue
            if rated is not None:
                has_rating = any(a.satisfaction_rating is not None for a in anns)
                if has_rating != rated:
                    continue
            items.append(
                {
                    "target_id": target_id,
                    "target_type": target_type,
                    "artifact_kind": kind,
                    "annotated": bool(anns),
                    "rated": any(a.satisfaction_rating is not None for a in anns),
                    "annotation_ids": [a.id for a in sorted(anns, key=lambda a: a.id)],
                }
            )
            if len(items) == limit:
                break
        next_cursor = items[-1]["target_id"] if len(items) == limit else None
        return items, next_cursor

    # ------------------------------------------------------------------
    # Worker surface

    def register_model(
        self,
        model_name: str,
        model_version: str,
        task_kind: TaskKind,
        form_schema_model: Optional[str] = None,
        project_id: Optional[str] = None,
    ) -> ModelRegistration:
        if task_kind.value in ArtifactKind:
            ref = form_schema_model or model_name
            found = False
            with self.store.lock:
                projects = (
                    [self.store.get_project(project_id)]
                    if project_id
                    else list(self.store.projects.values())
                )
            for project in projects:
                if project.form_schema(ref, task_kind.value) is not None:
                    found = True
                    break
            if not found:
                raise SchemaNotFound(
                    f"no form schema named {ref!r} for kind {task_kind.value!r}"
                )
            registration = ModelRegistration(model_name, model_version, task_kind, ref)
        else:
            registration = ModelRegistration(model_name, model_version, task_kind)
        return self.store.add_registration(registration)

    def claim_task(self, token_id: str, kind: TaskKind, lease_s: float) -> Optional[WorkerTask]:
        return self.store.claim_task(kind, token_id, lease_s)

    def submit_result(
        self,
        token_id: str,
        task_id: str,
        payload: Any,
        latency_ms: float,
        model_name: str,
        model_version: str,
    ) -> ModelRun:
        """Record a worker result: route the payload, complete the task, and
        fire any lifecycle event that becomes due.

        Idempotent per (task, model, version): retries return the original
        run. A submission for an already-completed task is recorded as a
        ModelRun (late results still count for the dashboard) but is not
        routed and never moves status. Lifecycle events that would regress
        or skip a status are likewise swallowed.
        """
        with self.store.lock:
            task = self.store.get_task(task_id)
            if latency_ms < 0:
                raise PayloadShapeMismatch("latency_ms must be >= 0")
            if task.state == TaskState.COMPLETED:
                self._check_payload(task, payload, model_name)
                run = self._new_run(task, payload, latency_ms, model_name, model_version)
                run, _ = self.store.record_run(run, task_id)
                return run
            if task.state != TaskState.CLAIMED or task.claimed_by != token_id:
                raise NotClaimant(f"task {task_id} is not claimed by this token")
            if task.lease_expiry is not None and task.lease_expiry < self.clock():
                raise NotClaimant(f"lease on task {task_id} expired")
            self._check_payload(task, payload, model_name)
            self._route_payload(task, payload)
            self.store.complete_task(task_id, token_id)
            run = self._new_run(task, payload, latency_ms, model_name, model_version)
            run, _ = self.store.record_run(run, task_id)
            self._fire_lifecycle_events(task)
            return run

    def _new_run(self, task, payload, latency_ms, model_name, model_version) -> ModelRun:
        return ModelRun(
            id=new_id(),
            model_name=model_name,
            model_version=model_version,
            task_kind=task.kind,
            target_id=task.target_id,
            output_payload=payload,
            latency_ms=float(latency_ms),
            submitted_at=utcnow(),
        )

    def _check_payload(self, task: WorkerTask, payload: Any, model_name: str):
        if task.kind == TaskKind.LAYOUT:
            if not isinstance(payload, list):
                raise PayloadShapeMismatch("layout payload must be a list")
            for item in payload:
                if not isinstance(item, dict) or "bbox" not in item or "label" not in item:
                    raise PayloadShapeMismatch(
                        "layout items need bbox and label fields"
                    )
                try:
                    bbox = bbox_from_wire(item["bbox"])
                except ValueError as exc:
                    raise PayloadShapeMismatch(str(exc))
                violations = validate(bbox)
                if violations:
                    raise PayloadShapeMismatch("; ".join(violations))
                conf = item.get("confidence", 0.0)
                if isinstance(conf, bool) or not isinstance(conf, (int, float)):
                    raise PayloadShapeMismatch("confidence must be a number")
                if not 0 <= float(conf) <= 1:
                    raise PayloadShapeMismatch("confidence outside [0,1]")
        elif task.kind == TaskKind.OCR:
            if not isinstance(payload, str):
                raise PayloadShapeMismatch("ocr payload must be text")
        else:
            if not isinstance(payload, dict):
                raise PayloadShapeMismatch("artifact payload must be a map")
            project = self.store.get_project(task.project_id)
            schema = project.form_schema(model_name, task.kind.value)
            if schema is not None:
                known = {f.name: f for f in schema.fields}
                unknown = sorted(set(payload) - set(known))
                if unknown:
                    raise PayloadShapeMismatch(
                        f"fields not in form schema: {', '.join(unknown)}"
                    )

    def _route_payload(self, task: WorkerTask, payload: Any):
        if task.kind == TaskKind.LAYOUT:
            self.apply_layout_predictions(task.target_id, payload)
        elif task.kind == TaskKind.OCR:
            annotation = OcrAnnotation(
                id=new_id(),
                block_id=task.target_id,
                model_text=payload,
                updated_at=utcnow(),
            )
            self.store.upsert_model_text(annotation)
        # Artifact payloads live on the ModelRun and surface as form prefill.

    def _fire_lifecycle_events(self, task: WorkerTask):
        if task.document_id is None:
            return
        doc_id = task.document_id
        if task.kind == TaskKind.LAYOUT:
            if self._all_pages_have_layout(doc_id):
                self._fire(EventKind.LAYOUT_RESULTS_COMPLETE, doc_id)
        else:
            spawned = self.store.downstream_tasks.get(doc_id)
            if spawned and all(
                self.store.get_task(tid).state == TaskState.COMPLETED for tid in spawned
            ):
                self._fire(EventKind.DOWNSTREAM_COMPLETE, doc_id)

    def _all_pages_have_layout(self, doc_id: str) -> bool:
        doc = self.store.get_document(doc_id)
        if doc.page_count < 1:
            return False
        completed_pages = {
            t.target_id
            for t in self.store.tasks_for_document(doc_id, TaskKind.LAYOUT)
            if t.state == TaskState.COMPLETED
        }
        page_ids = {p.id for p in self.store.pages_of(doc_id)}
        return page_ids <= completed_pages and len(page_ids) == doc.page_count

    def _fire(self, kind: EventKind, doc_id: str):
        try:
            self.store.apply_lifecycle_event(
                LifecycleEvent(kind, doc_id, Actor.WORKER)
            )
        except IllegalTransition:
            # Late or duplicate completion; status never regresses.
            pass

    # ------------------------------------------------------------------
    # Dashboard

    def dashboard(self, project_id: str) -> list[DashboardRow]:
        project = self.store.get_project(project_id)
        with self.store.lock:
            runs = list(self.store.runs.values())
            annotations = list(self.store.artifacts.values())
        run_obs = []
        project_runs = []
        for run in runs:
            if self._run_project_id(run) != project_id:
                continue
            project_runs.append(run)
            run_obs.append(
                RunObservation(
                    model_name=run.model_name,
                    model_version=run.model_version,
                    output_type=self._output_type(project, run.model_name, run.task_kind),
                    latency_ms=run.latency_ms,
                )
            )
        ann_obs = []
        for ann in annotations:
            ctx = self._annotation_project(ann)
            if ctx != project_id:
                continue
            version = self._annotation_model_version(ann)
            ann_obs.append(
                AnnotationObservation(
                    model_name=ann.focused_model,
                    model_version=version,
                    output_type=self._output_type(
                        project, ann.focused_model, TaskKind(ann.artifact_kind)
                    ),
                    mode=ann.mode.value,
                    satisfaction=ann.satisfaction_rating,
                )
            )
        quality = self._quality_by_group(project, project_runs)
        return dashboard_rows(run_obs, ann_obs, quality)

    def _run_project_id(self, run: ModelRun) -> Optional[str]:
        if run.task_kind == TaskKind.LAYOUT:
            page = self.store.pages.get(run.target_id)
            if page is None:
                return None
            return self.store.get_document(page.document_id).project_id
        image = self.store.images.get(run.target_id)
        if image is not None:
            return image.project_id
        block = self.store.blocks.get(run.target_id)
        if block is None:
            return None
        return self._block_project_id(block)

    def _annotation_project(self, ann: ArtifactAnnotation) -> Optional[str]:
        if ann.target_type == "image":
            image = self.store.images.get(ann.target_id)
            return image.project_id if image else None
        block = self.store.blocks.get(ann.target_id)
        return self._block_project_id(block) if block else None

    def _annotation_model_version(self, ann: ArtifactAnnotation) -> str:
        runs = [
            r
            for r in self.store.runs_for_target(ann.target_id)
            if r.model_name == ann.focused_model
        ]
        return runs[-1].model_version if runs else "-"

    def _output_type(self, project: Project, model_name: str, kind: TaskKind) -> str:
        if kind.value in ArtifactKind:
            schema = project.form_schema(model_name, kind.value)
            if schema is not None:
                return schema.output_format
        return kind.value

    def _quality_by_group(
        self, project: Project, runs: list[ModelRun]
    ) -> dict[tuple[str, str, str], float]:
        """mAP for layout model groups, mean CER for OCR groups, where human
        ground truth exists."""
        quality: dict[tuple[str, str, str], float] = {}
        by_group: dict[tuple[str, str], list[ModelRun]] = {}
        for run in runs:
            by_group.setdefault((run.model_name, run.model_version), []).append(run)
        schema = project.layout_schema
        labels = sorted(n.id for n in schema.nodes if n.id != UNLABELED_NODE_ID)
        for (name, version), group in sorted(by_group.items()):
            layout_runs = [r for r in group if r.task_kind == TaskKind.LAYOUT]
            ocr_runs = [r for r in group if r.task_kind == TaskKind.OCR]
            if layout_runs:
                value = self._layout_map(schema, labels, layout_runs)
                if value is not None:
                    quality[("layout", name, version)] = value
            if ocr_runs:
                value = self._ocr_cer(ocr_runs)
                if value is not None:
                    quality[("ocr", name, version)] = value
        return quality

    def _layout_map(self, schema, labels, layout_runs) -> Optional[float]:
        preds: dict[str, list[Detection]] = {}
        gts: dict[str, list[Detection]] = {}
        for run in layout_runs:
            page = self.store.pages.get(run.target_id)
            if page is None:
                continue
            doc = self.store.get_document(page.document_id)
            if doc.status < DocumentStatus.LAYOUT_REVIEWED:
                continue  # layout not human-verified yet
            plist = preds.setdefault(page.id, [])
            for i, item in enumerate(run.output_payload):
                node = schema.by_name(str(item["label"]))
                if node is None:
                    continue
                plist.append(
                    Detection(
                        bbox=bbox_from_wire(item["bbox"]),
                        label_id=node.id,
                        confidence=float(item.get("confidence", 0.0)),
                        id=f"{run.id}:{i:04d}",
                    )
                )
            gts[page.id] = [
                Detection(bbox=b.bbox, label_id=b.label_id, id=b.id)
                for b in self.store.blocks_of(page.id)
                if b.label_id != UNLABELED_NODE_ID
            ]
        if not gts or not any(gts.values()):
            return None
        return mean_average_precision(preds, gts, labels)

    def _ocr_cer(self, ocr_runs) -> Optional[float]:
        rates = []
        for run in ocr_runs:
            ann = self.store.get_ocr_for_block(run.target_id)
            if ann is None or ann.human_text is None or not ann.human_text:
                continue
            rates.append(cer(ann.human_text, run.output_payload))
        if not rates:
            return None
        import math

        return math.fsum(rates) / len(rates)

    # ------------------------------------------------------------------
    # Change feed

    def fetch_annotations(
        self, since: int, limit: int = 500, project_id: Optional[str] = None
    ) -> tuple[list[dict], int]:
        from .model import to_wire

        records = self.store.changes_since(since, limit)
        out = []
        cursor = since
        for rec in records:
            cursor = rec.seq
            entity = self.store.snapshot_entity(rec)
            if project_id is not None and entity is not None:
                if self._change_project(rec.entity_type, entity) != project_id:
                    continue
            out.append(
                {
                    "seq": rec.seq,
                    "entity_type": rec.entity_type,
                    "entity_id": rec.entity_id,
                    "deleted": rec.deleted,
                    "entity": to_wire(entity) if entity is not None else None,
                }
            )
        return out, cursor

    def _change_project(self, entity_type: str, entity) -> Optional[str]:
        if entity_type == "block":
            return self._block_project_id(entity)
        if entity_type == "ocr":
            block = self.store.blocks.get(entity.block_id)
            return self._block_project_id(block) if block else None
        if entity_type == "artifact":
            return self._annotation_project(entity)
        return None
