"""Thread-safe in-memory entity store.

All cross-request coordination funnels through this class: lifecycle
transitions are compare-and-set on document status, annotation writes are
compare-and-set on entity versions, and task claiming is atomic under the
store lock. Entities themselves are immutable snapshots; every write replaces
the stored value.

A monotonically increasing change sequence is recorded for annotation
entities so trainers can fetch incrementally.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, replace
from typing import Any, Callable, Iterable, Optional

from . import model as m
from .errors import (
    Duplicate,
    NotClaimant,
    UnknownAnnotation,
    UnknownBlock,
    UnknownDocument,
    UnknownPage,
    UnknownProject,
    UnknownTask,
    ValidationFailed,
    VersionConflict,
)
from .lifecycle import LifecycleEvent, next_status


@dataclass(frozen=True)
class ChangeRecord:
    seq: int
    entity_type: str  # "block" | "ocr" | "artifact"
    entity_id: str
    deleted: bool = False


class Store:
    def __init__(self, clock: Callable[[], float] = time.time):
        self._lock = threading.RLock()
        self._clock = clock
        self.projects: dict[str, m.Project] = {}
        self.documents: dict[str, m.Document] = {}
        self.pages: dict[str, m.Page] = {}
        self.blocks: dict[str, m.LayoutBlock] = {}
        self.ocr: dict[str, m.OcrAnnotation] = {}  # keyed by annotation id
        self.ocr_by_block: dict[str, str] = {}
        self.artifacts: dict[str, m.ArtifactAnnotation] = {}
        self.runs: dict[str, m.ModelRun] = {}
        self.tasks: dict[str, m.WorkerTask] = {}
        self.images: dict[str, m.StandaloneImage] = {}
        self.tokens: dict[str, m.ApiToken] = {}
        self.registrations: list[m.ModelRegistration] = []
        self.audit: list[m.AuditRecord] = []
        self.changes: list[ChangeRecord] = []
        # Task ids spawned by each document's layout review, for completion gating.
        self.downstream_tasks: dict[str, set[str]] = {}
        # Original upload blob per document (converted documents keep both).
        self.original_blobs: dict[str, str] = {}
        # Frozen form-schema snapshot per artifact annotation: project schema
        # edits never invalidate already-validated work.
        self.artifact_schemas: dict[str, m.FormSchema] = {}
        self._run_index: dict[tuple[str, str, str], str] = {}
        self._seq = 0

    @property
    def lock(self) -> threading.RLock:
        """The store-wide lock, for callers composing multi-step atomics."""
        return self._lock

    # -- helpers ------------------------------------------------------------

    def _checked(self, entity):
        violations = m.validate(entity)
        if violations:
            raise ValidationFailed(violations)
        return entity

    def _record_change(self, entity_type: str, entity_id: str, deleted: bool = False):
        self._seq += 1
        self.changes.append(ChangeRecord(self._seq, entity_type, entity_id, deleted))

    # -- projects -----------------------------------------------------------

    def put_project(self, project: m.Project) -> m.Project:
        with self._lock:
            self._checked(project)
            self.projects[project.id] = project
            return project

    def get_project(self, project_id: str) -> m.Project:
        with self._lock:
            p = self.projects.get(project_id)
            if p is None:
                raise UnknownProject(project_id)
            return p

    # -- documents and pages --------------------------------------------------

    def put_document(self, doc: m.Document) -> m.Document:
        with self._lock:
            if doc.project_id not in self.projects:
                raise UnknownProject(doc.project_id)
            self._checked(doc)
            self.documents[doc.id] = doc
            return doc

    def get_document(self, doc_id: str) -> m.Document:
        with self._lock:
            d = self.documents.get(doc_id)
            if d is None:
                raise UnknownDocument(doc_id)
            return d

    def update_document(self, doc_id: str, **changes) -> m.Document:
        with self._lock:
            doc = self.get_document(doc_id)
            updated = self._checked(replace(doc, **changes))
            self.documents[doc_id] = updated
            return updated

    def apply_lifecycle_event(self, event: LifecycleEvent) -> m.Document:
        """Atomically advance one document one status step and audit it."""
        with self._lock:
            doc = self.get_document(event.document_id)
            target = next_status(doc.status, event)
            updated = self._checked(replace(doc, status=target))
            self.documents[doc.id] = updated
            self.audit.append(
                m.AuditRecord(
                    document_id=doc.id,
                    from_status=int(doc.status),
                    to_status=int(target),
                    event=event.kind.value,
                    actor=event.actor.value,
                    timestamp=m.utcnow(),
                )
            )
            return updated

    def audit_for(self, doc_id: str) -> list[m.AuditRecord]:
        with self._lock:
            return [r for r in self.audit if r.document_id == doc_id]

    def put_pages(self, doc_id: str, pages: Iterable[m.Page]) -> list[m.Page]:
        with self._lock:
            self.get_document(doc_id)
            stored = []
            for page in pages:
                self._checked(page)
                self.pages[page.id] = page
                stored.append(page)
            return stored

    def get_page(self, page_id: str) -> m.Page:
        with self._lock:
            p = self.pages.get(page_id)
            if p is None:
                raise UnknownPage(page_id)
            return p

    def pages_of(self, doc_id: str) -> list[m.Page]:
        with self._lock:
            return sorted(
                (p for p in self.pages.values() if p.document_id == doc_id),
                key=lambda p: p.index,
            )

    # -- layout blocks ---------------------------------------------------------

    def insert_block(self, block: m.LayoutBlock) -> m.LayoutBlock:
        with self._lock:
            self.get_page(block.page_id)
            self._checked(block)
            self.blocks[block.id] = block
            self._record_change("block", block.id)
            return block

    def get_block(self, block_id: str) -> m.LayoutBlock:
        with self._lock:
            b = self.blocks.get(block_id)
            if b is None:
                raise UnknownBlock(block_id)
            return b

    def blocks_of(self, page_id: str) -> list[m.LayoutBlock]:
        with self._lock:
            self.get_page(page_id)
            return sorted(
                (b for b in self.blocks.values() if b.page_id == page_id),
                key=lambda b: b.id,
            )

    def cas_update_block(
        self, block_id: str, expected_version: int, **changes
    ) -> m.LayoutBlock:
        with self._lock:
            block = self.get_block(block_id)
            if block.version != expected_version:
                raise VersionConflict(block_id, expected_version, block.version)
            updated = self._checked(m.bump_version(block, **changes))
            self.blocks[block_id] = updated
            self._record_change("block", block_id)
            return updated

    def cas_delete_block(self, block_id: str, expected_version: int) -> m.LayoutBlock:
        with self._lock:
            block = self.get_block(block_id)
            if block.version != expected_version:
                raise VersionConflict(block_id, expected_version, block.version)
            del self.blocks[block_id]
            ann_id = self.ocr_by_block.pop(block_id, None)
            if ann_id:
                self.ocr.pop(ann_id, None)
            self._record_change("block", block_id, deleted=True)
            return block

    def replace_model_blocks(
        self, page_id: str, new_blocks: Iterable[m.LayoutBlock]
    ) -> list[m.LayoutBlock]:
        """Swap the page's model-sourced blocks, never touching human ones."""
        with self._lock:
            self.get_page(page_id)
            for b in list(self.blocks.values()):
                if b.page_id == page_id and b.source == m.BlockSource.MODEL:
                    del self.blocks[b.id]
                    self._record_change("block", b.id, deleted=True)
            return [self.insert_block(b) for b in new_blocks]

    # -- OCR annotations --------------------------------------------------------

    def get_ocr_for_block(self, block_id: str) -> Optional[m.OcrAnnotation]:
        with self._lock:
            ann_id = self.ocr_by_block.get(block_id)
            return self.ocr.get(ann_id) if ann_id else None

    def upsert_model_text(self, annotation: m.OcrAnnotation) -> m.OcrAnnotation:
        """Create the block's OCR annotation or refresh its model text."""
        with self._lock:
            existing_id = self.ocr_by_block.get(annotation.block_id)
            if existing_id is None:
                self.ocr[annotation.id] = annotation
                self.ocr_by_block[annotation.block_id] = annotation.id
                self._record_change("ocr", annotation.id)
                return annotation
            existing = self.ocr[existing_id]
            updated = m.bump_version(
                existing, model_text=annotation.model_text, updated_at=m.utcnow()
            )
            self.ocr[existing_id] = updated
            self._record_change("ocr", existing_id)
            return updated

    def cas_update_ocr(
        self, block_id: str, expected_version: int, human_text: str
    ) -> m.OcrAnnotation:
        with self._lock:
            ann = self.get_ocr_for_block(block_id)
            if ann is None:
                raise UnknownBlock(f"no OCR annotation for block {block_id}")
            if ann.version != expected_version:
                raise VersionConflict(ann.id, expected_version, ann.version)
            updated = m.bump_version(ann, human_text=human_text, updated_at=m.utcnow())
            self.ocr[ann.id] = updated
            self._record_change("ocr", ann.id)
            return updated

    # -- artifact annotations -----------------------------------------------------

    def get_artifact(self, annotation_id: str) -> m.ArtifactAnnotation:
        with self._lock:
            a = self.artifacts.get(annotation_id)
            if a is None:
                raise UnknownAnnotation(annotation_id)
            return a

    def artifact_for_target(
        self, target_id: str, focused_model: str
    ) -> Optional[m.ArtifactAnnotation]:
        with self._lock:
            for a in self.artifacts.values():
                if a.target_id == target_id and a.focused_model == focused_model:
                    return a
            return None

    def insert_artifact(self, annotation: m.ArtifactAnnotation) -> m.ArtifactAnnotation:
        with self._lock:
            self._checked(annotation)
            self.artifacts[annotation.id] = annotation
            self._record_change("artifact", annotation.id)
            return annotation

    def cas_update_artifact(
        self, annotation_id: str, expected_version: int, **changes
    ) -> m.ArtifactAnnotation:
        with self._lock:
            ann = self.get_artifact(annotation_id)
            if ann.version != expected_version:
                raise VersionConflict(annotation_id, expected_version, ann.version)
            updated = self._checked(m.bump_version(ann, **changes))
            self.artifacts[annotation_id] = updated
            self._record_change("artifact", annotation_id)
            return updated

    def update_artifact_rating(self, annotation_id: str, rating: int) -> m.ArtifactAnnotation:
        """Rating overwrite; a single-field write that still bumps the version."""
        with self._lock:
            ann = self.get_artifact(annotation_id)
            updated = self._checked(m.bump_version(ann, satisfaction_rating=rating))
            self.artifacts[annotation_id] = updated
            self._record_change("artifact", annotation_id)
            return updated

    # -- standalone images ---------------------------------------------------------

    def put_image(self, image: m.StandaloneImage) -> m.StandaloneImage:
        with self._lock:
            if image.project_id not in self.projects:
                raise UnknownProject(image.project_id)
            self.images[image.id] = image
            return image

    # -- worker tasks ----------------------------------------------------------------

    def create_tasks(self, tasks: Iterable[m.WorkerTask]) -> list[m.WorkerTask]:
        with self._lock:
            out = []
            for t in tasks:
                self._checked(t)
                self.tasks[t.id] = t
                out.append(t)
            return out

    def get_task(self, task_id: str) -> m.WorkerTask:
        with self._lock:
            t = self.tasks.get(task_id)
            if t is None:
                raise UnknownTask(task_id)
            return t

    def claim_task(
        self, kind: m.TaskKind, token_id: str, lease_s: float
    ) -> Optional[m.WorkerTask]:
        """Atomically hand one pending task of the kind to the token.

        Claimed tasks whose lease elapsed count as pending again. Returns None
        when nothing is available.
        """
        with self._lock:
            now = self._clock()
            candidates = sorted(
                (
                    t
                    for t in self.tasks.values()
                    if t.kind == kind
                    and (
                        t.state == m.TaskState.PENDING
                        or (
                            t.state == m.TaskState.CLAIMED
                            and t.lease_expiry is not None
                            and t.lease_expiry < now
                        )
                    )
                ),
                key=lambda t: t.id,
            )
            if not candidates:
                return None
            task = candidates[0]
            claimed = replace(
                task,
                state=m.TaskState.CLAIMED,
                claimed_by=token_id,
                lease_expiry=now + lease_s,
            )
            self.tasks[task.id] = self._checked(claimed)
            return claimed

    def complete_task(self, task_id: str, token_id: str) -> m.WorkerTask:
        with self._lock:
            task = self.get_task(task_id)
            if task.state == m.TaskState.COMPLETED:
                return task
            if task.state != m.TaskState.CLAIMED or task.claimed_by != token_id:
                raise NotClaimant(
                    f"task {task_id} is not held by this token"
                )
            if task.lease_expiry is not None and task.lease_expiry < self._clock():
                raise NotClaimant(f"lease on task {task_id} expired")
            done = replace(
                task, state=m.TaskState.COMPLETED, claimed_by=None, lease_expiry=None
            )
            self.tasks[task_id] = self._checked(done)
            return done

    def tasks_for_document(self, doc_id: str, kind: Optional[m.TaskKind] = None):
        with self._lock:
            return [
                t
                for t in self.tasks.values()
                if t.document_id == doc_id and (kind is None or t.kind == kind)
            ]

    # -- model runs -------------------------------------------------------------------

    def record_run(self, run: m.ModelRun, task_id: str) -> tuple[m.ModelRun, bool]:
        """Idempotent per (task, model, version): a retry returns the first run."""
        with self._lock:
            key = (task_id, run.model_name, run.model_version)
            existing_id = self._run_index.get(key)
            if existing_id is not None:
                return self.runs[existing_id], False
            self._checked(run)
            self.runs[run.id] = run
            self._run_index[key] = run.id
            return run, True

    def find_run(
        self, task_id: str, model_name: str, model_version: str
    ) -> Optional[m.ModelRun]:
        with self._lock:
            run_id = self._run_index.get((task_id, model_name, model_version))
            return self.runs.get(run_id) if run_id else None

    def runs_for_target(self, target_id: str) -> list[m.ModelRun]:
        with self._lock:
            return sorted(
                (r for r in self.runs.values() if r.target_id == target_id),
                key=lambda r: r.id,
            )

    # -- registrations and tokens --------------------------------------------------------

    def add_registration(self, reg: m.ModelRegistration) -> m.ModelRegistration:
        with self._lock:
            for existing in self.registrations:
                if (
                    existing.model_name == reg.model_name
                    and existing.model_version == reg.model_version
                    and existing.task_kind == reg.task_kind
                ):
                    raise Duplicate(
                        f"model {reg.model_name}/{reg.model_version} already registered "
                        f"for {reg.task_kind.value}"
                    )
            self.registrations.append(reg)
            return reg

    def put_token(self, token: m.ApiToken) -> m.ApiToken:
        with self._lock:
            self._checked(token)
            self.tokens[token.secret_digest] = token
            return token

    def token_by_digest(self, digest: str) -> Optional[m.ApiToken]:
        with self._lock:
            return self.tokens.get(digest)

    # -- change feed ------------------------------------------------------------------------

    def changes_since(self, since: int, limit: int = 500) -> list[ChangeRecord]:
        with self._lock:
            return [c for c in self.changes if c.seq > since][:limit]

    def snapshot_entity(self, record: ChangeRecord) -> Optional[Any]:
        with self._lock:
            if record.entity_type == "block":
                return self.blocks.get(record.entity_id)
            if record.entity_type == "ocr":
                return self.ocr.get(record.entity_id)
            if record.entity_type == "artifact":
                return self.artifacts.get(record.entity_id)
            return None
