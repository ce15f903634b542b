"""Persistent domain entities, their invariants, and wire encoding.

All entities are frozen dataclasses: a value read from the store is an
immutable snapshot, safe to share across threads. Mutation happens only
through the store, which enforces version-checked writes.

``validate(entity)`` returns every invariant violation as a list of human
readable strings; an empty list means the entity is valid. The store refuses
writes for entities that do not validate.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Mapping, Optional

__all__ = [
    "SourceFormat",
    "DocumentStatus",
    "TaskKind",
    "DownstreamTask",
    "ArtifactKind",
    "BlockSource",
    "AnnotationMode",
    "FieldType",
    "Actor",
    "TaskState",
    "BoundingBox",
    "LabelNode",
    "LayoutSchema",
    "UNLABELED_NODE_ID",
    "default_layout_schema",
    "FieldSpec",
    "FormSchema",
    "Project",
    "Document",
    "Page",
    "LayoutBlock",
    "OcrAnnotation",
    "ArtifactAnnotation",
    "ModelRun",
    "WorkerTask",
    "StandaloneImage",
    "ApiToken",
    "ModelRegistration",
    "AuditRecord",
    "validate",
    "to_wire",
    "bbox_from_wire",
    "schema_from_wire",
    "form_schema_from_wire",
    "utcnow",
]


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


class SourceFormat(str, enum.Enum):
    PDF = "pdf"
    WORD = "word"
    POWERPOINT = "powerpoint"
    EXCEL = "excel"
    IMAGE = "image"
    TEXT = "text"
    EBOOK = "ebook"
    MARKDOWN = "markdown"


class DocumentStatus(enum.IntEnum):
    """Five-step document lifecycle; the value only ever increases."""

    UPLOADED = 1
    LAYOUT_DETECTED = 2
    LAYOUT_REVIEWED = 3
    PROCESSED = 4
    OUTPUTS_REVIEWED = 5


class TaskKind(str, enum.Enum):
    LAYOUT = "layout"
    OCR = "ocr"
    FIGURE = "figure"
    TABLE = "table"
    FORMULA = "formula"


class DownstreamTask(str, enum.Enum):
    """Processing a layout label routes its blocks to after layout review."""

    OCR = "ocr"
    TABLE = "table"
    FIGURE = "figure"
    FORMULA = "formula"
    NONE = "none"


ArtifactKind = ("figure", "table", "formula")


class BlockSource(str, enum.Enum):
    MODEL = "model"
    HUMAN = "human"


class AnnotationMode(str, enum.Enum):
    REVIEW = "review"
    ANNOTATION = "annotation"


class FieldType(str, enum.Enum):
    TEXT = "text"
    TEXTAREA = "textarea"
    NUMBER = "number"
    BOOLEAN = "boolean"
    JSON = "json"
    LIST_OF_TEXT = "list_of_text"


class Actor(str, enum.Enum):
    WORKER = "worker"
    HUMAN = "human"
    SYSTEM = "system"


class TaskState(str, enum.Enum):
    PENDING = "pending"
    CLAIMED = "claimed"
    COMPLETED = "completed"


@dataclass(frozen=True)
class BoundingBox:
    """Region as fractions of page dimensions: [x_min, y_min, width, height]."""

    x_min: float
    y_min: float
    width: float
    height: float

    def as_list(self) -> list[float]:
        return [self.x_min, self.y_min, self.width, self.height]

    @property
    def x_max(self) -> float:
        return self.x_min + self.width

    @property
    def y_max(self) -> float:
        return self.y_min + self.height

    @property
    def area(self) -> float:
        return self.width * self.height


@dataclass(frozen=True)
class LabelNode:
    id: str
    name: str
    parent_id: Optional[str] = None
    downstream_task: DownstreamTask = DownstreamTask.NONE


UNLABELED_NODE_ID = "unlabeled"

#: Node quarantining model predictions whose label is not in the schema.
_UNLABELED_NODE = LabelNode(UNLABELED_NODE_ID, "unlabeled", None, DownstreamTask.NONE)


@dataclass(frozen=True)
class LayoutSchema:
    """Project-scoped forest of layout labels."""

    nodes: tuple[LabelNode, ...]

    def node(self, node_id: str) -> Optional[LabelNode]:
        for n in self.nodes:
            if n.id == node_id:
                return n
        return None

    def node_ids(self) -> set[str]:
        return {n.id for n in self.nodes}

    def by_name(self, name: str) -> Optional[LabelNode]:
        """Unique node with this name, or None when absent or ambiguous."""
        hits = [n for n in self.nodes if n.name == name]
        return hits[0] if len(hits) == 1 else None

    def with_unlabeled(self) -> "LayoutSchema":
        if self.node(UNLABELED_NODE_ID) is not None:
            return self
        return LayoutSchema(self.nodes + (_UNLABELED_NODE,))


_BASELINE_LABELS = (
    ("content", DownstreamTask.OCR),
    ("title", DownstreamTask.OCR),
    ("footnote", DownstreamTask.OCR),
    ("figure", DownstreamTask.FIGURE),
    ("table", DownstreamTask.TABLE),
    ("formula", DownstreamTask.FORMULA),
)


def default_layout_schema() -> LayoutSchema:
    """Six baseline labels plus the reserved quarantine node."""
    nodes = tuple(LabelNode(name, name, None, task) for name, task in _BASELINE_LABELS)
    return LayoutSchema(nodes + (_UNLABELED_NODE,))


@dataclass(frozen=True)
class FieldSpec:
    name: str
    field_type: FieldType
    required: bool = False
    default: Any = None
    has_default: bool = False


@dataclass(frozen=True)
class FormSchema:
    """Ordered field descriptors driving one model's annotation form."""

    model_name: str
    artifact_kind: str
    output_format: str
    fields: tuple[FieldSpec, ...]


@dataclass(frozen=True)
class Project:
    id: str
    name: str
    owner: str
    layout_schema: LayoutSchema
    form_schemas: tuple[FormSchema, ...] = ()
    focused_models: Mapping[str, str] = field(default_factory=dict)

    def form_schema(self, model_name: str, artifact_kind: str) -> Optional[FormSchema]:
        for fs in self.form_schemas:
            if fs.model_name == model_name and fs.artifact_kind == artifact_kind:
                return fs
        return None


@dataclass(frozen=True)
class Document:
    id: str
    project_id: str
    original_filename: str
    source_format: SourceFormat
    status: DocumentStatus
    page_count: int
    pdf_blob_key: Optional[str]
    created_at: datetime


@dataclass(frozen=True)
class Page:
    id: str
    document_id: str
    index: int
    width_px: int
    height_px: int
    image_blob_key: str


@dataclass(frozen=True)
class LayoutBlock:
    id: str
    page_id: str
    bbox: BoundingBox
    label_id: str
    source: BlockSource
    confidence: Optional[float] = None
    version: int = 1


@dataclass(frozen=True)
class OcrAnnotation:
    id: str
    block_id: str
    model_text: str
    human_text: Optional[str] = None
    version: int = 1
    updated_at: datetime = field(default_factory=utcnow)

    @property
    def effective_text(self) -> str:
        return self.human_text if self.human_text is not None else self.model_text


@dataclass(frozen=True)
class ArtifactAnnotation:
    id: str
    target_id: str
    target_type: str  # "block" | "image"
    artifact_kind: str
    focused_model: str
    values: Mapping[str, Any]
    mode: AnnotationMode
    satisfaction_rating: Optional[int] = None
    version: int = 1


@dataclass(frozen=True)
class ModelRun:
    id: str
    model_name: str
    model_version: str
    task_kind: TaskKind
    target_id: str
    output_payload: Any
    latency_ms: float
    submitted_at: datetime


@dataclass(frozen=True)
class WorkerTask:
    id: str
    kind: TaskKind
    target_id: str
    project_id: str
    document_id: Optional[str] = None
    state: TaskState = TaskState.PENDING
    claimed_by: Optional[str] = None
    lease_expiry: Optional[float] = None


@dataclass(frozen=True)
class StandaloneImage:
    """Directly uploaded figure/table/formula image, annotatable without a document."""

    id: str
    project_id: str
    artifact_kind: str
    image_blob_key: str
    created_at: datetime


@dataclass(frozen=True)
class ApiToken:
    id: str
    secret_digest: str
    scopes: frozenset[str]
    expiry: Optional[datetime] = None


TOKEN_SCOPES = frozenset({"read_data", "submit_results", "manage_models", "annotate"})


@dataclass(frozen=True)
class ModelRegistration:
    model_name: str
    model_version: str
    task_kind: TaskKind
    form_schema_model: Optional[str] = None


@dataclass(frozen=True)
class AuditRecord:
    document_id: str
    from_status: int
    to_status: int
    event: str
    actor: str
    timestamp: datetime


# ---------------------------------------------------------------------------
# Validation


def _validate_bbox(b: BoundingBox) -> list[str]:
    out = []
    if b.x_min < 0:
        out.append("x_min < 0")
    if b.y_min < 0:
        out.append("y_min < 0")
    if b.width <= 0:
        out.append("width <= 0")
    if b.height <= 0:
        out.append("height <= 0")
    if b.x_min + b.width > 1:
        out.append("x_min + width > 1")
    if b.y_min + b.height > 1:
        out.append("y_min + height > 1")
    return out


def _validate_schema(s: LayoutSchema) -> list[str]:
    out = []
    ids = [n.id for n in s.nodes]
    if len(set(ids)) != len(ids):
        out.append("duplicate node ids")
    known = set(ids)
    for n in s.nodes:
        if n.parent_id is not None and n.parent_id not in known:
            out.append(f"node {n.id} references missing parent {n.parent_id}")
    # Cycle check: walk each node's parent chain.
    by_id = {n.id: n for n in s.nodes}
    for n in s.nodes:
        seen = {n.id}
        cur = n
        while cur.parent_id is not None:
            if cur.parent_id in seen:
                out.append(f"cycle through node {n.id}")
                break
            seen.add(cur.parent_id)
            nxt = by_id.get(cur.parent_id)
            if nxt is None:
                break
            cur = nxt
    siblings: dict[Optional[str], set[str]] = {}
    for n in s.nodes:
        names = siblings.setdefault(n.parent_id, set())
        if n.name in names:
            out.append(f"duplicate sibling name {n.name!r}")
        names.add(n.name)
    return out


def _validate_form_schema(fs: FormSchema) -> list[str]:
    out = []
    if not fs.model_name:
        out.append("model_name empty")
    if fs.artifact_kind not in ArtifactKind:
        out.append(f"artifact_kind {fs.artifact_kind!r} not one of {ArtifactKind}")
    if not fs.fields:
        out.append("form schema has no fields")
    names = [f.name for f in fs.fields]
    if len(set(names)) != len(names):
        out.append("duplicate field names")
    return out


def _validate_project(p: Project) -> list[str]:
    out = []
    if not p.name:
        out.append("name empty")
    out.extend(_validate_schema(p.layout_schema))
    for fs in p.form_schemas:
        out.extend(_validate_form_schema(fs))
    for kind, model in p.focused_models.items():
        if p.form_schema(model, kind) is None:
            out.append(f"focused model {model!r} for {kind!r} has no form schema")
    return out


def _validate_document(d: Document) -> list[str]:
    out = []
    if d.status not in set(DocumentStatus):
        out.append(f"status {d.status} outside 1..5")
    if d.page_count < 0:
        out.append("page_count negative")
    if d.status >= DocumentStatus.LAYOUT_DETECTED:
        if d.page_count < 1:
            out.append("page_count < 1 at status >= 2")
        if d.pdf_blob_key is None:
            out.append("pdf_blob_key absent at status >= 2")
    return out


def _validate_page(p: Page) -> list[str]:
    out = []
    if p.index < 0:
        out.append("index negative")
    if p.width_px <= 0:
        out.append("width_px <= 0")
    if p.height_px <= 0:
        out.append("height_px <= 0")
    return out


def _validate_block(b: LayoutBlock) -> list[str]:
    out = _validate_bbox(b.bbox)
    if b.source == BlockSource.MODEL:
        if b.confidence is None:
            out.append("model block missing confidence")
        elif not 0 <= b.confidence <= 1:
            out.append("confidence outside [0,1]")
    elif b.confidence is not None:
        out.append("human block carries confidence")
    if b.version < 1:
        out.append("version < 1")
    return out


def _validate_artifact(a: ArtifactAnnotation) -> list[str]:
    out = []
    if a.artifact_kind not in ArtifactKind:
        out.append(f"artifact_kind {a.artifact_kind!r} invalid")
    if a.target_type not in ("block", "image"):
        out.append(f"target_type {a.target_type!r} invalid")
    if a.satisfaction_rating is not None and a.satisfaction_rating not in (1, 2, 3, 4, 5):
        out.append("satisfaction_rating outside 1..5")
    if a.version < 1:
        out.append("version < 1")
    return out


def _validate_run(r: ModelRun) -> list[str]:
    out = []
    if r.latency_ms < 0:
        out.append("latency_ms negative")
    return out


def _validate_task(t: WorkerTask) -> list[str]:
    out = []
    claimed = t.state == TaskState.CLAIMED
    if claimed and (t.claimed_by is None or t.lease_expiry is None):
        out.append("claimed task missing claimant or lease")
    if not claimed and (t.claimed_by is not None or t.lease_expiry is not None):
        out.append("non-claimed task carries claim fields")
    return out


def _validate_token(t: ApiToken) -> list[str]:
    out = []
    bad = set(t.scopes) - TOKEN_SCOPES
    if bad:
        out.append(f"unknown scopes {sorted(bad)}")
    return out


_VALIDATORS = {
    BoundingBox: _validate_bbox,
    LayoutSchema: _validate_schema,
    FormSchema: _validate_form_schema,
    Project: _validate_project,
    Document: _validate_document,
    Page: _validate_page,
    LayoutBlock: _validate_block,
    ArtifactAnnotation: _validate_artifact,
    ModelRun: _validate_run,
    WorkerTask: _validate_task,
    ApiToken: _validate_token,
}


def validate(entity: Any) -> list[str]:
    """Every invariant violation for the entity, empty when it is valid."""
    checker = _VALIDATORS.get(type(entity))
    if checker is None:
        return []
    return checker(entity)


# ---------------------------------------------------------------------------
# Wire encoding: deterministic plain dicts with stable field names.


def _iso(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).isoformat()


def to_wire(entity: Any) -> dict:
    if isinstance(entity, BoundingBox):
        return {"bbox": entity.as_list()}
    if isinstance(entity, LabelNode):
        return {
            "id": entity.id,
            "name": entity.name,
            "parent_id": entity.parent_id,
            "downstream_task": entity.downstream_task.value,
        }
    if isinstance(entity, LayoutSchema):
        return {"nodes": [to_wire(n) for n in entity.nodes]}
    if isinstance(entity, FieldSpec):
        out = {
            "name": entity.name,
            "field_type": entity.field_type.value,
            "required": entity.required,
        }
        if entity.has_default:
            out["default"] = entity.default
        return out
    if isinstance(entity, FormSchema):
        return {
            "model_name": entity.model_name,
            "artifact_kind": entity.artifact_kind,
            "output_format": entity.output_format,
            "fields": [to_wire(f) for f in entity.fields],
        }
    if isinstance(entity, Project):
        return {
            "id": entity.id,
            "name": entity.name,
            "owner": entity.owner,
            "layout_schema": to_wire(entity.layout_schema),
            "form_schemas": [to_wire(f) for f in entity.form_schemas],
            "focused_models": dict(entity.focused_models),
        }
    if isinstance(entity, Document):
        return {
            "id": entity.id,
            "project_id": entity.project_id,
            "original_filename": entity.original_filename,
            "source_format": entity.source_format.value,
            "status": int(entity.status),
            "page_count": entity.page_count,
            "pdf_blob_key": entity.pdf_blob_key,
            "created_at": _iso(entity.created_at),
        }
    if isinstance(entity, Page):
        return {
            "id": entity.id,
            "document_id": entity.document_id,
            "index": entity.index,
            "width_px": entity.width_px,
            "height_px": entity.height_px,
            "image_blob_key": entity.image_blob_key,
        }
    if isinstance(entity, LayoutBlock):
        return {
            "id": entity.id,
            "page_id": entity.page_id,
            "bbox": entity.bbox.as_list(),
            "label_id": entity.label_id,
            "source": entity.source.value,
            "confidence": entity.confidence,
            "version": entity.version,
        }
    if isinstance(entity, OcrAnnotation):
        return {
            "id": entity.id,
            "block_id": entity.block_id,
            "model_text": entity.model_text,
            "human_text": entity.human_text,
            "version": entity.version,
            "updated_at": _iso(entity.updated_at),
        }
    if isinstance(entity, ArtifactAnnotation):
        return {
            "id": entity.id,
            "target_id": entity.target_id,
            "target_type": entity.target_type,
            "artifact_kind": entity.artifact_kind,
            "focused_model": entity.focused_model,
            "values": dict(entity.values),
            "mode": entity.mode.value,
            "satisfaction_rating": entity.satisfaction_rating,
            "version": entity.version,
        }
    if isinstance(entity, ModelRun):
        return {
            "id": entity.id,
            "model_name": entity.model_name,
            "model_version": entity.model_version,
            "task_kind": entity.task_kind.value,
            "target_id": entity.target_id,
            "output_payload": entity.output_payload,
            "latency_ms": entity.latency_ms,
            "submitted_at": _iso(entity.submitted_at),
        }
    if isinstance(entity, WorkerTask):
        return {
            "id": entity.id,
            "kind": entity.kind.value,
            "target_id": entity.target_id,
            "project_id": entity.project_id,
            "document_id": entity.document_id,
            "state": entity.state.value,
            "claimed_by": entity.claimed_by,
            "lease_expiry": entity.lease_expiry,
        }
    if isinstance(entity, StandaloneImage):
        return {
            "id": entity.id,
            "project_id": entity.project_id,
            "artifact_kind": entity.artifact_kind,
            "image_blob_key": entity.image_blob_key,
            "created_at": _iso(entity.created_at),
        }
    if isinstance(entity, ModelRegistration):
        return {
            "model_name": entity.model_name,
            "model_version": entity.model_version,
            "task_kind": entity.task_kind.value,
            "form_schema_model": entity.form_schema_model,
        }
    if isinstance(entity, AuditRecord):
        return {
            "document_id": entity.document_id,
            "from": entity.from_status,
            "to": entity.to_status,
            "event": entity.event,
            "actor": entity.actor,
            "timestamp": _iso(entity.timestamp),
        }
    raise TypeError(f"no wire encoding for {type(entity).__name__}")


def bbox_from_wire(raw: Any) -> BoundingBox:
    if not isinstance(raw, (list, tuple)) or len(raw) != 4:
        raise ValueError("bbox must be a 4-element array [x_min, y_min, width, height]")
    vals = []
    for v in raw:
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ValueError("bbox elements must be numbers")
        vals.append(float(v))
    return BoundingBox(*vals)


def schema_from_wire(raw: Mapping[str, Any]) -> LayoutSchema:
    nodes = []
    for item in raw.get("nodes", []):
        nodes.append(
            LabelNode(
                id=str(item["id"]),
                name=str(item["name"]),
                parent_id=item.get("parent_id"),
                downstream_task=DownstreamTask(item.get("downstream_task", "none")),
            )
        )
    return LayoutSchema(tuple(nodes))


def form_schema_from_wire(raw: Mapping[str, Any]) -> FormSchema:
    fields = []
    for item in raw.get("fields", []):
        fields.append(
            FieldSpec(
                name=str(item["name"]),
                field_type=FieldType(item["field_type"]),
                required=bool(item.get("required", False)),
                default=item.get("default"),
                has_default="default" in item,
            )
        )
    return FormSchema(
        model_name=str(raw["model_name"]),
        artifact_kind=str(raw["artifact_kind"]),
        output_format=str(raw.get("output_format", "json")),
        fields=tuple(fields),
    )


def bump_version(entity, **changes):
    """Copy of a versioned entity with changes applied and version + 1."""
    return replace(entity, version=entity.version + 1, **changes)
