"""Authenticated HTTP surface for annotators, model workers, and trainers.

Request/response bodies mirror the domain wire encoding. Auth is a bearer
token; scopes gate each route group: ``annotate`` for human operations,
``submit_results`` for the task queue, ``manage_models`` for registration,
``read_data`` for export and the change feed. Read views accept either
``annotate`` or ``read_data``.
"""

from __future__ import annotations

import json
from typing import Any, Optional

from fastapi import Depends, FastAPI, File, Form, Header, Request, Response, UploadFile
from fastapi.responses import JSONResponse

from . import export as export_mod
from .auth import authenticate
from .errors import SpiralError, Unauthorized, UnsupportedFormat
from .forms import FormSpec
from .lifecycle import can_view_layout, can_view_ocr
from .model import (
    Actor,
    AnnotationMode,
    ApiToken,
    TaskKind,
    bbox_from_wire,
    form_schema_from_wire,
    schema_from_wire,
    to_wire,
)
from .service import AnnotationService


def build_app(service: AnnotationService) -> FastAPI:
    app = FastAPI(title="spiral annotation service", version="0.1.0")
    app.state.service = service

    @app.exception_handler(SpiralError)
    def spiral_error_handler(_req: Request, exc: SpiralError):
        body: dict[str, Any] = {"error": type(exc).__name__, "detail": str(exc)}
        fields = getattr(exc, "fields", None)
        if fields is not None:
            body["fields"] = fields
        if hasattr(exc, "expected"):
            body["expected_version"] = exc.expected
            body["current_version"] = exc.actual
        return JSONResponse(status_code=exc.http_status, content=body)

    def token_from(authorization: Optional[str] = Header(default=None)) -> ApiToken:
        return authenticate(service.store, authorization)

    def need(token: ApiToken, *scopes: str) -> ApiToken:
        for scope in scopes:
            if scope in token.scopes:
                return token
        raise Unauthorized(f"token {token.id} lacks any of {', '.join(scopes)}")

    def doc_view(doc) -> dict:
        view = to_wire(doc)
        view["can_view_layout"] = can_view_layout(doc)
        view["can_view_ocr"] = can_view_ocr(doc)
        return view

    # -- projects ------------------------------------------------------

    @app.post("/api/projects")
    def create_project(body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        project = service.create_project(
            name=str(body.get("name", "")), owner=str(body.get("owner", ""))
        )
        return to_wire(project)

    @app.get("/api/projects/{project_id}")
    def get_project(project_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        return to_wire(service.store.get_project(project_id))

    @app.put("/api/projects/{project_id}/schema")
    def put_schema(project_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        project = service.define_schema(project_id, schema_from_wire(body))
        return to_wire(project)

    @app.put("/api/projects/{project_id}/forms")
    def put_forms(project_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        schemas = None
        if "form_schemas" in body:
            schemas = tuple(form_schema_from_wire(fs) for fs in body["form_schemas"])
        project = service.configure_forms(
            project_id,
            form_schemas=schemas,
            focused_models=body.get("focused_models"),
        )
        return to_wire(project)

    # -- documents -----------------------------------------------------

    @app.post("/api/documents")
    def upload_document(
        project_id: str = Form(...),
        file: UploadFile = File(...),
        token: ApiToken = Depends(token_from),
    ):
        need(token, "annotate")
        data = file.file.read()
        doc = service.upload_document(project_id, file.filename or "upload.bin", data)
        return doc_view(doc)

    @app.post("/api/documents/archive")
    def upload_archive(
        project_id: str = Form(...),
        file: UploadFile = File(...),
        token: ApiToken = Depends(token_from),
    ):
        need(token, "annotate")
        docs, skipped = service.upload_archive(project_id, file.file.read())
        return {
            "documents": [doc_view(d) for d in docs],
            "skipped": [{"name": s.name, "reason": s.reason} for s in skipped],
        }

    @app.get("/api/documents")
    def list_documents(project: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        service.store.get_project(project)
        docs = sorted(
            (d for d in service.store.documents.values() if d.project_id == project),
            key=lambda d: d.id,
        )
        return {"documents": [doc_view(d) for d in docs]}

    @app.get("/api/documents/{doc_id}")
    def get_document(doc_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        return doc_view(service.store.get_document(doc_id))

    @app.get("/api/documents/{doc_id}/pages")
    def get_pages(doc_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        service.store.get_document(doc_id)
        return {"pages": [to_wire(p) for p in service.store.pages_of(doc_id)]}

    @app.post("/api/documents/{doc_id}/layout/review")
    def save_layout_review(doc_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        tasks = service.save_layout_review(doc_id, Actor.HUMAN)
        return {
            "document": doc_view(service.store.get_document(doc_id)),
            "tasks": [to_wire(t) for t in tasks],
        }

    @app.post("/api/documents/{doc_id}/outputs/review")
    def save_outputs_review(doc_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        doc = service.save_outputs_review(doc_id, Actor.HUMAN)
        return doc_view(doc)

    @app.get("/api/audit")
    def get_audit(
        document: str,
        format: Optional[str] = None,
        token: ApiToken = Depends(token_from),
    ):
        need(token, "annotate", "read_data")
        service.store.get_document(document)
        records = [to_wire(r) for r in service.store.audit_for(document)]
        if format == "jsonl":
            lines = "\n".join(json.dumps(r, sort_keys=True) for r in records)
            return Response(
                lines + ("\n" if records else ""), media_type="application/jsonl"
            )
        return {"records": records}

    # -- pages and blocks ----------------------------------------------

    @app.get("/api/pages/{page_id}")
    def get_page(page_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data", "submit_results")
        return to_wire(service.store.get_page(page_id))

    @app.get("/api/pages/{page_id}/image")
    def page_image(page_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        page = service.store.get_page(page_id)
        return Response(service.blobs.get(page.image_blob_key), media_type="image/png")

    @app.get("/api/pages/{page_id}/blocks")
    def list_blocks(page_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        order = service.block_reading_order(page_id)
        blocks = {b.id: b for b in service.store.blocks_of(page_id)}
        return {"blocks": [to_wire(blocks[i]) for i in order], "reading_order": order}

    @app.post("/api/pages/{page_id}/blocks")
    def add_block(page_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        block = service.add_block(
            page_id, bbox_from_wire(body["bbox"]), str(body["label_id"])
        )
        return to_wire(block)

    @app.get("/api/blocks/{block_id}")
    def get_block(block_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data", "submit_results")
        return to_wire(service.store.get_block(block_id))

    @app.patch("/api/blocks/{block_id}")
    def update_block(block_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        block = service.update_block(
            block_id,
            expected_version=int(body["expected_version"]),
            bbox=bbox_from_wire(body["bbox"]) if "bbox" in body else None,
            label_id=body.get("label_id"),
        )
        return to_wire(block)

    @app.delete("/api/blocks/{block_id}")
    def delete_block(block_id: str, version: int, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        return service.delete_block(block_id, version)

    @app.get("/api/blocks/{block_id}/ocr")
    def get_ocr(block_id: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        ann = service.ocr_for_block(block_id)
        return {"ocr": to_wire(ann) if ann else None}

    @app.post("/api/blocks/{block_id}/ocr")
    def edit_ocr(block_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        ann = service.edit_ocr_text(
            block_id, str(body["text"]), int(body["expected_version"])
        )
        return to_wire(ann)

    # -- standalone images and artifact annotation ---------------------

    @app.post("/api/images")
    def upload_image(
        project_id: str = Form(...),
        artifact_kind: str = Form(...),
        file: UploadFile = File(...),
        token: ApiToken = Depends(token_from),
    ):
        need(token, "annotate")
        image = service.upload_standalone_image(
            project_id, file.file.read(), artifact_kind
        )
        return to_wire(image)

    @app.get("/api/artifacts")
    def bulk_artifacts(
        project: str,
        kind: Optional[str] = None,
        annotated: Optional[bool] = None,
        rated: Optional[bool] = None,
        model: Optional[str] = None,
        cursor: Optional[str] = None,
        limit: int = 50,
        token: ApiToken = Depends(token_from),
    ):
        need(token, "annotate", "read_data")
        items, next_cursor = service.bulk_list_artifacts(
            project, kind, annotated, rated, model, cursor, limit
        )
        return {"items": items, "cursor": next_cursor}

    @app.get("/api/forms")
    def get_form(
        project: str,
        artifact_kind: str,
        model: str,
        target: Optional[str] = None,
        token: ApiToken = Depends(token_from),
    ):
        need(token, "annotate", "read_data")
        spec: FormSpec = service.generate_form_for(project, artifact_kind, model, target)
        return spec.to_wire()

    @app.post("/api/artifacts/{target_id}/annotation")
    def submit_annotation(target_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        ann = service.submit_artifact_annotation(
            target_id,
            focused_model=str(body["focused_model"]),
            values=body.get("values", {}),
            mode=AnnotationMode(body.get("mode", "annotation")),
            expected_version=body.get("expected_version"),
        )
        return to_wire(ann)

    @app.post("/api/annotations/{annotation_id}/rating")
    def rate(annotation_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "annotate")
        return to_wire(service.rate_satisfaction(annotation_id, body.get("rating")))

    # -- worker surface -------------------------------------------------

    @app.post("/api/models")
    def register_model(body: dict, token: ApiToken = Depends(token_from)):
        need(token, "manage_models")
        reg = service.register_model(
            model_name=str(body["model_name"]),
            model_version=str(body["model_version"]),
            task_kind=TaskKind(body["task_kind"]),
            form_schema_model=body.get("form_schema_model"),
            project_id=body.get("project_id"),
        )
        return to_wire(reg)

    @app.post("/api/tasks/claim")
    def claim_task(body: dict, token: ApiToken = Depends(token_from)):
        need(token, "submit_results")
        task = service.claim_task(
            token.id, TaskKind(body["kind"]), float(body.get("lease_s", 60))
        )
        return {"task": to_wire(task) if task else None}

    @app.get("/api/tasks/{task_id}")
    def get_task(task_id: str, token: ApiToken = Depends(token_from)):
        need(token, "submit_results", "annotate", "read_data")
        return to_wire(service.store.get_task(task_id))

    @app.post("/api/tasks/{task_id}/result")
    def submit_result(task_id: str, body: dict, token: ApiToken = Depends(token_from)):
        need(token, "submit_results")
        run = service.submit_result(
            token_id=token.id,
            task_id=task_id,
            payload=body.get("payload"),
            latency_ms=float(body.get("latency_ms", 0.0)),
            model_name=str(body["model_name"]),
            model_version=str(body["model_version"]),
        )
        return to_wire(run)

    # -- export, change feed, dashboard ---------------------------------

    @app.get("/api/export")
    def export_data(
        project: str,
        kind: str,
        format: Optional[str] = None,
        include_model_only: bool = False,
        token: ApiToken = Depends(token_from),
    ):
        need(token, "read_data")
        store = service.store
        store.get_project(project)
        if kind == "layout":
            dataset = export_mod.export_layout(store, project, include_model_only)
            return JSONResponse(dataset)
        if kind == "ocr":
            rows = export_mod.export_ocr(store, project, include_model_only)
        elif kind in ("figure", "table", "formula"):
            rows = export_mod.export_artifacts(store, project, kind, include_model_only)
        else:
            raise UnsupportedFormat(f"unknown export kind {kind!r}")
        if format == "json":
            return JSONResponse({"records": rows})
        lines = "\n".join(json.dumps(r, sort_keys=True) for r in rows)
        return Response(lines + ("\n" if rows else ""), media_type="application/jsonl")

    @app.get("/api/annotations")
    def annotations_feed(
        since: int = 0,
        limit: int = 500,
        project: Optional[str] = None,
        token: ApiToken = Depends(token_from),
    ):
        need(token, "read_data")
        records, cursor = service.fetch_annotations(since, limit, project)
        return {"records": records, "cursor": cursor}

    @app.get("/api/dashboard")
    def dashboard(project: str, token: ApiToken = Depends(token_from)):
        need(token, "annotate", "read_data")
        rows = service.dashboard(project)
        return {
            "rows": [
                {
                    "model_name": r.model_name,
                    "model_version": r.model_version,
                    "output_type": r.output_type,
                    "mean_latency_ms": r.mean_latency_ms,
                    "mean_satisfaction": r.mean_satisfaction,
                    "n_annotated": r.n_annotated,
                    "n_reviewed": r.n_reviewed,
                    "quality": r.quality,
                }
                for r in rows
            ]
        }

    return app


def create_app(config_path: Optional[str] = None) -> FastAPI:
    """App factory for `uvicorn spiral.api:create_app --factory`."""
    from .config import load_config

    return build_app(AnnotationService(load_config(config_path)))
