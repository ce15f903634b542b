import io

import pytest
from PIL import Image

from conftest import (
    ADMIN_SECRET,
    HUMAN_SECRET,
    READER_SECRET,
    UI_SECRET,
    WORKER_SECRET,
    auth,
    make_pdf,
)


def _png():
    buf = io.BytesIO()
    Image.new("L", (6, 6), color=128).save(buf, format="PNG")
    return buf.getvalue()


@pytest.fixture
def project_id(client):
    resp = client.post(
        "/api/projects", json={"name": "api test", "owner": "me"}, headers=auth()
    )
    assert resp.status_code == 200
    return resp.json()["id"]


def _upload(client, project_id, n_pages=1):
    resp = client.post(
        "/api/documents",
        data={"project_id": project_id},
        files={"file": ("doc.pdf", make_pdf(n_pages=n_pages), "application/pdf")},
        headers=auth(),
    )
    assert resp.status_code == 200, resp.text
    return resp.json()


# ---------------------------------------------------------------------------
# Auth


def test_missing_token_is_401(client):
    assert client.get("/api/documents?project=x").status_code == 401


def test_unknown_token_is_401(client):
    assert (
        client.get("/api/documents?project=x", headers=auth("wrong")).status_code == 401
    )


def test_scope_enforcement(client, project_id):
    # submit_results-only token cannot annotate
    resp = client.post(
        "/api/projects", json={"name": "x", "owner": "y"}, headers=auth(WORKER_SECRET)
    )
    assert resp.status_code == 401
    # annotate token cannot claim tasks
    resp = client.post(
        "/api/tasks/claim", json={"kind": "layout"}, headers=auth(HUMAN_SECRET)
    )
    assert resp.status_code == 401
    # annotate-only token cannot export (read_data required)
    resp = client.get(
        f"/api/export?project={project_id}&kind=layout", headers=auth(UI_SECRET)
    )
    assert resp.status_code == 401


def test_expired_token_rejected(client, service):
    from datetime import datetime, timedelta, timezone

    from spiral.auth import make_token

    service.store.put_token(
        make_token(
            "old",
            "old-secret",
            {"annotate"},
            expiry=datetime.now(timezone.utc) - timedelta(hours=1),
        )
    )
    resp = client.get("/api/documents?project=x", headers=auth("old-secret"))
    assert resp.status_code == 401


# ---------------------------------------------------------------------------
# Documents and gating flags


def test_upload_and_document_view(client, project_id):
    doc = _upload(client, project_id)
    assert doc["status"] == 1
    assert doc["can_view_layout"] is False
    assert doc["can_view_ocr"] is False
    listing = client.get(f"/api/documents?project={project_id}", headers=auth()).json()
    assert [d["id"] for d in listing["documents"]] == [doc["id"]]


def test_unsupported_upload_is_400(client, project_id):
    resp = client.post(
        "/api/documents",
        data={"project_id": project_id},
        files={"file": ("archive.bin", b"\x00\x01", "application/octet-stream")},
        headers=auth(),
    )
    assert resp.status_code == 400
    assert resp.json()["error"] == "UnsupportedFormat"


def test_archive_endpoint(client, project_id):
    import zipfile

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as z:
        z.writestr("a.pdf", make_pdf())
        z.writestr("b.exe", b"MZ")
    resp = client.post(
        "/api/documents/archive",
        data={"project_id": project_id},
        files={"file": ("batch.zip", buf.getvalue(), "application/zip")},
        headers=auth(),
    )
    assert resp.status_code == 200
    body = resp.json()
    assert len(body["documents"]) == 1
    assert body["skipped"][0]["name"] == "b.exe"


def _drain_layout(client, doc_id, payload_for_page):
    while True:
        resp = client.post(
            "/api/tasks/claim", json={"kind": "layout"}, headers=auth(WORKER_SECRET)
        )
        task = resp.json()["task"]
        if task is None:
            return
        page = client.get(f"/api/pages/{task['target_id']}", headers=auth()).json()
        resp = client.post(
            f"/api/tasks/{task['id']}/result",
            json={
                "payload": payload_for_page(page),
                "latency_ms": 42.0,
                "model_name": "mock-layout",
                "model_version": "v1",
            },
            headers=auth(WORKER_SECRET),
        )
        assert resp.status_code == 200, resp.text


def test_full_flow_layout_to_status_2_and_gating(client, project_id):
    doc = _upload(client, project_id, n_pages=2)
    _drain_layout(
        client,
        doc["id"],
        lambda page: [{"bbox": [0.1, 0.1, 0.3, 0.1], "label": "title", "confidence": 0.9}],
    )
    view = client.get(f"/api/documents/{doc['id']}", headers=auth()).json()
    assert view["status"] == 2
    assert view["can_view_layout"] is True
    assert view["can_view_ocr"] is False


def test_invalid_payload_bbox_rejected(client, project_id):
    doc = _upload(client, project_id)
    resp = client.post(
        "/api/tasks/claim", json={"kind": "layout"}, headers=auth(WORKER_SECRET)
    )
    task = resp.json()["task"]
    resp = client.post(
        f"/api/tasks/{task['id']}/result",
        json={
            "payload": [{"bbox": [1.2, 0, 0.5, 0.5], "label": "title", "confidence": 0.9}],
            "latency_ms": 1.0,
            "model_name": "m",
            "model_version": "v",
        },
        headers=auth(WORKER_SECRET),
    )
    assert resp.status_code == 400
    assert resp.json()["error"] == "PayloadShapeMismatch"
    # Task stays claimed by the worker; a corrected submission still lands.
    resp = client.post(
        f"/api/tasks/{task['id']}/result",
        json={
            "payload": [],
            "latency_ms": 1.0,
            "model_name": "m",
            "model_version": "v",
        },
        headers=auth(WORKER_SECRET),
    )
    assert resp.status_code == 200


def test_result_idempotent_retry(client, project_id):
    doc = _upload(client, project_id)
    task = client.post(
        "/api/tasks/claim", json={"kind": "layout"}, headers=auth(WORKER_SECRET)
    ).json()["task"]
    body = {
        "payload": [],
        "latency_ms": 5.0,
        "model_name": "m",
        "model_version": "v1",
    }
    first = client.post(
        f"/api/tasks/{task['id']}/result", json=body, headers=auth(WORKER_SECRET)
    ).json()
    retry = client.post(
        f"/api/tasks/{task['id']}/result", json=body, headers=auth(WORKER_SECRET)
    ).json()
    assert retry["id"] == first["id"]


def test_submit_without_claim_is_conflict(client, project_id):
    doc = _upload(client, project_id)
    task_id = None
    # Find the pending task id via the store-backed endpoint.
    task = client.post(
        "/api/tasks/claim", json={"kind": "layout"}, headers=auth(ADMIN_SECRET)
    ).json()["task"]
    resp = client.post(
        f"/api/tasks/{task['id']}/result",
        json={
            "payload": [],
            "latency_ms": 1.0,
            "model_name": "m",
            "model_version": "v",
        },
        headers=auth(WORKER_SECRET),  # different token than the claimant
    )
    assert resp.status_code == 409
    assert resp.json()["error"] == "NotClaimant"


def test_block_crud_over_http(client, project_id):
    doc = _upload(client, project_id)
    _drain_layout(
        client,
        doc["id"],
        lambda page: [{"bbox": [0.1, 0.1, 0.3, 0.1], "label": "figure", "confidence": 0.8}],
    )
    pages = client.get(f"/api/documents/{doc['id']}/pages", headers=auth()).json()["pages"]
    blocks = client.get(f"/api/pages/{pages[0]['id']}/blocks", headers=auth()).json()["blocks"]
    assert len(blocks) == 1
    block = blocks[0]
    resp = client.patch(
        f"/api/blocks/{block['id']}",
        json={"expected_version": block["version"], "label_id": "table"},
        headers=auth(),
    )
    assert resp.status_code == 200
    assert resp.json()["label_id"] == "table"
    stale = client.patch(
        f"/api/blocks/{block['id']}",
        json={"expected_version": block["version"], "label_id": "figure"},
        headers=auth(),
    )
    assert stale.status_code == 409
    assert stale.json()["error"] == "VersionConflict"
    added = client.post(
        f"/api/pages/{pages[0]['id']}/blocks",
        json={"bbox": [0.5, 0.5, 0.2, 0.1], "label_id": "content"},
        headers=auth(),
    )
    assert added.status_code == 200
    deleted = client.delete(
        f"/api/blocks/{added.json()['id']}?version=1", headers=auth()
    )
    assert deleted.status_code == 200


def test_page_image_served(client, project_id):
    doc = _upload(client, project_id)
    pages = client.get(f"/api/documents/{doc['id']}/pages", headers=auth()).json()["pages"]
    resp = client.get(f"/api/pages/{pages[0]['id']}/image", headers=auth())
    assert resp.status_code == 200
    assert resp.headers["content-type"] == "image/png"
    assert resp.content.startswith(b"\x89PNG")


def test_annotations_feed_incremental(client, project_id):
    doc = _upload(client, project_id)
    feed = client.get("/api/annotations?since=0", headers=auth(READER_SECRET)).json()
    cursor = feed["cursor"]
    pages = client.get(f"/api/documents/{doc['id']}/pages", headers=auth()).json()["pages"]
    client.post(
        f"/api/pages/{pages[0]['id']}/blocks",
        json={"bbox": [0.1, 0.1, 0.2, 0.1], "label_id": "content"},
        headers=auth(),
    )
    update = client.get(
        f"/api/annotations?since={cursor}", headers=auth(READER_SECRET)
    ).json()
    assert len(update["records"]) == 1
    assert update["records"][0]["entity_type"] == "block"
    assert update["records"][0]["entity"]["version"] == 1
    again = client.get(
        f"/api/annotations?since={update['cursor']}", headers=auth(READER_SECRET)
    ).json()
    assert again["records"] == []


def test_settings_endpoints(client, project_id):
    resp = client.put(
        f"/api/projects/{project_id}/forms",
        json={
            "form_schemas": [
                {
                    "model_name": "html",
                    "artifact_kind": "table",
                    "output_format": "html",
                    "fields": [
                        {"name": "output", "field_type": "textarea", "required": True}
                    ],
                }
            ],
            "focused_models": {"table": "html"},
        },
        headers=auth(),
    )
    assert resp.status_code == 200
    assert resp.json()["focused_models"] == {"table": "html"}
    form = client.get(
        f"/api/forms?project={project_id}&artifact_kind=table&model=html",
        headers=auth(),
    ).json()
    assert form["fields"][0]["name"] == "output"
    missing = client.get(
        f"/api/forms?project={project_id}&artifact_kind=table&model=nope",
        headers=auth(),
    )
    assert missing.status_code == 404


def test_model_registration_and_duplicate(client, project_id):
    body = {"model_name": "mock-layout", "model_version": "v1", "task_kind": "layout"}
    first = client.post("/api/models", json=body, headers=auth(ADMIN_SECRET))
    assert first.status_code == 200
    dupe = client.post("/api/models", json=body, headers=auth(ADMIN_SECRET))
    assert dupe.status_code == 409
    lacking = client.post("/api/models", json=body, headers=auth(WORKER_SECRET))
    assert lacking.status_code == 401


def test_artifact_registration_requires_form_schema(client, project_id):
    resp = client.post(
        "/api/models",
        json={"model_name": "html", "model_version": "v1", "task_kind": "table"},
        headers=auth(ADMIN_SECRET),
    )
    assert resp.status_code == 404  # no form schema configured yet
