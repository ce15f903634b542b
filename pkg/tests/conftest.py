import io

import pytest
from fastapi.testclient import TestClient
from reportlab.pdfgen.canvas import Canvas

from spiral.api import build_app
from spiral.config import AppConfig, TokenConfig
from spiral.service import AnnotationService

HUMAN_SECRET = "human-secret"
WORKER_SECRET = "worker-secret"
ADMIN_SECRET = "admin-secret"
READER_SECRET = "reader-secret"
UI_SECRET = "ui-secret"

TOKENS = (
    TokenConfig("human", HUMAN_SECRET, frozenset({"annotate", "read_data"})),
    TokenConfig("worker", WORKER_SECRET, frozenset({"submit_results"})),
    TokenConfig(
        "admin",
        ADMIN_SECRET,
        frozenset({"annotate", "read_data", "manage_models", "submit_results"}),
    ),
    TokenConfig("reader", READER_SECRET, frozenset({"read_data"})),
    TokenConfig("ui", UI_SECRET, frozenset({"annotate"})),
)


def make_pdf(n_pages=1, size=(612, 792), rects=()):
    """Small deterministic PDF; rects are (x, y, w, h, gray) in points."""
    buf = io.BytesIO()
    canvas = Canvas(buf, pagesize=size, invariant=1, pageCompression=0)
    for _ in range(n_pages):
        for x, y, w, h, gray in rects:
            canvas.setFillGray(gray)
            canvas.rect(x, y, w, h, fill=1, stroke=0)
        canvas.showPage()
    canvas.save()
    return buf.getvalue()


@pytest.fixture
def service():
    svc = AnnotationService(AppConfig(ingest_workers=0, raster_dpi=36, tokens=TOKENS))
    yield svc
    svc.close()


@pytest.fixture
def project(service):
    return service.create_project("test project", "tester")


@pytest.fixture
def client(service):
    with TestClient(build_app(service), raise_server_exceptions=False) as c:
        yield c


def auth(secret=HUMAN_SECRET):
    return {"Authorization": f"Bearer {secret}"}
