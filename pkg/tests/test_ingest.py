import io
import sys
import zipfile

import pytest
from PIL import Image

from spiral import pdf as spdf
from spiral.config import AppConfig, ConverterConfig
from spiral.errors import (
    AdapterMissing,
    ConfigInvalid,
    ConversionFailed,
    CorruptArchive,
    EmptyFile,
    RasterizationFailed,
    UndecodableImage,
    UnsupportedFormat,
    ZipBomb,
)
from spiral.ingest import infer_format, iter_archive, pick_converter, run_converter
from spiral.model import DocumentStatus, SourceFormat, TaskKind
from spiral.service import AnnotationService

from conftest import TOKENS, make_pdf

PNG_1PX = None


def _png_bytes(size=(4, 4)):
    buf = io.BytesIO()
    Image.new("RGB", size, "white").save(buf, format="PNG")
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Format inference


def test_pdf_inference():
    assert infer_format("report.pdf", b"%PDF-1.4 x") == SourceFormat.PDF


def test_docx_is_word_by_extension_within_zip_magic():
    assert infer_format("notes.docx", b"PK\x03\x04rest") == SourceFormat.WORD
    assert infer_format("deck.pptx", b"PK\x03\x04rest") == SourceFormat.POWERPOINT
    assert infer_format("sheet.xlsx", b"PK\x03\x04rest") == SourceFormat.EXCEL


def test_markdown_and_text():
    assert infer_format("readme.md", b"# title\n") == SourceFormat.MARKDOWN
    assert infer_format("notes.txt", b"plain words") == SourceFormat.TEXT


def test_image_magic():
    assert infer_format("scan.png", _png_bytes()) == SourceFormat.IMAGE


def test_unknown_extension_rejected():
    with pytest.raises(UnsupportedFormat):
        infer_format("archive.bin", b"\x00\x01\x02\x03")


def test_mismatched_magic_fails_closed():
    # .pdf extension but PNG content
    with pytest.raises(UnsupportedFormat):
        infer_format("fake.pdf", _png_bytes())
    # .docx extension but plain text content
    with pytest.raises(UnsupportedFormat):
        infer_format("fake.docx", b"just words")


def test_empty_file_rejected():
    with pytest.raises(EmptyFile):
        infer_format("a.pdf", b"")


# ---------------------------------------------------------------------------
# Upload and rasterization


def _service(**cfg):
    base = dict(ingest_workers=0, raster_dpi=36, tokens=TOKENS)
    base.update(cfg)
    return AnnotationService(AppConfig(**base))


def test_upload_pdf_rasterizes_and_schedules_layout_tasks():
    svc = _service()
    project = svc.create_project("p", "o")
    doc = svc.upload_document(project.id, "report.pdf", make_pdf(n_pages=3))
    doc = svc.store.get_document(doc.id)
    assert doc.status == DocumentStatus.UPLOADED
    assert doc.source_format == SourceFormat.PDF
    assert doc.page_count == 3
    pages = svc.store.pages_of(doc.id)
    assert [p.index for p in pages] == [0, 1, 2]
    tasks = svc.store.tasks_for_document(doc.id, TaskKind.LAYOUT)
    assert len(tasks) == 3 and all(t.state.value == "pending" for t in tasks)


def test_dimensions_at_150_dpi_letter():
    svc = _service(raster_dpi=150)
    project = svc.create_project("p", "o")
    doc = svc.upload_document(project.id, "letter.pdf", make_pdf(size=(8.5 * 72, 11 * 72)))
    page = svc.store.pages_of(doc.id)[0]
    # 8.5in x 11in at 150 dpi
    assert (page.width_px, page.height_px) == (1275, 1650)


def test_malformed_pdf_leaves_document_at_status_1():
    svc = _service()
    project = svc.create_project("p", "o")
    doc = svc.upload_document(project.id, "bad.pdf", b"%PDF-1.4 garbage no pages")
    stored = svc.store.get_document(doc.id)
    assert stored.status == DocumentStatus.UPLOADED
    assert stored.page_count == 0
    with pytest.raises(RasterizationFailed):
        svc.rasterize(stored)


def test_same_bytes_twice_share_one_blob():
    svc = _service()
    project = svc.create_project("p", "o")
    data = make_pdf()
    d1 = svc.upload_document(project.id, "a.pdf", data)
    d2 = svc.upload_document(project.id, "b.pdf", data)
    assert d1.id != d2.id
    assert d1.pdf_blob_key == d2.pdf_blob_key


def test_blob_round_trip_and_idempotent_put():
    svc = _service()
    key1 = svc.blobs.put(b"same bytes")
    key2 = svc.blobs.put(b"same bytes")
    assert key1 == key2
    assert svc.blobs.get(key1) == b"same bytes"


# ---------------------------------------------------------------------------
# Archives


def _zip(members: dict[str, bytes]) -> bytes:
    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w") as z:
        for name, data in members.items():
            z.writestr(name, data)
    return buf.getvalue()


def test_archive_of_pdfs_uploads_each():
    svc = _service()
    project = svc.create_project("p", "o")
    pdf = make_pdf()
    docs, skipped = svc.upload_archive(
        project.id, _zip({"a.pdf": pdf, "b.pdf": pdf, "c.pdf": pdf})
    )
    assert len(docs) == 3 and not skipped
    assert all(d.status == DocumentStatus.UPLOADED for d in docs)


def test_archive_reports_disallowed_members_without_failing():
    svc = _service()
    project = svc.create_project("p", "o")
    pdf = make_pdf()
    docs, skipped = svc.upload_archive(
        project.id, _zip({"a.pdf": pdf, "b.pdf": pdf, "tool.exe": b"MZ\x90\x00"})
    )
    assert len(docs) == 2
    assert [s.name for s in skipped] == ["tool.exe"]


def test_corrupt_archive():
    with pytest.raises(CorruptArchive):
        iter_archive(b"definitely not a zip", 1 << 20, 100)


def test_zip_bomb_by_declared_size():
    big = _zip({"big.txt": b"x" * 100_000})
    with pytest.raises(ZipBomb):
        iter_archive(big, max_bytes=10_000, max_members=100)


def test_zip_bomb_by_member_count():
    many = _zip({f"f{i}.txt": b"x" for i in range(20)})
    with pytest.raises(ZipBomb):
        iter_archive(many, max_bytes=1 << 20, max_members=10)


# ---------------------------------------------------------------------------
# Converter adapter


FAKE_CONVERTER = (
    f"{sys.executable} -c "
    '"import sys,shutil;'
    "from reportlab.pdfgen.canvas import Canvas;"
    "c=Canvas(sys.argv[2],pagesize=(612,792),invariant=1);c.showPage();c.save()\" "
    "{input} {output}"
)


def test_convert_markdown_via_adapter():
    conv = ConverterConfig(frozenset({"markdown"}), FAKE_CONVERTER, timeout_s=30)
    svc = _service(converters=(conv,))
    project = svc.create_project("p", "o")
    doc = svc.upload_document(project.id, "notes.md", b"# hi\n")
    stored = svc.store.get_document(doc.id)
    assert stored.source_format == SourceFormat.MARKDOWN
    assert stored.pdf_blob_key is not None
    assert stored.page_count == 1  # converted then rasterized


def test_converter_timeout_is_conversion_failed():
    conv = ConverterConfig(
        frozenset({"text"}),
        f"{sys.executable} -c \"import time;time.sleep(5)\" {{input}} {{output}}",
        timeout_s=0.2,
    )
    with pytest.raises(ConversionFailed, match="exceeded"):
        run_converter(conv, SourceFormat.TEXT, b"words")


def test_converter_nonzero_exit():
    conv = ConverterConfig(
        frozenset({"text"}),
        f"{sys.executable} -c \"import sys;sys.exit(3)\" {{input}} {{output}}",
        timeout_s=10,
    )
    with pytest.raises(ConversionFailed, match="exited 3"):
        run_converter(conv, SourceFormat.TEXT, b"words")


def test_converter_non_pdf_output_rejected():
    conv = ConverterConfig(
        frozenset({"text"}),
        f"{sys.executable} -c \"import sys;open(sys.argv[2],'w').write('nope')\" {{input}} {{output}}",
        timeout_s=10,
    )
    with pytest.raises(ConversionFailed, match="not a PDF"):
        run_converter(conv, SourceFormat.TEXT, b"words")


def test_missing_adapter_surfaces():
    with pytest.raises(AdapterMissing):
        pick_converter(AppConfig(), SourceFormat.IMAGE)


def test_adapter_must_not_claim_pdf():
    with pytest.raises(ConfigInvalid):
        ConverterConfig(frozenset({"pdf"}), "x {input} {output}")


# ---------------------------------------------------------------------------
# Standalone images


def test_standalone_image_creates_artifact_task():
    svc = _service()
    project = svc.create_project("p", "o")
    image = svc.upload_standalone_image(project.id, _png_bytes(), "table")
    tasks = [t for t in svc.store.tasks.values() if t.target_id == image.id]
    assert len(tasks) == 1 and tasks[0].kind == TaskKind.TABLE


def test_standalone_image_kind_routing():
    svc = _service()
    project = svc.create_project("p", "o")
    image = svc.upload_standalone_image(project.id, _png_bytes(), "formula")
    tasks = [t for t in svc.store.tasks.values() if t.target_id == image.id]
    assert tasks[0].kind == TaskKind.FORMULA


def test_truncated_image_rejected():
    svc = _service()
    project = svc.create_project("p", "o")
    with pytest.raises(UndecodableImage):
        svc.upload_standalone_image(project.id, _png_bytes()[:20], "figure")


# ---------------------------------------------------------------------------
# PDF parsing corner cases


def test_parse_rejects_non_pdf():
    with pytest.raises(RasterizationFailed):
        spdf.parse_pdf(b"not a pdf at all")


def test_parse_multi_page_order_and_rects():
    data = make_pdf(n_pages=2, rects=[(72, 72, 144, 72, 0.25)])
    pages = spdf.parse_pdf(data)
    assert len(pages) == 2
    assert pages[0].width_pt == 612 and pages[0].height_pt == 792
    assert len(pages[0].rects) == 1
    rect = pages[0].rects[0]
    assert (rect.x, rect.y, rect.width, rect.height) == (72, 72, 144, 72)
    assert rect.gray == 0.25


def test_render_flips_y_and_scales():
    data = make_pdf(rects=[(0, 0, 72, 72, 0.0)])  # bottom-left black square
    page = spdf.parse_pdf(data)[0]
    img = spdf.render_page(page, 72)
    assert img.size == (612, 792)
    assert img.getpixel((36, 792 - 36)) == 0  # bottom-left in image space
    assert img.getpixel((36, 36)) == 255  # top-left stays white
