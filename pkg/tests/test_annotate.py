import pytest

from spiral.errors import (
    ActorMismatch,
    IllegalTransition,
    InvalidBox,
    NodeInUse,
    OutOfRange,
    SchemaInvalid,
    SchemaNotFound,
    UnknownBlock,
    UnknownLabel,
    VersionConflict,
)
from spiral.model import (
    Actor,
    AnnotationMode,
    BlockSource,
    BoundingBox,
    DocumentStatus,
    FieldSpec,
    FieldType,
    FormSchema,
    LabelNode,
    LayoutSchema,
    TaskKind,
    UNLABELED_NODE_ID,
)

from conftest import make_pdf


@pytest.fixture
def page(service, project):
    doc = service.upload_document(project.id, "doc.pdf", make_pdf())
    return service.store.pages_of(doc.id)[0]


def _pred(x, y, w, h, label, conf=0.9):
    return {"bbox": [x, y, w, h], "label": label, "confidence": conf}


def test_apply_predictions_persists_model_blocks(service, page):
    blocks = service.apply_layout_predictions(
        page.id, [_pred(0.1, 0.1, 0.3, 0.1, "title", 0.92)]
    )
    assert len(blocks) == 1
    assert blocks[0].label_id == "title"
    assert blocks[0].source == BlockSource.MODEL
    assert blocks[0].confidence == 0.92


def test_unknown_label_quarantined_as_unlabeled(service, page):
    blocks = service.apply_layout_predictions(
        page.id, [_pred(0.1, 0.1, 0.3, 0.1, "stamp")]
    )
    assert blocks[0].label_id == UNLABELED_NODE_ID


def test_empty_predictions_clear_model_blocks_keep_human(service, page):
    human_block = service.add_block(page.id, BoundingBox(0.5, 0.5, 0.2, 0.1), "content")
    service.apply_layout_predictions(page.id, [_pred(0.1, 0.1, 0.3, 0.1, "title")])
    service.apply_layout_predictions(page.id, [])
    remaining = service.store.blocks_of(page.id)
    assert [b.id for b in remaining] == [human_block.id]


def test_reapplying_predictions_replaces_model_preserves_human(service, page):
    service.apply_layout_predictions(page.id, [_pred(0.1, 0.1, 0.3, 0.1, "title")])
    human_block = service.add_block(page.id, BoundingBox(0.5, 0.5, 0.2, 0.1), "content")
    service.apply_layout_predictions(page.id, [_pred(0.2, 0.2, 0.3, 0.1, "figure")])
    blocks = service.store.blocks_of(page.id)
    assert len(blocks) == 2
    sources = {b.id: b.source for b in blocks}
    assert sources[human_block.id] == BlockSource.HUMAN
    labels = sorted(b.label_id for b in blocks)
    assert labels == ["content", "figure"]


def test_update_block_relabel_makes_it_human(service, page):
    [block] = service.apply_layout_predictions(
        page.id, [_pred(0.1, 0.1, 0.3, 0.1, "figure")]
    )
    updated = service.update_block(block.id, expected_version=1, label_id="table")
    assert updated.version == 2
    assert updated.source == BlockSource.HUMAN
    assert updated.confidence is None


def test_update_block_stale_version(service, page):
    [block] = service.apply_layout_predictions(
        page.id, [_pred(0.1, 0.1, 0.3, 0.1, "figure")]
    )
    service.update_block(block.id, expected_version=1, label_id="table")
    with pytest.raises(VersionConflict):
        service.update_block(block.id, expected_version=1, label_id="figure")


def test_add_block_degenerate_box_rejected(service, page):
    with pytest.raises(InvalidBox):
        service.add_block(page.id, BoundingBox(0.1, 0.1, 0.0, 0.2), "content")


def test_add_block_unknown_label(service, page):
    with pytest.raises(UnknownLabel):
        service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.2), "nope")


def test_delete_block_requires_current_version(service, page):
    block = service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.2), "content")
    with pytest.raises(VersionConflict):
        service.delete_block(block.id, expected_version=7)
    receipt = service.delete_block(block.id, expected_version=1)
    assert receipt["deleted"] == block.id
    with pytest.raises(UnknownBlock):
        service.store.get_block(block.id)


# ---------------------------------------------------------------------------
# Schema management


def test_define_schema_adds_child_label(service, project):
    schema = project.layout_schema
    extended = LayoutSchema(
        schema.nodes + (LabelNode("patient-name", "patient name", parent_id="content"),)
    )
    updated = service.define_schema(project.id, extended)
    assert updated.layout_schema.node("patient-name") is not None


def test_define_schema_refuses_removing_node_in_use(service, project, page):
    service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.2), "table")
    pruned = LayoutSchema(
        tuple(n for n in project.layout_schema.nodes if n.id != "table")
    )
    with pytest.raises(NodeInUse):
        service.define_schema(project.id, pruned)


def test_define_schema_rejects_duplicate_siblings(service, project):
    bad = LayoutSchema((LabelNode("x", "same"), LabelNode("y", "same")))
    with pytest.raises(SchemaInvalid):
        service.define_schema(project.id, bad)


def test_define_schema_always_keeps_unlabeled_node(service, project):
    minimal = LayoutSchema((LabelNode("only", "only"),))
    updated = service.define_schema(project.id, minimal)
    assert updated.layout_schema.node(UNLABELED_NODE_ID) is not None


# ---------------------------------------------------------------------------
# Layout review and downstream routing


def _reach_status_2(service, doc_id):
    for task in service.store.tasks_for_document(doc_id, TaskKind.LAYOUT):
        claimed = service.store.claim_task(TaskKind.LAYOUT, "w", 60)
        service.submit_result("w", claimed.id, [], 10.0, "m", "v1")


def test_save_layout_review_routes_by_downstream_task(service, project):
    doc = service.upload_document(project.id, "doc.pdf", make_pdf())
    page = service.store.pages_of(doc.id)[0]
    _reach_status_2(service, doc.id)
    service.add_block(page.id, BoundingBox(0.05, 0.05, 0.2, 0.1), "content")
    service.add_block(page.id, BoundingBox(0.05, 0.25, 0.2, 0.1), "content")
    service.add_block(page.id, BoundingBox(0.05, 0.45, 0.2, 0.1), "table")
    service.add_block(page.id, BoundingBox(0.05, 0.65, 0.2, 0.1), "figure")
    tasks = service.save_layout_review(doc.id, Actor.HUMAN)
    kinds = sorted(t.kind.value for t in tasks)
    assert kinds == ["figure", "ocr", "ocr", "table"]
    assert service.store.get_document(doc.id).status == DocumentStatus.LAYOUT_REVIEWED


def test_save_layout_review_wrong_status(service, project):
    doc = service.upload_document(project.id, "doc.pdf", make_pdf())
    with pytest.raises(IllegalTransition):
        service.save_layout_review(doc.id, Actor.HUMAN)


def test_save_layout_review_requires_human(service, project):
    doc = service.upload_document(project.id, "doc.pdf", make_pdf())
    _reach_status_2(service, doc.id)
    with pytest.raises(ActorMismatch):
        service.save_layout_review(doc.id, Actor.WORKER)


def test_vacuous_downstream_completion_jumps_to_4(service, project):
    # Only unlabeled blocks (downstream none): zero tasks, so processing is
    # complete the moment the review is saved.
    doc = service.upload_document(project.id, "doc.pdf", make_pdf())
    page = service.store.pages_of(doc.id)[0]
    _reach_status_2(service, doc.id)
    service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.2), UNLABELED_NODE_ID)
    tasks = service.save_layout_review(doc.id, Actor.HUMAN)
    assert tasks == []
    assert service.store.get_document(doc.id).status == DocumentStatus.PROCESSED


# ---------------------------------------------------------------------------
# OCR editing


def _ocr_block(service, project):
    doc = service.upload_document(project.id, "doc.pdf", make_pdf())
    page = service.store.pages_of(doc.id)[0]
    _reach_status_2(service, doc.id)
    block = service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.2), "content")
    service.save_layout_review(doc.id, Actor.HUMAN)
    task = service.store.claim_task(TaskKind.OCR, "w", 60)
    service.submit_result("w", task.id, "he1lo", 5.0, "ocr-model", "v1")
    return block


def test_edit_ocr_correction_preserves_model_text(service, project):
    block = _ocr_block(service, project)
    ann = service.ocr_for_block(block.id)
    assert ann.model_text == "he1lo"
    updated = service.edit_ocr_text(block.id, "hello", expected_version=ann.version)
    assert updated.human_text == "hello"
    assert updated.model_text == "he1lo"
    assert updated.effective_text == "hello"
    assert updated.version == ann.version + 1


def test_confirming_model_text_records_human_text(service, project):
    block = _ocr_block(service, project)
    ann = service.ocr_for_block(block.id)
    updated = service.edit_ocr_text(block.id, ann.model_text, expected_version=ann.version)
    assert updated.human_text == "he1lo"  # explicit confirmation, not absence


def test_edit_ocr_stale_version(service, project):
    block = _ocr_block(service, project)
    ann = service.ocr_for_block(block.id)
    service.edit_ocr_text(block.id, "hello", expected_version=ann.version)
    with pytest.raises(VersionConflict):
        service.edit_ocr_text(block.id, "other", expected_version=ann.version)


def test_edit_ocr_unknown_block(service, project, page):
    block = service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.2), "content")
    with pytest.raises(UnknownBlock):
        service.edit_ocr_text(block.id, "text", expected_version=1)


# ---------------------------------------------------------------------------
# Reading order


def test_reading_order_y_then_x_then_id(service, page):
    low = service.add_block(page.id, BoundingBox(0.1, 0.5, 0.2, 0.1), "content")
    top_right = service.add_block(page.id, BoundingBox(0.6, 0.1, 0.2, 0.1), "content")
    top_left = service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.1), "content")
    order = service.block_reading_order(page.id)
    assert order == [top_left.id, top_right.id, low.id]


def test_reading_order_identical_boxes_total_order(service, page):
    a = service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.1), "content")
    b = service.add_block(page.id, BoundingBox(0.1, 0.1, 0.2, 0.1), "content")
    order = service.block_reading_order(page.id)
    assert order == sorted([a.id, b.id])
    assert service.block_reading_order(page.id) == order  # stable on re-query


# ---------------------------------------------------------------------------
# Artifact annotation and ratings


@pytest.fixture
def table_project(service, project):
    return service.configure_forms(
        project.id,
        form_schemas=(
            FormSchema(
                "html", "table", "html",
                (FieldSpec("output", FieldType.TEXTAREA, required=True),),
            ),
        ),
        focused_models={"table": "html"},
    )


def test_submit_artifact_annotation_round_trip(service, table_project):
    image = service.upload_standalone_image(table_project.id, _png(), "table")
    ann = service.submit_artifact_annotation(
        image.id, "html", {"output": "<table>1</table>"}, AnnotationMode.ANNOTATION
    )
    assert ann.version == 1
    again = service.submit_artifact_annotation(
        image.id,
        "html",
        {"output": "<table>2</table>"},
        AnnotationMode.REVIEW,
        expected_version=1,
    )
    assert again.version == 2 and again.values["output"] == "<table>2</table>"


def test_submit_artifact_unknown_schema(service, table_project):
    image = service.upload_standalone_image(table_project.id, _png(), "table")
    with pytest.raises(SchemaNotFound):
        service.submit_artifact_annotation(
            image.id, "nope", {"output": "x"}, AnnotationMode.ANNOTATION
        )


def test_rate_satisfaction_bounds_and_overwrite(service, table_project):
    image = service.upload_standalone_image(table_project.id, _png(), "table")
    ann = service.submit_artifact_annotation(
        image.id, "html", {"output": "x"}, AnnotationMode.REVIEW
    )
    with pytest.raises(OutOfRange):
        service.rate_satisfaction(ann.id, 0)
    with pytest.raises(OutOfRange):
        service.rate_satisfaction(ann.id, 6)
    service.rate_satisfaction(ann.id, 3)
    rated = service.rate_satisfaction(ann.id, 4)
    assert rated.satisfaction_rating == 4


def test_bulk_list_filters_and_cursor(service, table_project):
    images = [
        service.upload_standalone_image(table_project.id, _png(seed=i), "table")
        for i in range(5)
    ]
    service.submit_artifact_annotation(
        images[0].id, "html", {"output": "x"}, AnnotationMode.ANNOTATION
    )
    items, _ = service.bulk_list_artifacts(table_project.id, "table", annotated=False)
    assert [i["target_id"] for i in items] == sorted(img.id for img in images[1:])
    # Cursor pagination: two pages of 2 then 1, no duplicates or skips.
    seen = []
    cursor = None
    while True:
        page_items, cursor = service.bulk_list_artifacts(
            table_project.id, "table", cursor=cursor, limit=2
        )
        seen.extend(i["target_id"] for i in page_items)
        if cursor is None:
            break
    assert seen == sorted(img.id for img in images)


def test_bulk_list_empty_project(service, table_project):
    items, cursor = service.bulk_list_artifacts(table_project.id, "figure")
    assert items == [] and cursor is None


def test_generate_form_prefills_from_latest_run(service, table_project):
    image = service.upload_standalone_image(table_project.id, _png(), "table")
    task = service.store.claim_task(TaskKind.TABLE, "w", 60)
    service.submit_result(
        "w", task.id, {"output": "<table>model</table>"}, 8.0, "html", "v1"
    )
    spec = service.generate_form_for(table_project.id, "table", "html", target_id=image.id)
    assert spec.fields[0].prefill == "<table>model</table>"


def _png(seed=0):
    import io

    from PIL import Image

    buf = io.BytesIO()
    Image.new("L", (4 + seed, 4), color=200).save(buf, format="PNG")
    return buf.getvalue()
