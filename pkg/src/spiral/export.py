"""Training-data export.

Layout exports use the common detection-interchange layout (images /
categories / annotations, COCO-style) with boxes converted from normalized
fractions to absolute integer pixels of the rasterized page. OCR and artifact
exports are line-delimited records. By default only human-reviewed material
is included; ``include_model_only`` widens the net to unreviewed model
output.
"""

from __future__ import annotations

from typing import Optional

from .model import (
    UNLABELED_NODE_ID,
    BoundingBox,
    DocumentStatus,
    Page,
)


def bbox_to_pixels(bbox: BoundingBox, page_width_px: int, page_height_px: int) -> list[int]:
    """Normalized fractions to integer pixel box [x, y, w, h]."""
    return [
        round(bbox.x_min * page_width_px),
        round(bbox.y_min * page_height_px),
        round(bbox.width * page_width_px),
        round(bbox.height * page_height_px),
    ]


def bbox_from_pixels(box: list[float], page_width_px: int, page_height_px: int) -> BoundingBox:
    x, y, w, h = box
    return BoundingBox(
        x / page_width_px, y / page_height_px, w / page_width_px, h / page_height_px
    )


def _reviewed_documents(store, project_id: str, include_model_only: bool):
    min_status = (
        DocumentStatus.LAYOUT_DETECTED if include_model_only else DocumentStatus.LAYOUT_REVIEWED
    )
    return sorted(
        (
            d
            for d in store.documents.values()
            if d.project_id == project_id and d.status >= min_status
        ),
        key=lambda d: d.id,
    )


def export_layout(store, project_id: str, include_model_only: bool = False) -> dict:
    """Detection dataset over the project's reviewed pages.

    Blocks quarantined under the reserved unlabeled node are skipped: they
    never carried a reviewed label and would poison training.
    """
    project = store.get_project(project_id)
    nodes = [n for n in project.layout_schema.nodes if n.id != UNLABELED_NODE_ID]
    categories = [
        {"id": i + 1, "name": node.name, "source_id": node.id}
        for i, node in enumerate(nodes)
    ]
    category_index = {c["source_id"]: c["id"] for c in categories}
    images = []
    annotations = []
    image_index: dict[str, int] = {}
    with store.lock:
        for doc in _reviewed_documents(store, project_id, include_model_only):
            for page in store.pages_of(doc.id):
                image_id = len(images) + 1
                image_index[page.id] = image_id
                images.append(
                    {
                        "id": image_id,
                        "file_name": f"{page.image_blob_key}.png",
                        "width": page.width_px,
                        "height": page.height_px,
                        "source_id": page.id,
                        "document_id": doc.id,
                        "page_index": page.index,
                    }
                )
                for block in store.blocks_of(page.id):
                    if block.label_id not in category_index:
                        continue
                    annotations.append(
                        {
                            "id": len(annotations) + 1,
                            "image_id": image_id,
                            "category_id": category_index[block.label_id],
                            "bbox": bbox_to_pixels(block.bbox, page.width_px, page.height_px),
                            "area": block.bbox.area * page.width_px * page.height_px,
                            "iscrowd": 0,
                            "source_id": block.id,
                            "source": block.source.value,
                        }
                    )
    return {"images": images, "categories": categories, "annotations": annotations}


def export_ocr(store, project_id: str, include_model_only: bool = False) -> list[dict]:
    """One record per OCR'd block: page crop reference plus effective text."""
    rows = []
    with store.lock:
        for doc in _reviewed_documents(store, project_id, include_model_only):
            for page in store.pages_of(doc.id):
                for block in store.blocks_of(page.id):
                    ann = store.get_ocr_for_block(block.id)
                    if ann is None:
                        continue
                    if ann.human_text is None and not include_model_only:
                        continue
                    rows.append(
                        {
                            "block_id": block.id,
                            "page_image": page.image_blob_key,
                            "bbox_px": bbox_to_pixels(
                                block.bbox, page.width_px, page.height_px
                            ),
                            "text": ann.effective_text,
                            "human_reviewed": ann.human_text is not None,
                        }
                    )
    return rows


def export_artifacts(
    store, project_id: str, kind: str, include_model_only: bool = False
) -> list[dict]:
    """One record per annotated artifact target of the kind."""
    rows = []
    with store.lock:
        annotations = sorted(store.artifacts.values(), key=lambda a: a.id)
        for ann in annotations:
            if ann.artifact_kind != kind:
                continue
            image_ref, proj = _target_image(store, ann.target_id, ann.target_type)
            if proj != project_id:
                continue
            rows.append(
                {
                    "target_id": ann.target_id,
                    "target_type": ann.target_type,
                    "image": image_ref,
                    "focused_model": ann.focused_model,
                    "values": dict(ann.values),
                    "mode": ann.mode.value,
                    "satisfaction_rating": ann.satisfaction_rating,
                }
            )
        if include_model_only:
            annotated = {(a.target_id, a.focused_model) for a in annotations}
            for run in sorted(store.runs.values(), key=lambda r: r.id):
                if run.task_kind.value != kind:
                    continue
                if (run.target_id, run.model_name) in annotated:
                    continue
                image_ref, proj = _target_image(store, run.target_id, None)
                if proj != project_id or not isinstance(run.output_payload, dict):
                    continue
                rows.append(
                    {
                        "target_id": run.target_id,
                        "target_type": "image" if run.target_id in store.images else "block",
                        "image": image_ref,
                        "focused_model": run.model_name,
                        "values": dict(run.output_payload),
                        "mode": "model_only",
                        "satisfaction_rating": None,
                    }
                )
    return rows


def _target_image(store, target_id: str, target_type: Optional[str]):
    """(image reference, project id) for a block or standalone-image target."""
    image = store.images.get(target_id)
    if image is not None:
        return {"blob_key": image.image_blob_key}, image.project_id
    block = store.blocks.get(target_id)
    if block is None:
        return None, None
    page: Page = store.get_page(block.page_id)
    doc = store.get_document(page.document_id)
    return (
        {
            "page_image": page.image_blob_key,
            "bbox_px": bbox_to_pixels(block.bbox, page.width_px, page.height_px),
        },
        doc.project_id,
    )
