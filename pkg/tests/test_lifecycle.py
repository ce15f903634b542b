import random
import threading

import pytest

from spiral.errors import ActorMismatch, IllegalTransition
from spiral.lifecycle import (
    EventKind,
    LifecycleEvent,
    can_view_layout,
    can_view_ocr,
    next_status,
)
from spiral.model import Actor, DocumentStatus, SourceFormat
from spiral.store import Store
from spiral.model import Document, utcnow


def _doc(status):
    return Document(
        id="d",
        project_id="p",
        original_filename="f.pdf",
        source_format=SourceFormat.PDF,
        status=DocumentStatus(status),
        page_count=1,
        pdf_blob_key="k",
        created_at=utcnow(),
    )


def _event(kind, actor=Actor.WORKER):
    return LifecycleEvent(kind, "d", actor)


def test_layout_complete_advances_1_to_2():
    assert next_status(DocumentStatus.UPLOADED, _event(EventKind.LAYOUT_RESULTS_COMPLETE)) == 2


def test_downstream_complete_advances_3_to_4():
    assert (
        next_status(DocumentStatus.LAYOUT_REVIEWED, _event(EventKind.DOWNSTREAM_COMPLETE)) == 4
    )


def test_skipping_human_review_is_illegal():
    with pytest.raises(IllegalTransition):
        next_status(DocumentStatus.LAYOUT_DETECTED, _event(EventKind.DOWNSTREAM_COMPLETE))


def test_worker_cannot_fire_human_gated_steps():
    for kind in (EventKind.HUMAN_LAYOUT_SAVED, EventKind.HUMAN_OUTPUTS_SAVED):
        for actor in (Actor.WORKER, Actor.SYSTEM):
            with pytest.raises(ActorMismatch):
                next_status(DocumentStatus.LAYOUT_DETECTED, _event(kind, actor))


def test_human_gated_steps_with_human_actor():
    assert (
        next_status(
            DocumentStatus.LAYOUT_DETECTED, _event(EventKind.HUMAN_LAYOUT_SAVED, Actor.HUMAN)
        )
        == 3
    )
    assert (
        next_status(
            DocumentStatus.PROCESSED, _event(EventKind.HUMAN_OUTPUTS_SAVED, Actor.HUMAN)
        )
        == 5
    )


@pytest.mark.parametrize(
    "status,layout,ocr",
    [(1, False, False), (2, True, False), (3, True, False), (4, True, True), (5, True, True)],
)
def test_view_gates(status, layout, ocr):
    doc = _doc(status)
    assert can_view_layout(doc) is layout
    assert can_view_ocr(doc) is ocr


def _store_with_doc():
    store = Store()
    from spiral.model import Project, default_layout_schema

    store.put_project(
        Project(id="p", name="p", owner="o", layout_schema=default_layout_schema())
    )
    store.put_document(_doc(1))
    return store


LEGAL_ORDER = [
    LifecycleEvent(EventKind.LAYOUT_RESULTS_COMPLETE, "d", Actor.WORKER),
    LifecycleEvent(EventKind.HUMAN_LAYOUT_SAVED, "d", Actor.HUMAN),
    LifecycleEvent(EventKind.DOWNSTREAM_COMPLETE, "d", Actor.WORKER),
    LifecycleEvent(EventKind.HUMAN_OUTPUTS_SAVED, "d", Actor.HUMAN),
]


def test_audit_log_records_full_legal_walk():
    store = _store_with_doc()
    for event in LEGAL_ORDER:
        store.apply_lifecycle_event(event)
    trace = [(r.from_status, r.to_status) for r in store.audit_for("d")]
    assert trace == [(1, 2), (2, 3), (3, 4), (4, 5)]
    actors = [r.actor for r in store.audit_for("d")]
    assert actors == ["worker", "human", "worker", "human"]


def test_random_event_sequences_never_break_the_prefix_property():
    rng = random.Random(42)
    kinds = list(EventKind)
    for trial in range(100):
        store = _store_with_doc()
        for _ in range(12):
            kind = rng.choice(kinds)
            actor = rng.choice(list(Actor))
            try:
                store.apply_lifecycle_event(LifecycleEvent(kind, "d", actor))
            except (IllegalTransition, ActorMismatch):
                pass
        trace = [r.from_status for r in store.audit_for("d")] + (
            [store.audit_for("d")[-1].to_status] if store.audit_for("d") else []
        )
        assert trace == [1, 2, 3, 4, 5][: len(trace)]
        assert store.get_document("d").status == (trace[-1] if trace else 1)


def test_concurrent_duplicate_events_yield_exactly_one_transition():
    store = _store_with_doc()
    results = []
    barrier = threading.Barrier(2)

    def fire():
        barrier.wait()
        try:
            store.apply_lifecycle_event(
                LifecycleEvent(EventKind.LAYOUT_RESULTS_COMPLETE, "d", Actor.WORKER)
            )
            results.append("ok")
        except IllegalTransition:
            results.append("conflict")

    threads = [threading.Thread(target=fire) for _ in range(2)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(results) == ["conflict", "ok"]
    assert store.get_document("d").status == 2
    assert len(store.audit_for("d")) == 1
