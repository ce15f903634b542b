"""Document status state machine and UI gating rules.

Status only ever advances one step at a time:

    1 Uploaded -> 2 LayoutDetected -> 3 LayoutReviewed -> 4 Processed
      -> 5 OutputsReviewed

Steps 2->3 and 4->5 are human-gated; workers and the system may only drive
the model-result steps. Every accepted transition is appended to the audit
log by the store.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from .errors import ActorMismatch, IllegalTransition
from .model import Actor, Document, DocumentStatus


class EventKind(str, enum.Enum):
    LAYOUT_RESULTS_COMPLETE = "layout_results_complete"
    HUMAN_LAYOUT_SAVED = "human_layout_saved"
    DOWNSTREAM_COMPLETE = "downstream_complete"
    HUMAN_OUTPUTS_SAVED = "human_outputs_saved"


HUMAN_GATED = frozenset({EventKind.HUMAN_LAYOUT_SAVED, EventKind.HUMAN_OUTPUTS_SAVED})

TRANSITIONS: dict[tuple[DocumentStatus, EventKind], DocumentStatus] = {
    (DocumentStatus.UPLOADED, EventKind.LAYOUT_RESULTS_COMPLETE): DocumentStatus.LAYOUT_DETECTED,
    (DocumentStatus.LAYOUT_DETECTED, EventKind.HUMAN_LAYOUT_SAVED): DocumentStatus.LAYOUT_REVIEWED,
    (DocumentStatus.LAYOUT_REVIEWED, EventKind.DOWNSTREAM_COMPLETE): DocumentStatus.PROCESSED,
    (DocumentStatus.PROCESSED, EventKind.HUMAN_OUTPUTS_SAVED): DocumentStatus.OUTPUTS_REVIEWED,
}


@dataclass(frozen=True)
class LifecycleEvent:
    kind: EventKind
    document_id: str
    actor: Actor


def next_status(status: DocumentStatus, event: LifecycleEvent) -> DocumentStatus:
    """Status after applying the event, or raise.

    ActorMismatch when a non-human fires a human-gated event; IllegalTransition
    for any (status, event) pairing outside the four legal steps.
    """
    if event.kind in HUMAN_GATED and event.actor != Actor.HUMAN:
        raise ActorMismatch(
            f"{event.kind.value} requires a human actor, got {event.actor.value}"
        )
    target = TRANSITIONS.get((status, event.kind))
    if target is None:
        raise IllegalTransition(
            f"event {event.kind.value} not legal at status {int(status)}"
        )
    return target


def can_view_layout(document: Document) -> bool:
    """Layout review becomes available once layout detection completed."""
    return document.status >= DocumentStatus.LAYOUT_DETECTED


def can_view_ocr(document: Document) -> bool:
    """OCR/output review becomes available once downstream processing completed."""
    return document.status >= DocumentStatus.PROCESSED
