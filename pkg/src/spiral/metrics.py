"""Evaluation metrics: IoU, AP/mAP for detection, CER/WER for OCR,
time-reduction arithmetic, and the dashboard aggregation.

Everything here is pure and reentrant; the service layer feeds it plain data.

AP is all-points interpolated: precision is replaced by its running maximum
from the right before integrating over recall. mAP averages AP over every
(label, IoU threshold) pair, pooling matches across images per label;
labels with no ground truth anywhere are excluded from the mean.
"""

from __future__ import annotations

import math
import re
import unicodedata
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

from .errors import EmptyReference, NonpositiveBaseline, NoGroundTruth
from .model import BoundingBox

__all__ = [
    "Detection",
    "iou",
    "match_predictions",
    "average_precision",
    "mean_average_precision",
    "canonical_text",
    "levenshtein",
    "cer",
    "wer",
    "time_reduction",
    "DashboardRow",
    "RunObservation",
    "AnnotationObservation",
    "dashboard_rows",
]


@dataclass(frozen=True)
class Detection:
    """One box instance; confidence present on predictions only."""

    bbox: BoundingBox
    label_id: str
    confidence: Optional[float] = None
    id: Optional[str] = None


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection area over union area; 0 for disjoint boxes.

    All areas derive from corner coordinates so identical boxes yield exactly
    1.0 (mixing width*height with corner differences loses that in float
    arithmetic).
    """
    ax2, ay2 = a.x_min + a.width, a.y_min + a.height
    bx2, by2 = b.x_min + b.width, b.y_min + b.height
    ix = min(ax2, bx2) - max(a.x_min, b.x_min)
    iy = min(ay2, by2) - max(a.y_min, b.y_min)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    area_a = (ax2 - a.x_min) * (ay2 - a.y_min)
    area_b = (bx2 - b.x_min) * (by2 - b.y_min)
    union = area_a + area_b - inter
    return inter / union if union > 0 else 0.0


def _rank_key(pred: Detection, index: int):
    conf = pred.confidence if pred.confidence is not None else 0.0
    tiebreak = pred.id if pred.id is not None else f"{index:09d}"
    return (-conf, tiebreak)


def match_predictions(
    predictions: Sequence[Detection],
    ground_truth: Sequence[Detection],
    iou_threshold: float,
) -> list[tuple[Detection, Optional[Detection]]]:
    """Greedy one-to-one matching in confidence order.

    Predictions are ranked by confidence descending (ties by id); each takes
    the unmatched same-label ground truth with the highest IoU at or above the
    threshold. Returns (prediction, matched ground truth or None) in rank
    order.
    """
    if not 0 < iou_threshold <= 1:
        raise ValueError("iou_threshold must be in (0, 1]")
    ranked = sorted(enumerate(predictions), key=lambda p: _rank_key(p[1], p[0]))
    taken: set[int] = set()
    out: list[tuple[Detection, Optional[Detection]]] = []
    for _, pred in ranked:
        best_i = None
        best_iou = 0.0
        for gi, gt in enumerate(ground_truth):
            if gi in taken or gt.label_id != pred.label_id:
                continue
            overlap = iou(pred.bbox, gt.bbox)
            if overlap >= iou_threshold and overlap > best_iou:
                best_i, best_iou = gi, overlap
        if best_i is None:
            out.append((pred, None))
        else:
            taken.add(best_i)
            out.append((pred, ground_truth[best_i]))
    return out


def average_precision(
    matches: Sequence[tuple[Detection, Optional[Detection]]],
    n_ground_truth: int,
) -> float:
    """Area under the interpolated precision-recall curve.

    ``matches`` must already be in rank order (as produced by
    match_predictions). Defined as 1.0 when there is neither ground truth nor
    any prediction, and 0.0 when predictions exist but no ground truth does.
    """
    if n_ground_truth < 0:
        raise ValueError("n_ground_truth must be >= 0")
    if n_ground_truth == 0:
        return 1.0 if not matches else 0.0
    if not matches:
        return 0.0
    tp = 0
    recalls: list[float] = []
    precisions: list[float] = []
    for k, (_, gt) in enumerate(matches, start=1):
        if gt is not None:
            tp += 1
        recalls.append(tp / n_ground_truth)
        precisions.append(tp / k)
    # Right-to-left running max turns the raw curve into its envelope.
    envelope = list(precisions)
    for i in range(len(envelope) - 2, -1, -1):
        envelope[i] = max(envelope[i], envelope[i + 1])
    ap = 0.0
    prev_recall = 0.0
    for r, p in zip(recalls, envelope):
        ap += (r - prev_recall) * p
        prev_recall = r
    return ap


def mean_average_precision(
    predictions_by_image: Mapping[str, Sequence[Detection]],
    ground_truth_by_image: Mapping[str, Sequence[Detection]],
    labels: Sequence[str],
    iou_thresholds: Sequence[float] = (0.5,),
) -> float:
    """Mean AP over (label, threshold) pairs with per-label pooled matching.

    Matching runs per image; the ranked results pool across images per label
    before the PR curve is integrated. Labels with zero ground truth across
    the dataset are excluded; raises NoGroundTruth when every label is empty.
    """
    if not labels:
        raise ValueError("labels must be nonempty")
    image_ids = sorted(set(predictions_by_image) | set(ground_truth_by_image))
    gt_counts = {label: 0 for label in labels}
    for img in image_ids:
        for gt in ground_truth_by_image.get(img, ()):
            if gt.label_id in gt_counts:
                gt_counts[gt.label_id] += 1
    scored_labels = [label for label in labels if gt_counts[label] > 0]
    if not scored_labels:
        raise NoGroundTruth("no label has any ground truth instance")
    aps: list[float] = []
    for label in scored_labels:
        for threshold in iou_thresholds:
            pooled: list[tuple[tuple, tuple[Detection, Optional[Detection]]]] = []
            for img in image_ids:
                preds = [
                    d
                    for d in predictions_by_image.get(img, ())
                    if d.label_id == label
                ]
                gts = [
                    d
                    for d in ground_truth_by_image.get(img, ())
                    if d.label_id == label
                ]
                for idx, entry in enumerate(match_predictions(preds, gts, threshold)):
                    conf = entry[0].confidence if entry[0].confidence is not None else 0.0
                    tiebreak = entry[0].id if entry[0].id is not None else f"{idx:09d}"
                    pooled.append(((-conf, img, tiebreak), entry))
            pooled.sort(key=lambda item: item[0])
            ranked = [entry for _, entry in pooled]
            aps.append(average_precision(ranked, gt_counts[label]))
    return math.fsum(aps) / len(aps)


# ---------------------------------------------------------------------------
# OCR error rates


_NEWLINES = re.compile(r"[\r\n]+")


def canonical_text(text: str) -> str:
    """Composed normal form with newline runs collapsed to single spaces."""
    return unicodedata.normalize("NFC", _NEWLINES.sub(" ", text))


def levenshtein(a: Sequence, b: Sequence) -> int:
    """Unit-cost edit distance between two sequences (two-row DP)."""
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, start=1):
        cur = [i]
        for j, cb in enumerate(b, start=1):
            cost = 0 if ca == cb else 1
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + cost))
        prev = cur
    return prev[-1]


def cer(reference: str, hypothesis: str) -> float:
    """Character-level edit distance over reference length."""
    ref = canonical_text(reference)
    hyp = canonical_text(hypothesis)
    if not ref:
        raise EmptyReference("reference text is empty")
    return levenshtein(ref, hyp) / len(ref)


def wer(reference: str, hypothesis: str) -> float:
    """Token-level edit distance over reference token count.

    Tokens split on whitespace runs; punctuation stays attached. Can exceed
    1.0 when the hypothesis inserts more tokens than the reference holds.
    """
    ref_tokens = canonical_text(reference).split()
    hyp_tokens = canonical_text(hypothesis).split()
    if not ref_tokens:
        raise EmptyReference("reference contains no tokens")
    return levenshtein(ref_tokens, hyp_tokens) / len(ref_tokens)


def time_reduction(baseline_s_per_page: float, assisted_s_per_page: float) -> float:
    """Fraction of per-page time saved relative to the unassisted baseline."""
    if baseline_s_per_page <= 0:
        raise NonpositiveBaseline("baseline seconds per page must be positive")
    return (baseline_s_per_page - assisted_s_per_page) / baseline_s_per_page


# ---------------------------------------------------------------------------
# Dashboard aggregation


@dataclass(frozen=True)
class RunObservation:
    model_name: str
    model_version: str
    output_type: str
    latency_ms: float


@dataclass(frozen=True)
class AnnotationObservation:
    model_name: str
    model_version: str
    output_type: str
    mode: str
    satisfaction: Optional[int] = None


@dataclass(frozen=True)
class DashboardRow:
    model_name: str
    model_version: str
    output_type: str
    mean_latency_ms: Optional[float]
    mean_satisfaction: Optional[float]
    n_annotated: int
    n_reviewed: int
    quality: Optional[float] = None


def _mean(values: list[float]) -> Optional[float]:
    # fsum computes the exact sum, so the mean is input-order independent.
    return math.fsum(values) / len(values) if values else None


def dashboard_rows(
    runs: Iterable[RunObservation],
    annotations: Iterable[AnnotationObservation],
    quality: Optional[Mapping[tuple[str, str, str], float]] = None,
) -> list[DashboardRow]:
    """One row per (output_type, model, version) group.

    Means are absent (None), never zero, for groups with no latency samples
    or no rated annotations. ``quality`` optionally supplies a per-group
    quality figure (mAP or CER, computed by the caller where ground truth
    exists).
    """
    groups: dict[tuple[str, str, str], dict] = {}

    def bucket(key):
        return groups.setdefault(
            key, {"latencies": [], "ratings": [], "annotated": 0, "reviewed": 0}
        )

    for run in runs:
        key = (run.output_type, run.model_name, run.model_version)
        bucket(key)["latencies"].append(run.latency_ms)
    for ann in annotations:
        key = (ann.output_type, ann.model_name, ann.model_version)
        b = bucket(key)
        b["annotated"] += 1
        if ann.mode == "review":
            b["reviewed"] += 1
        if ann.satisfaction is not None:
            b["ratings"].append(float(ann.satisfaction))
    rows = []
    for key in sorted(groups):
        output_type, name, version = key
        b = groups[key]
        rows.append(
            DashboardRow(
                model_name=name,
                model_version=version,
                output_type=output_type,
                mean_latency_ms=_mean(b["latencies"]),
                mean_satisfaction=_mean(b["ratings"]),
                n_annotated=b["annotated"],
                n_reviewed=b["reviewed"],
                quality=(quality or {}).get(key),
            )
        )
    return rows
