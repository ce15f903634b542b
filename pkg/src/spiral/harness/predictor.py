"""Deterministic mock predictors standing in for trained models.

The layout predictor degrades the ground truth: boxes get Gaussian jitter,
labels flip, blocks drop, and the occasional spurious box appears. The OCR
predictor corrupts ground-truth text character by character. Retraining is
modeled by multiplying every noise parameter by the decay factor each
iteration, so predictions sharpen as the loop accrues verified data.

All randomness derives from string-seeded generators keyed on
(seed, role, iteration, page, block), making every prediction a pure
function of the configuration: claim order and thread interleaving cannot
change what a worker submits.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, replace

from ..errors import ConfigInvalid
from ..model import BoundingBox

_ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789 "


@dataclass(frozen=True)
class MockPredictorConfig:
    seed: int = 0
    box_noise_sigma: float = 0.035
    label_flip_prob: float = 0.25
    miss_prob: float = 0.25
    char_error_prob: float = 0.15
    decay: float = 0.6

    def check(self):
        for name in ("label_flip_prob", "miss_prob", "char_error_prob"):
            value = getattr(self, name)
            if not 0 <= value <= 1:
                raise ConfigInvalid(f"{name} must be in [0,1], got {value}")
        if self.box_noise_sigma < 0:
            raise ConfigInvalid("box_noise_sigma must be >= 0")
        if not 0 < self.decay <= 1:
            raise ConfigInvalid("decay must be in (0,1]")
        return self


def decayed(config: MockPredictorConfig, iteration: int) -> MockPredictorConfig:
    """Noise parameters after `iteration` retraining rounds."""
    factor = config.decay**iteration
    return replace(
        config,
        box_noise_sigma=config.box_noise_sigma * factor,
        label_flip_prob=config.label_flip_prob * factor,
        miss_prob=config.miss_prob * factor,
        char_error_prob=config.char_error_prob * factor,
    )


def _clamp(value: float, lo: float, hi: float) -> float:
    return max(lo, min(hi, value))


def _jitter_bbox(rng: random.Random, bbox: BoundingBox, sigma: float) -> BoundingBox:
    w = _clamp(bbox.width + rng.gauss(0, sigma), 0.02, 1.0)
    h = _clamp(bbox.height + rng.gauss(0, sigma), 0.02, 1.0)
    x = _clamp(bbox.x_min + rng.gauss(0, sigma), 0.0, 1.0 - w)
    y = _clamp(bbox.y_min + rng.gauss(0, sigma), 0.0, 1.0 - h)
    return BoundingBox(round(x, 6), round(y, 6), round(w, 6), round(h, 6))


def predict_layout(config: MockPredictorConfig, page, labels, iteration: int) -> list[dict]:
    """Noisy layout predictions for one corpus page, in wire form."""
    rng = random.Random(f"{config.seed}:layout:{iteration}:{page.index}")
    preds: list[dict] = []
    for block in page.blocks:
        if rng.random() < config.miss_prob:
            continue
        bbox = _jitter_bbox(rng, block.bbox, config.box_noise_sigma)
        label = block.label_id
        if rng.random() < config.label_flip_prob and len(labels) > 1:
            label = rng.choice([l for l in labels if l != label])
        confidence = round(_clamp(rng.gauss(0.8, 0.08), 0.05, 0.99), 4)
        preds.append({"bbox": bbox.as_list(), "label": label, "confidence": confidence})
    # Spurious detections shrink along with the miss rate.
    if rng.random() < config.miss_prob * 0.5:
        w = rng.uniform(0.05, 0.2)
        h = rng.uniform(0.03, 0.1)
        preds.append(
            {
                "bbox": [
                    round(rng.uniform(0, 1 - w), 6),
                    round(rng.uniform(0, 1 - h), 6),
                    round(w, 6),
                    round(h, 6),
                ],
                "label": rng.choice(list(labels)),
                "confidence": round(rng.uniform(0.05, 0.6), 4),
            }
        )
    return preds


def corrupt_text(
    config: MockPredictorConfig, text: str, iteration: int, page_index: int, block_index: int
) -> str:
    """Character-level noise: substitute, drop, or insert with equal shares."""
    rng = random.Random(f"{config.seed}:ocr:{iteration}:{page_index}:{block_index}")
    out: list[str] = []
    for ch in text:
        if rng.random() >= config.char_error_prob:
            out.append(ch)
            continue
        kind = rng.random()
        if kind < 1 / 3:
            out.append(rng.choice(_ALPHABET))
        elif kind < 2 / 3:
            pass  # dropped
        else:
            out.append(ch)
            out.append(rng.choice(_ALPHABET))
    return "".join(out)


def predict_artifact_values(
    config: MockPredictorConfig,
    schema_fields,
    text: str,
    iteration: int,
    page_index: int,
    block_index: int,
) -> dict:
    """Prefill values for an artifact form: corrupted text in every text field."""
    noisy = corrupt_text(config, text, iteration, page_index, block_index)
    values: dict = {}
    for field in schema_fields:
        kind = field.field_type.value
        if kind in ("text", "textarea"):
            values[field.name] = noisy
        elif kind == "number":
            values[field.name] = len(noisy)
        elif kind == "boolean":
            values[field.name] = True
        elif kind == "list_of_text":
            values[field.name] = noisy.split()[:3]
        else:
            values[field.name] = {"raw": noisy}
    return values
