"""Official competition scoring: ROC-AUC, the deepfake final score, the face
attack success rate, and the driving per-object and total scores."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import DetectionLog, ImageBuffer, VerdictMatrix

DRIVING_PATCH_WIDTH = 2790
DRIVING_PATCH_HEIGHT = 1260
MAX_DRIVING_REGIONS = 5

DEEPFAKE_WEIGHTS = (0.6, 0.3, 0.1)  # precision@5, AUC, subjective
DRIVING_TOTAL_WEIGHTS = (0.8, 0.2)  # truck, mannequin


class VoidResultError(ValueError):
    """The submission violates a hard constraint and scores void."""


@dataclass
class DeepfakeScoreInput:
    precision5: float
    auc: float
    subjective: float

    def __post_init__(self) -> None:
        for name in ("precision5", "auc", "subjective"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} out of range [0, 1]")


@dataclass
class DrivingScoreInput:
    log: DetectionLog
    patch: ImageBuffer
    connected_region_count: int

    def __post_init__(self) -> None:
        if self.patch.width != DRIVING_PATCH_WIDTH or self.patch.height != DRIVING_PATCH_HEIGHT:
            raise ValueError(
                f"driving patch must be {DRIVING_PATCH_WIDTH}x{DRIVING_PATCH_HEIGHT}, "
                f"got {self.patch.width}x{self.patch.height}"
            )
        if self.connected_region_count < 0:
            raise ValueError("connected_region_count must be non-negative")


def roc_auc(scores: list[float] | np.ndarray, labels: list[int] | np.ndarray) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic.

    Equals the fraction of (positive, negative) pairs ranked correctly, with
    ties counted as half. Computed from midranks in O(n log n), which matches
    explicit pair counting exactly.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-D and the same length")
    if not set(np.unique(labels)).issubset({0, 1}):
        raise ValueError("labels must be 0 or 1")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("AUC needs at least one positive and one negative")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0  # midrank, 1-based
        i = j + 1
    rank_sum_pos = float(ranks[labels == 1].sum())
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def deepfake_final_score(inp: DeepfakeScoreInput) -> float:
    """0.6 * precision@5 + 0.3 * AUC + 0.1 * subjective."""
    w_p, w_a, w_s = DEEPFAKE_WEIGHTS
    return w_p * inp.precision5 + w_a * inp.auc + w_s * inp.subjective


def face_attack_score(verdicts: VerdictMatrix) -> float:
    """Attack success rate averaged over the three models and all face pairs."""
    return float(verdicts.verdicts.mean())


def patch_area_term(patch: ImageBuffer, area_mode: str = "channel_mean") -> float:
    """The area bonus 0.2 * (1 - |m/255|_1 / (2790*1260)), clamped to [0, 0.2].

    `channel_mean` (default) reads the L1 mass per pixel as the mean of the
    three channels, so an all-white patch zeroes the bonus exactly.
    `channel_sum` follows the printed formula literally, summing all channels
    over the per-pixel denominator; an all-white patch then drives the bracket
    to 1 - 3, which the clamp cuts off at zero.
    """
    mass = patch.array.astype(np.float64).sum() / 255.0
    if area_mode == "channel_mean":
        mass /= 3.0
    elif area_mode != "channel_sum":
        raise ValueError(f"unknown area_mode {area_mode!r}")
    bonus = 0.2 * (1.0 - mass / (DRIVING_PATCH_WIDTH * DRIVING_PATCH_HEIGHT))
    return float(np.clip(bonus, 0.0, 0.2))


def driving_object_score(inp: DrivingScoreInput, area_mode: str = "channel_mean") -> float:
    """Per-object driving score: detection-suppression average plus area bonus.

    Void (raises VoidResultError) when the patch has more than 5 connected
    regions. The detection part is the fraction of frames in which a model
    detects zero target-class objects, averaged over 2 models and 5 scenes.
    """
    if inp.connected_region_count > MAX_DRIVING_REGIONS:
        raise VoidResultError(
            f"void result: patch has {inp.connected_region_count} connected regions (max {MAX_DRIVING_REGIONS})"
        )
    suppressed = float((inp.log.counts == 0).mean())
    return suppressed + patch_area_term(inp.patch, area_mode)


def driving_total_score(truck: float, person: float) -> float:
    """0.8 * truck score + 0.2 * mannequin score."""
    if not (np.isfinite(truck) and np.isfinite(person)):
        raise ValueError("scores must be finite")
    w_t, w_p = DRIVING_TOTAL_WEIGHTS
    return w_t * truck + w_p * person
