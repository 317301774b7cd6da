"""A minimal differentiable stand-in for a detector.

Objectness is the sigmoid of a fixed seeded linear functional of the target
box's pixels. The weight field lives on a reference grid, is smoothed so it
survives resizing to different box sizes, and is rescaled per box so the
response magnitude is stable across scales. This is just enough model to
exercise the full composite / resize / gradient chain end to end.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from ..dataio import ImageBuffer
from .geometry import Box, gaussian_smooth, resize_bilinear
from .losses import LossPart
from .optim import PatchState, frame_loss_and_grad


class ToyDetector:
    """provider-compatible callable: (frame, box) -> (objectness, frame gradient)."""

    def __init__(
        self,
        seed: int = 0,
        ref_shape: tuple[int, int] = (32, 32),
        weight_scale: float = 24.0,
        bias: float = 2.0,
        smooth_sigma: float = 2.0,
    ):
        rng = np.random.default_rng(seed)
        field = rng.normal(size=(ref_shape[0], ref_shape[1], 3))
        field = gaussian_smooth(field, smooth_sigma)
        field -= field.mean()
        field *= weight_scale / np.abs(field).sum()
        self.weights = field
        self.bias = float(bias)
        self.ref_area = ref_shape[0] * ref_shape[1]

    def _box_weights(self, box: Box) -> np.ndarray:
        x1, y1, x2, y2 = box
        w = resize_bilinear(self.weights, size=(y2 - y1, x2 - x1))
        return w * (self.ref_area / ((y2 - y1) * (x2 - x1)))

    def objectness(self, frame: np.ndarray, box: Box) -> float:
        x1, y1, x2, y2 = box
        w = self._box_weights(box)
        z = float((w * np.asarray(frame, dtype=np.float64)[y1:y2, x1:x2]).sum()) + self.bias
        return float(1.0 / (1.0 + np.exp(-z)))

    def __call__(self, frame: np.ndarray, box: Box) -> LossPart:
        frame = np.asarray(frame, dtype=np.float64)
        x1, y1, x2, y2 = box
        w = self._box_weights(box)
        z = float((w * frame[y1:y2, x1:x2]).sum()) + self.bias
        obj = 1.0 / (1.0 + np.exp(-z))
        grad = np.zeros_like(frame)
        grad[y1:y2, x1:x2] = obj * (1.0 - obj) * w
        return float(obj), grad


def mean_objectness(
    detector: ToyDetector,
    frames: Sequence[tuple[ImageBuffer | np.ndarray, Box]],
    patch: PatchState | np.ndarray,
) -> float:
    """Average objectness over frames with the patch composited in (no noise)."""
    texture = patch.texture if isinstance(patch, PatchState) else np.asarray(patch, dtype=np.float64)
    total = 0.0
    for frame, box in frames:
        arr = frame.as_float() if isinstance(frame, ImageBuffer) else np.asarray(frame, dtype=np.float64)
        value, _ = frame_loss_and_grad(texture, arr, box, detector)
        total += value
    return total / len(frames)
