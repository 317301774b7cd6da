"""Adversarial-patch losses with analytic gradients.

Total variation (sqrt and squared forms), non-printability against a palette,
objectness suppression, targeted cross-entropy over detector anchors, and
weighted combination / model ensembling. All gradients are exact away from
the documented non-smooth points and are validated against central finite
differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TV_EPS = 1e-8
PROB_FLOOR = 1e-12

LossPart = tuple[float, np.ndarray]


@dataclass
class LossWeights:
    """Scales for the combined objective and the optimizer constants.

    alpha scales the adversarial (provider) loss, beta the total-variation
    term, gamma the non-printability term; lambdas weight per-model losses in
    an ensemble; mu is the momentum decay and step_size the optimizer step.
    """

    alpha: float = 1.0
    beta: float = 0.0
    gamma: float = 0.0
    lambdas: tuple[float, ...] = (1.0,)
    mu: float = 0.9
    step_size: float = 0.01

    def __post_init__(self) -> None:
        if min(self.alpha, self.beta, self.gamma) < 0.0:
            raise ValueError("loss scales must be non-negative")
        if max(self.alpha, self.beta, self.gamma) <= 0.0:
            raise ValueError("at least one loss scale must be positive")
        if any(l < 0.0 for l in self.lambdas):
            raise ValueError("ensemble weights must be non-negative")
        if self.mu < 0.0:
            raise ValueError("momentum decay must be >= 0")
        if self.step_size <= 0.0:
            raise ValueError("step size must be positive")


@dataclass
class AnchorSet:
    """Detector anchor outputs: objectness plus per-class scores.

    `suppress` holds the class indices whose anchors the attack targets; an
    anchor is selected when its argmax class is in `suppress` and, if
    `obj_threshold` is positive, its objectness exceeds the threshold.
    """

    objectness: np.ndarray  # (n,)
    class_scores: np.ndarray  # (n, C)
    class_names: list[str] = field(default_factory=list)
    suppress: frozenset[int] = frozenset()
    obj_threshold: float = 0.0

    def __post_init__(self) -> None:
        obj = np.asarray(self.objectness, dtype=np.float64)
        cls = np.asarray(self.class_scores, dtype=np.float64)
        if obj.ndim != 1 or cls.ndim != 2 or cls.shape[0] != obj.shape[0]:
            raise ValueError("objectness must be (n,) and class_scores (n, C)")
        if not (np.all(np.isfinite(obj)) and np.all(np.isfinite(cls))):
            raise ValueError("anchor scores must be finite")
        if not 0.0 <= self.obj_threshold <= 1.0:
            raise ValueError("obj_threshold must be in [0, 1]")
        n_classes = cls.shape[1]
        if any(not 0 <= s < n_classes for s in self.suppress):
            raise ValueError("suppress set contains an out-of-range class index")
        self.objectness = obj
        self.class_scores = cls
        self.suppress = frozenset(self.suppress)

    def class_index(self, name_or_index: int | str) -> int:
        if isinstance(name_or_index, int):
            if not 0 <= name_or_index < self.class_scores.shape[1]:
                raise ValueError(f"class index {name_or_index} out of range")
            return name_or_index
        try:
            return self.class_names.index(name_or_index)
        except ValueError as exc:
            raise ValueError(f"unknown class name {name_or_index!r}") from exc

    def selected(self) -> np.ndarray:
        """Anchors the suppression/targeting losses operate on."""
        if not self.suppress:
            raise ValueError("suppress set must be non-empty")
        mask = np.isin(np.argmax(self.class_scores, axis=1), sorted(self.suppress))
        if self.obj_threshold > 0.0:
            mask &= self.objectness > self.obj_threshold
        return mask


def _neighbor_diffs(patch: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Down and right differences, zero at the far edges."""
    dv = np.zeros_like(patch)
    dh = np.zeros_like(patch)
    dv[:-1] = patch[:-1] - patch[1:]
    dh[:, :-1] = patch[:, :-1] - patch[:, 1:]
    return dv, dh


def tv_loss(patch: np.ndarray, mode: str = "sqrt") -> LossPart:
    """Total variation of a (H, W) or (H, W, C) patch, with its gradient.

    sqrt mode follows sum_ij sqrt(down^2 + right^2 + eps) with eps=1e-8 making
    it differentiable on flat regions (a constant patch therefore scores
    H*W*sqrt(eps) instead of exactly zero). squared mode sums both squared
    differences. Channels are treated independently and summed.
    """
    patch = np.asarray(patch, dtype=np.float64)
    if patch.ndim not in (2, 3) or patch.shape[0] < 2 or patch.shape[1] < 2:
        raise ValueError("patch must be at least 2x2")
    dv, dh = _neighbor_diffs(patch)
    if mode == "sqrt":
        t = np.sqrt(dv * dv + dh * dh + TV_EPS)
        value = float(t.sum())
        gv, gh = dv / t, dh / t
    elif mode == "squared":
        value = float((dv * dv + dh * dh).sum())
        gv, gh = 2.0 * dv, 2.0 * dh
    else:
        raise ValueError(f"unknown tv mode {mode!r}")
    grad = gv + gh
    grad[1:] -= gv[:-1]
    grad[:, 1:] -= gh[:, :-1]
    return value, grad


def nps_loss(patch: np.ndarray, palette: np.ndarray) -> LossPart:
    """Non-printability: per-pixel Euclidean distance to the nearest palette color.

    The gradient flows through each pixel's nearest color; exact ties pick the
    lowest palette index, and a pixel sitting exactly on a palette color gets a
    zero (sub)gradient.
    """
    patch = np.asarray(patch, dtype=np.float64)
    palette = np.asarray(palette, dtype=np.float64)
    if patch.ndim != 3 or patch.shape[2] != 3:
        raise ValueError("patch must be (H, W, 3)")
    if palette.ndim != 2 or palette.shape[1] != 3 or palette.shape[0] == 0:
        raise ValueError("palette must be a non-empty (P, 3) array")
    diff = patch[:, :, None, :] - palette[None, None, :, :]  # (H, W, P, 3)
    dist = np.sqrt(np.einsum("hwpc,hwpc->hwp", diff, diff))
    best = np.argmin(dist, axis=2)  # lowest index wins ties
    h_idx, w_idx = np.indices(best.shape)
    best_dist = dist[h_idx, w_idx, best]
    value = float(best_dist.sum())
    best_diff = diff[h_idx, w_idx, best]  # (H, W, 3)
    safe = np.where(best_dist > 0.0, best_dist, 1.0)
    grad = np.where(best_dist[..., None] > 0.0, best_diff / safe[..., None], 0.0)
    return value, grad


def obj_loss(anchors: AnchorSet) -> LossPart:
    """Sum of objectness over the selected anchors; gradient w.r.t. objectness."""
    mask = anchors.selected()
    value = float(anchors.objectness[mask].sum())
    return value, mask.astype(np.float64)


def targeted_cls_loss(anchors: AnchorSet, target_class: int | str) -> LossPart:
    """Mean cross-entropy toward the target class over the selected anchors.

    class_scores rows must be probability vectors (sum to 1 within 1e-6).
    Probabilities are floored at 1e-12 before the log. The gradient is with
    respect to class_scores; an empty selection yields (0, zeros).
    """
    t = anchors.class_index(target_class)
    sums = anchors.class_scores.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > 1e-6) or np.any(anchors.class_scores < 0.0):
        raise ValueError("class_scores rows must be probability vectors summing to 1")
    mask = anchors.selected()
    grad = np.zeros_like(anchors.class_scores)
    n_sel = int(mask.sum())
    if n_sel == 0:
        return 0.0, grad
    p = np.maximum(anchors.class_scores[mask, t], PROB_FLOOR)
    value = float(-np.log(p).mean())
    grad[mask, t] = -1.0 / (n_sel * p)
    return value, grad


def combine_loss(parts: list[LossPart], weights: list[float] | tuple[float, ...]) -> LossPart:
    """Weighted sum of loss values and their gradients."""
    if len(parts) != len(weights):
        raise ValueError(f"{len(parts)} parts but {len(weights)} weights")
    if not parts:
        raise ValueError("no loss parts to combine")
    shape = np.asarray(parts[0][1]).shape
    for _, grad in parts[1:]:
        if np.asarray(grad).shape != shape:
            raise ValueError("gradient shape mismatch across loss parts")
    value = float(sum(w * v for (v, _), w in zip(parts, weights)))
    grad = np.zeros(shape, dtype=np.float64)
    for (_, g), w in zip(parts, weights):
        grad += w * np.asarray(g, dtype=np.float64)
    return value, grad


def ensemble_adv_loss(model_losses: list[LossPart], lambdas: list[float] | tuple[float, ...]) -> LossPart:
    """Per-model adversarial losses combined with ensemble weights lambda_i."""
    return combine_loss(model_losses, lambdas)


def load_palette(path: str | Path) -> np.ndarray:
    """Printable-color palette: one hex RGB (`#RRGGBB` or `RRGGBB`) per line."""
    colors = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        token = line.strip().lstrip("#")
        if not token:
            continue
        if len(token) != 6:
            raise ValueError(f"line {lineno}: expected 6 hex digits, got {line.strip()!r}")
        try:
            rgb = [int(token[i : i + 2], 16) / 255.0 for i in (0, 2, 4)]
        except ValueError as exc:
            raise ValueError(f"line {lineno}: invalid hex color {line.strip()!r}") from exc
        colors.append(rgb)
    if not colors:
        raise ValueError(f"{path}: empty palette")
    return np.array(colors, dtype=np.float64)
