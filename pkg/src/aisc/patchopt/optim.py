"""Patch optimization: momentum and Adam update rules and the frame loop.

The loop composites a resized patch into each frame's target box, obtains the
adversarial loss and its gradient from a pluggable provider, chains the
gradient back through the composite and resize onto the patch texture, adds
optional total-variation / non-printability regularizers, and steps the
optimizer. Everything is driven by one seeded generator, so runs are
bit-reproducible.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..dataio import ImageBuffer
from ..patchcheck import BinaryMask
from .geometry import Box, composite, resize_bilinear, resize_bilinear_vjp
from .losses import LossPart, LossWeights, combine_loss, ensemble_adv_loss, nps_loss, tv_loss

GRAD_L1_FLOOR = 1e-12

# provider(frame, box) -> (loss value, gradient w.r.t. the frame pixels)
LossProvider = Callable[[np.ndarray, Box], LossPart]
InputTransform = Callable[[np.ndarray, np.random.Generator], np.ndarray]


@dataclass
class PatchState:
    """Patch texture in [0, 1] plus optimizer buffers."""

    texture: np.ndarray  # (H, W, 3)
    momentum_buffer: np.ndarray
    adam_m: np.ndarray
    adam_v: np.ndarray
    step: int = 0

    def __post_init__(self) -> None:
        tex = np.asarray(self.texture, dtype=np.float64)
        if tex.ndim != 3 or tex.shape[2] != 3:
            raise ValueError("texture must be (H, W, 3)")
        if tex.min() < 0.0 or tex.max() > 1.0:
            raise ValueError("texture must lie in [0, 1]")
        for name in ("momentum_buffer", "adam_m", "adam_v"):
            buf = np.asarray(getattr(self, name), dtype=np.float64)
            if buf.shape != tex.shape:
                raise ValueError(f"{name} shape {buf.shape} != texture shape {tex.shape}")
            setattr(self, name, buf)
        self.texture = tex

    @classmethod
    def initial(cls, height: int, width: int, value: float = 0.5) -> "PatchState":
        tex = np.full((height, width, 3), float(value))
        zero = np.zeros_like(tex)
        return cls(texture=tex, momentum_buffer=zero.copy(), adam_m=zero.copy(), adam_v=zero.copy())

    @classmethod
    def random(cls, height: int, width: int, seed: int = 0) -> "PatchState":
        tex = np.random.default_rng(seed).uniform(0.0, 1.0, size=(height, width, 3))
        zero = np.zeros_like(tex)
        return cls(texture=tex, momentum_buffer=zero.copy(), adam_m=zero.copy(), adam_v=zero.copy())

    def to_image(self) -> ImageBuffer:
        """Texture quantized to 8-bit (values x255, rounded half-up)."""
        return ImageBuffer(np.floor(self.texture * 255.0 + 0.5).astype(np.uint8))


def momentum_step(state: PatchState, gradient: np.ndarray, mu: float, step_size: float) -> PatchState:
    """L1-normalized momentum with a signed step, the transfer-oriented update.

    g <- mu * g + grad / max(|grad|_1, 1e-12); texture steps by
    -step_size * sign(g) and is clamped back into [0, 1].
    """
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != state.texture.shape:
        raise ValueError(f"gradient shape {gradient.shape} != texture shape {state.texture.shape}")
    l1 = max(float(np.abs(gradient).sum()), GRAD_L1_FLOOR)
    g = mu * state.momentum_buffer + gradient / l1
    texture = np.clip(state.texture - step_size * np.sign(g), 0.0, 1.0)
    return PatchState(
        texture=texture,
        momentum_buffer=g,
        adam_m=state.adam_m.copy(),
        adam_v=state.adam_v.copy(),
        step=state.step + 1,
    )


def adam_step(
    state: PatchState,
    gradient: np.ndarray,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> PatchState:
    """Standard bias-corrected Adam on the texture, clamped back into [0, 1]."""
    gradient = np.asarray(gradient, dtype=np.float64)
    if gradient.shape != state.texture.shape:
        raise ValueError(f"gradient shape {gradient.shape} != texture shape {state.texture.shape}")
    t = state.step + 1
    m = beta1 * state.adam_m + (1.0 - beta1) * gradient
    v = beta2 * state.adam_v + (1.0 - beta2) * gradient * gradient
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    texture = np.clip(state.texture - lr * m_hat / (np.sqrt(v_hat) + eps), 0.0, 1.0)
    return PatchState(
        texture=texture,
        momentum_buffer=state.momentum_buffer.copy(),
        adam_m=m,
        adam_v=v,
        step=t,
    )


def _box_mask(shape: tuple[int, int], box: Box) -> BinaryMask:
    x1, y1, x2, y2 = box
    h, w = shape
    if not (0 <= x1 < x2 <= w and 0 <= y1 < y2 <= h):
        raise ValueError(f"box {box} does not fit a {w}x{h} frame")
    bits = np.zeros(shape, dtype=bool)
    bits[y1:y2, x1:x2] = True
    return BinaryMask(bits)


def frame_loss_and_grad(
    patch: np.ndarray,
    frame: np.ndarray,
    box: Box,
    provider: LossProvider,
    noise: np.ndarray | None = None,
    input_transform: InputTransform | None = None,
    rng: np.random.Generator | None = None,
) -> LossPart:
    """Adversarial loss for one frame and its gradient w.r.t. the patch.

    The patch is bilinearly resized to the box, composited in, optionally
    perturbed by additive noise and an input transform (both treated as
    gradient-transparent), and scored by the provider; the provider's frame
    gradient is chained back through the composite and the resize adjoint.
    """
    patch = np.asarray(patch, dtype=np.float64)
    frame = np.asarray(frame, dtype=np.float64)
    x1, y1, x2, y2 = box
    mask = _box_mask(frame.shape[:2], box)
    resized = resize_bilinear(patch, size=(y2 - y1, x2 - x1))
    canvas = np.zeros_like(frame)
    canvas[y1:y2, x1:x2] = resized
    composited = composite(frame, mask, canvas)
    if noise is not None:
        composited = composited + noise
    if input_transform is not None:
        if rng is None:
            raise ValueError("input_transform requires an rng")
        composited = input_transform(composited, rng)
    value, grad_frame = provider(composited, box)
    grad_frame = np.asarray(grad_frame, dtype=np.float64)
    if grad_frame.shape != frame.shape:
        raise ValueError(f"provider gradient shape {grad_frame.shape} != frame shape {frame.shape}")
    grad_patch = resize_bilinear_vjp(grad_frame[y1:y2, x1:x2], patch.shape)
    return float(value), grad_patch


def optimize_patch(
    frames: Sequence[tuple[ImageBuffer | np.ndarray, Box]],
    provider: LossProvider,
    weights: LossWeights,
    iterations: int,
    seed: int,
    optimizer: str = "adam",
    initial: PatchState | None = None,
    patch_size: tuple[int, int] = (32, 32),
    tv_mode: str = "sqrt",
    palette: np.ndarray | None = None,
    noise_amplitude: float = 0.0,
    input_transform: InputTransform | None = None,
) -> tuple[PatchState, list[float]]:
    """Optimize a patch over a frame set; returns the final state and the
    per-iteration mean-loss trace.

    Each iteration shuffles the frame order (seeded), computes the combined
    loss alpha * adversarial + beta * tv + gamma * nps per frame, and applies
    one optimizer step per frame. The trace records the mean combined loss of
    the frames visited within each iteration.
    """
    if not frames:
        raise ValueError("empty frames")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    if optimizer not in ("momentum", "adam"):
        raise ValueError(f"unknown optimizer {optimizer!r}")
    if weights.gamma > 0.0 and palette is None:
        raise ValueError("gamma > 0 requires a palette")
    state = initial if initial is not None else PatchState.initial(*patch_size)
    arrays = [
        (f.as_float() if isinstance(f, ImageBuffer) else np.asarray(f, dtype=np.float64), box)
        for f, box in frames
    ]
    rng = np.random.default_rng(seed)
    trace: list[float] = []
    for _ in range(iterations):
        order = rng.permutation(len(arrays))
        losses = []
        for idx in order:
            frame, box = arrays[idx]
            noise = None
            if noise_amplitude > 0.0:
                noise = rng.uniform(-noise_amplitude, noise_amplitude, size=frame.shape)
            adv = frame_loss_and_grad(
                state.texture, frame, box, provider, noise=noise, input_transform=input_transform, rng=rng
            )
            parts: list[LossPart] = [adv]
            part_weights: list[float] = [weights.alpha]
            if weights.beta > 0.0:
                parts.append(tv_loss(state.texture, tv_mode))
                part_weights.append(weights.beta)
            if weights.gamma > 0.0:
                assert palette is not None
                parts.append(nps_loss(state.texture, palette))
                part_weights.append(weights.gamma)
            value, grad = combine_loss(parts, part_weights)
            losses.append(value)
            if optimizer == "momentum":
                state = momentum_step(state, grad, weights.mu, weights.step_size)
            else:
                state = adam_step(state, grad, lr=weights.step_size)
        trace.append(float(np.mean(losses)))
    return state, trace


def make_ensemble_provider(providers: Sequence[LossProvider], lambdas: Sequence[float]) -> LossProvider:
    """Bundle per-model providers into one weighted joint-loss provider."""
    if len(providers) != len(lambdas):
        raise ValueError(f"{len(providers)} providers but {len(lambdas)} weights")

    def joint(frame: np.ndarray, box: Box) -> LossPart:
        return ensemble_adv_loss([p(frame, box) for p in providers], list(lambdas))

    return joint


def save_trace_csv(trace: Sequence[float], path: str | Path) -> None:
    """Loss trace as CSV `iter,loss`."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iter", "loss"])
        for i, value in enumerate(trace):
            writer.writerow([i, repr(float(value))])
