"""Seeded random block-mask generation with constraint screening.

Graphic blocks (triangles, ellipses, rectangles) are stamped onto a blank
mask; draws violating the connected-component or area budget are rejected and
resampled, so every returned mask passes the patch constraints by
construction.
"""
from __future__ import annotations

import numpy as np

from ..patchcheck import BinaryMask, connected_components

SHAPES = ("triangle", "ellipse", "rectangle")


def _stamp_rectangle(bits: np.ndarray, rng: np.random.Generator) -> None:
    h, w = bits.shape
    bw = int(rng.integers(2, max(3, w // 4) + 1))
    bh = int(rng.integers(2, max(3, h // 4) + 1))
    x = int(rng.integers(0, w - bw + 1))
    y = int(rng.integers(0, h - bh + 1))
    bits[y : y + bh, x : x + bw] = True


def _stamp_ellipse(bits: np.ndarray, rng: np.random.Generator) -> None:
    h, w = bits.shape
    rx = int(rng.integers(2, max(3, w // 8) + 1))
    ry = int(rng.integers(2, max(3, h // 8) + 1))
    cx = int(rng.integers(rx, max(rx + 1, w - rx)))
    cy = int(rng.integers(ry, max(ry + 1, h - ry)))
    ys, xs = np.mgrid[0:h, 0:w]
    inside = ((xs + 0.5 - cx) / rx) ** 2 + ((ys + 0.5 - cy) / ry) ** 2 <= 1.0
    bits |= inside


def _stamp_triangle(bits: np.ndarray, rng: np.random.Generator) -> None:
    h, w = bits.shape
    side = int(rng.integers(4, max(5, min(h, w) // 3) + 1))
    x = int(rng.integers(0, w - side + 1))
    y = int(rng.integers(0, h - side + 1))
    for _ in range(20):
        verts = rng.uniform(0.0, side, size=(3, 2)) + np.array([x, y])
        area2 = abs(
            (verts[1, 0] - verts[0, 0]) * (verts[2, 1] - verts[0, 1])
            - (verts[2, 0] - verts[0, 0]) * (verts[1, 1] - verts[0, 1])
        )
        if area2 >= 8.0:  # skip near-degenerate draws
            break
    ys, xs = np.mgrid[y : y + side, x : x + side]
    px = xs + 0.5
    py = ys + 0.5
    inside = np.ones_like(px, dtype=bool)
    for a, b in ((0, 1), (1, 2), (2, 0)):
        ex, ey = verts[b] - verts[a]
        cross = ex * (py - verts[a, 1]) - ey * (px - verts[a, 0])
        ref = ex * (verts[3 - a - b, 1] - verts[a, 1]) - ey * (verts[3 - a - b, 0] - verts[a, 0])
        inside &= cross * ref >= 0.0
    bits[y : y + side, x : x + side] |= inside


_STAMPERS = {"rectangle": _stamp_rectangle, "ellipse": _stamp_ellipse, "triangle": _stamp_triangle}


def random_block_mask(
    width: int,
    height: int,
    count: int,
    seed: int,
    max_area: int,
    shapes: tuple[str, ...] = SHAPES,
    max_components: int = 5,
    max_tries: int = 100,
) -> BinaryMask:
    """Place `count` random graphic blocks, resampling until the mask satisfies
    the component and area budgets. Deterministic for a fixed seed."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if width < 8 or height < 8:
        raise ValueError("canvas must be at least 8x8")
    unknown = set(shapes) - set(SHAPES)
    if not shapes or unknown:
        raise ValueError(f"shapes must be drawn from {SHAPES}, got {shapes!r}")
    rng = np.random.default_rng(seed)
    for _ in range(max_tries):
        bits = np.zeros((height, width), dtype=bool)
        for _ in range(count):
            shape = shapes[int(rng.integers(len(shapes)))]
            _STAMPERS[shape](bits, rng)
        mask = BinaryMask(bits)
        report = connected_components(mask, connectivity=8)
        if report.count <= max_components and report.total_area <= max_area and report.count > 0:
            return mask
    raise ValueError(
        f"could not satisfy mask constraints (components <= {max_components}, "
        f"area <= {max_area}) within {max_tries} attempts"
    )
