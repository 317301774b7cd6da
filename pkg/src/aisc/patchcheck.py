"""Perturbation extraction and connected-domain validation for patch constraints.

The face track caps a submission at 5 connected perturbation regions totaling
at most 1254 pixels (10% of 112x112); the driving track caps the region count
at 5. Components are labeled by union-find over row runs, which is equivalent
to the classic two-pass pixel sweep but far cheaper on large masks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataio import ImageBuffer

FACE_SIZE = 112
FACE_MAX_COMPONENTS = 5
FACE_MAX_AREA = 1254  # 112 * 112 * 10%


@dataclass
class BinaryMask:
    """Boolean raster, True where a pixel is perturbed / covered."""

    bits: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.bits, dtype=bool)
        if arr.ndim != 2:
            raise ValueError(f"mask must be 2-D, got shape {arr.shape}")
        self.bits = arr

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def area(self) -> int:
        return int(self.bits.sum())


@dataclass
class Component:
    pixel_count: int
    bounding_box: tuple[int, int, int, int]  # (x0, y0, x1, y1), inclusive


@dataclass
class ComponentReport:
    components: list[Component]
    total_area: int
    valid: bool = True

    @property
    def count(self) -> int:
        return len(self.components)


def extract_perturbation(adv: ImageBuffer, orig: ImageBuffer) -> BinaryMask:
    """Mask of pixels where any channel differs between the two images."""
    if (adv.width, adv.height) != (orig.width, orig.height):
        raise ValueError(
            f"size mismatch: {adv.width}x{adv.height} vs {orig.width}x{orig.height}"
        )
    return BinaryMask(np.any(adv.array != orig.array, axis=2))


def _find(parent: list[int], x: int) -> int:
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


def _union(parent: list[int], a: int, b: int) -> None:
    ra, rb = _find(parent, a), _find(parent, b)
    if ra != rb:
        if rb < ra:
            ra, rb = rb, ra
        parent[rb] = ra  # keep the smaller id, i.e. the earlier run in scan order


def connected_components(mask: BinaryMask, connectivity: int = 8) -> ComponentReport:
    """Label connected regions of the mask under 4- or 8-adjacency.

    Components are ordered by their first pixel in row-major scan order (the
    top-left pixel of each region), which makes the report deterministic.
    """
    if connectivity not in (4, 8):
        raise ValueError("connectivity must be 4 or 8")
    bits = mask.bits
    h, w = bits.shape
    reach = 0 if connectivity == 4 else 1  # extra diagonal overlap for 8-adjacency

    # Runs are maximal horizontal segments of True pixels, numbered in scan order.
    run_row: list[int] = []
    run_x0: list[int] = []
    run_x1: list[int] = []
    parent: list[int] = []
    prev_first = 0  # run-id range of the previous row: [prev_first, row_first)
    row_first = 0
    pad = np.zeros((h, 1), dtype=bool)
    padded = np.hstack([pad, bits, pad])
    changes_by_row = [np.flatnonzero(padded[y, 1:] != padded[y, :-1]) for y in range(h)]
    for y in range(h):
        changes = changes_by_row[y]
        starts = changes[0::2]
        ends = changes[1::2] - 1  # inclusive
        prev_first, row_first = row_first, len(parent)
        p = prev_first
        for x0, x1 in zip(starts.tolist(), ends.tolist()):
            rid = len(parent)
            parent.append(rid)
            run_row.append(y)
            run_x0.append(x0)
            run_x1.append(x1)
            # union with every run in the previous row that overlaps (or touches
            # diagonally under 8-adjacency); two-pointer sweep, both run lists
            # are sorted by x
            while p < row_first and run_x1[p] < x0 - reach:
                p += 1
            q = p
            while q < row_first and run_x0[q] <= x1 + reach:
                _union(parent, rid, q)
                q += 1
            if q > p:
                p = q - 1  # the last overlapping run may also touch the next run of this row

    stats: dict[int, list[int]] = {}  # root -> [count, x0, y0, x1, y1]
    order: list[int] = []
    for rid in range(len(parent)):
        root = _find(parent, rid)
        length = run_x1[rid] - run_x0[rid] + 1
        st = stats.get(root)
        if st is None:
            stats[root] = [length, run_x0[rid], run_row[rid], run_x1[rid], run_row[rid]]
            order.append(root)
        else:
            st[0] += length
            if run_x0[rid] < st[1]:
                st[1] = run_x0[rid]
            if run_x1[rid] > st[3]:
                st[3] = run_x1[rid]
            st[4] = run_row[rid]  # runs arrive in scan order, row is non-decreasing
    order.sort()  # root id == earliest run id == top-left pixel in scan order
    components = [
        Component(pixel_count=stats[r][0], bounding_box=(stats[r][1], stats[r][2], stats[r][3], stats[r][4]))
        for r in order
    ]
    total = sum(c.pixel_count for c in components)
    return ComponentReport(components=components, total_area=total)


def validate_face_patch(adv: ImageBuffer, orig: ImageBuffer, connectivity: int = 8) -> ComponentReport:
    """Face-track constraint check: at most 5 regions and 1254 perturbed pixels."""
    for name, img in (("adversarial", adv), ("original", orig)):
        if (img.width, img.height) != (FACE_SIZE, FACE_SIZE):
            raise ValueError(f"{name} image must be {FACE_SIZE}x{FACE_SIZE}, got {img.width}x{img.height}")
    report = connected_components(extract_perturbation(adv, orig), connectivity)
    report.valid = report.count <= FACE_MAX_COMPONENTS and report.total_area <= FACE_MAX_AREA
    return report
