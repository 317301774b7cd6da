"""Synthetic open-set benchmark: Gaussian blobs on known directions plus one
novel blob.

Blob centers are unit vectors sharing a common component so every pair has
cosine similarity `base_cos` (0.5 by default); with the default sigma the
center separation is 50x the blob scale, comfortably past the 10-sigma
requirement. The gallery holds labeled members of the known blobs; the probe
set mixes held-out known members with members of the novel blob (labeled
"novel"), giving a ground-truth novelty split for ROC evaluation.
"""
from __future__ import annotations

import math

import numpy as np

from .dataio import SampleRecord, SampleSet

NOVEL_LABEL = "novel"


def blob_centers(n_blobs: int, dim: int, base_cos: float = 0.5) -> np.ndarray:
    """Unit-norm centers with pairwise cosine exactly `base_cos`.

    center_i = sqrt(base_cos) * e0 + sqrt(1 - base_cos) * e_{i+1}; needs
    dim >= n_blobs + 1.
    """
    if dim < n_blobs + 1:
        raise ValueError(f"dim must be >= {n_blobs + 1} for {n_blobs} blobs")
    if not 0.0 <= base_cos < 1.0:
        raise ValueError("base_cos must be in [0, 1)")
    centers = np.zeros((n_blobs, dim))
    centers[:, 0] = math.sqrt(base_cos)
    for i in range(n_blobs):
        centers[i, i + 1] = math.sqrt(1.0 - base_cos)
    return centers


def make_blob_benchmark(
    seed: int = 0,
    dim: int = 16,
    n_known: int = 4,
    gallery_per_class: int = 40,
    probe_per_class: int = 15,
    novel_probes: int = 15,
    sigma: float = 0.02,
    base_cos: float = 0.5,
) -> tuple[SampleSet, SampleSet]:
    """(gallery, probes) for the open-set benchmark.

    Gallery: `gallery_per_class` members of each known blob, labeled m0..m{k-1}.
    Probes: `probe_per_class` held-out members per known blob plus
    `novel_probes` members of one extra blob labeled according to NOVEL_LABEL.
    The minimum center distance is sqrt(2 - 2*base_cos); sigma must keep the
    blobs at least 10 sigma apart.
    """
    separation = math.sqrt(2.0 - 2.0 * base_cos)
    if sigma <= 0.0 or separation < 10.0 * sigma:
        raise ValueError(f"blob separation {separation:.3f} is below 10*sigma={10 * sigma:.3f}")
    rng = np.random.default_rng(seed)
    centers = blob_centers(n_known + 1, dim, base_cos)

    gallery_records = []
    probe_records = []
    for b in range(n_known):
        label = f"m{b}"
        pts = centers[b] + sigma * rng.normal(size=(gallery_per_class + probe_per_class, dim))
        for i in range(gallery_per_class):
            gallery_records.append(SampleRecord(id=f"g_{label}_{i:03d}", vec=pts[i], label=label))
        for i in range(probe_per_class):
            probe_records.append(
                SampleRecord(id=f"p_{label}_{i:03d}", vec=pts[gallery_per_class + i], label=label)
            )
    novel_pts = centers[n_known] + sigma * rng.normal(size=(novel_probes, dim))
    for i in range(novel_probes):
        probe_records.append(SampleRecord(id=f"p_novel_{i:03d}", vec=novel_pts[i], label=NOVEL_LABEL))
    return SampleSet(gallery_records), SampleSet(probe_records)


def novelty_labels(probes: SampleSet) -> dict[str, int]:
    """1 for novel probes, 0 for known, keyed by probe id."""
    return {r.id: int(r.label == NOVEL_LABEL) for r in probes.records}
