"""Semi-supervised clustering and pseudo-label assignment for open-set attribution.

Plain k-means and the constrained variant both run Lloyd's algorithm with
k-means++ seeding from an explicit seed, so results are bit-reproducible.
In the constrained variant the labeled samples are pinned to their class
cluster for every iteration; only the unlabeled assignments move.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .dataio import SampleRecord, SampleSet

IterationCallback = Callable[[int, np.ndarray, np.ndarray], None]


@dataclass
class Clustering:
    """Result of a Lloyd run: centroids, per-sample assignment, and the inertia trace."""

    k: int
    centroids: np.ndarray  # (k, D)
    assignment: dict[str, int]
    inertia: float
    inertia_trace: list[float]
    n_iter: int
    cluster_labels: dict[int, str] = field(default_factory=dict)


@dataclass
class PseudoLabelReport:
    accepted: dict[str, str]
    rejected: list[str]
    top_frac: float
    min_class_count: int
    min_score: float


def l2_normalize(vec: np.ndarray) -> np.ndarray:
    vec = np.asarray(vec, dtype=np.float64)
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        raise ValueError("cannot normalize zero-norm vector")
    return vec / norm


def l2_normalize_set(samples: SampleSet) -> SampleSet:
    """Copy of the set with every embedding scaled to unit L2 norm."""
    return SampleSet(
        [SampleRecord(id=r.id, vec=l2_normalize(r.vec), label=r.label) for r in samples.records]
    )


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, shape (n_points, n_centroids)."""
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _kmeanspp_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Standard k-means++ seeding: subsequent centers drawn proportionally to D^2."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = points[first]
    d2 = np.einsum("ij,ij->i", points - centers[0], points - centers[0])
    for c in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = int(rng.integers(n))  # all mass on existing centers; any point works
        else:
            idx = int(rng.choice(n, p=d2 / total))
        centers[c] = points[idx]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", points - centers[c], points - centers[c]))
    return centers


def _repair_empty(
    assign: np.ndarray,
    points: np.ndarray,
    centroids: np.ndarray,
    repairable: np.ndarray,
    movable: np.ndarray,
) -> None:
    """Reseed each empty repairable cluster at the movable point farthest from its centroid."""
    counts = np.bincount(assign, minlength=centroids.shape[0])
    for c in np.flatnonzero((counts == 0) & repairable):
        dist = np.einsum("ij,ij->i", points - centroids[assign], points - centroids[assign])
        dist[~movable] = -1.0
        singles = np.bincount(assign, minlength=centroids.shape[0]) == 1
        dist[singles[assign]] = -1.0  # never empty another cluster
        far = int(np.argmax(dist))
        if dist[far] < 0.0:
            continue  # nothing safe to move; leave the cluster empty
        assign[far] = c


def _lloyd(
    points: np.ndarray,
    centroids: np.ndarray,
    fixed_assign: np.ndarray,
    fixed_mask: np.ndarray,
    repairable: np.ndarray,
    max_iter: int,
    tol: float,
    iteration_callback: IterationCallback | None,
) -> tuple[np.ndarray, np.ndarray, list[float], int]:
    """Lloyd iterations with optional pinned assignments.

    `fixed_mask[i]` pins sample i to `fixed_assign[i]`; `repairable[c]` marks
    clusters eligible for the empty-cluster reseed (never the pinned class
    clusters, which cannot empty). Inertia is recorded per iteration against
    the freshly updated centroids, which makes the trace non-increasing.
    """
    k = centroids.shape[0]
    assign = fixed_assign.copy()
    trace: list[float] = []
    n_iter = 0
    for it in range(max_iter):
        n_iter = it + 1
        d2 = _sq_dists(points, centroids)
        assign = np.where(fixed_mask, fixed_assign, np.argmin(d2, axis=1))
        _repair_empty(assign, points, centroids, repairable, movable=~fixed_mask)
        new_centroids = centroids.copy()
        for c in range(k):
            members = assign == c
            if members.any():
                new_centroids[c] = points[members].mean(axis=0)
        shift = float(np.sqrt(np.max(np.einsum("ij,ij->i", new_centroids - centroids, new_centroids - centroids))))
        centroids = new_centroids
        inertia = float(np.einsum("ij,ij->", points - centroids[assign], points - centroids[assign]))
        trace.append(inertia)
        if iteration_callback is not None:
            iteration_callback(it, assign.copy(), centroids.copy())
        if shift < tol:
            break
    return centroids, assign, trace, n_iter


def kmeans(
    data: SampleSet,
    k: int,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-8,
    iteration_callback: IterationCallback | None = None,
) -> Clustering:
    """Plain k-means (k-means++ seeding, Lloyd), deterministic for a fixed seed."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(data):
        raise ValueError(f"k={k} exceeds sample count {len(data)}")
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    points = data.matrix()
    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(points, k, rng)
    no_fix = np.zeros(len(data), dtype=bool)
    centroids, assign, trace, n_iter = _lloyd(
        points,
        centroids,
        fixed_assign=np.zeros(len(data), dtype=np.int64),
        fixed_mask=no_fix,
        repairable=np.ones(k, dtype=bool),
        max_iter=max_iter,
        tol=tol,
        iteration_callback=iteration_callback,
    )
    assignment = {r.id: int(c) for r, c in zip(data.records, assign)}
    return Clustering(k=k, centroids=centroids, assignment=assignment, inertia=trace[-1], inertia_trace=trace, n_iter=n_iter)


def ss_kmeans(
    labeled: SampleSet,
    unlabeled: SampleSet | None,
    k_extra: int = 0,
    seed: int = 0,
    max_iter: int = 100,
    tol: float = 1e-8,
    iteration_callback: IterationCallback | None = None,
) -> Clustering:
    """Constrained Lloyd for semi-supervised attribution.

    Each labeled class owns one cluster, initialized at the class mean, and its
    labeled members never leave it. `k_extra` novel clusters are seeded by
    k-means++ over the unlabeled data only. Cluster indices 0..n_classes-1 map
    to class labels in sorted order (see `cluster_labels`).
    """
    if k_extra < 0:
        raise ValueError("k_extra must be >= 0")
    if any(r.label is None for r in labeled.records):
        raise ValueError("labeled set contains a record without a label")
    classes = sorted({r.label for r in labeled.records})  # type: ignore[type-var]
    if not classes:
        raise ValueError("labeled set has no classes")
    k = len(classes) + k_extra
    n_total = len(labeled) + (len(unlabeled) if unlabeled is not None else 0)
    if k > n_total:
        raise ValueError(f"k={k} exceeds total sample count {n_total}")
    if k_extra > 0 and unlabeled is None:
        raise ValueError("k_extra > 0 requires unlabeled data to seed novel clusters")
    if unlabeled is not None and unlabeled.dim != labeled.dim:
        raise ValueError(f"dimension mismatch: labeled {labeled.dim} vs unlabeled {unlabeled.dim}")
    if unlabeled is not None:
        overlap = set(labeled.ids) & set(unlabeled.ids)
        if overlap:
            raise ValueError(f"id(s) present in both labeled and unlabeled sets: {sorted(overlap)[:5]}")

    class_index = {label: i for i, label in enumerate(classes)}
    labeled_points = labeled.matrix()
    if unlabeled is not None:
        points = np.vstack([labeled_points, unlabeled.matrix()])
        ids = labeled.ids + unlabeled.ids
    else:
        points = labeled_points
        ids = labeled.ids

    n_labeled = len(labeled)
    fixed_assign = np.zeros(len(ids), dtype=np.int64)
    fixed_mask = np.zeros(len(ids), dtype=bool)
    for i, r in enumerate(labeled.records):
        fixed_assign[i] = class_index[r.label]
        fixed_mask[i] = True

    centroids = np.empty((k, labeled.dim), dtype=np.float64)
    for label, c in class_index.items():
        centroids[c] = labeled_points[[r.label == label for r in labeled.records]].mean(axis=0)
    if k_extra > 0:
        rng = np.random.default_rng(seed)
        centroids[len(classes):] = _kmeanspp_init(points[n_labeled:], k_extra, rng)

    repairable = np.zeros(k, dtype=bool)
    repairable[len(classes):] = True
    centroids, assign, trace, n_iter = _lloyd(
        points,
        centroids,
        fixed_assign=fixed_assign,
        fixed_mask=fixed_mask,
        repairable=repairable,
        max_iter=max_iter,
        tol=tol,
        iteration_callback=iteration_callback,
    )
    assignment = {sid: int(c) for sid, c in zip(ids, assign)}
    return Clustering(
        k=k,
        centroids=centroids,
        assignment=assignment,
        inertia=trace[-1],
        inertia_trace=trace,
        n_iter=n_iter,
        cluster_labels={i: label for label, i in class_index.items()},
    )


def assign_pseudo_labels(
    scores: dict[str, tuple[str, float]],
    top_frac: float = 0.9,
    min_class_count: int = 10,
    min_score: float = 0.7,
) -> PseudoLabelReport:
    """Three-stage pseudo-label filter.

    1. keep the ceil(top_frac * n) highest-scoring samples (ties at the cut
       broken by ascending id),
    2. drop samples whose label has fewer than min_class_count survivors,
    3. drop samples scoring below min_score.
    Survivors are accepted under their proposed label; each filter runs once,
    in that order.
    """
    if not scores:
        raise ValueError("empty input")
    if not (0.0 < top_frac <= 1.0):
        raise ValueError("top_frac must be in (0, 1]")
    order = sorted(scores, key=lambda sid: (-scores[sid][1], sid))
    keep = order[: math.ceil(top_frac * len(order))]

    counts: dict[str, int] = {}
    for sid in keep:
        label = scores[sid][0]
        counts[label] = counts.get(label, 0) + 1
    keep = [sid for sid in keep if counts[scores[sid][0]] >= min_class_count]

    keep = [sid for sid in keep if scores[sid][1] >= min_score]

    accepted = {sid: scores[sid][0] for sid in keep}
    rejected = sorted(sid for sid in scores if sid not in accepted)
    return PseudoLabelReport(
        accepted=accepted,
        rejected=rejected,
        top_frac=top_frac,
        min_class_count=min_class_count,
        min_score=min_score,
    )


def pseudo_label_rounds(
    labeled: SampleSet,
    unlabeled: SampleSet,
    k_extra: int = 0,
    rounds: int = 3,
    seed: int = 0,
    top_frac: float = 0.9,
    min_class_count: int = 10,
    min_score: float = 0.7,
    max_iter: int = 100,
    tol: float = 1e-8,
) -> tuple[Clustering, PseudoLabelReport]:
    """Repeated cluster-then-filter rounds.

    Each round clusters with the current labeled pool, proposes a label and a
    confidence (cosine similarity to the assigned centroid, clamped to [0, 1])
    for every still-unlabeled sample, filters through assign_pseudo_labels,
    and promotes the survivors into the labeled pool. Samples landing in a
    novel cluster are proposed under a generated `new_<i>` class name. Returns
    the final clustering and the cumulative report.
    """
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    labeled_records = list(labeled.records)
    pending = list(unlabeled.records)
    accepted_all: dict[str, str] = {}
    novel_counter = 0
    clustering = None
    original_classes = {r.label for r in labeled.records}
    for rnd in range(rounds):
        novel_materialized = len({r.label for r in labeled_records} - original_classes)
        extra = max(0, k_extra - novel_materialized)
        pool = SampleSet(pending) if pending else None
        clustering = ss_kmeans(
            SampleSet(labeled_records),
            pool,
            k_extra=extra if pool is not None else 0,
            seed=seed + rnd,
            max_iter=max_iter,
            tol=tol,
        )
        if not pending:
            break
        names: dict[int, str] = dict(clustering.cluster_labels)
        for c in range(clustering.k):
            if c not in names:
                names[c] = f"new_{novel_counter}"
                novel_counter += 1
        proposals: dict[str, tuple[str, float]] = {}
        for rec in pending:
            c = clustering.assignment[rec.id]
            centroid = clustering.centroids[c]
            denom = float(np.linalg.norm(rec.vec)) * float(np.linalg.norm(centroid))
            sim = float(rec.vec @ centroid) / denom if denom > 0.0 else 0.0
            proposals[rec.id] = (names[c], float(np.clip(sim, 0.0, 1.0)))
        report = assign_pseudo_labels(proposals, top_frac, min_class_count, min_score)
        if not report.accepted:
            break
        accepted_all.update(report.accepted)
        still: list[SampleRecord] = []
        for rec in pending:
            if rec.id in report.accepted:
                labeled_records.append(SampleRecord(id=rec.id, vec=rec.vec, label=report.accepted[rec.id]))
            else:
                still.append(rec)
        pending = still
    assert clustering is not None
    final = PseudoLabelReport(
        accepted=accepted_all,
        rejected=sorted(r.id for r in pending),
        top_frac=top_frac,
        min_class_count=min_class_count,
        min_score=min_score,
    )
    return clustering, final


def save_clustering(clustering: Clustering, path: str | Path) -> None:
    doc = {
        "k": clustering.k,
        "centroids": [list(row) for row in clustering.centroids],
        "assignment": clustering.assignment,
        "inertia": clustering.inertia,
        "n_iter": clustering.n_iter,
        "cluster_labels": {str(i): label for i, label in clustering.cluster_labels.items()},
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def save_pseudo_label_report(report: PseudoLabelReport, path: str | Path) -> None:
    """CSV `id,label,accepted`; rejected rows carry an empty label."""
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "label", "accepted"])
        for sid in sorted(set(report.accepted) | set(report.rejected)):
            if sid in report.accepted:
                writer.writerow([sid, report.accepted[sid], 1])
            else:
                writer.writerow([sid, "", 0])
