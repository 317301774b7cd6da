"""Multi-module anomaly scoring for novel-method detection.

Four per-probe scores against a labeled gallery: mean K-nearest-neighbor
distance, a two-part cluster-center distance, a local-outlier-factor density
ratio, and a cosine-entropy score. `mad_report` fuses them into a single
novelty probability via per-module min-max normalization and a weighted mean.

The distance-based modules are plain functions over the raw vectors they are
given; `mad_report` L2-normalizes the inputs first by default so Euclidean
distances track cosine geometry.
"""
from __future__ import annotations

import csv
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attribution import kmeans, l2_normalize_set
from .dataio import SampleSet

DENSITY_FLOOR = 1e-12

MODULE_NAMES = ("knn", "cluster", "lof", "entropy")


@dataclass
class AnomalyConfig:
    """Per-module parameters; `p`/`g` default to one cluster per 5 samples."""

    K: int = 5
    k_lof: int = 5
    p: int | None = None
    g: int | None = None
    w1: float = 0.5
    w2: float = 0.5
    fusion_weights: dict[str, float] = field(
        default_factory=lambda: {name: 0.25 for name in MODULE_NAMES}
    )
    normalize: bool = True

    def __post_init__(self) -> None:
        if self.K < 1 or self.k_lof < 1:
            raise ValueError("K and k_lof must be >= 1")
        if (self.p is not None and self.p < 1) or (self.g is not None and self.g < 1):
            raise ValueError("cluster counts must be >= 1")
        if self.w1 < 0.0 or self.w2 < 0.0:
            raise ValueError("cluster-score weights must be non-negative")
        total = self.w1 + self.w2
        if total <= 0.0:
            raise ValueError("cluster-score weights must not both be zero")
        if abs(total - 1.0) > 1e-9:
            self.w1, self.w2 = self.w1 / total, self.w2 / total
        fw = dict(self.fusion_weights)
        if not fw or any(w < 0.0 for w in fw.values()) or sum(fw.values()) <= 0.0:
            raise ValueError("fusion weights must be non-negative and sum to a positive value")
        unknown = set(fw) - set(MODULE_NAMES)
        if unknown:
            raise ValueError(f"unknown fusion module(s): {sorted(unknown)}")
        s = sum(fw.values())
        self.fusion_weights = {name: w / s for name, w in fw.items()}


@dataclass
class AnomalyReport:
    """Raw per-module scores and the fused novelty probability, keyed by probe id."""

    knn: dict[str, float]
    cluster: dict[str, float]
    lof: dict[str, float]
    entropy: dict[str, float]
    fused: dict[str, float]

    def module_scores(self, name: str) -> dict[str, float]:
        if name not in MODULE_NAMES:
            raise ValueError(f"unknown module {name!r}")
        return getattr(self, name)


def default_cluster_count(n: int) -> int:
    """One cluster per 5 samples, at least one."""
    return max(1, n // 5)


def knn_score(probe: np.ndarray, gallery: SampleSet, K: int = 5) -> float:
    """Mean of the K smallest Euclidean distances from the probe to the gallery."""
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > len(gallery):
        raise ValueError(f"K={K} exceeds gallery size {len(gallery)}")
    probe = np.asarray(probe, dtype=np.float64)
    diff = gallery.matrix() - probe
    dists = np.sqrt(np.einsum("ij,ij->i", diff, diff))
    nearest = np.partition(dists, K - 1)[:K]
    return float(nearest.mean())


def cluster_score(probe_set: SampleSet, gallery: SampleSet, cfg: AnomalyConfig, seed: int = 0) -> dict[str, float]:
    """Two-part cluster-distance score for every probe.

    Probes are clustered into p clusters and the gallery into g clusters; the
    score blends the probe's own distance to the nearest gallery center (w1)
    with its probe-cluster center's distance to the nearest gallery center (w2).
    """
    p = cfg.p if cfg.p is not None else default_cluster_count(len(probe_set))
    g = cfg.g if cfg.g is not None else default_cluster_count(len(gallery))
    if p > len(probe_set):
        raise ValueError(f"p={p} exceeds probe count {len(probe_set)}")
    if g > len(gallery):
        raise ValueError(f"g={g} exceeds gallery size {len(gallery)}")
    probe_clusters = kmeans(probe_set, p, seed=seed)
    gallery_clusters = kmeans(gallery, g, seed=seed + 1)
    gcenters = gallery_clusters.centroids

    def nearest_center_dist(vec: np.ndarray) -> float:
        diff = gcenters - vec
        return float(np.sqrt(np.einsum("ij,ij->i", diff, diff).min()))

    own_center_dist = {c: nearest_center_dist(probe_clusters.centroids[c]) for c in range(p)}
    scores = {}
    for rec in probe_set.records:
        c = probe_clusters.assignment[rec.id]
        scores[rec.id] = cfg.w1 * nearest_center_dist(rec.vec) + cfg.w2 * own_center_dist[c]
    return scores


def _knn_of(dists: np.ndarray, k: int, exclude: int | None = None) -> np.ndarray:
    """Indices of the k nearest points by (distance, index), optionally excluding self."""
    order = np.lexsort((np.arange(dists.size), dists))
    if exclude is not None:
        order = order[order != exclude]
    return order[:k]


class LofIndex:
    """Gallery-side LOF statistics (k-distances, neighbor lists, densities).

    Built once and reused when scoring many probes against the same gallery.
    Neighbor ties are broken by gallery index.
    """

    def __init__(self, gallery: SampleSet, k_lof: int):
        n = len(gallery)
        if k_lof >= n:
            raise ValueError(f"k_lof={k_lof} requires a gallery larger than k_lof ({n} given)")
        if k_lof < 1:
            raise ValueError("k_lof must be >= 1")
        self.k = k_lof
        self.points = gallery.matrix()
        diff = self.points[:, None, :] - self.points[None, :, :]
        dmat = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        self.kdist = np.empty(n)
        neighbors = np.empty((n, k_lof), dtype=np.int64)
        for i in range(n):
            nb = _knn_of(dmat[i], k_lof, exclude=i)
            neighbors[i] = nb
            self.kdist[i] = dmat[i, nb[-1]]
        self.lrd_gallery = np.array(
            [self._lrd(dmat[i, neighbors[i]], neighbors[i]) for i in range(n)]
        )

    def _lrd(self, dists_to_nb: np.ndarray, nb: np.ndarray) -> float:
        reach = np.maximum(self.kdist[nb], dists_to_nb)
        return 1.0 / max(float(reach.mean()), DENSITY_FLOOR)

    def score(self, probe: np.ndarray) -> float:
        probe = np.asarray(probe, dtype=np.float64)
        pdist = np.sqrt(np.einsum("ij,ij->i", self.points - probe, self.points - probe))
        nb = _knn_of(pdist, self.k)
        lrd_probe = self._lrd(pdist[nb], nb)
        return float(self.lrd_gallery[nb].mean() / lrd_probe)


def lof_score(probe: np.ndarray, gallery: SampleSet, k_lof: int = 5) -> float:
    """Local outlier factor of the probe against the gallery.

    Textbook definition: reachability distances over the probe's k nearest
    gallery neighbors, local reachability densities with a 1e-12 floor on the
    mean reachability, and the ratio mean(lrd(neighbors)) / lrd(probe).
    """
    return LofIndex(gallery, k_lof).score(probe)


def entropy_score(probe: np.ndarray, gallery: SampleSet, seed: int = 0) -> float:
    """Cosine-entropy novelty score in [0, 1/e].

    The gallery is k-means clustered into max(1, |gallery| // 5) clusters; SIM
    is the highest cosine similarity between the probe and any centroid,
    clamped to [1e-12, 1]; the score is -SIM * ln(SIM).
    """
    if len(gallery) < 5:
        raise ValueError("entropy score needs a gallery of at least 5 samples")
    centroids = kmeans(gallery, default_cluster_count(len(gallery)), seed=seed).centroids
    return entropy_score_from_centroids(probe, centroids)


def entropy_score_from_centroids(probe: np.ndarray, centroids: np.ndarray) -> float:
    probe = np.asarray(probe, dtype=np.float64)
    pnorm = float(np.linalg.norm(probe))
    if pnorm == 0.0:
        raise ValueError("zero-norm probe")
    cnorms = np.linalg.norm(centroids, axis=1)
    sims = (centroids @ probe) / (np.where(cnorms == 0.0, 1.0, cnorms) * pnorm)
    sims = np.where(cnorms == 0.0, -1.0, sims)
    sim = float(np.clip(sims.max(), DENSITY_FLOOR, 1.0))
    return float(-sim * np.log(sim))


def minmax_normalize(scores: dict[str, float]) -> dict[str, float]:
    """(x - min) / (max - min) over the map; all zeros when max == min."""
    values = np.array(list(scores.values()), dtype=np.float64)
    lo, hi = float(values.min()), float(values.max())
    if hi == lo:
        return {sid: 0.0 for sid in scores}
    return {sid: (v - lo) / (hi - lo) for sid, v in scores.items()}


def fuse_scores(reports: dict[str, dict[str, float]], fusion_weights: dict[str, float]) -> dict[str, float]:
    """Min-max normalize each module's scores, then combine by the given weights."""
    if not reports:
        raise ValueError("no module scores to fuse")
    ids = list(next(iter(reports.values())))
    if any(set(scores) != set(ids) for scores in reports.values()):
        raise ValueError("mismatched id sets across modules")
    missing = set(reports) - set(fusion_weights)
    if missing:
        raise ValueError(f"missing fusion weight(s) for: {sorted(missing)}")
    total = sum(fusion_weights[name] for name in reports)
    if total <= 0.0:
        raise ValueError("fusion weights must sum to a positive value")
    normalized = {name: minmax_normalize(scores) for name, scores in reports.items()}
    return {
        sid: sum(fusion_weights[name] * normalized[name][sid] for name in reports) / total
        for sid in ids
    }


def mad_report(
    probe_set: SampleSet,
    gallery: SampleSet,
    cfg: AnomalyConfig | None = None,
    seed: int = 0,
    threads: int = 1,
) -> AnomalyReport:
    """Score every probe with all four modules and fuse.

    Deterministic for a fixed seed regardless of `threads`: per-probe work is
    independent and results are reduced in probe order.
    """
    cfg = cfg if cfg is not None else AnomalyConfig()
    if probe_set.dim != gallery.dim:
        raise ValueError(f"dimension mismatch: probes {probe_set.dim} vs gallery {gallery.dim}")
    probes = l2_normalize_set(probe_set) if cfg.normalize else probe_set
    gal = l2_normalize_set(gallery) if cfg.normalize else gallery

    cluster = cluster_score(probes, gal, cfg, seed=seed)
    entropy_centroids = kmeans(gal, default_cluster_count(len(gal)), seed=seed + 2).centroids
    lof_index = LofIndex(gal, cfg.k_lof)

    def score_one(rec) -> tuple[float, float]:
        return (
            knn_score(rec.vec, gal, cfg.K),
            lof_index.score(rec.vec),
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            per_probe = list(pool.map(score_one, probes.records))
    else:
        per_probe = [score_one(rec) for rec in probes.records]

    knn = {rec.id: knn for rec, (knn, _) in zip(probes.records, per_probe)}
    lof = {rec.id: lof for rec, (_, lof) in zip(probes.records, per_probe)}
    entropy = {
        rec.id: entropy_score_from_centroids(rec.vec, entropy_centroids) for rec in probes.records
    }
    modules = {"knn": knn, "cluster": cluster, "lof": lof, "entropy": entropy}
    fused = fuse_scores(modules, cfg.fusion_weights)
    return AnomalyReport(knn=knn, cluster=cluster, lof=lof, entropy=entropy, fused=fused)


def save_report_csv(report: AnomalyReport, probe_ids: list[str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "knn", "cluster", "lof", "entropy", "fused"])
        for sid in probe_ids:
            writer.writerow(
                [sid]
                + [repr(float(scores[sid])) for scores in (report.knn, report.cluster, report.lof, report.entropy, report.fused)]
            )


def save_report_jsonl(report: AnomalyReport, probe_ids: list[str], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for sid in probe_ids:
            fh.write(
                json.dumps(
                    {
                        "id": sid,
                        "knn": report.knn[sid],
                        "cluster": report.cluster[sid],
                        "lof": report.lof[sid],
                        "entropy": report.entropy[sid],
                        "fused": report.fused[sid],
                    }
                )
                + "\n"
            )
