"""Cosine-similarity retrieval from probe to gallery and the top-5 precision metric."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataio import SampleRecord, SampleSet


@dataclass
class RetrievalResult:
    """Ranked hits for one probe: (gallery_id, similarity) in non-increasing order."""

    probe_id: str
    hits: list[tuple[str, float]]


def _norms(matrix: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("ij,ij->i", matrix, matrix))


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """cos(a, b) in 64-bit, clamped to [-1, 1] against rounding."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ValueError("cosine similarity undefined for zero-norm vector")
    return float(np.clip(float(a @ b) / (na * nb), -1.0, 1.0))


class _GalleryIndex:
    """Gallery arrays prepared once: embedding matrix, norms, and sortable ids."""

    def __init__(self, gallery: SampleSet):
        self.gallery = gallery
        self.matrix = gallery.matrix()
        self.norms = _norms(self.matrix)
        if np.any(self.norms == 0.0):
            bad = gallery.records[int(np.argmin(self.norms))].id
            raise ValueError(f"zero-norm gallery record {bad!r}")
        self.ids = np.array(gallery.ids)

    def rank(self, probe: SampleRecord, k: int) -> RetrievalResult:
        vec = np.asarray(probe.vec, dtype=np.float64)
        pnorm = float(np.linalg.norm(vec))
        if pnorm == 0.0:
            raise ValueError("zero-norm probe")
        sims = np.clip((self.matrix @ vec) / (self.norms * pnorm), -1.0, 1.0)
        order = np.lexsort((self.ids, -sims))[:k]  # descending similarity, ties by id
        hits = [(self.gallery.records[i].id, float(sims[i])) for i in order]
        return RetrievalResult(probe_id=probe.id, hits=hits)


def top_k(probe: SampleRecord, gallery: SampleSet, k: int) -> RetrievalResult:
    """The k gallery records most cosine-similar to the probe.

    Descending similarity; exact ties broken by ascending gallery id so the
    ranking is deterministic.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(gallery):
        raise ValueError(f"k={k} exceeds gallery size {len(gallery)}")
    return _GalleryIndex(gallery).rank(probe, k)


def retrieve_all(probes: SampleSet, gallery: SampleSet, k: int = 5) -> list[RetrievalResult]:
    """top_k for every probe, in probe order, sharing one gallery index."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(gallery):
        raise ValueError(f"k={k} exceeds gallery size {len(gallery)}")
    index = _GalleryIndex(gallery)
    return [index.rank(p, k) for p in probes.records]


def precision_at_5(
    results: list[RetrievalResult],
    probe_labels: dict[str, str],
    gallery_labels: dict[str, str],
) -> float:
    """Fraction of the 5 recalled labels matching the probe label, averaged over probes."""
    if not results:
        raise ValueError("no retrieval results")
    matches = 0
    for res in results:
        if len(res.hits) != 5:
            raise ValueError(f"probe {res.probe_id!r}: expected 5 hits, got {len(res.hits)}")
        if res.probe_id not in probe_labels:
            raise ValueError(f"missing label for probe {res.probe_id!r}")
        want = probe_labels[res.probe_id]
        for gid, _ in res.hits:
            if gid not in gallery_labels:
                raise ValueError(f"missing label for gallery record {gid!r}")
            if gallery_labels[gid] == want:
                matches += 1
    return matches / (5.0 * len(results))


def class_similarity_matrix(sets: dict[str, SampleSet]) -> tuple[list[str], np.ndarray]:
    """Pairwise cosine similarity between per-class mean embeddings.

    Returns (sorted labels, symmetric matrix with unit diagonal).
    """
    if len(sets) < 2:
        raise ValueError("need at least 2 labeled classes")
    labels = sorted(sets)
    means = []
    for label in labels:
        mean = sets[label].matrix().mean(axis=0)
        if float(np.linalg.norm(mean)) == 0.0:
            raise ValueError(f"class {label!r} has a zero-norm mean")
        means.append(mean)
    n = len(labels)
    matrix = np.ones((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i + 1, n):
            s = cosine_similarity(means[i], means[j])
            matrix[i, j] = matrix[j, i] = s
    return labels, matrix


def save_results_jsonl(results: list[RetrievalResult], path: str | Path) -> None:
    """One `{"probe": ..., "hits": [[gallery_id, similarity], ...]}` object per line."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for res in results:
            fh.write(json.dumps({"probe": res.probe_id, "hits": [[gid, s] for gid, s in res.hits]}) + "\n")


def load_results_jsonl(path: str | Path) -> list[RetrievalResult]:
    results = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        obj = json.loads(line)
        if "probe" not in obj or "hits" not in obj:
            raise ValueError(f"line {lineno}: expected object with 'probe' and 'hits'")
        results.append(
            RetrievalResult(probe_id=str(obj["probe"]), hits=[(str(g), float(s)) for g, s in obj["hits"]])
        )
    return results
