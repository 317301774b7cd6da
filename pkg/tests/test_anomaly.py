from __future__ import annotations

import math

import numpy as np
import pytest

from aisc.anomaly import (
    AnomalyConfig,
    cluster_score,
    entropy_score,
    entropy_score_from_centroids,
    fuse_scores,
    knn_score,
    lof_score,
    mad_report,
    minmax_normalize,
    save_report_csv,
    save_report_jsonl,
)
from aisc.dataio import SampleRecord, SampleSet
from aisc.metrics import roc_auc
from aisc.synth import make_blob_benchmark, novelty_labels

from .oracles import knn_oracle, lof_oracle


def make_set(vectors, prefix="g"):
    return SampleSet(
        [SampleRecord(id=f"{prefix}{i:03d}", vec=np.asarray(v, dtype=float)) for i, v in enumerate(vectors)]
    )


# ---------------------------------------------------------------------------
# knn


def test_knn_zero_on_duplicates():
    gallery = make_set([[1.0, 2.0]] * 5)
    assert knn_score(np.array([1.0, 2.0]), gallery, K=5) == 0.0


def test_knn_derived_1d():
    gallery = make_set([[1.0], [2.0], [3.0], [4.0]])
    assert knn_score(np.array([0.0]), gallery, K=2) == pytest.approx(1.5, abs=1e-15)


def test_knn_full_gallery_matches_oracle():
    rng = np.random.default_rng(67)
    vectors = rng.normal(size=(30, 4))
    gallery = make_set(vectors)
    probe = rng.normal(size=4)
    mine = knn_score(probe, gallery, K=30)
    assert mine == pytest.approx(knn_oracle(probe, vectors, 30), abs=1e-12)


def test_knn_exact_vs_oracle_all_k():
    rng = np.random.default_rng(71)
    vectors = rng.normal(size=(25, 3))
    gallery = make_set(vectors)
    probe = rng.normal(size=3)
    for K in (1, 2, 5, 13, 25):
        assert knn_score(probe, gallery, K) == pytest.approx(knn_oracle(probe, vectors, K), abs=1e-12)


def test_knn_k_too_large():
    with pytest.raises(ValueError, match="exceeds gallery"):
        knn_score(np.array([0.0]), make_set([[1.0]]), K=2)


# ---------------------------------------------------------------------------
# cluster


def test_cluster_score_zero_at_centroid():
    # Probe cluster and gallery cluster centroids coincide with the probe.
    probes = make_set([[1.0, 1.0]] * 3, prefix="p")
    gallery = make_set([[1.0, 1.0]] * 6)
    cfg = AnomalyConfig(p=1, g=1)
    scores = cluster_score(probes, gallery, cfg)
    assert all(v == 0.0 for v in scores.values())


def test_cluster_score_w2_zero_reduces_to_nearest_centroid():
    rng = np.random.default_rng(73)
    probes = make_set(rng.normal(size=(12, 3)), prefix="p")
    gallery = make_set(np.vstack([rng.normal(size=(10, 3)), 5.0 + rng.normal(size=(10, 3))]))
    cfg = AnomalyConfig(p=2, g=2, w1=1.0, w2=0.0)
    scores = cluster_score(probes, gallery, cfg, seed=0)

    from aisc.attribution import kmeans

    centers = kmeans(gallery, 2, seed=1).centroids  # seed+1 matches cluster_score's gallery pass
    for rec in probes.records:
        expected = min(float(np.linalg.norm(rec.vec - c)) for c in centers)
        assert scores[rec.id] == pytest.approx(expected, abs=1e-12)


def test_cluster_score_convexity():
    # When both distance terms equal d, any normalized (w1, w2) returns d.
    probes = make_set([[3.0, 0.0]], prefix="p")
    gallery = make_set([[0.0, 0.0]] * 5)
    cfg = AnomalyConfig(p=1, g=1, w1=0.5, w2=0.5)
    scores = cluster_score(probes, gallery, cfg)
    assert scores["p000"] == pytest.approx(3.0, abs=1e-12)


def test_cluster_score_count_validation():
    probes = make_set([[0.0]], prefix="p")
    gallery = make_set([[0.0]] * 3)
    with pytest.raises(ValueError, match="exceeds probe count"):
        cluster_score(probes, gallery, AnomalyConfig(p=2, g=1))
    with pytest.raises(ValueError, match="exceeds gallery"):
        cluster_score(probes, gallery, AnomalyConfig(p=1, g=4))


# ---------------------------------------------------------------------------
# lof


def test_lof_equilateral_triangle_vertex():
    side = 2.0
    gallery = make_set([[0.0, 0.0], [side, 0.0], [side / 2.0, side * math.sqrt(3) / 2.0]])
    assert lof_score(np.array([0.0, 0.0]), gallery, k_lof=2) == pytest.approx(1.0, abs=1e-12)


def test_lof_derived_1d_far_probe():
    gallery = make_set([[0.0], [1.0], [2.0]])
    value = lof_score(np.array([10.0]), gallery, k_lof=2)
    # hand derivation: lrd(probe)=1/8.5, lrd(2)=2/3, lrd(1)=1/2
    assert value == pytest.approx((2.0 / 3.0 + 0.5) / 2.0 * 8.5, abs=1e-12)
    assert value > 1.0
    assert value == pytest.approx(lof_oracle([10.0], [[0.0], [1.0], [2.0]], 2), abs=1e-12)


def test_lof_duplicate_cluster_is_one():
    gallery = make_set([[0.5, 0.5]] * 6)
    assert lof_score(np.array([0.5, 0.5]), gallery, k_lof=3) == pytest.approx(1.0, abs=1e-12)


def test_lof_matches_direct_oracle_random():
    rng = np.random.default_rng(79)
    for trial in range(20):
        n = int(rng.integers(8, 40))
        vectors = rng.normal(size=(n, 3))
        gallery = make_set(vectors)
        probe = rng.normal(size=3) * 2.0
        k = int(rng.integers(2, min(8, n - 1)))
        assert lof_score(probe, gallery, k) == pytest.approx(lof_oracle(probe, vectors, k), abs=1e-9)


def test_lof_gallery_size_validation():
    gallery = make_set([[0.0], [1.0]])
    with pytest.raises(ValueError, match="larger than k_lof"):
        lof_score(np.array([0.0]), gallery, k_lof=2)


# ---------------------------------------------------------------------------
# entropy


def test_entropy_sim_one_is_zero():
    assert entropy_score_from_centroids(np.array([1.0, 0.0]), np.array([[1.0, 0.0]])) == 0.0


def test_entropy_maximum_at_one_over_e():
    c = 1.0 / math.e
    probe = np.array([c, math.sqrt(1.0 - c * c)])
    value = entropy_score_from_centroids(probe, np.array([[1.0, 0.0]]))
    assert value == pytest.approx(1.0 / math.e, abs=1e-12)


def test_entropy_half_sim():
    probe = np.array([0.5, math.sqrt(0.75)])
    value = entropy_score_from_centroids(probe, np.array([[1.0, 0.0]]))
    assert value == pytest.approx(-0.5 * math.log(0.5), abs=1e-12)
    assert value == pytest.approx(0.34657359027997264, abs=1e-12)


def test_entropy_score_full_pipeline_range():
    rng = np.random.default_rng(83)
    gallery = make_set(rng.normal(size=(25, 4)))
    for _ in range(20):
        probe = rng.normal(size=4)
        value = entropy_score(probe, gallery, seed=3)
        assert 0.0 <= value <= 1.0 / math.e + 1e-15


def test_entropy_needs_five_gallery_samples():
    with pytest.raises(ValueError, match="at least 5"):
        entropy_score(np.array([1.0]), make_set([[1.0]] * 4), seed=0)


def test_entropy_zero_norm_probe():
    with pytest.raises(ValueError, match="zero-norm"):
        entropy_score_from_centroids(np.zeros(2), np.array([[1.0, 0.0]]))


# ---------------------------------------------------------------------------
# fusion


def test_minmax_derived():
    assert minmax_normalize({"a": 2.0, "b": 4.0, "c": 6.0}) == {"a": 0.0, "b": 0.5, "c": 1.0}


def test_fuse_single_module():
    fused = fuse_scores({"knn": {"a": 2.0, "b": 4.0, "c": 6.0}}, {"knn": 1.0})
    assert fused == {"a": 0.0, "b": 0.5, "c": 1.0}


def test_fuse_preserves_shared_ranking():
    ids = [f"s{i}" for i in range(10)]
    base = {sid: float(i) for i, sid in enumerate(ids)}
    modules = {
        "knn": base,
        "cluster": {sid: 3.0 * v + 1.0 for sid, v in base.items()},
        "lof": {sid: v**2 for sid, v in base.items()},
    }
    weights = {"knn": 0.4, "cluster": 0.4, "lof": 0.2}
    fused = fuse_scores(modules, weights)
    ranked = sorted(ids, key=lambda sid: fused[sid])
    assert ranked == ids


def test_fuse_constant_module_contributes_zero():
    modules = {
        "knn": {"a": 1.0, "b": 2.0},
        "lof": {"a": 7.0, "b": 7.0},
    }
    fused = fuse_scores(modules, {"knn": 0.5, "lof": 0.5})
    assert fused == {"a": 0.0, "b": 0.5}


def test_fuse_affine_invariance():
    rng = np.random.default_rng(89)
    ids = [f"s{i}" for i in range(15)]
    modules = {
        name: {sid: float(rng.normal()) for sid in ids} for name in ("knn", "cluster", "lof")
    }
    weights = {"knn": 0.2, "cluster": 0.5, "lof": 0.3}
    fused = fuse_scores(modules, weights)
    shifted = {
        name: {sid: 4.2 * v + 17.0 for sid, v in scores.items()} for name, scores in modules.items()
    }
    fused_shifted = fuse_scores(shifted, weights)
    for sid in ids:
        assert fused_shifted[sid] == pytest.approx(fused[sid], abs=1e-12)


def test_fuse_mismatched_ids():
    with pytest.raises(ValueError, match="mismatched id sets"):
        fuse_scores({"knn": {"a": 1.0}, "lof": {"b": 1.0}}, {"knn": 0.5, "lof": 0.5})


def test_anomaly_config_validation():
    with pytest.raises(ValueError):
        AnomalyConfig(K=0)
    with pytest.raises(ValueError):
        AnomalyConfig(w1=-0.1)
    with pytest.raises(ValueError, match="unknown fusion"):
        AnomalyConfig(fusion_weights={"bogus": 1.0})
    cfg = AnomalyConfig(w1=2.0, w2=2.0)
    assert cfg.w1 == cfg.w2 == 0.5


# ---------------------------------------------------------------------------
# full report


def test_mad_report_blob_benchmark_auc():
    gallery, probes = make_blob_benchmark(seed=0)
    report = mad_report(probes, gallery, AnomalyConfig(), seed=0)
    truth = novelty_labels(probes)
    labels = [truth[sid] for sid in probes.ids]
    for name in ("knn", "cluster", "lof", "entropy"):
        scores = [report.module_scores(name)[sid] for sid in probes.ids]
        assert roc_auc(scores, labels) >= 0.95, name
    fused = [report.fused[sid] for sid in probes.ids]
    assert roc_auc(fused, labels) >= 0.95
    assert all(0.0 <= report.fused[sid] <= 1.0 for sid in probes.ids)


def test_mad_report_thread_determinism():
    gallery, probes = make_blob_benchmark(seed=1, gallery_per_class=20, probe_per_class=6, novel_probes=6)
    sequential = mad_report(probes, gallery, seed=5, threads=1)
    threaded = mad_report(probes, gallery, seed=5, threads=8)
    assert sequential == threaded


def test_mad_report_dimension_mismatch():
    gallery, probes = make_blob_benchmark(seed=2, gallery_per_class=10, probe_per_class=3, novel_probes=3)
    bad = make_set(np.random.default_rng(0).normal(size=(4, 3)), prefix="p")
    with pytest.raises(ValueError, match="dimension mismatch"):
        mad_report(bad, gallery)


def test_report_serialization(tmp_path):
    gallery, probes = make_blob_benchmark(seed=3, gallery_per_class=10, probe_per_class=3, novel_probes=3)
    report = mad_report(probes, gallery, seed=0)
    csv_path = tmp_path / "report.csv"
    jsonl_path = tmp_path / "report.jsonl"
    save_report_csv(report, probes.ids, csv_path)
    save_report_jsonl(report, probes.ids, jsonl_path)
    lines = csv_path.read_text().splitlines()
    assert lines[0] == "id,knn,cluster,lof,entropy,fused"
    assert len(lines) == 1 + len(probes)
    assert len(jsonl_path.read_text().splitlines()) == len(probes)
