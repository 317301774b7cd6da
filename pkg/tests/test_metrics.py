from __future__ import annotations

import numpy as np
import pytest

from aisc.dataio import DetectionLog, ImageBuffer, VerdictMatrix
from aisc.metrics import (
    DeepfakeScoreInput,
    DrivingScoreInput,
    VoidResultError,
    deepfake_final_score,
    driving_object_score,
    driving_total_score,
    face_attack_score,
    patch_area_term,
    roc_auc,
)

from .oracles import auc_paircount_oracle

# Published leaderboard rows: (precision@5, AUC, subjective, total)
DEEPFAKE_ROWS = [
    ("AreYouFake", 0.9820, 0.9944, 1.0, 0.9875),
    ("hello world", 0.9742, 0.9784, 0.9, 0.9680),
    ("Forgery identification right?", 0.8927, 0.8822, 0.85, 0.8850),
    ("CanCanNeed", 0.8673, 0.9165, 0.85, 0.8803),
    ("TianQuan & DaHua", 0.8708, 0.8906, 0.9, 0.8796),
]

# Final driving leaderboard: (truck, mannequin, total)
DRIVING_ROWS = [
    ("BJTU-ADaM", 0.79, 0.00, 0.63),
    ("XJTU_Vanish", 0.67, 0.19, 0.57),
    ("YouOnlyAttackOnce", 0.45, 0.20, 0.40),
    ("XJTU-AISEC", 0.38, 0.20, 0.34),
    ("CETC-NHY", 0.39, 0.00, 0.31),
]


def test_roc_auc_perfect_separation():
    assert roc_auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0


def test_roc_auc_all_ties():
    assert roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0]) == 0.5


def test_roc_auc_derived_two_pairs():
    assert roc_auc([0.7, 0.8, 0.1], [1, 0, 0]) == 0.5


def test_roc_auc_reversal_identity():
    rng = np.random.default_rng(97)
    scores = rng.permutation(np.linspace(0.0, 1.0, 40))  # tie-free
    labels = rng.integers(0, 2, size=40)
    if labels.sum() in (0, 40):
        labels[0] = 1 - labels[0]
    assert roc_auc(scores, labels) + roc_auc(-scores, labels) == pytest.approx(1.0, abs=1e-12)


def test_roc_auc_monotone_transform_invariance():
    rng = np.random.default_rng(101)
    scores = rng.normal(size=60)
    labels = rng.integers(0, 2, size=60)
    labels[0], labels[1] = 0, 1
    base = roc_auc(scores, labels)
    assert roc_auc(np.exp(scores), labels) == base
    assert roc_auc(3.0 * scores + 10.0, labels) == base


def test_roc_auc_matches_paircount_oracle():
    rng = np.random.default_rng(103)
    for _ in range(30):
        n = int(rng.integers(5, 80))
        scores = np.round(rng.normal(size=n), 1)  # coarse values force ties
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        assert roc_auc(scores, labels) == auc_paircount_oracle(scores, labels)


def test_roc_auc_single_class_rejected():
    with pytest.raises(ValueError, match="positive and .* negative"):
        roc_auc([0.1, 0.2], [1, 1])


@pytest.mark.parametrize("team,p5,auc,sbj,total", [(r[0], r[1], r[2], r[3], r[4]) for r in DEEPFAKE_ROWS[:2]] + [tuple(DEEPFAKE_ROWS[3])])
def test_deepfake_final_score_published_rows_tight(team, p5, auc, sbj, total):
    score = deepfake_final_score(DeepfakeScoreInput(p5, auc, sbj))
    assert score == pytest.approx(total, abs=5e-5), team


@pytest.mark.parametrize("team,p5,auc,sbj,total", DEEPFAKE_ROWS)
def test_deepfake_final_score_published_rows_loose(team, p5, auc, sbj, total):
    score = deepfake_final_score(DeepfakeScoreInput(p5, auc, sbj))
    assert score == pytest.approx(total, abs=1e-3), team


def test_deepfake_input_range_checked():
    with pytest.raises(ValueError, match="out of range"):
        DeepfakeScoreInput(1.2, 0.5, 0.5)


def test_face_attack_score_extremes():
    assert face_attack_score(VerdictMatrix(np.ones((3, 10), dtype=bool))) == 1.0
    assert face_attack_score(VerdictMatrix(np.zeros((3, 10), dtype=bool))) == 0.0


def test_face_attack_score_derived_rows():
    n = 10
    verdicts = np.zeros((3, n), dtype=bool)
    verdicts[0, :] = True
    verdicts[2, : n // 2] = True
    assert face_attack_score(VerdictMatrix(verdicts)) == pytest.approx(0.5, abs=1e-15)


def driving_patch(value):
    return ImageBuffer(np.full((1260, 2790, 3), value, dtype=np.uint8))


def test_driving_score_all_suppressed_black_patch():
    log = DetectionLog(np.zeros((2, 5, 240), dtype=np.int64))
    inp = DrivingScoreInput(log=log, patch=driving_patch(0), connected_region_count=1)
    assert driving_object_score(inp) == pytest.approx(1.2, abs=1e-15)


def test_driving_score_nothing_suppressed_white_patch():
    log = DetectionLog(np.ones((2, 5, 240), dtype=np.int64))
    inp = DrivingScoreInput(log=log, patch=driving_patch(255), connected_region_count=1)
    assert driving_object_score(inp) == 0.0
    assert driving_object_score(inp, area_mode="channel_sum") == 0.0


def test_driving_score_half_suppressed():
    counts = np.ones((2, 5, 240), dtype=np.int64)
    counts[0] = 0  # model 1 fully fooled
    inp = DrivingScoreInput(log=DetectionLog(counts), patch=driving_patch(255), connected_region_count=1)
    assert driving_object_score(inp) == pytest.approx(0.5, abs=1e-15)


def test_driving_score_void_on_region_count():
    log = DetectionLog(np.zeros((2, 5, 240), dtype=np.int64))
    inp = DrivingScoreInput(log=log, patch=driving_patch(0), connected_region_count=6)
    with pytest.raises(VoidResultError, match="void"):
        driving_object_score(inp)


def test_driving_patch_size_enforced():
    log = DetectionLog(np.zeros((2, 5, 240), dtype=np.int64))
    small = ImageBuffer(np.zeros((100, 100, 3), dtype=np.uint8))
    with pytest.raises(ValueError, match="2790x1260"):
        DrivingScoreInput(log=log, patch=small, connected_region_count=1)


def test_area_term_constant_patch_channel_sum():
    # constant value v contributes 0.2 * (1 - 3v/255) before clamping
    for v in (0, 30, 60, 85):
        expected = 0.2 * (1.0 - 3.0 * v / 255.0)
        assert patch_area_term(driving_patch(v), "channel_sum") == pytest.approx(expected, abs=1e-12)
    assert patch_area_term(driving_patch(255), "channel_sum") == 0.0  # clamped


def test_area_term_constant_patch_channel_mean():
    for v in (0, 100, 255):
        expected = 0.2 * (1.0 - v / 255.0)
        assert patch_area_term(driving_patch(v), "channel_mean") == pytest.approx(expected, abs=1e-12)


@pytest.mark.parametrize("team,truck,person,total", DRIVING_ROWS)
def test_driving_total_published_rows(team, truck, person, total):
    assert driving_total_score(truck, person) == pytest.approx(total, abs=5e-3), team


def test_driving_total_zero():
    assert driving_total_score(0.0, 0.0) == 0.0
