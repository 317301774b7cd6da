from __future__ import annotations

import numpy as np
import pytest

from aisc.dataio import ImageBuffer
from aisc.patchcheck import (
    BinaryMask,
    connected_components,
    extract_perturbation,
    validate_face_patch,
)

from .oracles import floodfill_components


def image(arr):
    return ImageBuffer(np.asarray(arr, dtype=np.uint8))


def test_extract_identity():
    rng = np.random.default_rng(107)
    buf = rng.integers(0, 256, size=(20, 20, 3), dtype=np.uint8)
    mask = extract_perturbation(image(buf), image(buf.copy()))
    assert not mask.bits.any()


def test_extract_single_channel_bump():
    base = np.zeros((10, 10, 3), dtype=np.uint8)
    adv = base.copy()
    adv[4, 7, 0] += 1
    mask = extract_perturbation(image(adv), image(base))
    assert mask.area() == 1
    assert mask.bits[4, 7]


def test_extract_block():
    base = np.zeros((12, 12, 3), dtype=np.uint8)
    adv = base.copy()
    adv[2:7, 3:8] = 200
    mask = extract_perturbation(image(adv), image(base))
    assert mask.area() == 25


def test_extract_size_mismatch():
    with pytest.raises(ValueError, match="size mismatch"):
        extract_perturbation(image(np.zeros((4, 4, 3))), image(np.zeros((5, 4, 3))))


def test_two_disjoint_blocks():
    bits = np.zeros((10, 10), dtype=bool)
    bits[1:3, 1:3] = True
    bits[6:8, 6:8] = True
    report = connected_components(BinaryMask(bits), 8)
    assert report.count == 2
    assert report.total_area == 8
    assert [c.pixel_count for c in report.components] == [4, 4]


def test_corner_touch_connectivity():
    bits = np.zeros((6, 6), dtype=bool)
    bits[0:2, 0:2] = True
    bits[2:4, 2:4] = True  # touches only at corner (1,1)-(2,2)
    assert connected_components(BinaryMask(bits), 8).count == 1
    assert connected_components(BinaryMask(bits), 4).count == 2


def test_component_ordering_and_bbox():
    bits = np.zeros((8, 8), dtype=bool)
    bits[5, 0:3] = True  # later in scan order
    bits[0, 6] = True  # first pixel in scan order
    report = connected_components(BinaryMask(bits), 8)
    assert report.count == 2
    assert report.components[0].bounding_box == (6, 0, 6, 0)
    assert report.components[1].bounding_box == (0, 5, 2, 5)
    assert report.components[1].pixel_count == 3


def random_mask(rng):
    h = int(rng.integers(4, 64))
    w = int(rng.integers(4, 64))
    style = rng.integers(3)
    if style == 0:
        bits = rng.random((h, w)) < rng.uniform(0.05, 0.9)
    elif style == 1:
        bits = np.zeros((h, w), dtype=bool)
        for _ in range(int(rng.integers(1, 8))):
            y, x = int(rng.integers(h)), int(rng.integers(w))
            bh, bw = int(rng.integers(1, h)), int(rng.integers(1, w))
            bits[y : y + bh, x : x + bw] = True
    else:
        bits = rng.random((h, w)) < 0.5
        bits[:: max(1, int(rng.integers(1, 4))), :] = False
    return BinaryMask(bits)


def test_matches_floodfill_oracle_random():
    rng = np.random.default_rng(109)
    for _ in range(150):
        mask = random_mask(rng)
        for connectivity in (4, 8):
            report = connected_components(mask, connectivity)
            oracle = floodfill_components(mask.bits, connectivity)
            assert report.count == len(oracle)
            assert [c.pixel_count for c in report.components] == [o["pixel_count"] for o in oracle]
            assert [c.bounding_box for c in report.components] == [o["bounding_box"] for o in oracle]
            assert report.total_area == mask.area()


def test_count_monotone_in_connectivity():
    rng = np.random.default_rng(113)
    for _ in range(100):
        mask = random_mask(rng)
        c4 = connected_components(mask, 4).count
        c8 = connected_components(mask, 8).count
        assert c8 <= c4


def face_pair(perturb):
    """(adv, orig) 112x112 pair; perturb(array) edits the adversarial copy."""
    orig = np.full((112, 112, 3), 30, dtype=np.uint8)
    adv = orig.copy()
    perturb(adv)
    return image(adv), image(orig)


def test_validate_identical_valid():
    adv, orig = face_pair(lambda a: None)
    report = validate_face_patch(adv, orig)
    assert report.valid
    assert report.count == 0
    assert report.total_area == 0


def test_validate_30x30_accepted():
    adv, orig = face_pair(lambda a: a.__setitem__((slice(10, 40), slice(10, 40)), 200))
    report = validate_face_patch(adv, orig)
    assert report.total_area == 900
    assert report.valid


def test_validate_36x36_rejected_area():
    adv, orig = face_pair(lambda a: a.__setitem__((slice(10, 46), slice(10, 46)), 200))
    report = validate_face_patch(adv, orig)
    assert report.total_area == 1296
    assert not report.valid


def test_validate_six_dots_rejected_count():
    def dots(a):
        for i in range(6):
            a[3 + 10 * i, 5] = 99

    adv, orig = face_pair(dots)
    report = validate_face_patch(adv, orig)
    assert report.count == 6
    assert report.total_area == 6
    assert not report.valid


def test_validate_requires_face_size():
    small = image(np.zeros((64, 64, 3)))
    with pytest.raises(ValueError, match="112x112"):
        validate_face_patch(small, small)
