from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box_mask, disk_mask
from iconlayers.errors import DimensionMismatch, EmptyMask
from iconlayers.metrics import (
    CD_SAMPLES,
    MATCH_IOU,
    chamfer_distance,
    match_instances,
    mean_iou,
    panoptic_quality,
    score_icon,
)


def pq_fixture():
    """One true positive at IoU 0.8, one false positive, one false negative."""
    shape = (10, 40)
    ref_tp = box_mask(shape, 0, 0, 10, 1)  # 10 px
    pred_tp = box_mask(shape, 0, 0, 8, 1)  # 8 px inside it: IoU 0.8
    pred_fp = box_mask(shape, 20, 5, 25, 10)
    ref_fn = box_mask(shape, 30, 0, 40, 10)
    return [pred_tp, pred_fp], [ref_tp, ref_fn]


def test_constants():
    assert MATCH_IOU == 0.5
    assert CD_SAMPLES == 4096


def test_pq_hand_fixture_is_40():
    pred, ref = pq_fixture()
    m = match_instances(pred, ref)
    assert [(i, j) for i, j, _ in m.matched_pairs] == [(0, 0)]
    assert m.matched_pairs[0][2] == pytest.approx(0.8)
    assert m.unmatched_predictions == [1] and m.unmatched_references == [1]
    assert panoptic_quality(m) == 40.0
    assert mean_iou(m, len(ref)) == pytest.approx(40.0)


def test_match_threshold_is_strict():
    a = box_mask((1, 4), 0, 0, 2, 1)
    b = box_mask((1, 4), 0, 0, 4, 1)  # IoU exactly 0.5: no match
    assert match_instances([a], [b]).matched_pairs == []


def test_cd_single_pixels_ten_apart():
    a = np.zeros((20, 20), bool)
    b = np.zeros((20, 20), bool)
    a[5, 2] = True
    b[5, 12] = True
    assert chamfer_distance(a, b) == 20.0


def test_cd_identical_masks_small():
    m = disk_mask((128, 128), (64, 64), 40)
    assert chamfer_distance(m, m, 4096, seed=3) < 1.5


def brute_cd(a, b, n, seed):
    def pts(m):
        ys, xs = np.nonzero(m)
        idx = np.random.default_rng(seed).integers(0, xs.size, size=n)
        return np.stack([xs[idx] + 0.5, ys[idx] + 0.5], 1)

    p, q = pts(a), pts(b)
    d = np.sqrt(((p[:, None] - q[None]) ** 2).sum(-1))
    return d.min(1).mean() + d.min(0).mean()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_cd_matches_brute_force_and_is_symmetric(seed):
    rng = np.random.default_rng(seed)
    a = rng.random((24, 24)) < 0.1
    b = rng.random((24, 24)) < 0.1
    a[0, 0] = b[23, 23] = True
    cd = chamfer_distance(a, b, 256, seed)
    assert cd == pytest.approx(brute_cd(a, b, 256, seed), abs=1e-9)
    assert cd == pytest.approx(chamfer_distance(b, a, 256, seed), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31))
def test_scores_invariant_to_prediction_order(seed):
    rng = np.random.default_rng(seed)
    ref = [box_mask((32, 32), *rng.integers(0, 12, 2), *rng.integers(16, 32, 2)) for _ in range(3)]
    pred = [r ^ (rng.random((32, 32)) < 0.05) for r in ref] + [box_mask((32, 32), 0, 0, 3, 3)]
    perm = rng.permutation(len(pred))
    a = score_icon("x", pred, ref, 512, 1)
    b = score_icon("x", [pred[i] for i in perm], ref, 512, 1)
    assert a.miou == pytest.approx(b.miou) and a.pq == pytest.approx(b.pq)
    assert a.cd == pytest.approx(b.cd)


def test_errors():
    with pytest.raises(EmptyMask):
        chamfer_distance(np.zeros((4, 4), bool), np.ones((4, 4), bool))
    with pytest.raises(DimensionMismatch):
        chamfer_distance(np.ones((4, 4), bool), np.ones((5, 5), bool))
    with pytest.raises(DimensionMismatch):
        match_instances([np.ones((4, 4), bool)], [np.ones((5, 5), bool)])
    with pytest.raises(ValueError):
        mean_iou(match_instances([], []), 0)


def test_no_matches_gives_nan_cd():
    s = score_icon("y", [box_mask((8, 8), 0, 0, 2, 2)], [box_mask((8, 8), 5, 5, 8, 8)])
    assert s.miou == 0.0 and s.pq == 0.0 and np.isnan(s.cd)
