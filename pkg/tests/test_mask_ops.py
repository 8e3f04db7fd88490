from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import box_mask, disk_mask
from iconlayers.errors import DimensionMismatch, EmptyVisibleMask, NoLabeledPixels
from iconlayers.mask_ops import (
    AmodalSet,
    amodal_from_parts,
    clean_completion,
    iou,
    merge_completions,
    refine_labels,
    scaled_constants,
    split_components,
)


def brute_nearest(raw, silhouette):
    """O(N^2) nearest labelled pixel, ties to the smaller id."""
    out = np.where(silhouette, raw, 0)
    lab = np.argwhere(raw > 0)
    ids = raw[raw > 0]
    for r, c in np.argwhere(silhouette & (raw == 0)):
        d2 = (lab[:, 0] - r) ** 2 + (lab[:, 1] - c) ** 2
        best = d2 == d2.min()
        out[r, c] = ids[best].min()
    return out


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31))
def test_refine_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    raw = np.where(rng.random((16, 16)) < 0.08, rng.integers(1, 5, (16, 16)), 0)
    if not (raw > 0).any():
        raw[0, 0] = 1
    sil = rng.random((16, 16)) < 0.7
    assert (refine_labels(raw, sil) == brute_nearest(raw, sil)).all()


def test_refine_postconditions_and_idempotence():
    rng = np.random.default_rng(1)
    sil = disk_mask((40, 40), (20, 20), 15)
    raw = np.where(rng.random((40, 40)) < 0.05, rng.integers(1, 4, (40, 40)), 0)
    out = refine_labels(raw, sil)
    assert ((out > 0) == sil).all()
    assert (refine_labels(out, sil) == out).all()


def test_refine_tie_goes_to_smaller_label():
    raw = np.zeros((1, 3), int)
    raw[0, 0], raw[0, 2] = 5, 2
    out = refine_labels(raw, np.ones((1, 3), bool))
    assert out[0, 1] == 2


def test_refine_errors():
    with pytest.raises(NoLabeledPixels):
        refine_labels(np.zeros((3, 3), int), np.ones((3, 3), bool))
    with pytest.raises(DimensionMismatch):
        refine_labels(np.ones((3, 3), int), np.ones((4, 4), bool))


def test_split_two_labels_five_fragments():
    lab = np.zeros((20, 20), int)
    lab[0:3, 0:3] = 1
    lab[10:13, 10:13] = 1
    lab[0:3, 10:13] = 2
    lab[10:13, 0:3] = 2
    lab[17:20, 17:20] = 2
    parts = split_components(lab)
    assert len(parts) == 5
    assert parts.source_label == [1, 1, 2, 2, 2]
    assert all(v.sum() == 9 for v in parts.visible)


def test_split_uses_four_connectivity():
    lab = np.zeros((4, 4), int)
    lab[0, 0] = lab[1, 1] = 3
    assert len(split_components(lab)) == 2


def test_clean_keeps_visible_and_drops_detached_halo():
    vis = disk_mask((128, 128), (64, 64), 20)
    halo = disk_mask((128, 128), (64, 64), 40) & ~disk_mask((128, 128), (64, 64), 38)
    raw = vis | halo
    out = clean_completion(raw, vis)
    assert (out >= vis).all()
    assert not (out & halo).any()


def test_clean_removes_thin_spur_far_from_visible():
    vis = box_mask((128, 128), 10, 10, 60, 60)
    raw = vis.copy()
    raw[30:31, 60:120] = True  # 1 px wide spur, longer than the dilation radius
    out = clean_completion(raw, vis, radius=3.0, w_min=2.0)
    assert out[30, 100] == False  # noqa: E712
    assert (out >= vis).all()


def test_clean_empty_visible():
    with pytest.raises(EmptyVisibleMask):
        clean_completion(np.ones((5, 5), bool), np.zeros((5, 5), bool))


def test_scaled_constants():
    assert scaled_constants((512, 512)) == (3.0, 2.0)
    assert scaled_constants((256, 256)) == (1.5, 1.0)


def test_iou_third():
    a = box_mask((4, 4), 0, 0, 2, 4)
    b = box_mask((4, 4), 1, 0, 3, 4)
    assert iou(a, b) == pytest.approx(1 / 3)


def test_merge_chain_is_transitive():
    # A~B and B~C exceed tau but A and C do not; all three must still merge
    shape = (1, 100)
    a = box_mask(shape, 0, 0, 50, 1)
    b = box_mask(shape, 5, 0, 55, 1)
    c = box_mask(shape, 10, 0, 60, 1)
    d = box_mask(shape, 80, 0, 100, 1)
    assert iou(a, b) > 0.8 and iou(b, c) > 0.8
    amodal = AmodalSet([a, b, c, d], [(0,), (1,), (2,), (3,)])
    out = merge_completions(amodal, tau=0.8)
    assert len(out) == 2
    assert out.provenance == [(0, 1, 2), (3,)]
    assert (out.amodal[0] == (a | b | c)).all()


def _union_find_groups(masks, tau):
    n = len(masks)
    groups = [{i} for i in range(n)]
    changed = True
    while changed:
        changed = False
        for g in groups:
            for h in groups:
                if g is not h and any(iou(masks[i], masks[j]) > tau for i in g for j in h):
                    g |= h
                    groups.remove(h)
                    changed = True
                    break
            if changed:
                break
    return sorted(tuple(sorted(g)) for g in groups)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 0.95))
def test_merge_matches_closure_oracle(seed, tau):
    rng = np.random.default_rng(seed)
    masks = []
    for _ in range(rng.integers(1, 7)):
        x, y = rng.integers(0, 20, 2)
        masks.append(box_mask((32, 32), x, y, x + rng.integers(4, 12), y + rng.integers(4, 12)))
    out = merge_completions(AmodalSet(masks, [(i,) for i in range(len(masks))]), tau)
    assert sorted(out.provenance) == _union_find_groups(masks, tau)
    for mask, group in zip(out.amodal, out.provenance):
        assert (mask == np.logical_or.reduce([masks[i] for i in group])).all()


def test_merge_rejects_bad_tau():
    with pytest.raises(ValueError):
        merge_completions(AmodalSet([], []), tau=0)


def test_amodal_from_parts_provenance():
    lab = np.zeros((6, 6), int)
    lab[0:2, 0:2] = 1
    lab[4:6, 4:6] = 2
    parts = split_components(lab)
    out = amodal_from_parts(parts, [np.ones((6, 6), bool)] * 2)
    assert out.provenance == [(0,), (1,)]
    with pytest.raises(ValueError):
        amodal_from_parts(parts, [np.ones((6, 6), bool)])
