from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import crescent_case, de_casteljau_split, surgery_report
from iconlayers.errors import DegenerateBridge, ParameterOutOfRange
from iconlayers.surgery import (
    CONTACT_EPSILON_PX,
    build_bridge,
    cut_at,
    debug_svg,
    detect_contacts,
    extract,
    merge_contours,
    reuse_curves,
)
from iconlayers.svg_model import CubicSegment, Subpath, parse_path_data
from iconlayers.synth import crescent_pair, disk


def square(x, y, s):
    return parse_path_data(f"M{x} {y} h{s} v{s} h{-s} z")[0]


def test_epsilon_default():
    assert CONTACT_EPSILON_PX == 1.5


def test_cut_at_integer_and_fractional():
    sp = square(0, 0, 10)
    left, right = cut_at(sp, 2.0)
    assert len(left.segments) == 2 and len(right.segments) == 2
    assert left.segments[0] is sp.segments[0]
    left, right = cut_at(sp, 1.25)
    assert right.segments[0].p0 == pytest.approx((10.0, 2.5), abs=1e-12)
    with pytest.raises(ParameterOutOfRange):
        cut_at(sp, 4.5)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 4.0))
def test_cut_then_rejoin_is_identity(t):
    sp = disk((50, 50), 20, (0, 0, 100, 100)).subpaths[0]
    left, right = cut_at(sp, t)
    segs = (list(left.segments) if left else []) + (list(right.segments) if right else [])
    # rejoined pieces trace the same curve
    i = min(int(t), 3)
    joined = np.concatenate([s.points_at(np.linspace(0, 1, 50)) for s in segs])
    ref = np.concatenate([s.points_at(np.linspace(0, 1, 400)) for s in sp.segments])
    d = np.sqrt(((joined[:, None] - ref[None]) ** 2).sum(-1)).min(1)
    assert d.max() < 0.05
    # pieces split the i-th segment exactly as de Casteljau does
    frac = t - i
    if 0 < frac < 1:
        a, b = de_casteljau_split(sp.segments[i].points, frac)
        assert np.abs(left.segments[-1].as_array() - np.array(a)).max() < 1e-12
        assert np.abs(right.segments[0].as_array() - np.array(b)).max() < 1e-12


def test_extract_keeps_whole_segments_by_identity():
    sp = square(0, 0, 10)
    out = extract(sp, 0.5, 3.5)
    assert out[1] is sp.segments[1] and out[2] is sp.segments[2]
    assert out[0].p0 == pytest.approx((5.0, 0.0))
    # wrap around the start
    out = extract(sp, 3.0, 5.0)
    assert out[0] is sp.segments[3] and out[1] is sp.segments[0]
    with pytest.raises(ParameterOutOfRange):
        extract(sp, 2.0, 1.0)


def test_bridge_control_points_are_analytic():
    br = build_bridge((0.0, 0.0), (1.0, 0.0), (3.0, 4.0), (0.0, 2.0))
    # chord 5, alpha = 5/3 along each unit tangent
    assert br.segment.c1 == pytest.approx((5 / 3, 0.0), abs=1e-12)
    assert br.segment.c2 == pytest.approx((3.0, 4.0 - 5 / 3), abs=1e-12)
    assert br.segment.p0 == (0.0, 0.0) and br.segment.p3 == (3.0, 4.0)
    with pytest.raises(DegenerateBridge):
        build_bridge((1.0, 1.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0))


def test_contacts_on_identical_contours_are_full():
    sp = square(0, 0, 20)
    regions = detect_contacts(sp, sp, 1.0)
    assert len(regions) == 1 and regions[0].full
    merged = merge_contours(sp, sp, regions)
    assert merged.subpath is sp and set(merged.origins) == {"original"}


def test_no_contact_returns_completion():
    a = square(0, 0, 10)
    b = square(50, 50, 10)
    assert detect_contacts(a, b, 1.5) == []
    merged = merge_contours(a, b, [])
    assert merged.subpath is b and set(merged.origins) == {"completion"}


def test_crescent_keeps_outer_arc_and_bridges_are_g1():
    rng = np.random.default_rng(11)
    for _ in range(5):
        identical, angle, stray = surgery_report(*crescent_case(rng))
        assert identical
        assert angle < 1e-6
        assert stray == 0.0


def test_crescent_contact_is_the_outer_arc():
    crescent, circle = crescent_pair((100, 100), 50, (150, 100), 30)
    regions = [r for r in detect_contacts(crescent, circle, 1.5) if r.length >= 3.0]
    assert len(regions) == 1
    # most of the circle's circumference is shared
    assert regions[0].length > 0.7 * 2 * math.pi * 50


def test_bite_arc_is_not_kept():
    crescent, circle = crescent_pair((100, 100), 50, (150, 100), 30)
    merged = reuse_curves([crescent], circle, 1.5)
    for s, o in zip(merged.subpath.segments, merged.origins):
        if o == "original":
            # reused geometry stays within epsilon of the big circle; only the
            # stretch of bite arc near each horn is that close
            pts = s.points_at(np.linspace(0, 1, 9))
            r = np.hypot(pts[:, 0] - 100, pts[:, 1] - 100)
            assert np.abs(r - 50).max() <= 1.5 + 1e-9


def test_merged_contour_is_closed_and_chained():
    rng = np.random.default_rng(3)
    crescent, completion = crescent_case(rng)
    merged = reuse_curves([crescent], completion, 1.5)
    segs = merged.subpath.segments
    assert merged.subpath.closed
    for a, b in zip(segs, segs[1:] + segs[:1]):
        assert a.p3 == b.p0
    assert len(merged.origins) == len(segs)


def test_short_contacts_are_ignored():
    # a square touching the completion along a 1 px stretch only
    comp = square(0, 0, 40)
    orig = Subpath(
        (
            CubicSegment.line((40.5, 10.0), (41.0, 10.0)),
            CubicSegment.line((41.0, 10.0), (60.0, 30.0)),
            CubicSegment.line((60.0, 30.0), (40.5, 10.0)),
        )
    )
    merged = reuse_curves([orig], comp, 1.5)
    assert set(merged.origins) == {"completion"}


def test_debug_svg_colours_by_origin():
    crescent, circle = crescent_pair((100, 100), 50, (150, 100), 30)
    merged = reuse_curves([crescent], circle, 1.5)
    doc = debug_svg(merged, (0, 0, 200, 200)).decode()
    assert doc.count('class="original"') == merged.origins.count("original")
    assert "#1f77b4" in doc
