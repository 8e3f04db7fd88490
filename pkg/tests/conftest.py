from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture
def data_dir() -> Path:
    return DATA


def disk_mask(shape, center, radius):
    h, w = shape
    yy, xx = np.mgrid[0:h, 0:w]
    return (xx + 0.5 - center[0]) ** 2 + (yy + 0.5 - center[1]) ** 2 <= radius**2


def box_mask(shape, x0, y0, x1, y1):
    m = np.zeros(shape, dtype=bool)
    m[y0:y1, x0:x1] = True
    return m


def de_casteljau_split(points, t):
    """Independent subdivision of a cubic given as four (x, y) tuples."""
    p = [np.asarray(q, dtype=float) for q in points]
    a = [(1 - t) * p[i] + t * p[i + 1] for i in range(3)]
    b = [(1 - t) * a[i] + t * a[i + 1] for i in range(2)]
    m = (1 - t) * b[0] + t * b[1]
    return [p[0], a[0], b[0], m], [m, b[1], a[2], p[3]]


def crescent_case(rng, canvas=256):
    """A crescent (visible original) and a slightly perturbed disk (its completion)."""
    from iconlayers.synth import crescent_pair, disk

    r = rng.uniform(40, 80)
    c = (rng.uniform(100, canvas - 100), rng.uniform(100, canvas - 100))
    ang = rng.uniform(0, 2 * np.pi)
    br = rng.uniform(0.4, 0.9) * r
    dd = rng.uniform(r - br + 4, r + br - 4)
    bite = (c[0] + dd * np.cos(ang), c[1] + dd * np.sin(ang))
    crescent, _ = crescent_pair(c, r, bite, br)
    jitter = rng.uniform(-0.4, 0.4, 3)
    completion = disk((c[0] + jitter[0], c[1] + jitter[1]), r + jitter[2], (0, 0, canvas, canvas)).subpaths[0]
    return crescent, completion


def curve_points(segments, n=200):
    return np.concatenate([s.points_at(np.linspace(0, 1, n)) for s in segments])


def _angle(u, v):
    return abs(np.arctan2(u[0] * v[1] - u[1] * v[0], u[0] * v[0] + u[1] * v[1]))


def surgery_report(crescent, completion, canvas=256, eps=1.5):
    """Check one merged crescent against the three fidelity properties.

    Returns ``(reused_identical, max_joint_angle, max_stray_distance)`` where the
    stray distance is how far a differing pixel centre lies from the contact
    band (0 when every differing pixel is inside the band or sits on the
    completion's own boundary).
    """
    from scipy.spatial import cKDTree

    from iconlayers.raster import rasterize
    from iconlayers.surgery import detect_contacts, merge_contours
    from iconlayers.svg_model import CompoundPath

    contacts = [r for r in detect_contacts(crescent, completion, eps) if r.length >= 2 * eps]
    merged = merge_contours(crescent, completion, contacts)
    segs, origins = merged.subpath.segments, merged.origins

    # expected reused pieces, sliced independently of the library
    n = len(crescent.segments)
    expected = []
    for r in contacts:
        t0, t1 = r.interval_a
        i = int(np.floor(t0))
        while i < t1:
            lo, hi = max(t0, i) - i, min(t1, i + 1) - i
            if hi - lo > 1e-12:
                pts = crescent.segments[i % n].points
                whole = lo <= 0 and hi >= 1
                if not whole:
                    if hi < 1:
                        pts = de_casteljau_split(pts, hi)[0]
                    if lo > 0:
                        pts = de_casteljau_split(pts, lo / hi)[1]
                expected.append((whole, [tuple(map(float, p)) for p in pts]))
            i += 1
    kept = [s for s, o in zip(segs, origins) if o == "original"]
    identical = len(kept) == len(expected) and all(
        (s.points == tuple(pts)) if whole else np.allclose(s.as_array(), np.array(pts), atol=1e-9, rtol=0)
        for s, (whole, pts) in zip(kept, expected)
    )

    worst_angle = 0.0
    m = len(segs)
    for k, o in enumerate(origins):
        if o == "bridge":
            worst_angle = max(
                worst_angle,
                _angle(segs[k - 1].tangent(1.0), segs[k].tangent(0.0)),
                _angle(segs[k].tangent(1.0), segs[(k + 1) % m].tangent(0.0)),
            )

    vb = (0, 0, canvas, canvas)
    a = rasterize(CompoundPath((merged.subpath,), "nonzero", vb), canvas, canvas)
    b = rasterize(CompoundPath((completion,), "nonzero", vb), canvas, canvas)
    yy, xx = np.nonzero(a ^ b)
    stray = 0.0
    if yy.size:
        centres = np.column_stack([xx + 0.5, yy + 0.5])
        band = cKDTree(curve_points(kept, 400)).query(centres)[0]
        # boundary pixels of the untouched completion may flip with flattening (<= 0.05 px)
        edge = cKDTree(curve_points(completion.segments, 2000)).query(centres)[0]
        outside = (band > eps) & (edge > 0.05)
        if outside.any():
            stray = float(band[outside].max())
    return identical, worst_angle, stray
