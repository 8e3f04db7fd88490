"""Bitmap to cubic-Bezier tracing.

Boundaries are followed along pixel cracks (the corner lattice), so even
one-pixel-wide features produce exact closed polygons. Each polygon is
smoothed to its crack midpoints, split at sharp corners and fitted with
least-squares cubics, re-estimating parameters and subdividing at the worst
point until the fit tolerance holds.

Tolerances are expressed in mask pixels; the output is mapped to the
requested viewbox afterwards. Outer contours have positive signed area
(shoelace in path coordinates), holes negative; the fill rule is nonzero.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyMask
from .mask_ops import iou
from .raster import rasterize
from .svg_model import CompoundPath, CubicSegment, Subpath, ViewBox

log = logging.getLogger(__name__)


class DroppedAllContours(EmptyMask):
    """Every contour fell below ``min_contour_area``."""


class DroppedAllContoursWarning(UserWarning):
    pass


@dataclass(frozen=True)
class TraceConfig:
    corner_angle_threshold: float = 60.0  # degrees
    fit_tolerance: float = 1.0  # px
    simplify_tolerance: float = 0.5  # px
    min_contour_area: float = 4.0  # px^2

    def __post_init__(self) -> None:
        if not 0 < self.corner_angle_threshold < 180:
            raise ValueError("corner_angle_threshold must lie in (0, 180)")
        if self.fit_tolerance <= 0 or self.simplify_tolerance <= 0 or self.min_contour_area <= 0:
            raise ValueError("tolerances must be positive")

    @classmethod
    def from_mapping(cls, data: dict) -> TraceConfig:
        """Build from a config-file section; unknown keys are an error."""
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(data) - known)
        if extra:
            raise ValueError(f"unknown trace config keys: {', '.join(extra)}")
        return cls(**{k: float(v) for k, v in data.items()})


CORNER_WINDOW = 2  # samples on each side: a 5-sample turning window
_MAX_REPARAM = 4

# crack directions in screen coordinates (x right, y down)
_RIGHT_TURN = {(1, 0): (0, 1), (0, 1): (-1, 0), (-1, 0): (0, -1), (0, -1): (1, 0)}


# ---------------------------------------------------------------------------
# crack following
# ---------------------------------------------------------------------------


def boundary_loops(mask: np.ndarray) -> list[np.ndarray]:
    """Closed lattice polygons around every 4-connected foreground component and hole.

    Vertices are integer ``(x, y)`` pixel-corner coordinates. Foreground lies
    on the right of travel in screen space, which makes outer loops positive
    and hole loops negative under the shoelace formula.
    """
    m = np.pad(np.asarray(mask, dtype=bool), 1)
    fg = m[1:-1, 1:-1]
    r, c = np.nonzero(fg & ~m[:-2, 1:-1])
    edges = [np.stack([c, r, c + 1, r], 1)]
    r, c = np.nonzero(fg & ~m[1:-1, 2:])
    edges.append(np.stack([c + 1, r, c + 1, r + 1], 1))
    r, c = np.nonzero(fg & ~m[2:, 1:-1])
    edges.append(np.stack([c + 1, r + 1, c, r + 1], 1))
    r, c = np.nonzero(fg & ~m[1:-1, :-2])
    edges.append(np.stack([c, r + 1, c, r], 1))
    e = np.concatenate(edges)
    if len(e) == 0:
        return []
    # deterministic: start loops from the top-left-most unused edge
    e = e[np.lexsort((e[:, 3], e[:, 2], e[:, 0], e[:, 1]))]

    out_edges: dict[tuple[int, int], list[int]] = {}
    for k, (x0, y0, _, _) in enumerate(e.tolist()):
        out_edges.setdefault((x0, y0), []).append(k)
    used = np.zeros(len(e), dtype=bool)
    el = e.tolist()

    loops = []
    for k0 in range(len(el)):
        if used[k0]:
            continue
        verts = []
        k = k0
        while True:
            used[k] = True
            x0, y0, x1, y1 = el[k]
            verts.append((x0, y0))
            cands = [j for j in out_edges[(x1, y1)] if not used[j]]
            if not cands:
                break
            if len(cands) == 1:
                k = cands[0]
            else:
                want = _RIGHT_TURN[(x1 - x0, y1 - y0)]
                k = next((j for j in cands if (el[j][2] - x1, el[j][3] - y1) == want), cands[0])
        loops.append(np.array(verts, dtype=np.int64))
    return loops


def lattice_area(verts: np.ndarray) -> float:
    x, y = verts[:, 0], verts[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


# ---------------------------------------------------------------------------
# corners and simplification
# ---------------------------------------------------------------------------


def _turning_angles(pts: np.ndarray, w: int) -> np.ndarray:
    a = pts - np.roll(pts, w, axis=0)
    b = np.roll(pts, -w, axis=0) - pts
    cross = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
    dot = np.einsum("ij,ij->i", a, b)
    return np.degrees(np.abs(np.arctan2(cross, dot)))


def find_corners(mids: np.ndarray, threshold: float) -> list[int]:
    n = len(mids)
    if n < 2 * CORNER_WINDOW + 1:
        return []
    ang = _turning_angles(mids, CORNER_WINDOW)
    corners = []
    for i in np.nonzero(ang > threshold)[0]:
        window = [(i + d) % n for d in range(-CORNER_WINDOW, CORNER_WINDOW + 1)]
        peak = max(ang[j] for j in window)
        # non-maximum suppression; the earliest index of a tied peak wins
        if next(j for j in window if ang[j] == peak) == i:
            corners.append(int(i))
    return corners


def _corner_points(verts: np.ndarray, mids: np.ndarray, i: int) -> np.ndarray:
    """Snap a corner on crack ``i`` to the crack endpoint(s) the lattice turns at.

    A crack turning at both ends is the cap of a one-pixel-wide feature; both
    endpoints are kept so the cap keeps its width.
    """
    n = len(verts)

    def turns(j: int) -> bool:
        d_in = verts[j % n] - verts[(j - 1) % n]
        d_out = verts[(j + 1) % n] - verts[j % n]
        return bool(np.any(d_in != d_out))

    t0, t1 = turns(i), turns(i + 1)
    if t1 and not t0:
        return verts[(i + 1) % n][None].astype(float)
    if t0 and not t1:
        return verts[i % n][None].astype(float)
    if t0 and t1:
        return np.vstack([verts[i % n], verts[(i + 1) % n]]).astype(float)
    return mids[i][None]


def rdp(points: np.ndarray, tol: float) -> np.ndarray:
    """Ramer-Douglas-Peucker; returns indices of the kept points."""
    keep = np.zeros(len(points), dtype=bool)
    keep[0] = keep[-1] = True
    stack = [(0, len(points) - 1)]
    while stack:
        a, b = stack.pop()
        if b <= a + 1:
            continue
        seg = points[b] - points[a]
        rel = points[a + 1 : b] - points[a]
        norm = math.hypot(*seg)
        if norm == 0:
            d = np.hypot(rel[:, 0], rel[:, 1])
        else:
            d = np.abs(seg[0] * rel[:, 1] - seg[1] * rel[:, 0]) / norm
        k = int(np.argmax(d))
        if d[k] > tol:
            m = a + 1 + k
            keep[m] = True
            stack.append((a, m))
            stack.append((m, b))
    return np.nonzero(keep)[0]


# ---------------------------------------------------------------------------
# least-squares cubic fitting
# ---------------------------------------------------------------------------


def _unit(v: np.ndarray) -> np.ndarray:
    n = math.hypot(*v)
    return v / n if n > 0 else v


def _bezier(ctrl: np.ndarray, t: np.ndarray) -> np.ndarray:
    t = t[:, None]
    mt = 1 - t
    return mt**3 * ctrl[0] + 3 * mt**2 * t * ctrl[1] + 3 * mt * t**2 * ctrl[2] + t**3 * ctrl[3]


def _generate(pts: np.ndarray, u: np.ndarray, t1: np.ndarray, t2: np.ndarray) -> np.ndarray:
    first, last = pts[0], pts[-1]
    b0 = (1 - u) ** 3
    b1 = 3 * u * (1 - u) ** 2
    b2 = 3 * u**2 * (1 - u)
    b3 = u**3
    a1 = b1[:, None] * t1
    a2 = b2[:, None] * t2
    c00 = np.einsum("ij,ij->", a1, a1)
    c01 = np.einsum("ij,ij->", a1, a2)
    c11 = np.einsum("ij,ij->", a2, a2)
    tmp = pts - ((b0 + b1)[:, None] * first + (b2 + b3)[:, None] * last)
    x0 = np.einsum("ij,ij->", a1, tmp)
    x1 = np.einsum("ij,ij->", a2, tmp)
    det = c00 * c11 - c01 * c01
    seg_len = math.hypot(*(last - first))
    eps = 1e-6 * seg_len
    alpha1 = alpha2 = 0.0
    if abs(det) > 1e-12:
        alpha1 = (x0 * c11 - x1 * c01) / det
        alpha2 = (c00 * x1 - c01 * x0) / det
    if alpha1 < eps or alpha2 < eps:
        alpha1 = alpha2 = seg_len / 3.0
    return np.array([first, first + alpha1 * t1, last + alpha2 * t2, last])


def _reparameterize(ctrl: np.ndarray, pts: np.ndarray, u: np.ndarray) -> np.ndarray:
    d1 = 3 * (ctrl[1:] - ctrl[:-1])
    d2 = 2 * (d1[1:] - d1[:-1])
    q = _bezier(ctrl, u) - pts
    t = u[:, None]
    mt = 1 - t
    q1 = mt**2 * d1[0] + 2 * mt * t * d1[1] + t**2 * d1[2]
    q2 = mt * d2[0] + t * d2[1]
    num = np.einsum("ij,ij->i", q, q1)
    den = np.einsum("ij,ij->i", q1, q1) + np.einsum("ij,ij->i", q, q2)
    step = np.where(np.abs(den) > 1e-12, num / np.where(np.abs(den) > 1e-12, den, 1.0), 0.0)
    new = np.clip(u - step, 0.0, 1.0)
    new[0], new[-1] = 0.0, 1.0
    return np.maximum.accumulate(new)


def _chord_params(pts: np.ndarray) -> np.ndarray:
    d = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    return d / d[-1] if d[-1] > 0 else np.linspace(0, 1, len(pts))


def fit_cubics(pts: np.ndarray, t1: np.ndarray, t2: np.ndarray, tol: float, depth: int = 0) -> list[np.ndarray]:
    """Fit ``pts`` (endpoints interpolated) with cubics; ``t1`` leaves the start, ``t2`` points back from the end."""
    if len(pts) == 2:
        dist = math.hypot(*(pts[1] - pts[0])) / 3.0
        return [np.array([pts[0], pts[0] + dist * t1, pts[1] + dist * t2, pts[1]])]
    u = _chord_params(pts)
    ctrl = _generate(pts, u, t1, t2)
    err = np.hypot(*(_bezier(ctrl, u) - pts).T)
    if err.max() <= tol:
        return [ctrl]
    if err.max() <= 4 * tol:
        for _ in range(_MAX_REPARAM):
            u = _reparameterize(ctrl, pts, u)
            ctrl = _generate(pts, u, t1, t2)
            err = np.hypot(*(_bezier(ctrl, u) - pts).T)
            if err.max() <= tol:
                return [ctrl]
    if depth > 40:
        return [ctrl]
    split = int(np.argmax(err[1:-1])) + 1
    centre = _unit(pts[split - 1] - pts[split + 1])
    if not centre.any():
        centre = _unit(pts[split - 1] - pts[split])
    left = fit_cubics(pts[: split + 1], t1, centre, tol, depth + 1)
    right = fit_cubics(pts[split:], -centre, t2, tol, depth + 1)
    return left + right


def _end_tangent(pts: np.ndarray, at_start: bool, reach: int = 3) -> np.ndarray:
    k = min(reach, len(pts) - 1)
    v = pts[k] - pts[0] if at_start else pts[-1 - k] - pts[-1]
    u = _unit(v)
    if not u.any():
        u = _unit(pts[1] - pts[0]) if at_start else _unit(pts[-2] - pts[-1])
    return u


def _piece_to_ctrls(pts: np.ndarray, cfg: TraceConfig, t1=None, t2=None) -> list[np.ndarray]:
    keep = rdp(pts, cfg.simplify_tolerance)
    if len(keep) == 2:
        a, b = pts[0], pts[-1]
        return [np.array([a, a + (b - a) / 3.0, b - (b - a) / 3.0, b])]
    t1 = _end_tangent(pts, True) if t1 is None else t1
    t2 = _end_tangent(pts, False) if t2 is None else t2
    return fit_cubics(pts, t1, t2, cfg.fit_tolerance)


def _ctrls_to_subpath(ctrls: list[np.ndarray]) -> Subpath:
    pts = [tuple((float(x), float(y)) for x, y in c) for c in ctrls]
    segs = []
    for k, c in enumerate(pts):
        p0 = segs[-1].p3 if segs else c[0]
        p3 = pts[0][0] if k == len(pts) - 1 else c[3]
        segs.append(CubicSegment(p0, c[1], c[2], p3))
    return Subpath(tuple(s for s in segs if not s.is_degenerate))


def trace_loop(verts: np.ndarray, cfg: TraceConfig) -> Subpath:
    """Fit one lattice loop; the result keeps the loop's orientation."""
    n = len(verts)
    if n < 2 * CORNER_WINDOW + 1:
        # too short for the turning window: the lattice polygon is the answer
        v = verts.astype(float)
        return Subpath(tuple(CubicSegment.line(tuple(v[k]), tuple(v[(k + 1) % n])) for k in range(n)))
    mids = 0.5 * (verts + np.roll(verts, -1, axis=0))
    corners = find_corners(mids, cfg.corner_angle_threshold)
    if not corners:
        ring = np.vstack([mids, mids[:1]])
        tangent = _unit(mids[1] - mids[-1])
        return _ctrls_to_subpath(_piece_to_ctrls(ring, cfg, tangent, -tangent))

    cpts = {i: _corner_points(verts, mids, i) for i in corners}
    ctrls: list[np.ndarray] = []
    for a, b in zip(corners, corners[1:] + [corners[0] + n]):
        cap = cpts[a]
        if len(cap) == 2:
            ctrls.extend(_piece_to_ctrls(cap, cfg))
        idx = [(j % n) for j in range(a + 1, b)]
        piece = np.vstack([cap[-1:], mids[idx].reshape(-1, 2), cpts[b % n][:1]])
        ctrls.extend(_piece_to_ctrls(piece, cfg))
    return _ctrls_to_subpath(ctrls)


def trace(mask: np.ndarray, config: TraceConfig | None = None, viewbox: ViewBox | None = None) -> CompoundPath:
    """Vectorise a binary mask into a nonzero-rule compound path."""
    cfg = config or TraceConfig()
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        raise EmptyMask("cannot trace an empty mask")
    h, w = mask.shape
    subpaths = []
    for verts in boundary_loops(mask):
        if abs(lattice_area(verts)) < cfg.min_contour_area:
            continue
        subpaths.append(trace_loop(verts, cfg))
    if not subpaths:
        raise DroppedAllContours("every contour is below min_contour_area")
    path = CompoundPath(tuple(subpaths), "nonzero", (0.0, 0.0, float(w), float(h)))
    if viewbox is not None and tuple(viewbox) != (0.0, 0.0, float(w), float(h)):
        x0, y0, vw, vh = viewbox
        path = path.mapped(vw / w, vh / h, x0, y0, viewbox)
    return path


def round_trip_iou(mask: np.ndarray, config: TraceConfig | None = None) -> float:
    try:
        path = trace(mask, config)
    except DroppedAllContours:
        warnings.warn("all contours dropped; round trip is empty", DroppedAllContoursWarning, stacklevel=2)
        return 0.0
    h, w = mask.shape
    return iou(np.asarray(mask, dtype=bool), rasterize(path, w, h))
