"""Curve reuse: splice an original partial contour into a completed proposal.

Where the original contour ``c_a`` runs within ``epsilon`` of the completed
contour ``c_b`` (a *contact region*), the original Bezier segments are kept
verbatim. Everywhere else the completion supplies the geometry. The kept
chains are joined by cubic bridges that match position and tangent direction
at both ends.

Parameters on a subpath are global: segment ``i`` spans ``[i, i + 1]``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import AmbiguousTopology, DegenerateBridge, ParameterOutOfRange
from .svg_model import CubicSegment, Point, Subpath

log = logging.getLogger(__name__)

Origin = Literal["original", "completion", "bridge"]

CONTACT_EPSILON_PX = 1.5
BRIDGE_WELD = 1e-9
MIN_CONTACT_FACTOR = 2.0  # contacts shorter than this many epsilons are ignored
_DENSE = 48
PROJECTION_SAMPLES = 4096


@dataclass(frozen=True)
class ContactRegion:
    interval_a: tuple[float, float]  # end may exceed n_a when the region wraps
    interval_b: tuple[float, float]  # b parameters of the projections of interval_a's ends
    max_gap: float
    reversed: bool = False  # c_b runs opposite to c_a through this region
    length: float = 0.0  # arc length on c_a
    full: bool = False  # the whole of c_a is in contact


@dataclass(frozen=True)
class BridgeCurve:
    segment: CubicSegment
    start_tangent: Point
    end_tangent: Point


@dataclass(frozen=True)
class KeptChain:
    segments: tuple[CubicSegment, ...]
    origin: Origin


@dataclass
class MergedContour:
    subpath: Subpath
    origins: list[Origin]
    bridges: list[BridgeCurve] = field(default_factory=list)
    chains: list[KeptChain] = field(default_factory=list)
    fallback: bool = False


# ---------------------------------------------------------------------------
# sampling helpers
# ---------------------------------------------------------------------------


def _arc_samples(sp: Subpath, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Points and global parameters spaced at most ``spacing`` apart in arc length."""
    dense_t = np.linspace(0.0, 1.0, _DENSE + 1)
    pts_out, par_out = [], []
    for i, seg in enumerate(sp.segments):
        pts = seg.points_at(dense_t)
        cum = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
        total = cum[-1]
        n = max(1, int(math.ceil(total / spacing)))
        targets = np.linspace(0.0, total, n + 1)[:-1]
        ts = np.interp(targets, cum, dense_t) if total > 0 else np.zeros(1)
        pts_out.append(seg.points_at(ts))
        par_out.append(i + ts)
    return np.concatenate(pts_out), np.concatenate(par_out)


class _Projector:
    """Nearest point on a closed subpath, via a dense polyline and segment projection."""

    def __init__(self, sp: Subpath, spacing: float) -> None:
        self.sp = sp
        self.n = sp.param_length
        self.pts, self.par = _arc_samples(sp, spacing)
        self.tree = cKDTree(self.pts)

    def project(self, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        q = np.atleast_2d(q)
        _, j = self.tree.query(q)
        m = len(self.pts)
        best_d = np.full(len(q), np.inf)
        best_t = np.zeros(len(q))
        for nb in (-1, 1):
            k = (j + nb) % m
            a, b = self.pts[j], self.pts[k]
            ab = b - a
            denom = np.einsum("ij,ij->i", ab, ab)
            s = np.where(denom > 0, np.einsum("ij,ij->i", q - a, ab) / np.where(denom > 0, denom, 1), 0.0)
            s = np.clip(s, 0.0, 1.0)
            foot = a + s[:, None] * ab
            dist = np.hypot(*(q - foot).T)
            ta, tb = self.par[j], self.par[k]
            if nb == 1:
                tb = np.where(tb <= ta, tb + self.n, tb)
            else:
                tb = np.where(tb >= ta, tb - self.n, tb)
            t = (ta + s * (tb - ta)) % self.n
            better = dist < best_d
            best_d = np.where(better, dist, best_d)
            best_t = np.where(better, t, best_t)
        return best_d, best_t


def _points_at(sp: Subpath, params: np.ndarray) -> np.ndarray:
    n = sp.param_length
    params = np.asarray(params, dtype=float) % n
    out = np.empty((len(params), 2))
    idx = np.minimum(np.floor(params).astype(int), n - 1)
    for i in np.unique(idx):
        sel = idx == i
        out[sel] = sp.segments[i].points_at(params[sel] - i)
    return out


# ---------------------------------------------------------------------------
# contacts
# ---------------------------------------------------------------------------


def detect_contacts(c_a: Subpath, c_b: Subpath, epsilon: float) -> list[ContactRegion]:
    """Maximal stretches of ``c_a`` lying within ``epsilon`` of ``c_b``."""
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if not (c_a.closed and c_b.closed):
        raise ValueError("contact detection needs closed contours")
    n_a = c_a.param_length
    pts, par = _arc_samples(c_a, epsilon / 4.0)
    proj = _Projector(c_b, epsilon / 8.0)
    dist, tb = proj.project(pts)
    inside = dist <= epsilon
    m = len(pts)
    if not inside.any():
        return []
    spacing = np.hypot(*np.diff(np.vstack([pts, pts[:1]]), axis=0).T)

    if inside.all():
        step = np.diff(np.concatenate([tb, tb[:1]]))
        step = (step + proj.n / 2) % proj.n - proj.n / 2
        return [
            ContactRegion(
                (0.0, float(n_a)),
                (float(tb[0]), float(tb[0])),
                float(dist.max()),
                bool(step.sum() < 0),
                float(spacing.sum()),
                True,
            )
        ]

    # rotate so that sample 0 is outside every run
    first_out = int(np.argmin(inside))
    order = (np.arange(m) + first_out) % m
    runs: list[tuple[int, int]] = []  # inclusive ranges in rotated indices
    start = None
    for r in range(m):
        if inside[order[r]]:
            if start is None:
                start = r
        elif start is not None:
            runs.append((start, r - 1))
            start = None
    if start is not None:
        runs.append((start, m - 1))

    def refine(t_in: np.ndarray, t_out: np.ndarray) -> np.ndarray:
        lo, hi = t_in.copy(), t_out.copy()
        for _ in range(30):
            mid = 0.5 * (lo + hi)
            d, _ = proj.project(_points_at(c_a, mid))
            ok = d <= epsilon
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
        return lo

    # unwrapped parameters along the rotated sample order
    upar = par[order].copy()
    upar[upar < upar[0]] += n_a
    upar_next = np.append(upar[1:], upar[0] + n_a)
    upar_prev = np.concatenate([[upar[-1] - n_a], upar[:-1]])

    starts = refine(np.array([upar[s] for s, _ in runs]), np.array([upar_prev[s] for s, _ in runs]))
    ends = refine(np.array([upar[e] for _, e in runs]), np.array([upar_next[e] for _, e in runs]))

    regions = []
    for (s, e), t0, t1 in zip(runs, starts, ends):
        idx = order[s : e + 1]
        t0n = t0 % n_a
        t1n = t0n + (t1 - t0)
        _, b_ends = proj.project(_points_at(c_a, np.array([t0n, t1n])))
        step = np.diff(tb[idx])
        step = (step + proj.n / 2) % proj.n - proj.n / 2
        regions.append(
            ContactRegion(
                (float(t0n), float(t1n)),
                (float(b_ends[0]), float(b_ends[1])),
                float(dist[idx].max()),
                bool(step.sum() < 0),
                float(spacing[order[s:e]].sum()) if e > s else 0.0,
            )
        )
    regions.sort(key=lambda r: r.interval_a[0])
    return regions


# ---------------------------------------------------------------------------
# cutting and bridging
# ---------------------------------------------------------------------------


def _slice_segment(seg: CubicSegment, t0: float, t1: float) -> CubicSegment:
    if t0 <= 0.0 and t1 >= 1.0:
        return seg
    if t0 <= 0.0:
        return seg.split(t1)[0]
    right = seg.split(t0)[1]
    if t1 >= 1.0:
        return right
    return right.split((t1 - t0) / (1.0 - t0))[0]


def extract(sp: Subpath, t0: float, t1: float) -> list[CubicSegment]:
    """Segments tracing ``sp`` from ``t0`` to ``t1`` (``t1`` may exceed ``n`` to wrap).

    Segments lying wholly inside the interval are returned as the very same
    objects; at most the two boundary segments are subdivided.
    """
    n = sp.param_length
    if t1 < t0:
        raise ParameterOutOfRange("extract needs t0 <= t1")
    if t1 - t0 > n + 1e-12:
        raise ParameterOutOfRange("interval longer than the contour")
    out: list[CubicSegment] = []
    i = int(math.floor(t0))
    while i < t1:
        lo = max(t0, i) - i
        hi = min(t1, i + 1) - i
        if hi - lo > 1e-12:
            seg = sp.segments[i % n]
            out.append(_slice_segment(seg, lo, hi))
        i += 1
    # adjacent slices of one segment must chain exactly
    for k in range(1, len(out)):
        if out[k].p0 != out[k - 1].p3:
            s = out[k]
            out[k] = CubicSegment(out[k - 1].p3, s.c1, s.c2, s.p3)
    return out


def cut_at(sp: Subpath, global_t: float) -> tuple[Subpath | None, Subpath | None]:
    """Split at one global parameter into an open left and an open right part."""
    n = sp.param_length
    if not 0.0 <= global_t <= n:
        raise ParameterOutOfRange(f"{global_t} outside [0, {n}]")
    i = min(int(math.floor(global_t)), n - 1)
    t = global_t - i
    left = list(sp.segments[:i])
    right = list(sp.segments[i + 1 :])
    seg = sp.segments[i]
    if t <= 0.0:
        right.insert(0, seg)
    elif t >= 1.0:
        left.append(seg)
    else:
        a, b = seg.split(t)
        left.append(a)
        right.insert(0, b)
    return (
        Subpath(tuple(left), closed=False) if left else None,
        Subpath(tuple(right), closed=False) if right else None,
    )


def build_bridge(end_point: Point, end_tangent: Point, start_point: Point, start_tangent: Point) -> BridgeCurve:
    """G1 cubic from ``end_point`` (leaving along ``end_tangent``) to ``start_point``."""

    def unit(v: Point) -> Point:
        n = math.hypot(*v)
        if n == 0:
            raise ValueError("bridge tangents must be nonzero")
        return (v[0] / n, v[1] / n)

    t0, t3 = unit(end_tangent), unit(start_tangent)
    chord = math.hypot(start_point[0] - end_point[0], start_point[1] - end_point[1])
    if chord < BRIDGE_WELD:
        raise DegenerateBridge(f"endpoints {chord:.3g} apart")
    alpha = chord / 3.0
    c1 = (end_point[0] + alpha * t0[0], end_point[1] + alpha * t0[1])
    c2 = (start_point[0] - alpha * t3[0], start_point[1] - alpha * t3[1])
    return BridgeCurve(CubicSegment(end_point, c1, c2, start_point), t0, t3)


def _chain_tangent(segs: Sequence[CubicSegment], at_end: bool) -> Point:
    return segs[-1].tangent(1.0) if at_end else segs[0].tangent(0.0)


def _fwd(a: float, b: float, n: float) -> float:
    """Forward cyclic distance from ``a`` to ``b`` on a loop of length ``n``."""
    return (b - a) % n


# ---------------------------------------------------------------------------
# merging
# ---------------------------------------------------------------------------


@dataclass
class _Plan:
    b: Subpath
    b_origins: list[Origin]
    pieces: list[tuple[list[CubicSegment], list[Origin]]]
    gap: float
    consistent: bool


def _plan(c_a: Subpath, b: Subpath, b_origins: list[Origin], contacts: Sequence[ContactRegion], proj: _Projector) -> _Plan:
    n_b = b.param_length
    ends = []
    for r in contacts:
        _, tb = proj.project(_points_at(c_a, np.array(r.interval_a)))
        ends.append((float(tb[0]), float(tb[1])))

    # cyclic order on b must follow the order on a, wrapping exactly once
    total = 0.0
    for k, (bs, be) in enumerate(ends):
        nxt = ends[(k + 1) % len(ends)][0]
        total += _fwd(bs, be, n_b) + _fwd(be, nxt, n_b)
    consistent = abs(total - n_b) < 1e-6 * max(1, n_b) or (len(ends) == 1 and total <= n_b + 1e-9)

    pieces: list[tuple[list[CubicSegment], list[Origin]]] = []
    gap = 0.0
    for k, r in enumerate(contacts):
        a_segs = extract(c_a, *r.interval_a)
        pieces.append((a_segs, ["original"] * len(a_segs)))
        be = ends[k][1]
        bs_next = ends[(k + 1) % len(ends)][0]
        span = _fwd(be, bs_next, n_b)
        b_segs: list[CubicSegment] = []
        b_tags: list[Origin] = []
        if span > 1e-9:
            b_segs = extract(b, be, be + span)
            b_tags = _tags_for(b, b_origins, be, be + span)
        pieces.append((b_segs, b_tags))
    flat = [(segs, tags) for segs, tags in pieces if segs]
    for k, (segs, _) in enumerate(flat):
        nxt = flat[(k + 1) % len(flat)][0]
        gap += math.dist(segs[-1].p3, nxt[0].p0)
    return _Plan(b, b_origins, pieces, gap, consistent)


def _tags_for(b: Subpath, b_origins: list[Origin], t0: float, t1: float) -> list[Origin]:
    n = b.param_length
    tags = []
    i = int(math.floor(t0))
    while i < t1:
        lo = max(t0, i) - i
        hi = min(t1, i + 1) - i
        if hi - lo > 1e-12:
            tags.append(b_origins[i % n])
        i += 1
    return tags


def merge_contours(
    c_a: Subpath,
    c_b: Subpath,
    contacts: Sequence[ContactRegion],
    b_origins: Sequence[Origin] | None = None,
    strict: bool = False,
) -> MergedContour:
    """Keep ``c_a`` inside contact regions and ``c_b`` elsewhere, joined by G1 bridges.

    With no contacts the completion is returned unchanged; when ``c_a`` is in
    contact along its whole length it is returned unchanged. If the contacts do
    not appear in the same cyclic order on both contours the completion is
    returned wholesale with ``fallback`` set (or :class:`AmbiguousTopology` is
    raised when ``strict``).
    """
    b_origins = list(b_origins) if b_origins is not None else ["completion"] * len(c_b)
    if len(b_origins) != len(c_b):
        raise ValueError("b_origins must tag every segment of c_b")
    if not contacts:
        return MergedContour(c_b, b_origins, chains=[KeptChain(c_b.segments, "completion")])
    if any(r.full for r in contacts):
        return MergedContour(c_a, ["original"] * len(c_a), chains=[KeptChain(c_a.segments, "original")])

    contacts = sorted(contacts, key=lambda r: r.interval_a[0])
    spacing = max(c_b.length() / PROJECTION_SAMPLES, 1e-9)
    candidates = []
    for rev in (False, True):
        b = c_b.reversed() if rev else c_b
        tags = b_origins[::-1] if rev else b_origins
        plan = _plan(c_a, b, tags, contacts, _Projector(b, spacing))
        # contact length along which b would run against c_a
        against = sum(r.length for r in contacts if r.reversed != rev)
        candidates.append((not plan.consistent, against, plan.gap, rev, plan))
    candidates.sort(key=lambda c: c[:4])
    inconsistent, _, _, rev, plan = candidates[0]
    if inconsistent:
        msg = "contact regions appear in different cyclic order on the two contours"
        if strict:
            raise AmbiguousTopology(msg)
        log.warning("%s; keeping the completion", msg)
        return MergedContour(c_b, b_origins, chains=[KeptChain(c_b.segments, "completion")], fallback=True)

    segments: list[CubicSegment] = []
    origins: list[Origin] = []
    bridges: list[BridgeCurve] = []
    chains: list[KeptChain] = []
    flat = [(segs, tags) for segs, tags in plan.pieces if segs]
    for segs, tags in flat:
        chains.append(KeptChain(tuple(segs), "original" if tags and tags[0] == "original" and all(t == "original" for t in tags) else "completion"))

    for k, (segs, tags) in enumerate(flat):
        if segments:
            prev_end = segments[-1].p3
            if prev_end != segs[0].p0:
                try:
                    br = build_bridge(prev_end, _chain_tangent(segments, True), segs[0].p0, _chain_tangent(segs, False))
                    segments.append(br.segment)
                    origins.append("bridge")
                    bridges.append(br)
                except DegenerateBridge:
                    segs, tags = _weld(segments, origins, segs, tags)
        segments.extend(segs)
        origins.extend(tags)

    # close the loop back to the first chain
    first = segments[0].p0
    if segments[-1].p3 != first:
        try:
            br = build_bridge(segments[-1].p3, segments[-1].tangent(1.0), first, segments[0].tangent(0.0))
            segments.append(br.segment)
            origins.append("bridge")
            bridges.append(br)
        except DegenerateBridge:
            _weld_closure(segments, origins)
    return MergedContour(Subpath(tuple(segments), closed=True), origins, bridges, chains)


def _weld(segments: list[CubicSegment], origins: list[Origin], segs: list[CubicSegment], tags: list[Origin]):
    """Join two chains whose ends nearly coincide, moving a non-original endpoint."""
    prev_end = segments[-1].p3
    if tags[0] != "original":
        s = segs[0]
        segs = [CubicSegment(prev_end, s.c1, s.c2, s.p3)] + list(segs[1:])
    elif origins[-1] != "original":
        s = segments[-1]
        segments[-1] = CubicSegment(s.p0, s.c1, s.c2, segs[0].p0)
    else:
        segments.append(CubicSegment.line(prev_end, segs[0].p0))
        origins.append("bridge")
    return segs, tags


def _weld_closure(segments: list[CubicSegment], origins: list[Origin]) -> None:
    first = segments[0].p0
    if origins[-1] != "original":
        s = segments[-1]
        segments[-1] = CubicSegment(s.p0, s.c1, s.c2, first)
    elif origins[0] != "original":
        s = segments[0]
        segments[0] = CubicSegment(segments[-1].p3, s.c1, s.c2, s.p3)
    else:
        segments.append(CubicSegment.line(segments[-1].p3, first))
        origins.append("bridge")


def reuse_curves(
    originals: Sequence[Subpath],
    completion: Subpath,
    epsilon: float,
    min_contact: float | None = None,
) -> MergedContour:
    """Merge every original contour that touches ``completion``, longest contact first."""
    min_contact = MIN_CONTACT_FACTOR * epsilon if min_contact is None else min_contact
    current = MergedContour(completion, ["completion"] * len(completion))
    candidates = []
    for k, orig in enumerate(originals):
        contacts = [r for r in detect_contacts(orig, completion, epsilon) if r.full or r.length >= min_contact]
        if contacts:
            candidates.append((-sum(r.length for r in contacts), k))
    candidates.sort()
    all_bridges: list[BridgeCurve] = []
    for _, k in candidates:
        orig = originals[k]
        contacts = [r for r in detect_contacts(orig, current.subpath, epsilon) if r.full or r.length >= min_contact]
        if not contacts:
            continue
        merged = merge_contours(orig, current.subpath, contacts, current.origins)
        if merged.fallback:
            continue
        all_bridges.extend(merged.bridges)
        current = merged
    current.bridges = all_bridges
    return current


_DEBUG_COLORS = {"original": "#1f77b4", "completion": "#ff7f0e", "bridge": "#d62728"}


def debug_svg(merged: MergedContour, viewbox: tuple[float, float, float, float], stroke: float = 1.0) -> bytes:
    """Stroke-only drawing of a merged contour coloured by segment origin."""
    from .svg_model import path_data

    x, y, w, h = viewbox
    lines = [f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x:g} {y:g} {w:g} {h:g}">']
    for seg, origin in zip(merged.subpath.segments, merged.origins):
        d = path_data([Subpath((seg,), closed=False)])
        lines.append(
            f'  <path class="{origin}" fill="none" stroke="{_DEBUG_COLORS[origin]}" stroke-width="{stroke:g}" d="{d}"/>'
        )
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode()
