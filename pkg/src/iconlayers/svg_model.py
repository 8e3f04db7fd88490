"""Cubic-Bezier path model plus SVG reading and writing.

Every drawing command of the supported SVG subset is normalised to absolute
cubic segments: lines and quadratics are degree-elevated exactly, elliptical
arcs are approximated with one cubic per quarter turn.
"""

from __future__ import annotations

import logging
import math
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import (
    MalformedXml,
    OpenSubpathInFlattenedInput,
    ParameterOutOfRange,
    PathSyntaxError,
    UnsupportedFeature,
)

log = logging.getLogger(__name__)

Point = tuple[float, float]
RGB = tuple[int, int, int]

SVG_NS = "http://www.w3.org/2000/svg"
FILL_RULES = ("nonzero", "evenodd")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(3)
_GL_T = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


def _lerp(a: Point, b: Point, t: float) -> Point:
    return (a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t)


@dataclass(frozen=True)
class CubicSegment:
    p0: Point
    c1: Point
    c2: Point
    p3: Point

    def __post_init__(self) -> None:
        for name in ("p0", "c1", "c2", "p3"):
            x, y = getattr(self, name)
            if not (math.isfinite(x) and math.isfinite(y)):
                raise ValueError(f"non-finite control point {name}={(x, y)}")

    @classmethod
    def line(cls, a: Point, b: Point) -> CubicSegment:
        dx, dy = b[0] - a[0], b[1] - a[1]
        return cls(a, (a[0] + dx / 3.0, a[1] + dy / 3.0), (b[0] - dx / 3.0, b[1] - dy / 3.0), b)

    @classmethod
    def quadratic(cls, a: Point, q: Point, b: Point) -> CubicSegment:
        c1 = (a[0] + 2.0 / 3.0 * (q[0] - a[0]), a[1] + 2.0 / 3.0 * (q[1] - a[1]))
        c2 = (b[0] + 2.0 / 3.0 * (q[0] - b[0]), b[1] + 2.0 / 3.0 * (q[1] - b[1]))
        return cls(a, c1, c2, b)

    @property
    def points(self) -> tuple[Point, Point, Point, Point]:
        return (self.p0, self.c1, self.c2, self.p3)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float)

    @property
    def is_degenerate(self) -> bool:
        return self.p0 == self.c1 == self.c2 == self.p3

    def point(self, t: float) -> Point:
        """De Casteljau evaluation; no range check (see :func:`eval_segment`)."""
        a = _lerp(self.p0, self.c1, t)
        b = _lerp(self.c1, self.c2, t)
        c = _lerp(self.c2, self.p3, t)
        d = _lerp(a, b, t)
        e = _lerp(b, c, t)
        return _lerp(d, e, t)

    def points_at(self, ts: np.ndarray) -> np.ndarray:
        ts = np.asarray(ts, dtype=float)[:, None]
        p = self.as_array()
        mt = 1.0 - ts
        return (mt**3) * p[0] + 3 * (mt**2) * ts * p[1] + 3 * mt * (ts**2) * p[2] + (ts**3) * p[3]

    def derivative(self, t: float) -> Point:
        p = self.as_array()
        d = 3.0 * ((1 - t) ** 2 * (p[1] - p[0]) + 2 * (1 - t) * t * (p[2] - p[1]) + t**2 * (p[3] - p[2]))
        return (float(d[0]), float(d[1]))

    def tangent(self, t: float) -> Point:
        """Unit tangent; falls back to the control polygon when the derivative vanishes."""
        dx, dy = self.derivative(t)
        n = math.hypot(dx, dy)
        if n < 1e-12:
            # cusp-like endpoint: use the first non-degenerate control leg
            pts = self.points if t < 0.5 else self.points[::-1]
            sign = 1.0 if t < 0.5 else -1.0
            for q in pts[1:]:
                dx, dy = (q[0] - pts[0][0]) * sign, (q[1] - pts[0][1]) * sign
                n = math.hypot(dx, dy)
                if n > 1e-12:
                    break
            else:
                return (0.0, 0.0)
        return (dx / n, dy / n)

    def split(self, t: float) -> tuple[CubicSegment, CubicSegment]:
        a = _lerp(self.p0, self.c1, t)
        b = _lerp(self.c1, self.c2, t)
        c = _lerp(self.c2, self.p3, t)
        d = _lerp(a, b, t)
        e = _lerp(b, c, t)
        m = _lerp(d, e, t)
        return CubicSegment(self.p0, a, d, m), CubicSegment(m, e, c, self.p3)

    def reversed(self) -> CubicSegment:
        return CubicSegment(self.p3, self.c2, self.c1, self.p0)

    def length(self, samples: int = 32) -> float:
        pts = self.points_at(np.linspace(0.0, 1.0, samples + 1))
        return float(np.hypot(*np.diff(pts, axis=0).T).sum())

    def signed_area_term(self) -> float:
        """Contribution of this segment to the shoelace integral 1/2 * (x dy - y dx)."""
        p = self.as_array()
        total = 0.0
        for t, w in zip(_GL_T, _GL_W):
            mt = 1.0 - t
            pt = mt**3 * p[0] + 3 * mt**2 * t * p[1] + 3 * mt * t**2 * p[2] + t**3 * p[3]
            d = 3.0 * (mt**2 * (p[1] - p[0]) + 2 * mt * t * (p[2] - p[1]) + t**2 * (p[3] - p[2]))
            total += w * (pt[0] * d[1] - pt[1] * d[0])
        return 0.5 * float(total)

    def mapped(self, sx: float, sy: float, tx: float, ty: float) -> CubicSegment:
        return CubicSegment(*((x * sx + tx, y * sy + ty) for x, y in self.points))


def eval_segment(seg: CubicSegment, t: float) -> Point:
    if not 0.0 <= t <= 1.0:
        raise ParameterOutOfRange(f"t={t} outside [0, 1]")
    if t == 0.0:
        return seg.p0
    if t == 1.0:
        return seg.p3
    return seg.point(t)


@dataclass(frozen=True)
class Subpath:
    segments: tuple[CubicSegment, ...]
    closed: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise ValueError("subpath needs at least one segment")
        for a, b in zip(self.segments, self.segments[1:]):
            if a.p3 != b.p0:
                raise ValueError(f"segment endpoints do not chain: {a.p3} != {b.p0}")
        if self.closed and self.segments[-1].p3 != self.segments[0].p0:
            raise ValueError("closed subpath does not return to its start point")

    def __len__(self) -> int:
        return len(self.segments)

    @property
    def start(self) -> Point:
        return self.segments[0].p0

    @property
    def end(self) -> Point:
        return self.segments[-1].p3

    @property
    def param_length(self) -> int:
        """Global parameters run over [0, n]; segment i covers [i, i + 1]."""
        return len(self.segments)

    def locate(self, global_t: float) -> tuple[int, float]:
        n = len(self.segments)
        if not 0.0 <= global_t <= n:
            raise ParameterOutOfRange(f"global parameter {global_t} outside [0, {n}]")
        i = min(int(math.floor(global_t)), n - 1)
        return i, global_t - i

    def point_at(self, global_t: float) -> Point:
        i, t = self.locate(global_t)
        return eval_segment(self.segments[i], t)

    def tangent_at(self, global_t: float) -> Point:
        i, t = self.locate(global_t)
        return self.segments[i].tangent(t)

    def reversed(self) -> Subpath:
        return Subpath(tuple(s.reversed() for s in reversed(self.segments)), self.closed)

    def signed_area(self) -> float:
        """Shoelace area in path coordinates; positive for the mathematically CCW sense."""
        return sum(s.signed_area_term() for s in self.segments)

    def length(self) -> float:
        return sum(s.length() for s in self.segments)

    def sample(self, per_segment: int = 16) -> np.ndarray:
        ts = np.linspace(0.0, 1.0, per_segment, endpoint=False)
        pts = [s.points_at(ts) for s in self.segments]
        return np.concatenate(pts, axis=0)

    def mapped(self, sx: float, sy: float, tx: float, ty: float) -> Subpath:
        return Subpath(tuple(s.mapped(sx, sy, tx, ty) for s in self.segments), self.closed)


ViewBox = tuple[float, float, float, float]


@dataclass(frozen=True)
class CompoundPath:
    subpaths: tuple[Subpath, ...]
    fill_rule: str = "nonzero"
    viewbox: ViewBox = (0.0, 0.0, 1.0, 1.0)

    def __post_init__(self) -> None:
        object.__setattr__(self, "subpaths", tuple(self.subpaths))
        object.__setattr__(self, "viewbox", tuple(float(v) for v in self.viewbox))
        if not self.subpaths:
            raise ValueError("compound path needs at least one subpath")
        if self.fill_rule not in FILL_RULES:
            raise ValueError(f"unknown fill rule {self.fill_rule!r}")
        if self.viewbox[2] <= 0 or self.viewbox[3] <= 0:
            raise ValueError(f"viewbox must have positive size, got {self.viewbox}")

    def __len__(self) -> int:
        return len(self.subpaths)

    def to_d(self) -> str:
        return path_data(self.subpaths)

    def with_viewbox(self, viewbox: ViewBox) -> CompoundPath:
        return CompoundPath(self.subpaths, self.fill_rule, viewbox)

    def mapped(self, sx: float, sy: float, tx: float, ty: float, viewbox: ViewBox | None = None) -> CompoundPath:
        """Apply ``p -> (sx*x + tx, sy*y + ty)``; negative scales flip orientation."""
        subs = tuple(s.mapped(sx, sy, tx, ty) for s in self.subpaths)
        return CompoundPath(subs, self.fill_rule, viewbox or self.viewbox)

    def bounds(self) -> tuple[float, float, float, float]:
        pts = np.concatenate([s.sample(8) for s in self.subpaths])
        return (float(pts[:, 0].min()), float(pts[:, 1].min()), float(pts[:, 0].max()), float(pts[:, 1].max()))


@dataclass(frozen=True)
class Layer:
    path: CompoundPath
    fill_color: RGB
    z_index: int


@dataclass(frozen=True)
class LayeredIcon:
    layers: tuple[Layer, ...]
    canvas: ViewBox
    objective: float | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        object.__setattr__(self, "canvas", tuple(float(v) for v in self.canvas))
        zs = [layer.z_index for layer in self.layers]
        if any(b <= a for a, b in zip(zs, zs[1:])):
            raise ValueError(f"z indices must increase bottom to top: {zs}")
        colors = [layer.fill_color for layer in self.layers]
        if len(set(colors)) != len(colors):
            raise ValueError("layer fill colours must be distinct")


# ---------------------------------------------------------------------------
# path data grammar
# ---------------------------------------------------------------------------

_NUMBER_RE = re.compile(r"[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?")
_COMMANDS = set("MmZzLlHhVvCcSsQqTtAa")
_ARG_COUNTS = {"M": 2, "L": 2, "H": 1, "V": 1, "C": 6, "S": 4, "Q": 4, "T": 2, "A": 7, "Z": 0}


class _Scanner:
    def __init__(self, d: str) -> None:
        self.d = d
        self.pos = 0

    def skip(self) -> None:
        d, n = self.d, len(self.d)
        while self.pos < n and (d[self.pos].isspace() or d[self.pos] == ","):
            self.pos += 1

    def at_end(self) -> bool:
        self.skip()
        return self.pos >= len(self.d)

    def peek_command(self) -> str | None:
        self.skip()
        if self.pos < len(self.d) and self.d[self.pos] in _COMMANDS:
            return self.d[self.pos]
        return None

    def command(self) -> str:
        c = self.peek_command()
        if c is None:
            raise PathSyntaxError(f"expected a command at offset {self.pos} in {self.d[:40]!r}")
        self.pos += 1
        return c

    def number(self) -> float:
        self.skip()
        m = _NUMBER_RE.match(self.d, self.pos)
        if not m:
            raise PathSyntaxError(f"expected a number at offset {self.pos}")
        self.pos = m.end()
        return float(m.group(0))

    def flag(self) -> bool:
        self.skip()
        if self.pos < len(self.d) and self.d[self.pos] in "01":
            self.pos += 1
            return self.d[self.pos - 1] == "1"
        raise PathSyntaxError(f"expected an arc flag at offset {self.pos}")

    def has_number(self) -> bool:
        self.skip()
        return self.pos < len(self.d) and bool(_NUMBER_RE.match(self.d, self.pos))


def _arc_to_cubics(p0: Point, rx: float, ry: float, phi_deg: float, large: bool, sweep: bool, p1: Point) -> list[CubicSegment]:
    """Endpoint-parameterised elliptical arc to cubics, one per <= 90 degrees of sweep."""
    if p0 == p1:
        return []
    rx, ry = abs(rx), abs(ry)
    if rx == 0 or ry == 0:
        return [CubicSegment.line(p0, p1)]
    phi = math.radians(phi_deg % 360.0)
    cos_p, sin_p = math.cos(phi), math.sin(phi)
    dx2, dy2 = (p0[0] - p1[0]) / 2.0, (p0[1] - p1[1]) / 2.0
    x1p = cos_p * dx2 + sin_p * dy2
    y1p = -sin_p * dx2 + cos_p * dy2
    lam = (x1p / rx) ** 2 + (y1p / ry) ** 2
    if lam > 1.0:
        s = math.sqrt(lam)
        rx, ry = rx * s, ry * s
    num = rx * rx * ry * ry - rx * rx * y1p * y1p - ry * ry * x1p * x1p
    den = rx * rx * y1p * y1p + ry * ry * x1p * x1p
    coef = math.sqrt(max(0.0, num / den)) if den > 0 else 0.0
    if large == sweep:
        coef = -coef
    cxp = coef * rx * y1p / ry
    cyp = -coef * ry * x1p / rx
    cx = cos_p * cxp - sin_p * cyp + (p0[0] + p1[0]) / 2.0
    cy = sin_p * cxp + cos_p * cyp + (p0[1] + p1[1]) / 2.0

    def angle(ux: float, uy: float, vx: float, vy: float) -> float:
        a = math.atan2(ux * vy - uy * vx, ux * vx + uy * vy)
        return a

    theta1 = angle(1.0, 0.0, (x1p - cxp) / rx, (y1p - cyp) / ry)
    dtheta = angle((x1p - cxp) / rx, (y1p - cyp) / ry, (-x1p - cxp) / rx, (-y1p - cyp) / ry)
    if not sweep and dtheta > 0:
        dtheta -= 2 * math.pi
    elif sweep and dtheta < 0:
        dtheta += 2 * math.pi

    n = max(1, int(math.ceil(abs(dtheta) / (math.pi / 2.0) - 1e-12)))
    delta = dtheta / n
    k = 4.0 / 3.0 * math.tan(delta / 4.0)

    def on_ellipse(x: float, y: float) -> Point:
        return (cx + rx * cos_p * x - ry * sin_p * y, cy + rx * sin_p * x + ry * cos_p * y)

    out: list[CubicSegment] = []
    start = p0
    for i in range(n):
        a0 = theta1 + i * delta
        a1 = a0 + delta
        c0, s0, c1, s1 = math.cos(a0), math.sin(a0), math.cos(a1), math.sin(a1)
        q1 = on_ellipse(c0 - k * s0, s0 + k * c0)
        q2 = on_ellipse(c1 + k * s1, s1 - k * c1)
        end = p1 if i == n - 1 else on_ellipse(c1, s1)
        out.append(CubicSegment(start, q1, q2, end))
        start = end
    return out


def parse_path_data(d: str, require_closed: bool = True) -> list[Subpath]:
    """Parse an SVG ``d`` attribute into closed subpaths of absolute cubics."""
    sc = _Scanner(d)
    subpaths: list[Subpath] = []
    current: list[CubicSegment] = []
    cur: Point = (0.0, 0.0)
    start: Point = (0.0, 0.0)
    last_ctrl: Point | None = None
    last_kind = ""
    cmd: str | None = None
    seen_move = False

    def push(seg: CubicSegment) -> None:
        nonlocal cur
        if seg.is_degenerate:
            cur = seg.p3
            return
        current.append(seg)
        cur = seg.p3

    def finish(closed: bool) -> None:
        nonlocal current
        if current:
            if not closed:
                if require_closed:
                    raise OpenSubpathInFlattenedInput(f"subpath starting at {current[0].p0} lacks Z")
                subpaths.append(Subpath(tuple(current), closed=False))
            else:
                subpaths.append(Subpath(tuple(current), closed=True))
        current = []

    while not sc.at_end():
        if sc.peek_command() is not None:
            cmd = sc.command()
        elif cmd is None:
            raise PathSyntaxError("path data must start with a command")
        elif cmd in "Zz":
            raise PathSyntaxError("numbers after Z")
        upper = cmd.upper()
        rel = cmd.islower()
        if upper != "M" and not seen_move:
            raise PathSyntaxError("path data must start with M")

        if upper == "Z":
            if current and cur != start:
                push(CubicSegment.line(cur, start))
            if current and current[-1].p3 != start:
                # snap round-off so the closed invariant holds bit-exactly
                last = current[-1]
                current[-1] = CubicSegment(last.p0, last.c1, last.c2, start)
            finish(closed=True)
            cur = start
            last_kind = "Z"
            last_ctrl = None
            continue

        if upper == "M":
            x, y = sc.number(), sc.number()
            p = (cur[0] + x, cur[1] + y) if rel else (x, y)
            if current:
                finish(closed=False)
            cur = start = p
            seen_move = True
            last_kind = "M"
            last_ctrl = None
            cmd = "l" if rel else "L"
            continue

        # SVG: drawing after Z without M starts a new subpath at the old start
        if upper == "L":
            x, y = sc.number(), sc.number()
            p = (cur[0] + x, cur[1] + y) if rel else (x, y)
            push(CubicSegment.line(cur, p))
            last_ctrl = None
        elif upper == "H":
            x = sc.number()
            p = (cur[0] + x if rel else x, cur[1])
            push(CubicSegment.line(cur, p))
            last_ctrl = None
        elif upper == "V":
            y = sc.number()
            p = (cur[0], cur[1] + y if rel else y)
            push(CubicSegment.line(cur, p))
            last_ctrl = None
        elif upper == "C":
            vals = [sc.number() for _ in range(6)]
            ox, oy = cur if rel else (0.0, 0.0)
            c1 = (ox + vals[0], oy + vals[1])
            c2 = (ox + vals[2], oy + vals[3])
            p = (ox + vals[4], oy + vals[5])
            push(CubicSegment(cur, c1, c2, p))
            last_ctrl = c2
        elif upper == "S":
            vals = [sc.number() for _ in range(4)]
            ox, oy = cur if rel else (0.0, 0.0)
            if last_kind in ("C", "S") and last_ctrl is not None:
                c1 = (2 * cur[0] - last_ctrl[0], 2 * cur[1] - last_ctrl[1])
            else:
                c1 = cur
            c2 = (ox + vals[0], oy + vals[1])
            p = (ox + vals[2], oy + vals[3])
            push(CubicSegment(cur, c1, c2, p))
            last_ctrl = c2
        elif upper == "Q":
            vals = [sc.number() for _ in range(4)]
            ox, oy = cur if rel else (0.0, 0.0)
            q = (ox + vals[0], oy + vals[1])
            p = (ox + vals[2], oy + vals[3])
            push(CubicSegment.quadratic(cur, q, p))
            last_ctrl = q
        elif upper == "T":
            x, y = sc.number(), sc.number()
            p = (cur[0] + x, cur[1] + y) if rel else (x, y)
            if last_kind in ("Q", "T") and last_ctrl is not None:
                q = (2 * cur[0] - last_ctrl[0], 2 * cur[1] - last_ctrl[1])
            else:
                q = cur
            push(CubicSegment.quadratic(cur, q, p))
            last_ctrl = q
        elif upper == "A":
            rx, ry, rot = sc.number(), sc.number(), sc.number()
            large, sweep = sc.flag(), sc.flag()
            x, y = sc.number(), sc.number()
            p = (cur[0] + x, cur[1] + y) if rel else (x, y)
            for seg in _arc_to_cubics(cur, rx, ry, rot, large, sweep, p):
                push(seg)
            cur = p
            last_ctrl = None
        last_kind = upper

    finish(closed=False)
    return subpaths


def _fmt(v: float) -> str:
    """Shortest round-tripping decimal; integral values drop the ``.0``."""
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def path_data(subpaths: Iterable[Subpath]) -> str:
    parts: list[str] = []
    for sp in subpaths:
        x, y = sp.start
        parts.append(f"M{_fmt(x)} {_fmt(y)}")
        for s in sp.segments:
            parts.append(
                "C" + " ".join(_fmt(v) for pt in (s.c1, s.c2, s.p3) for v in pt)
            )
        if sp.closed:
            parts.append("Z")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# documents
# ---------------------------------------------------------------------------

_UNSUPPORTED_TAGS = {
    "linearGradient": "gradient",
    "radialGradient": "gradient",
    "clipPath": "clip",
    "mask": "mask",
    "text": "text",
    "tspan": "text",
    "textPath": "text",
    "pattern": "pattern",
    "filter": "filter",
}
_WHITE = {(255, 255, 255)}
_NAMED = {"black": (0, 0, 0), "white": (255, 255, 255), "red": (255, 0, 0), "green": (0, 128, 0), "blue": (0, 0, 255)}


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1] if "}" in tag else tag


def _style(el: ET.Element) -> dict[str, str]:
    out = {k: v.strip() for k, v in el.attrib.items()}
    style = el.attrib.get("style")
    if style:
        for decl in style.split(";"):
            if ":" in decl:
                k, v = decl.split(":", 1)
                out[k.strip()] = v.strip()
    return out


def parse_color(value: str) -> RGB | None:
    """Parse a fill value; ``None`` for ``none``. Unknown keywords count as black."""
    v = value.strip().lower()
    if v in ("none", "transparent"):
        return None
    if v.startswith("url("):
        raise UnsupportedFeature("gradient", v)
    if v.startswith("#"):
        h = v[1:]
        if len(h) == 3:
            h = "".join(c * 2 for c in h)
        if len(h) != 6:
            raise UnsupportedFeature("color", v)
        return (int(h[0:2], 16), int(h[2:4], 16), int(h[4:6], 16))
    if v.startswith("rgb(") and v.endswith(")"):
        vals = [c.strip() for c in v[4:-1].split(",")]
        rgb = []
        for c in vals:
            rgb.append(round(float(c[:-1]) * 2.55) if c.endswith("%") else int(float(c)))
        return tuple(rgb)  # type: ignore[return-value]
    return _NAMED.get(v, (0, 0, 0))


def _parse_number_attr(value: str | None) -> float | None:
    if value is None:
        return None
    m = _NUMBER_RE.match(value.strip())
    return float(m.group(0)) if m else None


def _shape_to_d(tag: str, a: dict[str, str]) -> str | None:
    f = lambda k: float(_parse_number_attr(a.get(k)) or 0.0)  # noqa: E731
    if tag == "rect":
        x, y, w, h = f("x"), f("y"), f("width"), f("height")
        if w <= 0 or h <= 0:
            return None
        rx, ry = _parse_number_attr(a.get("rx")), _parse_number_attr(a.get("ry"))
        if rx is None and ry is None:
            return f"M{x} {y}H{x + w}V{y + h}H{x}Z"
        rx = min(rx if rx is not None else ry, w / 2)
        ry = min(ry if ry is not None else rx, h / 2)
        return (
            f"M{x + rx} {y}H{x + w - rx}A{rx} {ry} 0 0 1 {x + w} {y + ry}V{y + h - ry}"
            f"A{rx} {ry} 0 0 1 {x + w - rx} {y + h}H{x + rx}A{rx} {ry} 0 0 1 {x} {y + h - ry}"
            f"V{y + ry}A{rx} {ry} 0 0 1 {x + rx} {y}Z"
        )
    if tag in ("circle", "ellipse"):
        cx, cy = f("cx"), f("cy")
        rx = f("r") if tag == "circle" else f("rx")
        ry = f("r") if tag == "circle" else f("ry")
        if rx <= 0 or ry <= 0:
            return None
        return (
            f"M{cx + rx} {cy}A{rx} {ry} 0 0 1 {cx} {cy + ry}A{rx} {ry} 0 0 1 {cx - rx} {cy}"
            f"A{rx} {ry} 0 0 1 {cx} {cy - ry}A{rx} {ry} 0 0 1 {cx + rx} {cy}Z"
        )
    if tag == "polygon":
        nums = [float(m) for m in _NUMBER_RE.findall(a.get("points", ""))]
        if len(nums) < 6:
            return None
        pts = list(zip(nums[0::2], nums[1::2]))
        return "M" + " L".join(f"{x} {y}" for x, y in pts) + "Z"
    return None


def _viewbox_of(root: ET.Element) -> ViewBox | None:
    vb = root.attrib.get("viewBox")
    if vb:
        vals = [float(v) for v in _NUMBER_RE.findall(vb)]
        if len(vals) == 4 and vals[2] > 0 and vals[3] > 0:
            return (vals[0], vals[1], vals[2], vals[3])
    w, h = _parse_number_attr(root.attrib.get("width")), _parse_number_attr(root.attrib.get("height"))
    if w and h and w > 0 and h > 0:
        return (0.0, 0.0, w, h)
    return None


def _load_root(document: bytes | str) -> ET.Element:
    if isinstance(document, str):
        document = document.encode("utf-8")
    try:
        parser = ET.XMLParser(target=ET.TreeBuilder(insert_comments=True))
        return ET.fromstring(document, parser=parser)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc


def _walk(el: ET.Element, inherited: dict[str, str], depth: int = 0) -> Iterator[tuple[ET.Element, dict[str, str]]]:
    style = dict(inherited)
    own = _style(el)
    for key in ("fill", "fill-rule"):
        if key in own:
            style[key] = own[key]
    if depth > 0 and "transform" in own:
        raise UnsupportedFeature("transform", own["transform"])
    if "clip-path" in own:
        raise UnsupportedFeature("clip", own["clip-path"])
    if "mask" in own and _local(el.tag) != "mask":
        raise UnsupportedFeature("mask", own["mask"])
    yield el, style
    for child in el:
        if not isinstance(child.tag, str):
            continue
        yield from _walk(child, style, depth + 1)


def parse_svg(document: bytes | str) -> CompoundPath:
    """Read a flattened icon into one compound path.

    Every filled, non-white ``path`` (and basic closed shape) contributes its
    subpaths. Stroke-only and white-filled elements are ignored.
    """
    root = _load_root(document)
    if _local(root.tag) != "svg":
        raise MalformedXml(f"root element is <{_local(root.tag)}>, expected <svg>")

    subpaths: list[Subpath] = []
    rules: set[str] = set()
    n_paths = 0
    for el, style in _walk(root, {"fill": "black", "fill-rule": "nonzero"}):
        tag = _local(el.tag)
        if tag in _UNSUPPORTED_TAGS:
            raise UnsupportedFeature(_UNSUPPORTED_TAGS[tag])
        if tag == "path":
            d = el.attrib.get("d", "")
            n_paths += 1
        elif tag in ("rect", "circle", "ellipse", "polygon"):
            d = _shape_to_d(tag, _style(el)) or ""
            n_paths += 1
        else:
            continue
        color = parse_color(style.get("fill", "black"))
        if color is None:
            continue
        if color in _WHITE:
            log.warning("ignoring white-filled <%s>", tag)
            continue
        rule = style.get("fill-rule", "nonzero").strip()
        if rule not in FILL_RULES:
            raise UnsupportedFeature("fill-rule", rule)
        subs = parse_path_data(d)
        if subs:
            subpaths.extend(subs)
            rules.add(rule)

    if n_paths == 0 or not subpaths:
        raise MalformedXml("document contains no filled path geometry")
    if len(rules) > 1:
        raise UnsupportedFeature("fill-rule", "paths disagree on fill rule")
    viewbox = _viewbox_of(root)
    if viewbox is None:
        x0, y0, x1, y1 = CompoundPath(tuple(subpaths)).bounds()
        viewbox = (x0, y0, max(x1 - x0, 1e-9), max(y1 - y0, 1e-9))
    return CompoundPath(tuple(subpaths), rules.pop(), viewbox)


def color_hex(c: RGB) -> str:
    return "#{:02x}{:02x}{:02x}".format(*c)


def write_layered_svg(icon: LayeredIcon) -> bytes:
    """Serialise layers bottom-to-top, one ``path`` element each."""
    x, y, w, h = icon.canvas
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="{SVG_NS}" viewBox="{_fmt(x)} {_fmt(y)} {_fmt(w)} {_fmt(h)}" '
        f'width="{_fmt(w)}" height="{_fmt(h)}">',
    ]
    if icon.objective is not None:
        lines.append(f"<!-- ordering objective: {_fmt(icon.objective)} -->")
    for k, layer in enumerate(icon.layers):
        lines.append(
            f'<path id="layer-{k}" data-z-index="{layer.z_index}" fill="{color_hex(layer.fill_color)}" '
            f'fill-rule="{layer.path.fill_rule}" d="{layer.path.to_d()}"/>'
        )
    lines.append("</svg>")
    return ("\n".join(lines) + "\n").encode("utf-8")


_OBJ_RE = re.compile(r"ordering objective:\s*(\S+)")


def parse_layered_svg(document: bytes | str) -> LayeredIcon:
    """Inverse of :func:`write_layered_svg`."""
    root = _load_root(document)
    canvas = _viewbox_of(root)
    if canvas is None:
        raise MalformedXml("layered SVG lacks a viewBox")
    objective = None
    layers: list[Layer] = []
    for el in root.iter():
        if el.tag is ET.Comment:
            m = _OBJ_RE.search(el.text or "")
            if m:
                objective = float(m.group(1))
            continue
        if not isinstance(el.tag, str) or _local(el.tag) != "path":
            continue
        style = _style(el)
        color = parse_color(style.get("fill", "black")) or (0, 0, 0)
        z = int(el.attrib.get("data-z-index", len(layers)))
        rule = style.get("fill-rule", "nonzero")
        path = CompoundPath(tuple(parse_path_data(el.attrib.get("d", ""))), rule, canvas)
        layers.append(Layer(path, color, z))
    return LayeredIcon(tuple(layers), canvas, objective)


def flatten_layers(layers: Sequence[Layer], viewbox: ViewBox, fill_rule: str = "nonzero") -> CompoundPath:
    """Concatenate layer geometry into one compound path (no boolean ops)."""
    subs = tuple(sp for layer in layers for sp in layer.path.subpaths)
    return CompoundPath(subs, fill_rule, viewbox)
