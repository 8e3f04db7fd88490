"""Binary rasterisation of compound paths and mask/label-map PNG I/O.

Masks are plain ``(H, W)`` boolean numpy arrays and label maps are ``(H, W)``
integer arrays (0 = unlabelled). A pixel is inside a path iff its centre is
inside under the path's fill rule; there is no anti-aliasing.
"""

from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from .errors import DimensionMismatch
from .svg_model import CompoundPath, CubicSegment, ViewBox

DEFAULT_RESOLUTION = 512
FLATTEN_TOLERANCE = 0.02  # pixels

FOUR_CONN = ndimage.generate_binary_structure(2, 1)
EIGHT_CONN = ndimage.generate_binary_structure(2, 2)


def canvas_transform(viewbox: ViewBox, width: int, height: int) -> tuple[float, float, float, float]:
    """``(sx, sy, tx, ty)`` mapping user units to pixel coordinates."""
    x0, y0, w, h = viewbox
    sx, sy = width / w, height / h
    return sx, sy, -x0 * sx, -y0 * sy


def _flatten(seg: CubicSegment, tol: float) -> np.ndarray:
    p = seg.as_array()
    dd = max(
        float(np.hypot(*(p[0] - 2 * p[1] + p[2]))),
        float(np.hypot(*(p[1] - 2 * p[2] + p[3]))),
    )
    n = int(math.ceil(math.sqrt(0.75 * dd / tol))) if dd > 0 else 1
    n = min(max(n, 1), 4096)
    return seg.points_at(np.linspace(0.0, 1.0, n + 1))


def path_edges(path: CompoundPath, width: int, height: int, tol: float = FLATTEN_TOLERANCE) -> np.ndarray:
    """Flattened edge list ``(x0, y0, x1, y1)`` in pixel coordinates."""
    sx, sy, tx, ty = canvas_transform(path.viewbox, width, height)
    chunks = []
    for sp in path.subpaths:
        pts = []
        for seg in sp.segments:
            q = _flatten(seg.mapped(sx, sy, tx, ty), tol)
            pts.append(q[:-1])
        ring = np.concatenate(pts + [pts[0][:1]], axis=0)
        chunks.append(np.hstack([ring[:-1], ring[1:]]))
    return np.concatenate(chunks, axis=0)


def rasterize_edges(edges: np.ndarray, width: int, height: int, fill_rule: str) -> np.ndarray:
    """Scanline fill at pixel centres from a closed edge soup."""
    x0, y0, x1, y1 = edges.T
    direction = np.where(y1 > y0, 1, -1)
    ylo = np.minimum(y0, y1)
    yhi = np.maximum(y0, y1)
    # rows whose centre satisfies ylo <= r + 0.5 < yhi
    r_start = np.clip(np.ceil(ylo - 0.5), 0, height).astype(np.int64)
    r_end = np.clip(np.ceil(yhi - 0.5), 0, height).astype(np.int64)
    counts = np.maximum(r_end - r_start, 0)
    keep = counts > 0
    if not keep.any():
        return np.zeros((height, width), dtype=bool)
    idx = np.repeat(np.nonzero(keep)[0], counts[keep])
    offsets = np.arange(idx.size) - np.repeat(np.cumsum(counts[keep]) - counts[keep], counts[keep])
    rows = r_start[idx] + offsets
    yc = rows + 0.5
    t = (yc - y0[idx]) / (y1[idx] - y0[idx])
    xs = x0[idx] + t * (x1[idx] - x0[idx])
    cols = np.clip(np.ceil(xs - 0.5), 0, width).astype(np.int64)

    acc = np.zeros((height, width + 1), dtype=np.int64)
    np.add.at(acc, (rows, cols), direction[idx])
    winding = np.cumsum(acc, axis=1)[:, :width]
    if fill_rule == "evenodd":
        return (winding % 2) != 0
    return winding != 0


def rasterize(path: CompoundPath, width: int, height: int) -> np.ndarray:
    if width <= 0 or height <= 0:
        raise ValueError("canvas dimensions must be positive")
    return rasterize_edges(path_edges(path, width, height), width, height, path.fill_rule)


def _check_same(*masks: np.ndarray) -> None:
    shapes = {m.shape for m in masks}
    if len(shapes) != 1:
        raise DimensionMismatch(f"mask shapes differ: {sorted(shapes)}")


def extra_region(amodal: np.ndarray, silhouette: np.ndarray) -> np.ndarray:
    """Pixels recovered by completion that lie outside the silhouette."""
    _check_same(amodal, silhouette)
    return amodal & ~silhouette


def fill_holes(mask: np.ndarray) -> np.ndarray:
    """Union of ``mask`` and every 8-connected background component off the border."""
    return ndimage.binary_fill_holes(mask, structure=EIGHT_CONN)


def fill_region(amodal_path: CompoundPath, width: int, height: int) -> np.ndarray:
    """Solid region enclosed by the path's outermost contours."""
    return fill_holes(rasterize(amodal_path, width, height))


# ---------------------------------------------------------------------------
# PNG I/O
# ---------------------------------------------------------------------------

LABEL_PALETTE = [
    (0, 0, 0),
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48), (145, 30, 180),
    (70, 240, 240), (240, 50, 230), (210, 245, 60), (250, 190, 190), (0, 128, 128),
    (170, 110, 40), (128, 0, 0), (170, 255, 195), (128, 128, 0), (255, 215, 180),
]


def save_mask(path: str | Path, mask: np.ndarray) -> None:
    Image.fromarray(np.asarray(mask, dtype=bool)).convert("1").save(path, optimize=False)


def load_mask(path: str | Path) -> np.ndarray:
    """Set pixels are the bright ones (the convention :func:`save_mask` writes)."""
    img = Image.open(path)
    if img.mode == "1":
        return np.array(img, dtype=bool)
    return np.asarray(img.convert("L")) >= 128


def save_labels(path: str | Path, labels: np.ndarray) -> None:
    labels = np.asarray(labels)
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise ValueError("label values must fit in an 8-bit palette")
    img = Image.fromarray(labels.astype(np.uint8), mode="P")
    palette = []
    for i in range(256):
        palette.extend(LABEL_PALETTE[i] if i < len(LABEL_PALETTE) else ((i * 37) % 256, (i * 91) % 256, (i * 53) % 256))
    img.putpalette(palette)
    img.save(path, optimize=False)


def load_labels(path: str | Path) -> np.ndarray:
    """Read an indexed PNG whose palette index is the label."""
    img = Image.open(path)
    if img.mode != "P":
        raise ValueError(f"{path}: expected an indexed-colour PNG, got mode {img.mode}")
    return np.array(img, dtype=np.int64)


def paint_stack(
    amodal: Sequence[np.ndarray],
    order: Sequence[int],
    fill: Sequence[np.ndarray] | None = None,
) -> tuple[np.ndarray, list[np.ndarray]]:
    """Painter's algorithm over a layer stack, bottom layer first.

    Each layer's footprint ``fill[k]`` (its holes filled) hides everything
    beneath it, and the layer then paints ``amodal[k]``. Returns the flattened
    silhouette and the per-part visible masks (indexed like ``amodal``).
    """
    if fill is None:
        fill = [fill_holes(a) for a in amodal]
    _check_same(*amodal, *fill)
    owner = np.full(amodal[0].shape, -1, dtype=np.int64)
    for k in order:
        owner[fill[k]] = -1
        owner[amodal[k]] = k
    visible = [owner == k for k in range(len(amodal))]
    return owner >= 0, visible
