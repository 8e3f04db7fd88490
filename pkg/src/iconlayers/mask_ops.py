"""Post-processing of segmentation label maps and completion masks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .errors import DimensionMismatch, EmptyVisibleMask, NoLabeledPixels
from .raster import FOUR_CONN

DEFAULT_TAU = 0.7
BASE_RESOLUTION = 512
DILATION_RADIUS = 3.0  # px at 512x512
THIN_WIDTH = 2.0  # px at 512x512


@dataclass
class PartSet:
    """Visible fragments: one 4-connected mask per (label, component) pair."""

    visible: list[np.ndarray]
    source_label: list[int]

    def __len__(self) -> int:
        return len(self.visible)


@dataclass
class AmodalSet:
    """Completed shapes, each remembering which visible fragments produced it.

    ``visible[k]`` is the union of the fragments listed in ``provenance[k]``.
    """

    amodal: list[np.ndarray]
    provenance: list[tuple[int, ...]]
    visible: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        if len(self.provenance) != len(self.amodal):
            raise ValueError("provenance must align with amodal masks")
        if self.visible and len(self.visible) != len(self.amodal):
            raise ValueError("visible masks must align with amodal masks")

    def __len__(self) -> int:
        return len(self.amodal)


def _same_shape(*arrays: np.ndarray) -> None:
    shapes = {a.shape for a in arrays}
    if len(shapes) != 1:
        raise DimensionMismatch(f"shapes differ: {sorted(shapes)}")


def refine_labels(raw: np.ndarray, silhouette: np.ndarray) -> np.ndarray:
    """Give every unlabelled silhouette pixel the label of its Euclidean-nearest labelled pixel.

    Ties go to the smaller label id. Pixels outside the silhouette become 0.
    """
    _same_shape(raw, silhouette)
    raw = np.asarray(raw)
    silhouette = np.asarray(silhouette, dtype=bool)
    labels = np.unique(raw[raw > 0])
    if labels.size == 0:
        raise NoLabeledPixels("label map has no labelled pixels")

    out = np.where(silhouette, raw, 0).astype(raw.dtype)
    queries = silhouette & (raw == 0)
    if not queries.any():
        return out

    best_d2 = np.full(raw.shape, np.iinfo(np.int64).max, dtype=np.int64)
    best_label = np.zeros(raw.shape, dtype=raw.dtype)
    for lab in labels:  # ascending, so strict '<' keeps the smaller id on ties
        dist = ndimage.distance_transform_edt(raw != lab)
        d2 = np.rint(dist * dist).astype(np.int64)
        better = d2 < best_d2
        best_d2[better] = d2[better]
        best_label[better] = lab
    out[queries] = best_label[queries]
    return out


def split_components(labels: np.ndarray) -> PartSet:
    """One visible mask per 4-connected component of each nonzero label."""
    visible: list[np.ndarray] = []
    source: list[int] = []
    for lab in np.unique(labels[labels > 0]):
        comp, n = ndimage.label(labels == lab, structure=FOUR_CONN)
        for k in range(1, n + 1):
            visible.append(comp == k)
            source.append(int(lab))
    return PartSet(visible, source)


def scaled_constants(shape: tuple[int, int]) -> tuple[float, float]:
    """Dilation radius and thin-structure width scaled from the 512 px defaults."""
    s = max(shape) / BASE_RESOLUTION
    return DILATION_RADIUS * s, THIN_WIDTH * s


def dilate(mask: np.ndarray, radius: float) -> np.ndarray:
    """Euclidean-disk dilation."""
    if radius <= 0 or not mask.any():
        return mask.copy()
    return ndimage.distance_transform_edt(~mask) <= radius


def clean_completion(
    raw: np.ndarray,
    visible: np.ndarray,
    radius: float | None = None,
    w_min: float | None = None,
) -> np.ndarray:
    """Tidy one raw completion against the visible fragment it was grown from.

    Thin structures (narrower than ``w_min``) are opened away unless they sit
    inside the ``radius`` dilation of ``visible``; afterwards only the component
    holding the visible fragment survives. The result always contains
    ``visible``.
    """
    _same_shape(raw, visible)
    visible = np.asarray(visible, dtype=bool)
    if not visible.any():
        raise EmptyVisibleMask("visible mask is empty")
    r0, w0 = scaled_constants(visible.shape)
    radius = r0 if radius is None else radius
    w_min = w0 if w_min is None else w_min

    grown = np.asarray(raw, dtype=bool) | visible
    near = dilate(visible, radius)

    # opening by a disk of radius ~w_min via two distance transforms
    depth = ndimage.distance_transform_edt(grown)
    core = depth >= w_min
    if core.any():
        thick = grown & (ndimage.distance_transform_edt(~core) <= w_min)
    else:
        thick = np.zeros_like(grown)
    kept = thick | (grown & near) | visible

    comp, n = ndimage.label(kept, structure=FOUR_CONN)
    ids = np.unique(comp[visible])
    ids = ids[ids > 0]
    if ids.size > 1:
        # visible itself is fragmented; keep the largest touching component
        sizes = ndimage.sum_labels(np.ones_like(comp), comp, ids)
        ids = ids[[int(np.argmax(sizes))]]
        return (comp == ids[0]) | visible
    return comp == ids[0]


def iou(a: np.ndarray, b: np.ndarray) -> float:
    _same_shape(a, b)
    union = np.count_nonzero(a | b)
    if union == 0:
        return 1.0
    return np.count_nonzero(a & b) / union


def _find(parent: list[int], i: int) -> int:
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


def merge_completions(amodal: AmodalSet, tau: float = DEFAULT_TAU) -> AmodalSet:
    """Collapse groups linked by pairwise IoU > tau (transitively) into their union."""
    if not 0 < tau <= 1:
        raise ValueError(f"tau must lie in (0, 1], got {tau}")
    n = len(amodal)
    parent = list(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if iou(amodal.amodal[i], amodal.amodal[j]) > tau:
                ri, rj = _find(parent, i), _find(parent, j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)

    groups: dict[int, list[int]] = {}
    for i in range(n):
        groups.setdefault(_find(parent, i), []).append(i)

    masks, prov, vis = [], [], []
    for root in sorted(groups):
        members = groups[root]
        masks.append(np.logical_or.reduce([amodal.amodal[i] for i in members]))
        prov.append(tuple(p for i in members for p in amodal.provenance[i]))
        if amodal.visible:
            vis.append(np.logical_or.reduce([amodal.visible[i] for i in members]))
    return AmodalSet(masks, prov, vis)


def amodal_from_parts(parts: PartSet, completions: Sequence[np.ndarray]) -> AmodalSet:
    """Pair each visible fragment with its completion (provenance = fragment index)."""
    if len(completions) != len(parts):
        raise ValueError("one completion per visible fragment is required")
    return AmodalSet(
        [np.asarray(c, dtype=bool) for c in completions],
        [(i,) for i in range(len(parts))],
        [v.copy() for v in parts.visible],
    )
