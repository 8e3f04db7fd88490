"""Segmentation and completion metrics: mIoU, Panoptic Quality, Chamfer Distance."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import DimensionMismatch, EmptyMask

MATCH_IOU = 0.5
CD_SAMPLES = 4096


@dataclass
class MatchResult:
    matched_pairs: list[tuple[int, int, float]] = field(default_factory=list)
    unmatched_predictions: list[int] = field(default_factory=list)
    unmatched_references: list[int] = field(default_factory=list)


def _pairwise_iou(pred: Sequence[np.ndarray], ref: Sequence[np.ndarray]) -> np.ndarray:
    if not pred or not ref:
        return np.zeros((len(pred), len(ref)))
    p = np.stack([np.asarray(m, dtype=bool).ravel() for m in pred]).astype(np.int64)
    r = np.stack([np.asarray(m, dtype=bool).ravel() for m in ref]).astype(np.int64)
    inter = p @ r.T
    union = p.sum(1)[:, None] + r.sum(1)[None, :] - inter
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(union > 0, inter / np.maximum(union, 1), 0.0)


def match_instances(pred: Sequence[np.ndarray], ref: Sequence[np.ndarray]) -> MatchResult:
    """Match predictions to references with IoU > 0.5 (such matches are unique)."""
    shapes = {np.shape(m) for m in list(pred) + list(ref)}
    if len(shapes) > 1:
        raise DimensionMismatch(f"mask shapes differ: {sorted(shapes)}")
    ious = _pairwise_iou(pred, ref)
    result = MatchResult()
    used_p, used_r = set(), set()
    for i, j in zip(*np.nonzero(ious > MATCH_IOU)):
        result.matched_pairs.append((int(i), int(j), float(ious[i, j])))
        used_p.add(int(i))
        used_r.add(int(j))
    result.unmatched_predictions = [i for i in range(len(pred)) if i not in used_p]
    result.unmatched_references = [j for j in range(len(ref)) if j not in used_r]
    return result


def mean_iou(match: MatchResult, n_ref: int) -> float:
    """Mean over references of the matched IoU (0 when unmatched), in percent."""
    if n_ref < 1:
        raise ValueError("need at least one reference")
    return 100.0 * sum(iou for _, _, iou in match.matched_pairs) / n_ref


def panoptic_quality(match: MatchResult) -> float:
    tp = len(match.matched_pairs)
    denom = tp + 0.5 * len(match.unmatched_predictions) + 0.5 * len(match.unmatched_references)
    if denom == 0:
        return 0.0
    return 100.0 * sum(iou for _, _, iou in match.matched_pairs) / denom


def sample_pixels(mask: np.ndarray, n_samples: int, seed: int) -> np.ndarray:
    """Pixel centres ``(x, y)`` drawn uniformly with replacement.

    Each mask gets a fresh generator seeded with ``seed``, so identical masks
    yield identical samples regardless of argument order.
    """
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        raise EmptyMask("cannot sample from an empty mask")
    idx = np.random.default_rng(seed).integers(0, xs.size, size=n_samples)
    return np.stack([xs[idx] + 0.5, ys[idx] + 0.5], axis=1)


def chamfer_distance(pred: np.ndarray, ref: np.ndarray, n_samples: int = CD_SAMPLES, seed: int = 0) -> float:
    """Symmetric Chamfer distance in pixels between point samples of two masks."""
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if np.shape(pred) != np.shape(ref):
        raise DimensionMismatch("mask shapes differ")
    a = sample_pixels(pred, n_samples, seed)
    b = sample_pixels(ref, n_samples, seed)
    d_ab, _ = cKDTree(b).query(a)
    d_ba, _ = cKDTree(a).query(b)
    return float(d_ab.mean()) + float(d_ba.mean())


@dataclass
class IconScores:
    icon_id: str
    miou: float
    pq: float
    cd: float  # mean over matched pairs; NaN when nothing matched


def score_icon(icon_id: str, pred: Sequence[np.ndarray], ref: Sequence[np.ndarray], n_samples: int = CD_SAMPLES, seed: int = 0) -> IconScores:
    match = match_instances(pred, ref)
    cds = [
        chamfer_distance(pred[i], ref[j], n_samples, seed)
        for i, j, _ in match.matched_pairs
        if np.any(pred[i]) and np.any(ref[j])
    ]
    return IconScores(
        icon_id,
        mean_iou(match, len(ref)),
        panoptic_quality(match),
        float(np.mean(cds)) if cds else float("nan"),
    )
