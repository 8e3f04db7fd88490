"""End-to-end decomposition of a flattened icon into ordered, completed layers.

The chain: rasterise the input, refine the segmentation, split it into
fragments, complete each fragment, clean and merge the completions, trace
them, solve the layer order, splice the original curves back in, and emit a
layered icon. Any failure is re-raised as :class:`StageError` naming the stage.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Literal, Sequence, TypeVar

import numpy as np
from PIL import Image
from scipy import ndimage
from scipy.spatial import ConvexHull

from .errors import DimensionMismatch, IconLayersError, ManifestError, PartCountMismatch, StageError, TooManyColors
from .mask_ops import (
    DEFAULT_TAU,
    AmodalSet,
    PartSet,
    amodal_from_parts,
    clean_completion,
    merge_completions,
    refine_labels,
    split_components,
)
from .ordering import DEFAULT_LAMBDA, OrderingProblem, OrderingSolution, build_problem, solve
from .raster import (
    FOUR_CONN,
    fill_holes,
    load_labels,
    load_mask,
    paint_stack,
    rasterize,
    rasterize_edges,
    save_labels,
    save_mask,
)
from .surgery import CONTACT_EPSILON_PX, MergedContour, debug_svg, reuse_curves
from .svg_model import RGB, CompoundPath, Layer, LayeredIcon, Subpath, parse_svg, write_layered_svg
from .trace import TraceConfig, trace

log = logging.getLogger(__name__)

QUANT_STEP = 8
BLACK_THRESHOLD = 32
MAX_COLORS = 64
MIN_COLOR_SUPPORT = 0.002  # fraction of coloured pixels a colour bin needs to seed a label
PAIRING_OVERLAP = 0.5
MIN_FRAGMENT_PX = 16  # at 512 x 512, scaled with canvas area

PALETTE: tuple[RGB, ...] = (
    (31, 119, 180), (255, 127, 14), (44, 160, 44), (214, 39, 40),
    (148, 103, 189), (140, 86, 75), (227, 119, 194), (127, 127, 127),
    (188, 189, 34), (23, 190, 207), (174, 199, 232), (255, 187, 120),
)


def layer_color(position: int) -> RGB:
    """Palette colour for a stack position; later cycles are darkened so colours stay distinct."""
    cycle, idx = divmod(position, len(PALETTE))
    return tuple(max(0, ch - 9 * cycle) for ch in PALETTE[idx])  # type: ignore[return-value]


# ---------------------------------------------------------------------------
# manifest
# ---------------------------------------------------------------------------


@dataclass
class MaskStackManifest:
    silhouette_path: Path
    segmentation: Path | list[Path]
    completions: list[Path] | None
    canvas: tuple[int, int]  # (width, height)

    @classmethod
    def load(cls, path: str | Path) -> MaskStackManifest:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ManifestError(f"{path}: {exc}") from exc
        return cls.from_dict(data, path.parent)

    @classmethod
    def from_dict(cls, data: dict, base: str | Path = ".") -> MaskStackManifest:
        base = Path(base)
        try:
            w, h = (int(v) for v in data["canvas"])
            sil = base / data["silhouette_path"]
            seg = data["segmentation"]
            seg = [base / s for s in seg] if isinstance(seg, list) else base / seg
            comp = data.get("completions")
            comp = [base / c for c in comp] if comp is not None else None
        except (KeyError, TypeError, ValueError) as exc:
            raise ManifestError(f"malformed manifest: {exc}") from exc
        m = cls(sil, seg, comp, (w, h))
        m.validate()
        return m

    def files(self) -> list[Path]:
        seg = self.segmentation if isinstance(self.segmentation, list) else [self.segmentation]
        return [self.silhouette_path, *seg, *(self.completions or [])]

    def validate(self) -> None:
        w, h = self.canvas
        if w <= 0 or h <= 0:
            raise ManifestError("canvas dimensions must be positive")
        for f in self.files():
            if not f.is_file():
                raise ManifestError(f"missing file: {f}")
            with Image.open(f) as img:
                if img.size != (w, h):
                    raise ManifestError(f"{f} is {img.size[0]}x{img.size[1]}, manifest declares {w}x{h}")

    def to_dict(self, base: str | Path = ".") -> dict:
        def rel(p: Path) -> str:
            try:
                return str(p.relative_to(base))
            except ValueError:
                return str(p)

        seg = [rel(s) for s in self.segmentation] if isinstance(self.segmentation, list) else rel(self.segmentation)
        return {
            "silhouette_path": rel(self.silhouette_path),
            "segmentation": seg,
            "completions": [rel(c) for c in self.completions] if self.completions is not None else None,
            "canvas": list(self.canvas),
        }


def _contiguous(labels: np.ndarray) -> None:
    present = sorted(int(v) for v in np.unique(labels) if v != 0)
    if present != list(range(1, len(present) + 1)):
        raise ManifestError(f"segmentation labels are not contiguous: {present}")


def load_segmentation(manifest: MaskStackManifest, silhouette: np.ndarray) -> np.ndarray:
    """Raw label map from an indexed PNG, an RGB colour-coded image, or per-part masks."""
    if isinstance(manifest.segmentation, list):
        labels = np.zeros(silhouette.shape, dtype=np.int64)
        for k, f in enumerate(manifest.segmentation):
            labels[load_mask(f)] = k + 1
        _contiguous(labels)
        return labels
    with Image.open(manifest.segmentation) as img:
        mode = img.mode
    if mode == "P":
        labels = load_labels(manifest.segmentation)
        _contiguous(labels)
        return labels
    return import_colorized(manifest.segmentation, silhouette)


# ---------------------------------------------------------------------------
# colour-coded segmentations
# ---------------------------------------------------------------------------


def import_colorized(
    image: str | Path | np.ndarray,
    silhouette: np.ndarray,
    q: int = QUANT_STEP,
    black: int = BLACK_THRESHOLD,
    max_colors: int = MAX_COLORS,
) -> np.ndarray:
    """Turn a colour-coded segmentation into a label map (0 = unlabelled).

    Channels snap to the nearest multiple of ``q``. Colour bins with enough
    support seed labels, and touching strong bins (one lattice step apart in
    every channel) share a label, which absorbs per-region colour jitter. Weak
    bins join a neighbouring strong bin or stay unlabelled, so off-palette
    anti-aliasing is left for :func:`refine_labels`. Labels are numbered by
    descending pixel count.
    """
    if isinstance(image, np.ndarray):
        rgb = np.asarray(image)
        if rgb.ndim == 2:
            rgb = np.repeat(rgb[..., None], 3, axis=2)
        rgb = rgb[..., :3].astype(np.int64)
    else:
        with Image.open(image) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.int64)
    if rgb.shape[:2] != silhouette.shape:
        raise DimensionMismatch(f"image is {rgb.shape[:2]}, silhouette is {silhouette.shape}")

    colored = rgb.max(axis=2) >= black
    snapped = np.clip(np.rint(rgb / q).astype(np.int64), 0, (255 + q - 1) // q)
    keys = (snapped[..., 0] * 64 + snapped[..., 1]) * 64 + snapped[..., 2]
    bins, inverse, counts = np.unique(keys[colored], return_inverse=True, return_counts=True)
    labels = np.zeros(silhouette.shape, dtype=np.int64)
    if bins.size == 0:
        return labels

    coords = np.stack([bins // 4096, (bins // 64) % 64, bins % 64], axis=1)
    support = max(1, int(np.ceil(MIN_COLOR_SUPPORT * counts.sum())))
    strong = counts >= support
    by_key = {int(b): i for i, b in enumerate(bins)}
    offsets = [(a, b, c) for a in (-1, 0, 1) for b in (-1, 0, 1) for c in (-1, 0, 1) if (a, b, c) != (0, 0, 0)]

    def neighbours(i: int) -> list[int]:
        x, y, z = coords[i]
        out = []
        for a, b, c in offsets:
            j = by_key.get(int(((x + a) * 64 + (y + b)) * 64 + (z + c)), -1) if min(x + a, y + b, z + c) >= 0 else -1
            if j >= 0:
                out.append(j)
        return out

    cluster = np.full(bins.size, -1, dtype=np.int64)
    n_clusters = 0
    order = np.lexsort((bins, -counts))
    for i in order:
        if not strong[i] or cluster[i] >= 0:
            continue
        cluster[i] = n_clusters
        stack = [int(i)]
        while stack:
            u = stack.pop()
            for v in neighbours(u):
                if strong[v] and cluster[v] < 0:
                    cluster[v] = n_clusters
                    stack.append(v)
        n_clusters += 1
    if n_clusters > max_colors:
        raise TooManyColors(f"{n_clusters} colour clusters (limit {max_colors}); not a segmentation image?")
    if n_clusters == 0:
        return labels
    for i in order:
        if strong[i]:
            continue
        cands = [v for v in neighbours(int(i)) if strong[v]]
        if cands:
            best = max(cands, key=lambda v: (counts[v], -bins[v]))
            cluster[i] = cluster[best]

    # renumber by descending pixel count, ties by first appearance in bin order
    sizes = np.bincount(cluster[cluster >= 0], weights=counts[cluster >= 0], minlength=n_clusters)
    rank = np.empty(n_clusters, dtype=np.int64)
    rank[np.lexsort((np.arange(n_clusters), -sizes))] = np.arange(1, n_clusters + 1)
    per_bin = np.where(cluster >= 0, rank[np.maximum(cluster, 0)], 0)
    labels[colored] = per_bin[inverse]
    return labels


# ---------------------------------------------------------------------------
# completion providers
# ---------------------------------------------------------------------------


def convex_fill(mask: np.ndarray) -> np.ndarray:
    """Filled convex hull of the pixel squares of ``mask`` (pixel-centre rule)."""
    ys, xs = np.nonzero(mask)
    if xs.size == 0:
        return mask.copy()
    corners = np.concatenate(
        [np.stack([xs + dx, ys + dy], axis=1) for dx in (0, 1) for dy in (0, 1)]
    ).astype(np.float64)
    hull = corners[ConvexHull(corners).vertices]
    ring = np.vstack([hull, hull[:1]])
    edges = np.hstack([ring[:-1], ring[1:]])
    h, w = mask.shape
    return rasterize_edges(edges, w, h, "nonzero") | mask


@dataclass
class CompletionProvider:
    kind: Literal["identity", "convex", "external"] = "identity"
    files: list[Path] | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("identity", "convex", "external"):
            raise ValueError(f"unknown completion provider {self.kind!r}")
        if self.kind == "external" and not self.files:
            raise PartCountMismatch("external provider needs completion files")

    def complete(self, parts: PartSet) -> list[np.ndarray]:
        """One raw completion per visible fragment."""
        if self.kind == "identity":
            return [v.copy() for v in parts.visible]
        if self.kind == "convex":
            return [convex_fill(v) for v in parts.visible]
        masks = [load_mask(f) for f in self.files or []]
        if len(masks) == len(parts):
            return masks
        labels = sorted(set(parts.source_label))
        if len(masks) == len(labels) and labels == list(range(1, len(masks) + 1)):
            return [masks[lab - 1] for lab in parts.source_label]
        raise PartCountMismatch(
            f"{len(masks)} completions for {len(parts)} fragments over {len(labels)} labels"
        )


# ---------------------------------------------------------------------------
# decomposition
# ---------------------------------------------------------------------------


@dataclass
class DecomposeConfig:
    tau: float = DEFAULT_TAU
    lam: float = DEFAULT_LAMBDA
    epsilon_px: float = CONTACT_EPSILON_PX
    trace: TraceConfig = field(default_factory=TraceConfig)
    traced_fill: bool = False  # ordering footprints from traced paths instead of the raw masks
    surgery: bool = True
    workers: int = 1
    debug_dir: Path | None = None


@dataclass
class LayerReport:
    part: int  # index into the merged amodal set
    labels: tuple[int, ...]  # segmentation labels that fed the layer
    paired_subpaths: tuple[int, ...]
    bridges: int
    fallback: bool
    merges: list[MergedContour] = field(default_factory=list, repr=False)


@dataclass
class DecomposeResult:
    icon: LayeredIcon
    silhouette: np.ndarray
    parts: PartSet
    amodal: AmodalSet
    traced: list[CompoundPath]
    problem: OrderingProblem
    solution: OrderingSolution
    reports: list[LayerReport]  # bottom to top, aligned with icon.layers

    def svg(self) -> bytes:
        return write_layered_svg(self.icon)


T = TypeVar("T")


def _stage(name: str, fn: Callable[[], T]) -> T:
    try:
        return fn()
    except StageError:
        raise
    except (IconLayersError, ValueError, OSError) as exc:
        raise StageError(name, exc) from exc


def _map(fn, items: Sequence, workers: int) -> list:
    if workers <= 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def absorb_specks(labels: np.ndarray, min_area: float | None = None) -> np.ndarray:
    """Relabel fragments smaller than ``min_area`` px to the fragment they share most border with.

    Specks of this size cannot be traced and would otherwise surface as
    empty layers. A speck with no labelled 4-neighbour is left alone.
    """
    if min_area is None:
        min_area = MIN_FRAGMENT_PX * labels.size / (512 * 512)
    labels = labels.copy()
    parts = split_components(labels)
    h, w = labels.shape
    for k, v in enumerate(parts.visible):
        n = int(v.sum())
        if n >= min_area:
            continue
        own = parts.source_label[k]
        ring = ndimage.binary_dilation(v, structure=FOUR_CONN) & ~v
        border = labels[ring]
        border = border[(border > 0) & (border != own)]
        if border.size == 0:
            continue
        vals, counts = np.unique(border, return_counts=True)
        target = int(vals[np.argmax(counts)])  # ties: smallest label
        log.info("absorbing %d-pixel fragment of label %d into label %d", n, own, target)
        labels[v] = target
    return labels


def pair_subpaths(path: CompoundPath, visible: Sequence[np.ndarray]) -> list[list[int]]:
    """For each visible mask, the input subpaths whose rasterisation overlaps it by > 50%.

    Overlap is measured against the smaller of the two regions, so both a
    part's own contour and an enclosing silhouette contour qualify. Hole
    contours rasterise to the hole itself and so never pair.
    """
    h, w = visible[0].shape
    rasters = [rasterize(CompoundPath((sp,), "nonzero", path.viewbox), w, h) for sp in path.subpaths]
    out = []
    for v in visible:
        nv = int(v.sum())
        picks = []
        for i, r in enumerate(rasters):
            nr = int(r.sum())
            inter = int(np.count_nonzero(r & v))
            if min(nr, nv) > 0 and inter > PAIRING_OVERLAP * min(nr, nv):
                picks.append(i)
        out.append(picks)
    return out


def _splice(traced: CompoundPath, originals: list[Subpath], epsilon: float) -> tuple[CompoundPath, list[MergedContour]]:
    """Reuse original curves on every outer contour of a traced completion."""
    if not originals:
        return traced, []
    subs: list[Subpath] = []
    merges: list[MergedContour] = []
    for sp in traced.subpaths:
        area = sp.signed_area()
        if area <= 0:
            subs.append(sp)
            continue
        merged = reuse_curves(originals, sp, epsilon)
        out = merged.subpath
        if out.signed_area() * area < 0:
            out = out.reversed()
        merges.append(merged)
        subs.append(out)
    return CompoundPath(tuple(subs), traced.fill_rule, traced.viewbox), merges


def render_layered(icon: LayeredIcon, width: int, height: int) -> tuple[np.ndarray, list[np.ndarray]]:
    """Painter's-algorithm render; returns the silhouette and per-layer visible masks (bottom first)."""
    amodal = [rasterize(layer.path.with_viewbox(icon.canvas), width, height) for layer in icon.layers]
    fill = [fill_holes(a) for a in amodal]
    return paint_stack(amodal, range(len(amodal)), fill)


def decompose(
    input_svg: bytes | str | Path,
    manifest: MaskStackManifest,
    provider: CompletionProvider | None = None,
    config: DecomposeConfig | None = None,
) -> DecomposeResult:
    cfg = config or DecomposeConfig()
    if provider is None:
        provider = (
            CompletionProvider("external", manifest.completions) if manifest.completions else CompletionProvider()
        )
    if isinstance(input_svg, Path):
        input_svg = input_svg.read_bytes()
    w, h = manifest.canvas

    path = _stage("parse", lambda: parse_svg(input_svg))
    silhouette = _stage("rasterize", lambda: rasterize(path, w, h))
    raw = _stage("segmentation", lambda: load_segmentation(manifest, silhouette))
    labels = _stage("refine", lambda: refine_labels(raw, silhouette))
    labels = _stage("refine", lambda: absorb_specks(labels))
    parts = _stage("split", lambda: split_components(labels))
    completions = _stage("complete", lambda: provider.complete(parts))

    def clean(i: int) -> np.ndarray:
        if completions[i].shape != parts.visible[i].shape:
            raise PartCountMismatch(f"completion {i} has shape {completions[i].shape}")
        out = clean_completion(completions[i], parts.visible[i])
        assert not np.any(parts.visible[i] & ~out)
        return out

    cleaned = _stage("clean", lambda: _map(clean, range(len(parts)), cfg.workers))
    amodal = _stage("merge", lambda: merge_completions(amodal_from_parts(parts, cleaned), cfg.tau))

    vb = path.viewbox
    traced = _stage("trace", lambda: _map(lambda a: trace(a, cfg.trace, vb), amodal.amodal, cfg.workers))
    problem = _stage(
        "order",
        lambda: build_problem(amodal, silhouette, traced if cfg.traced_fill else None, cfg.lam),
    )
    solution = _stage("order", lambda: solve(problem))

    pairs = _stage("pair", lambda: pair_subpaths(path, amodal.visible)) if cfg.surgery else [[] for _ in amodal.amodal]
    epsilon = cfg.epsilon_px * max(vb[2] / w, vb[3] / h)

    def splice(k: int):
        return _splice(traced[k], [path.subpaths[i] for i in pairs[k]], epsilon)

    spliced = _stage("surgery", lambda: _map(splice, range(len(traced)), cfg.workers))

    layers, reports = [], []
    for pos, k in enumerate(solution.permutation):
        final, merges = spliced[k]
        layers.append(Layer(final, layer_color(pos), pos))
        labs = tuple(sorted({parts.source_label[i] for i in amodal.provenance[k]}))
        n_bridges = sum(len(m.bridges) for m in merges)
        reports.append(LayerReport(k, labs, tuple(pairs[k]), n_bridges, any(m.fallback for m in merges), merges))
    icon = LayeredIcon(tuple(layers), vb, solution.objective)
    if len(icon.layers) != len(amodal):
        raise StageError("assemble", RuntimeError("layer count differs from merged part count"))

    result = DecomposeResult(icon, silhouette, parts, amodal, traced, problem, solution, reports)
    if cfg.debug_dir is not None:
        write_debug(result, labels, Path(cfg.debug_dir))
    return result


def write_debug(result: DecomposeResult, labels: np.ndarray, out: Path) -> None:
    from .ordering import dump_json

    out.mkdir(parents=True, exist_ok=True)
    save_mask(out / "silhouette.png", result.silhouette)
    save_labels(out / "refined_labels.png", np.minimum(labels, 255))
    for k, (a, v) in enumerate(zip(result.amodal.amodal, result.amodal.visible)):
        save_mask(out / f"amodal_{k}.png", a)
        save_mask(out / f"visible_{k}.png", v)
    (out / "ordering.json").write_text(dump_json(result.problem, result.solution) + "\n")
    layers = [
        {"z": pos, "part": r.part, "labels": list(r.labels), "paired_subpaths": list(r.paired_subpaths),
         "bridges": r.bridges, "fallback": r.fallback}
        for pos, r in enumerate(result.reports)
    ]
    (out / "layers.json").write_text(json.dumps(layers, indent=2) + "\n")
    for pos, r in enumerate(result.reports):
        for j, merged in enumerate(r.merges):
            (out / f"surgery_{pos}_{j}.svg").write_bytes(debug_svg(merged, result.icon.canvas))


def flattened_iou(result: DecomposeResult) -> float:
    """IoU between the painter's render of the output and the input silhouette."""
    from .mask_ops import iou

    h, w = result.silhouette.shape
    rendered, _ = render_layered(result.icon, w, h)
    return iou(rendered, result.silhouette)


def layer_masks(result: DecomposeResult) -> list[np.ndarray]:
    """Rasterised final layer paths, bottom to top."""
    h, w = result.silhouette.shape
    return [rasterize(layer.path, w, h) for layer in result.icon.layers]

