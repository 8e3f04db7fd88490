"""Synthetic occlusion scenes with exact ground truth.

Icons from a small built-in library (or any closed compound paths) are scaled,
placed on a square canvas and stacked. Visible masks come from the painter's
algorithm, so the ground truth is exact by construction.

Corpus layout (``FORMAT_VERSION`` 1), one folder per sample::

    sample_0000/
        composite.png      silhouette of the flattened stack
        visible_{k}.png    visible mask of part k
        amodal_{k}.png     full extent of part k
        segmentation.png   indexed label map, label k + 1 = part k
        flattened.svg      traced silhouette (a flattened icon)
        truth.json         order, occlusion fractions, placement spec
        manifest.json      mask-stack manifest for ``iconlayers decompose``
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import DegeneratePlacement, ExhaustedSampling
from .raster import fill_holes, paint_stack, rasterize, save_labels, save_mask
from .svg_model import CompoundPath, Subpath, parse_path_data

FORMAT_VERSION = 1
DEFAULT_CANVAS = 256
ORDERING_CANVAS = 512
DEFAULT_ACCEPT = (0.10, 0.60)
DEFAULT_SCALE = (0.3, 0.8)
OBJECT_SCALE = 0.8
ATTEMPTS_PER_SAMPLE = 1000

_ICON_DATA = {
    "square": "M10 10 H90 V90 H10 Z",
    "circle": "M50 5 A45 45 0 1 1 50 95 A45 45 0 1 1 50 5 Z",
    "ellipse": "M50 20 A45 30 0 1 1 50 80 A45 30 0 1 1 50 20 Z",
    "rounded": "M25 10 H75 A15 15 0 0 1 90 25 V75 A15 15 0 0 1 75 90 H25 A15 15 0 0 1 10 75 V25 A15 15 0 0 1 25 10 Z",
    "triangle": "M50 8 L92 88 L8 88 Z",
    "diamond": "M50 5 L95 50 L50 95 L5 50 Z",
    "hexagon": "M27.5 11 L72.5 11 L95 50 L72.5 89 L27.5 89 L5 50 Z",
    "star": (
        "M50 5 L61.2 34.5 L92.8 36.1 L68.2 56 L76.4 86.4 L50 69.2 "
        "L23.6 86.4 L31.8 56 L7.2 36.1 L38.8 34.5 Z"
    ),
    "plus": "M35 5 H65 V35 H95 V65 H65 V95 H35 V65 H5 V35 H35 Z",
    "heart": "M50 90 C20 68 5 50 5 32 C5 16 17 6 30 6 C40 6 47 12 50 20 C53 12 60 6 70 6 C83 6 95 16 95 32 C95 50 80 68 50 90 Z",
    "ring": "M50 5 A45 45 0 1 1 50 95 A45 45 0 1 1 50 5 Z M50 30 A20 20 0 1 0 50 70 A20 20 0 1 0 50 30 Z",
    "frame": "M8 8 H92 V92 H8 Z M28 28 V72 H72 V28 Z",
    "drop": "M50 5 C62 30 82 45 82 64 A32 32 0 0 1 18 64 C18 45 38 30 50 5 Z",
}


def builtin_library() -> dict[str, CompoundPath]:
    """Named closed icons, each in a 100 x 100 viewbox (ring and frame have holes)."""
    return {
        name: CompoundPath(tuple(parse_path_data(d)), "nonzero", (0.0, 0.0, 100.0, 100.0))
        for name, d in _ICON_DATA.items()
    }


@dataclass(frozen=True)
class Placement:
    """An icon scaled so its viewbox's longer side spans ``scale * canvas``, top-left at ``offset``."""

    icon: CompoundPath
    scale: float
    offset: tuple[float, float]
    name: str = ""

    def placed(self, canvas: int) -> CompoundPath:
        x0, y0, w, h = self.icon.viewbox
        s = self.scale * canvas / max(w, h)
        ox, oy = self.offset
        return self.icon.mapped(s, s, ox - x0 * s, oy - y0 * s, (0.0, 0.0, float(canvas), float(canvas)))

    def check(self, canvas: int) -> None:
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        x0, y0, w, h = self.icon.viewbox
        side = self.scale * canvas / max(w, h)
        ox, oy = self.offset
        if ox < 0 or oy < 0 or ox + w * side > canvas + 1e-9 or oy + h * side > canvas + 1e-9:
            raise ValueError(f"placement {self.offset} at scale {self.scale} leaves the canvas")


@dataclass(frozen=True)
class CompositeSpec:
    """An object icon with an occluder drawn above it."""

    object_icon: CompoundPath
    occluder_icon: CompoundPath
    occluder_scale: float
    occluder_offset: tuple[float, float]
    seed: int = 0
    object_scale: float = OBJECT_SCALE
    object_offset: tuple[float, float] | None = None  # centred when None
    canvas: int = DEFAULT_CANVAS
    names: tuple[str, str] = ("", "")

    def stack(self) -> StackSpec:
        off = self.object_offset
        if off is None:
            m = (1.0 - self.object_scale) * self.canvas / 2
            off = (m, m)
        return StackSpec(
            (
                Placement(self.object_icon, self.object_scale, off, self.names[0]),
                Placement(self.occluder_icon, self.occluder_scale, self.occluder_offset, self.names[1]),
            ),
            (0, 1),
            self.canvas,
            self.seed,
        )


@dataclass(frozen=True)
class StackSpec:
    """Parts indexed as in ``placements``; ``order`` lists part indices bottom to top."""

    placements: tuple[Placement, ...]
    order: tuple[int, ...]
    canvas: int = ORDERING_CANVAS
    seed: int = 0

    def to_dict(self) -> dict:
        return {
            "canvas": self.canvas,
            "seed": self.seed,
            "order": list(self.order),
            "parts": [
                {"icon": p.name, "scale": p.scale, "offset": list(p.offset), "d": p.icon.to_d(), "viewbox": list(p.icon.viewbox)}
                for p in self.placements
            ],
        }


@dataclass
class GroundTruth:
    composite_silhouette: np.ndarray
    visible_masks: list[np.ndarray]
    amodal_masks: list[np.ndarray]
    order: tuple[int, ...]
    occlusion_fraction: list[float]
    paths: list[CompoundPath] = field(default_factory=list)
    spec: StackSpec | None = None

    @property
    def K(self) -> int:
        return len(self.amodal_masks)

    def labels(self) -> np.ndarray:
        """Label map with part ``k`` as label ``k + 1``."""
        out = np.zeros(self.composite_silhouette.shape, dtype=np.int64)
        for k, v in enumerate(self.visible_masks):
            out[v] = k + 1
        return out

    def to_dict(self) -> dict:
        return {
            "format": "iconlayers-synth",
            "version": FORMAT_VERSION,
            "order": list(self.order),
            "occlusion_fraction": [round(f, 6) for f in self.occlusion_fraction],
            "spec": self.spec.to_dict() if self.spec else None,
        }


def generate_stack(spec: StackSpec) -> GroundTruth:
    n = spec.canvas
    if sorted(spec.order) != list(range(len(spec.placements))):
        raise ValueError("order must be a permutation of the part indices")
    paths, amodal = [], []
    for p in spec.placements:
        p.check(n)
        path = p.placed(n)
        paths.append(path)
        amodal.append(rasterize(path, n, n))
    for k, a in enumerate(amodal):
        if not a.any():
            raise DegeneratePlacement(f"part {k} rasterises to nothing")
    silhouette, visible = paint_stack(amodal, spec.order, [fill_holes(a) for a in amodal])
    for k, v in enumerate(visible):
        if not v.any():
            raise DegeneratePlacement(f"part {k} is fully hidden")
    frac = [1.0 - float(v.sum()) / float(a.sum()) for v, a in zip(visible, amodal)]
    return GroundTruth(silhouette, visible, amodal, tuple(spec.order), frac, paths, spec)


def generate(spec: CompositeSpec) -> GroundTruth:
    """Composite the occluder above the object; part 0 is the object, part 1 the occluder."""
    return generate_stack(spec.stack())


def _named(library: Sequence[CompoundPath] | Mapping[str, CompoundPath]) -> list[tuple[str, CompoundPath]]:
    if isinstance(library, Mapping):
        return sorted(library.items())
    return [(f"icon{i}", p) for i, p in enumerate(library)]


def _random_stack(
    rng: np.random.Generator,
    icons: list[tuple[str, CompoundPath]],
    n_parts: int,
    scale_range: tuple[float, float],
    canvas: int,
    seed: int,
) -> StackSpec:
    replace = len(icons) < n_parts
    picks = rng.choice(len(icons), size=n_parts, replace=replace)
    placements = []
    for idx in picks:
        name, icon = icons[int(idx)]
        s = float(rng.uniform(*scale_range))
        _, _, w, h = icon.viewbox
        side = s * canvas / max(w, h)
        ox = float(rng.uniform(0.0, canvas - w * side))
        oy = float(rng.uniform(0.0, canvas - h * side))
        placements.append(Placement(icon, round(s, 4), (round(ox, 2), round(oy, 2)), name))
    order = tuple(int(i) for i in rng.permutation(n_parts))
    return StackSpec(tuple(placements), order, canvas, seed)


def _random_pair(
    rng: np.random.Generator,
    icons: list[tuple[str, CompoundPath]],
    scale_range: tuple[float, float],
    canvas: int,
    seed: int,
) -> StackSpec:
    i, j = (int(v) for v in rng.choice(len(icons), size=2, replace=False))
    s = round(float(rng.uniform(*scale_range)), 4)
    _, _, w, h = icons[j][1].viewbox
    side = s * canvas / max(w, h)
    off = (round(float(rng.uniform(0, canvas - w * side)), 2), round(float(rng.uniform(0, canvas - h * side)), 2))
    spec = CompositeSpec(icons[i][1], icons[j][1], s, off, seed, canvas=canvas, names=(icons[i][0], icons[j][0]))
    return spec.stack()


def sample_corpus(
    library: Sequence[CompoundPath] | Mapping[str, CompoundPath],
    n: int,
    seed: int,
    accept: tuple[float, float] = DEFAULT_ACCEPT,
    scale_range: tuple[float, float] = DEFAULT_SCALE,
    canvas: int = DEFAULT_CANVAS,
    parts: tuple[int, int] = (2, 2),
) -> list[GroundTruth]:
    """Rejection-sample ``n`` scenes whose largest occlusion fraction lies in ``accept``.

    Attempt ``a`` draws from ``default_rng([seed, a])`` so every attempt is
    reproducible on its own. ``parts`` gives the inclusive range of layers
    per scene; two-part scenes use a centred object and a random occluder.
    """
    icons = _named(library)
    if len(icons) < 2:
        raise ValueError("library needs at least two icons")
    if n < 1:
        raise ValueError("n must be >= 1")
    lo, hi = accept
    out: list[GroundTruth] = []
    budget = n * ATTEMPTS_PER_SAMPLE
    for attempt in range(budget):
        rng = np.random.default_rng([seed, attempt])
        k = int(rng.integers(parts[0], parts[1] + 1))
        if k == 2:
            spec = _random_pair(rng, icons, scale_range, canvas, attempt)
        else:
            spec = _random_stack(rng, icons, k, scale_range, canvas, attempt)
        try:
            gt = generate_stack(spec)
        except DegeneratePlacement:
            continue
        if lo <= max(gt.occlusion_fraction) <= hi:
            out.append(gt)
            if len(out) == n:
                return out
    raise ExhaustedSampling(f"accepted {len(out)} of {n} samples in {budget} attempts")


def unique_optimum(gt: GroundTruth) -> bool:
    """True when the ground-truth order is the only optimum of the ordering objective."""
    from itertools import permutations

    from .mask_ops import AmodalSet
    from .ordering import build_problem, enumerate_objective

    amodal = AmodalSet(gt.amodal_masks, [[k] for k in range(gt.K)], gt.visible_masks)
    problem = build_problem(amodal, gt.composite_silhouette)
    truth = enumerate_objective(problem, gt.order)
    for perm in permutations(range(gt.K)):
        if perm != tuple(gt.order) and enumerate_objective(problem, perm) >= truth:
            return False
    return True


def write_sample(gt: GroundTruth, folder: str | Path, trace_silhouette: bool = True) -> Path:
    folder = Path(folder)
    folder.mkdir(parents=True, exist_ok=True)
    save_mask(folder / "composite.png", gt.composite_silhouette)
    for k, (v, a) in enumerate(zip(gt.visible_masks, gt.amodal_masks)):
        save_mask(folder / f"visible_{k}.png", v)
        save_mask(folder / f"amodal_{k}.png", a)
    save_labels(folder / "segmentation.png", gt.labels())
    (folder / "truth.json").write_text(json.dumps(gt.to_dict(), indent=2, sort_keys=True) + "\n")
    h, w = gt.composite_silhouette.shape
    manifest = {
        "silhouette_path": "composite.png",
        "segmentation": "segmentation.png",
        "completions": [f"amodal_{k}.png" for k in range(gt.K)],
        "canvas": [w, h],
    }
    (folder / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    if trace_silhouette:
        from .trace import trace

        path = trace(gt.composite_silhouette)
        (folder / "flattened.svg").write_bytes(flat_svg(path))
    return folder


def flat_svg(path: CompoundPath) -> bytes:
    x0, y0, w, h = path.viewbox
    vb = " ".join(f"{v:g}" for v in (x0, y0, w, h))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{vb}">\n'
        f'  <path fill="#000000" fill-rule="{path.fill_rule}" d="{path.to_d()}"/>\n'
        "</svg>\n"
    ).encode()


def write_corpus(corpus: Sequence[GroundTruth], out_dir: str | Path, trace_silhouette: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    folders = [write_sample(gt, out_dir / f"sample_{i:04d}", trace_silhouette) for i, gt in enumerate(corpus)]
    index = {"format": "iconlayers-synth", "version": FORMAT_VERSION, "samples": [f.name for f in folders]}
    (out_dir / "index.json").write_text(json.dumps(index, indent=2) + "\n")
    return folders


def disk(center: tuple[float, float], radius: float, viewbox: tuple[float, float, float, float]) -> CompoundPath:
    """A circle as four exact-arc cubics (handy for fixtures)."""
    cx, cy = map(float, center)
    radius = float(radius)
    d = f"M{cx + radius} {cy} A{radius} {radius} 0 1 1 {cx - radius} {cy} A{radius} {radius} 0 1 1 {cx + radius} {cy} Z"
    return CompoundPath(tuple(parse_path_data(d)), "nonzero", viewbox)


def crescent_pair(
    center: tuple[float, float], radius: float, bite_center: tuple[float, float], bite_radius: float
) -> tuple[Subpath, Subpath]:
    """A disk and the crescent left when a second disk bites into it.

    Returns ``(crescent, disk)`` as closed subpaths. The crescent's outer arc
    lies exactly on the disk, so the pair has one known contact region.
    """
    cx, cy = map(float, center)
    bx, by = map(float, bite_center)
    radius, bite_radius = float(radius), float(bite_radius)
    d = math.hypot(bx - cx, by - cy)
    if not (abs(radius - bite_radius) < d < radius + bite_radius):
        raise ValueError("the two circles must cross")
    a = (radius**2 - bite_radius**2 + d**2) / (2 * d)
    hgt = math.sqrt(max(radius**2 - a**2, 0.0))
    ux, uy = (bx - cx) / d, (by - cy) / d
    mx, my = cx + a * ux, cy + a * uy
    p = (mx - hgt * uy, my + hgt * ux)
    q = (mx + hgt * uy, my - hgt * ux)
    # outer arc p -> q away from the bite, then the bite arc back q -> p inside the disk
    crescent = (
        f"M{p[0]!r} {p[1]!r} A{radius!r} {radius!r} 0 1 1 {q[0]!r} {q[1]!r} "
        f"A{bite_radius!r} {bite_radius!r} 0 0 0 {p[0]!r} {p[1]!r} Z"
    )
    circle = disk(center, radius, (0, 0, 1, 1)).subpaths[0]
    return parse_path_data(crescent)[0], circle
