"""Command-line entry point: ``iconlayers {decompose,order,trace,eval,synth}``.

Environment overrides:
    ICONLAYERS_RESOLUTION   default canvas side for ``synth`` (512)
    ICONLAYERS_SEED         default seed for ``synth`` and ``eval`` (0)
    ICONLAYERS_LOG          log level name (WARNING)
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from pathlib import Path

import numpy as np

from .errors import IconLayersError
from .mask_ops import DEFAULT_TAU, AmodalSet
from .metrics import CD_SAMPLES, score_icon
from .ordering import DEFAULT_LAMBDA, build_problem, dump_json, solve
from .pipeline import (
    CompletionProvider,
    DecomposeConfig,
    MaskStackManifest,
    decompose,
    layer_masks,
    load_segmentation,
)
from .raster import DEFAULT_RESOLUTION, load_mask, save_mask
from .synth import DEFAULT_ACCEPT, builtin_library, flat_svg, sample_corpus, write_corpus
from .trace import TraceConfig, trace

log = logging.getLogger("iconlayers")

EVAL_COLUMNS = ("icon_id", "miou", "pq", "cd")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"{name} must be an integer, got {raw!r}")


def _trace_config(args: argparse.Namespace) -> TraceConfig:
    """Defaults, then the config file's ``trace`` section, then explicit flags."""
    values: dict = {}
    if getattr(args, "config", None):
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise IconLayersError(f"cannot read config {args.config}: {exc}") from exc
        values.update(data.get("trace", {}))
    for key in ("corner_angle_threshold", "fit_tolerance", "simplify_tolerance", "min_contour_area"):
        v = getattr(args, key, None)
        if v is not None:
            values[key] = v
    return TraceConfig.from_mapping(values)


def cmd_decompose(args: argparse.Namespace) -> int:
    manifest = MaskStackManifest.load(args.manifest)
    if args.provider == "external":
        if not manifest.completions:
            raise IconLayersError("external provider needs 'completions' in the manifest")
        provider = CompletionProvider("external", manifest.completions)
    else:
        provider = CompletionProvider(args.provider)
    cfg = DecomposeConfig(
        tau=args.tau,
        lam=args.lam,
        trace=_trace_config(args),
        traced_fill=args.traced_fill,
        surgery=not args.no_surgery,
        workers=args.workers,
        debug_dir=Path(args.debug_dir) if args.debug_dir else None,
    )
    result = decompose(Path(args.svg).read_bytes(), manifest, provider, cfg)
    svg = result.svg()
    if args.out == "-":
        sys.stdout.buffer.write(svg)
    else:
        Path(args.out).write_bytes(svg)
    if args.masks_dir:
        out = Path(args.masks_dir)
        out.mkdir(parents=True, exist_ok=True)
        for z, m in enumerate(layer_masks(result)):
            save_mask(out / f"amodal_{z}.png", m)
    log.info("wrote %d layers (objective %s)", len(result.icon.layers), result.solution.objective)
    return 0


def cmd_order(args: argparse.Namespace) -> int:
    manifest = MaskStackManifest.load(args.manifest)
    if not manifest.completions:
        raise IconLayersError("ordering needs per-part amodal masks under 'completions'")
    silhouette = load_mask(manifest.silhouette_path)
    labels = load_segmentation(manifest, silhouette)
    amodal = [load_mask(f) for f in manifest.completions]
    n = len(amodal)
    visible = [labels == k + 1 for k in range(n)]
    parts = AmodalSet(amodal, [(k,) for k in range(n)], visible)
    problem = build_problem(parts, silhouette, lam=args.lam)
    text = dump_json(problem, solve(problem)) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        Path(args.out).write_text(text)
    return 0


def cmd_trace(args: argparse.Namespace) -> int:
    mask = load_mask(args.mask)
    cfg = _trace_config(args)
    viewbox = (0.0, 0.0, float(args.size), float(args.size)) if args.size else None
    svg = flat_svg(trace(mask, cfg, viewbox))
    if args.out == "-":
        sys.stdout.buffer.write(svg)
    else:
        Path(args.out).write_bytes(svg)
    return 0


def _fmt(v: float) -> str:
    return "nan" if math.isnan(v) else f"{v:.6f}"


def evaluate_dirs(pred_dir: Path, ref_dir: Path, pred_pattern: str, ref_pattern: str, n_samples: int, seed: int) -> list[dict]:
    """Per-icon scores for every icon folder under ``ref_dir``."""
    rows = []
    for icon in sorted(p for p in ref_dir.iterdir() if p.is_dir()):
        ref = [load_mask(f) for f in sorted(icon.glob(ref_pattern))]
        if not ref:
            continue
        pred_folder = pred_dir / icon.name
        pred = [load_mask(f) for f in sorted(pred_folder.glob(pred_pattern))] if pred_folder.is_dir() else []
        s = score_icon(icon.name, pred, ref, n_samples, seed)
        rows.append({"icon_id": s.icon_id, "miou": s.miou, "pq": s.pq, "cd": s.cd})
    return rows


def write_eval_csv(rows: list[dict], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(EVAL_COLUMNS)
    for r in rows:
        writer.writerow([r["icon_id"], _fmt(r["miou"]), _fmt(r["pq"]), _fmt(r["cd"])])
    if rows:
        cds = [r["cd"] for r in rows if not math.isnan(r["cd"])]
        writer.writerow([
            "mean",
            _fmt(float(np.mean([r["miou"] for r in rows]))),
            _fmt(float(np.mean([r["pq"] for r in rows]))),
            _fmt(float(np.mean(cds)) if cds else float("nan")),
        ])


def cmd_eval(args: argparse.Namespace) -> int:
    rows = evaluate_dirs(Path(args.pred), Path(args.ref), args.pred_pattern, args.ref_pattern, args.samples, args.seed)
    if not rows:
        raise IconLayersError(f"no reference masks matching {args.ref_pattern!r} under {args.ref}")
    if args.out == "-":
        write_eval_csv(rows, sys.stdout)
    else:
        with open(args.out, "w", newline="") as fh:
            write_eval_csv(rows, fh)
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    lib = builtin_library()
    if args.icons:
        missing = sorted(set(args.icons) - set(lib))
        if missing:
            raise IconLayersError(f"unknown icons: {', '.join(missing)}")
        lib = {k: lib[k] for k in args.icons}
    corpus = sample_corpus(
        lib,
        args.n,
        args.seed,
        accept=(args.accept[0], args.accept[1]),
        canvas=args.canvas,
        parts=(args.min_parts, args.max_parts),
    )
    write_corpus(corpus, args.out, trace_silhouette=not args.no_trace)
    log.info("wrote %d samples to %s", len(corpus), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    resolution = _env_int("ICONLAYERS_RESOLUTION", DEFAULT_RESOLUTION)
    seed = _env_int("ICONLAYERS_SEED", 0)

    parser = argparse.ArgumentParser(prog="iconlayers", description="Decompose flattened icons into ordered layers.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress at INFO level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="flattened SVG + mask stack -> layered SVG")
    p.add_argument("--svg", required=True, help="flattened input icon")
    p.add_argument("--manifest", required=True, help="mask-stack manifest (JSON)")
    p.add_argument("--provider", choices=("identity", "convex", "external"), default="external")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU, help="merge threshold on completion IoU")
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA, help="visibility penalty weight")
    p.add_argument("--out", default="-", help="output SVG path ('-' for stdout)")
    p.add_argument("--debug-dir", help="write intermediate masks and the ordering problem here")
    p.add_argument("--masks-dir", help="write rasterised output layers as amodal_{z}.png")
    p.add_argument("--traced-fill", action="store_true", help="order with traced footprints instead of raw masks")
    p.add_argument("--no-surgery", action="store_true", help="use traced completions without curve reuse")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--config", help="JSON file; its 'trace' section sets tracer options")
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("order", help="solve the layer order for a mask stack")
    p.add_argument("--manifest", required=True)
    p.add_argument("--lambda", dest="lam", type=float, default=DEFAULT_LAMBDA)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_order)

    p = sub.add_parser("trace", help="vectorise a binary mask PNG")
    p.add_argument("--mask", required=True)
    p.add_argument("--out", default="-")
    p.add_argument("--config", help="JSON file; its 'trace' section sets tracer defaults")
    p.add_argument("--tolerance", dest="fit_tolerance", type=float, help=f"curve fit tolerance, px ({TraceConfig.fit_tolerance:g})")
    p.add_argument("--simplify", dest="simplify_tolerance", type=float, help=f"polyline tolerance, px ({TraceConfig.simplify_tolerance:g})")
    p.add_argument("--corner-angle", dest="corner_angle_threshold", type=float, help=f"degrees ({TraceConfig.corner_angle_threshold:g})")
    p.add_argument("--min-area", dest="min_contour_area", type=float, help=f"drop smaller contours, px^2 ({TraceConfig.min_contour_area:g})")
    p.add_argument("--size", type=float, help="square viewBox side for the output (default: the mask size)")
    p.set_defaults(func=cmd_trace)

    p = sub.add_parser("eval", help="score predicted masks against references (CSV)")
    p.add_argument("--pred", required=True, help="folder of per-icon prediction folders")
    p.add_argument("--ref", required=True, help="folder of per-icon reference folders")
    p.add_argument("--pred-pattern", default="amodal_*.png")
    p.add_argument("--ref-pattern", default="amodal_*.png")
    p.add_argument("--samples", type=int, default=CD_SAMPLES)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic occlusion corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--canvas", type=int, default=resolution)
    p.add_argument("--min-parts", type=int, default=2)
    p.add_argument("--max-parts", type=int, default=2)
    p.add_argument("--accept", type=float, nargs=2, default=list(DEFAULT_ACCEPT), metavar=("LO", "HI"))
    p.add_argument("--icons", nargs="+", help="restrict the built-in library to these names")
    p.add_argument("--no-trace", action="store_true", help="skip writing flattened.svg")
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = "INFO" if args.verbose else os.environ.get("ICONLAYERS_LOG", "WARNING").upper()
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (IconLayersError, ValueError, OSError) as exc:
        print(f"iconlayers {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
