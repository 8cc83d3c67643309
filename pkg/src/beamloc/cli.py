"""Command-line entry point.

Subcommands: ``synth-gen`` writes a reproducible scene dataset,
``localize`` runs the search over a dataset and writes responses,
detections, and optional artifacts, ``eval`` scores prediction files
against ground truth, and ``sweep`` tabulates a metric over a threshold or
alpha grid. Every command is deterministic given its flags and seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .bridge import BridgeHead, BridgeProvider
from .datasets import DatasetConfig, load_dataset, write_dataset
from .errors import BeamlocError
from .evaluation import (
    DetectionRecord,
    Response,
    detection_metric,
    load_detections,
    load_ground_truth,
    load_responses,
    point_metric,
    save_detections,
    save_responses,
)
from .heatmap import extract_detections, point_response, write_pgm
from .localizer import BeamLocalizer
from .providers import MeanActivationHead, SyntheticProvider, load_scene
from .scoring import build_cooccurrence
from .search import flatten_survivors
from .tensors import PixelRect

BRIDGE_ENV = "BEAMLOC_BRIDGE"


def _parse_size(text: str) -> tuple[int, int]:
    w, _, h = text.partition("x")
    return int(w), int(h) if h else int(w)


def _parse_range(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi) if hi else int(lo)


def _parse_thetas(text: str) -> dict:
    """Either one value for every class or comma-separated class=value pairs."""
    if "=" not in text:
        return {"default": float(text)}
    out = {}
    for item in text.split(","):
        key, _, value = item.partition("=")
        key = key.strip()
        out["default" if key == "default" else int(key)] = float(value)
    return out


def _theta_for(thetas: dict, class_id: int) -> float:
    return float(thetas.get(class_id, thetas.get("default", 0.0)))


def _parse_classes(text: str, class_count: int):
    if text == "auto":
        return "auto"
    if text == "all":
        return list(range(class_count))
    return sorted({int(c) for c in text.split(",")})


def cmd_synth_gen(args) -> int:
    cfg = DatasetConfig(
        count=args.count,
        class_count=args.classes,
        channels=args.channels,
        image_w=_parse_size(args.image_size)[0],
        image_h=_parse_size(args.image_size)[1],
        objects_min=_parse_range(args.objects)[0],
        objects_max=_parse_range(args.objects)[1],
        object_min_px=_parse_range(args.object_size)[0],
        object_max_px=_parse_range(args.object_size)[1],
        margin=args.margin,
        sigma=args.sigma,
        seed=args.seed,
    )
    paths, gt_path = write_dataset(cfg, args.out)
    print(f"wrote {len(paths)} scenes and {gt_path}")
    return 0


def _build_engine(args, scene_paths):
    """Provider, head, and per-image (ref, w, h) rows for the chosen backend."""
    if args.provider == "synthetic":
        if not scene_paths:
            raise BeamlocError("synthetic provider needs --dataset with at least one scene")
        first = load_scene(next(iter(scene_paths.values())))
        provider = SyntheticProvider(args.grid_size, first.channels, first.class_count)
        head = MeanActivationHead(first.class_count, first.channels, beta=args.beta)
        rows = []
        for name, path in scene_paths.items():
            scene = load_scene(path)
            rows.append((name, str(path), scene.image_w, scene.image_h, sorted(scene.labels)))
        return provider, head, rows
    command = args.bridge_cmd or os.environ.get(BRIDGE_ENV)
    if not command:
        raise BeamlocError(
            f"bridge provider needs --bridge-cmd or the {BRIDGE_ENV} environment variable"
        )
    provider = BridgeProvider(command)
    head = BridgeHead(provider)
    if not args.images:
        raise BeamlocError("bridge provider needs --images with a {image,w,h} manifest")
    rows = []
    for line in Path(args.images).read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            rows.append((Path(rec["image"]).stem, rec["image"], int(rec["w"]), int(rec["h"]), None))
    return provider, head, rows


def _localize_one(engine: BeamLocalizer, row, classes, thetas, export_dir):
    name, ref, image_w, image_h, _labels = row
    if classes == "auto":
        full = PixelRect(0, 0, image_w, image_h)
        unary = engine.head.score(engine.provider.extract(ref, full))
        wanted = [k for k in range(engine.head.class_count) if unary[k] > 1.0 / unary.size]
    else:
        wanted = classes

    responses, detections, traces = [], [], []
    for class_id in wanted:
        levels = engine.localize(ref, image_w, image_h, class_id)
        survivors = flatten_survivors(levels)
        heat = engine.survivors_to_heat(survivors, image_w, image_h, class_id)
        resp = point_response(heat)
        responses.append(
            Response(name, class_id, resp.x, resp.y, resp.confidence, resp.responded)
        )
        theta = _theta_for(thetas, class_id)
        for det in extract_detections(heat, theta):
            detections.append(DetectionRecord(name, class_id, det.rect, det.score))
        if export_dir is not None:
            write_pgm(heat, export_dir / "heatmaps" / f"{name}_c{class_id}.pgm")
        traces.append(
            {
                "class": class_id,
                "levels": [
                    [
                        {
                            "level": node.level,
                            "grid_box": list(node.grid_box.as_tuple()),
                            "abs_rect": list(node.abs_rect.as_tuple()),
                            "score": node.score,
                        }
                        for node in level
                    ]
                    for level in levels
                ],
            }
        )
    return responses, detections, traces


def cmd_localize(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.provider == "synthetic":
        if not args.dataset:
            raise BeamlocError("--dataset is required with the synthetic provider")
        scene_paths, _ = load_dataset(args.dataset)
    else:
        scene_paths = {}
    provider, head, rows = _build_engine(args, scene_paths)

    engine = BeamLocalizer(
        provider=provider,
        head=head,
        beam_width=args.beam_width,
        beam_depth=args.beam_depth,
        alpha=args.alpha,
        use_rescoring=args.rescoring == "on",
        include_root_heat=not args.no_root_heat,
    )
    if args.rescoring == "on":
        label_sets = [labels for *_ignored, labels in rows if labels]
        if label_sets:
            engine.cooccurrence_ = build_cooccurrence(label_sets, head.class_count)

    classes = _parse_classes(args.classes, head.class_count)
    thetas = _parse_thetas(args.theta)
    if args.export_heatmaps:
        (out_dir / "heatmaps").mkdir(exist_ok=True)
        export_dir = out_dir
    else:
        export_dir = None

    def work(row):
        try:
            return row[0], _localize_one(engine, row, classes, thetas, export_dir), None
        except (BeamlocError, ValueError, OSError) as exc:
            return row[0], None, f"{type(exc).__name__}: {exc}"

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(work, rows))
    else:
        results = [work(row) for row in rows]

    responses, detections, errors = [], [], []
    survivor_traces = {}
    for name, payload, error in results:
        if error is not None:
            errors.append({"image": name, "error": error})
            continue
        image_responses, image_detections, traces = payload
        responses.extend(image_responses)
        detections.extend(image_detections)
        if args.export_survivors:
            survivor_traces[name] = traces

    save_responses(responses, out_dir / "responses.jsonl")
    save_detections(detections, out_dir / "detections.jsonl")
    if args.export_survivors:
        (out_dir / "survivors.json").write_text(
            json.dumps(survivor_traces, sort_keys=True, indent=1) + "\n"
        )
    if errors:
        (out_dir / "errors.json").write_text(json.dumps(errors, sort_keys=True, indent=1) + "\n")
        print(f"{len(errors)} image(s) failed; see errors.json", file=sys.stderr)

    if isinstance(provider, BridgeProvider):
        provider.close()
    return 1 if errors else 0


def _print_table(curves, mean_ap, out_dir: Path, metric: str) -> None:
    lines = ["class,ap"]
    print(f"{metric} average precision")
    for class_id in sorted(curves):
        curve = curves[class_id]
        note = "" if curve.positives else " (no ground truth)"
        print(f"  class {class_id:>3}: AP = {curve.ap:7.3f}{note}")
        lines.append(f"{class_id},{curve.ap!r}")
        curve.to_csv(out_dir / f"pr_class{class_id}.csv")
    print(f"  mAP = {mean_ap:.3f}")
    lines.append(f"mAP,{mean_ap!r}")
    (out_dir / "ap.csv").write_text("\n".join(lines) + "\n")


def cmd_eval(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = load_ground_truth(args.gt)
    if args.metric == "point":
        curves, mean_ap = point_metric(
            load_responses(args.predictions), gt, method=args.ap_method
        )
    else:
        curves, mean_ap = detection_metric(
            load_detections(args.predictions),
            gt,
            iou_threshold=args.iou_thresh,
            method=args.ap_method,
        )
    _print_table(curves, mean_ap, out_dir, args.metric)
    return 0


def _grid(text: str) -> list[float]:
    values = [float(v) for v in text.split(",") if v.strip()]
    if not values:
        raise ValueError("empty parameter grid")
    return values


def cmd_sweep(args) -> int:
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    gt = load_ground_truth(args.gt)
    class_ids = gt.class_ids

    scene_paths, _ = load_dataset(args.dataset)
    provider, head, rows = _build_engine(args, scene_paths)

    def run_engine(alpha: float):
        engine = BeamLocalizer(
            provider=provider,
            head=head,
            beam_width=args.beam_width,
            beam_depth=args.beam_depth,
            alpha=alpha,
            use_rescoring=args.rescoring == "on",
            include_root_heat=not args.no_root_heat,
        )
        if args.rescoring == "on":
            label_sets = [labels for *_ignored, labels in rows if labels]
            if label_sets:
                engine.cooccurrence_ = build_cooccurrence(label_sets, head.class_count)
        classes = _parse_classes(args.classes, head.class_count)
        heats, responses = [], []
        for row in rows:
            name, ref, image_w, image_h, _labels = row
            if classes == "auto":
                full = PixelRect(0, 0, image_w, image_h)
                unary = engine.head.score(engine.provider.extract(ref, full))
                wanted = [k for k in range(head.class_count) if unary[k] > 1.0 / unary.size]
            else:
                wanted = classes
            for class_id in wanted:
                heat = engine.heat_map(ref, image_w, image_h, class_id)
                heats.append((name, class_id, heat))
                resp = point_response(heat)
                responses.append(
                    Response(name, class_id, resp.x, resp.y, resp.confidence, resp.responded)
                )
        return heats, responses

    header = ["parameter", "value", "detections"] + [f"ap_{c}" for c in class_ids] + ["map"]
    csv_rows = [",".join(header)]

    if args.thetas:
        heats, _responses = run_engine(args.alpha)
        for theta in _grid(args.thetas):
            detections = [
                DetectionRecord(name, class_id, det.rect, det.score)
                for name, class_id, heat in heats
                for det in extract_detections(heat, theta)
            ]
            curves, mean_ap = detection_metric(detections, gt, iou_threshold=args.iou_thresh)
            aps = [repr(curves[c].ap) if c in curves else "" for c in class_ids]
            csv_rows.append(
                ",".join(["theta", repr(theta), str(len(detections))] + aps + [repr(mean_ap)])
            )
    else:
        for alpha in _grid(args.alphas):
            heats, responses = run_engine(alpha)
            if args.metric == "point":
                curves, mean_ap = point_metric(responses, gt)
                count = len(responses)
            else:
                thetas = _parse_thetas(args.theta)
                detections = [
                    DetectionRecord(name, class_id, det.rect, det.score)
                    for name, class_id, heat in heats
                    for det in extract_detections(heat, _theta_for(thetas, class_id))
                ]
                curves, mean_ap = detection_metric(detections, gt, iou_threshold=args.iou_thresh)
                count = len(detections)
            aps = [repr(curves[c].ap) if c in curves else "" for c in class_ids]
            csv_rows.append(
                ",".join(["alpha", repr(alpha), str(count)] + aps + [repr(mean_ap)])
            )

    sweep_path = out_dir / "sweep.csv"
    sweep_path.write_text("\n".join(csv_rows) + "\n")
    print(f"wrote {sweep_path}")
    if isinstance(provider, BridgeProvider):
        provider.close()
    return 0


def _add_engine_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--provider", choices=["synthetic", "bridge"], default="synthetic")
    parser.add_argument("--grid-size", type=int, default=6, help="lattice cells per side")
    parser.add_argument("--beam-width", type=int, default=8)
    parser.add_argument("--beam-depth", type=int, default=10)
    parser.add_argument("--alpha", type=float, default=0.5)
    parser.add_argument("--rescoring", choices=["on", "off"], default="on")
    parser.add_argument("--beta", type=float, default=10.0,
                        help="sharpness of the synthetic scoring head")
    parser.add_argument("--theta", default="0.0",
                        help="detection threshold: value or class=value[,...]")
    parser.add_argument("--classes", default="auto",
                        help="'auto', 'all', or comma-separated class ids")
    parser.add_argument("--no-root-heat", action="store_true",
                        help="exclude the full-image root from heat pooling")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--bridge-cmd", default=None,
                        help=f"bridge worker command (default: ${BRIDGE_ENV})")
    parser.add_argument("--images", default=None,
                        help="JSONL manifest {image,w,h} for the bridge provider")
    parser.add_argument("--iou-thresh", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="beamloc",
                                     description="Localization by classifier-guided beam search")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("synth-gen", help="generate a synthetic scene dataset")
    gen.add_argument("--count", type=int, default=50)
    gen.add_argument("--classes", type=int, default=4)
    gen.add_argument("--channels", type=int, default=32)
    gen.add_argument("--image-size", default="60x60")
    gen.add_argument("--objects", default="1:1", help="objects per image, min:max")
    gen.add_argument("--object-size", default="12:30", help="object side in pixels, min:max")
    gen.add_argument("--margin", type=int, default=0,
                     help="keep objects this many pixels away from image borders")
    gen.add_argument("--sigma", type=float, default=0.0)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", required=True)
    gen.set_defaults(func=cmd_synth_gen)

    loc = sub.add_parser("localize", help="run localization over a dataset")
    loc.add_argument("--dataset", help="dataset directory from synth-gen")
    _add_engine_flags(loc)
    loc.add_argument("--export-heatmaps", action="store_true")
    loc.add_argument("--export-survivors", action="store_true")
    loc.add_argument("--out", required=True)
    loc.set_defaults(func=cmd_localize)

    ev = sub.add_parser("eval", help="score predictions against ground truth")
    ev.add_argument("--metric", choices=["point", "detection"], required=True)
    ev.add_argument("--predictions", required=True)
    ev.add_argument("--gt", required=True)
    ev.add_argument("--iou-thresh", type=float, default=0.5)
    ev.add_argument("--ap-method", choices=["all_points", "eleven_points"],
                    default="all_points")
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_eval)

    sw = sub.add_parser("sweep", help="tabulate a metric over a parameter grid")
    sw.add_argument("--dataset", required=True)
    sw.add_argument("--gt", required=True)
    group = sw.add_mutually_exclusive_group(required=True)
    group.add_argument("--thetas", help="comma-separated threshold grid")
    group.add_argument("--alphas", help="comma-separated alpha grid")
    sw.add_argument("--metric", choices=["point", "detection"], default="point",
                    help="metric for alpha sweeps (theta sweeps always use detection)")
    _add_engine_flags(sw)
    sw.add_argument("--out", required=True)
    sw.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (BeamlocError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
