"""Command-line interface.

Subcommands: gen (synthetic dataset), train, infer, eval, gradcheck, render.
Exit codes: 0 success, 1 input/validation error, 2 numerical failure (NaN,
divergence, failed gradient certification).
"""

from __future__ import annotations

import argparse
import csv
import glob
import json
import sys
from pathlib import Path

import numpy as np

from .errors import NumericalError, ValidationError
from .layout import (Layout, HorizonDepth, layout_from_json,
                     layout_from_prediction, load_json, prediction_from_json,
                     prediction_to_json, raycast_depth, save_json)
from .metrics import MetricReport, evaluate_pair, mean_report
from .model import LayoutModel
from .params import ParamStore
from .sphere import EquirectGrid
from .synth import SceneSpec, generate_dataset, load_dataset, png_to_image
from .training import RunConfig, build_model_for_rooms, infer_room, train

GRADCHECK_TOL = 1e-3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as validation errors (exit 1)."""

    def error(self, message):
        raise ValidationError(message)


def _parse_size(text: str) -> EquirectGrid:
    try:
        h, w = (int(p) for p in text.lower().split("x"))
    except Exception:
        raise ValidationError(f"--size must look like 512x1024, got {text!r}") from None
    return EquirectGrid(h, w)


def _build_parser() -> _Parser:
    p = _Parser(prog="panolayout", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic room dataset")
    g.add_argument("--rooms", type=int, required=True)
    g.add_argument("--corners", type=int, default=4,
                   help="corners per room (4/6/8/10/12)")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=str, default="512x1024", help="HxW")
    g.add_argument("--out", type=str, required=True)

    t = sub.add_parser("train", help="train on a generated dataset")
    t.add_argument("--data", type=str, required=True)
    t.add_argument("--steps", type=int, required=True)
    t.add_argument("--lr", type=float, default=1e-4)
    t.add_argument("--channels", type=int, default=8)
    t.add_argument("--heads", type=int, default=4)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--out", type=str, required=True, help="weights file (.dopw)")
    t.add_argument("--trace", type=str, default=None,
                   help="optional JSONL loss trace")

    i = sub.add_parser("infer", help="predict a layout from a panorama")
    i.add_argument("--weights", type=str, required=True)
    i.add_argument("--image", type=str, required=True)
    i.add_argument("--out", type=str, required=True, help="prediction JSON")

    e = sub.add_parser("eval", help="score predictions against ground truth")
    e.add_argument("--pred", type=str, required=True,
                   help="glob of prediction or layout JSON files")
    e.add_argument("--gt", type=str, required=True,
                   help="glob of ground-truth layout JSON files")
    e.add_argument("--out", type=str, required=True, help="report JSON")
    e.add_argument("--csv", type=str, default=None, help="per-pair CSV table")
    e.add_argument("--figdir", type=str, default=None,
                   help="directory for per-pair figures")
    e.add_argument("--size", type=str, default="512x1024",
                   help="evaluation raster HxW")

    c = sub.add_parser("gradcheck", help="certify hand-written gradients")
    c.add_argument("--op", type=str, default=None,
                   help="substring filter (hidden cases need the full name)")
    c.add_argument("--eps", type=float, default=1e-4)
    c.add_argument("--seed", type=int, default=0)

    r = sub.add_parser("render", help="draw layout boundaries and floor plan")
    r.add_argument("--layout", type=str, required=True, help="layout JSON")
    r.add_argument("--pred", type=str, default=None,
                   help="prediction or layout JSON to overlay")
    r.add_argument("--out", type=str, required=True, help="output PNG")
    r.add_argument("--size", type=str, default="256x512", help="backdrop HxW")
    return p


def _load_pred_file(path: str):
    """A prediction file is either Prediction JSON or Layout JSON."""
    obj = load_json(path)
    if isinstance(obj, dict) and "horizon_depth" in obj:
        return prediction_from_json(obj)
    return layout_from_json(obj)


def _cmd_gen(args) -> int:
    grid = _parse_size(args.size)
    spec = SceneSpec(corners=args.corners)
    paths = generate_dataset(args.out, args.rooms, spec, grid, seed=args.seed)
    for p in paths:
        print(p)
    print(f"generated {len(paths)} rooms at {grid.height}x{grid.width} "
          f"with {args.corners} corners")
    return 0


def _cmd_train(args) -> int:
    rooms = load_dataset(args.data)
    run = RunConfig(steps=args.steps, lr=args.lr, channels=args.channels,
                    heads=args.heads, seed=args.seed)
    model = build_model_for_rooms(rooms, run)
    history = train(model, rooms, run, trace_path=args.trace, log=print)
    model.save(args.out)
    first, last = history[0], history[-1]
    print(f"saved weights to {args.out}")
    print(f"loss {first.total:.4f} -> {last.total:.4f} "
          f"({last.total / first.total:.2%} of initial) over {args.steps} steps")
    return 0


def _cmd_infer(args) -> int:
    model = LayoutModel.load(args.weights)
    image = png_to_image(args.image)
    want = (3, model.config.image_height, model.config.image_width)
    if image.shape != want:
        raise ValidationError(
            f"image {args.image} has shape {image.shape}, weights expect {want}")
    pred = infer_room(model, image)
    save_json(prediction_to_json(pred), args.out)
    print(f"wrote {args.out} (height {pred.room_height_m:.3f} m, "
          f"{pred.width} depth columns)")
    return 0


def _expand(pattern: str) -> list[str]:
    matches = sorted(glob.glob(pattern))
    if not matches:
        raise ValidationError(f"no files match {pattern!r}")
    return matches


def _cmd_eval(args) -> int:
    grid = _parse_size(args.size)
    pred_files = _expand(args.pred)
    gt_files = _expand(args.gt)
    if len(pred_files) != len(gt_files):
        raise ValidationError(
            f"{len(pred_files)} predictions vs {len(gt_files)} ground truths")

    rows = []
    reports: list[MetricReport] = []
    for pf, gf in zip(pred_files, gt_files):
        gt = layout_from_json(load_json(gf))
        pred = _load_pred_file(pf)
        if isinstance(pred, HorizonDepth):
            pred_layout = layout_from_prediction(pred)
            pred_depth = pred.depth
            gt_depth = raycast_depth(gt, pred.width).depth
        else:
            pred_layout = pred
            width = min(grid.width, 256)
            pred_depth = raycast_depth(pred, width).depth
            gt_depth = raycast_depth(gt, width).depth
        rep = evaluate_pair(pred_layout, gt, grid, pred_depth, gt_depth)
        reports.append(rep)
        rows.append({"pred": pf, "gt": gf, **rep.to_json()})
        if args.figdir:
            from .render import render_report
            figdir = Path(args.figdir)
            figdir.mkdir(parents=True, exist_ok=True)
            name = Path(pf).stem + "_vs_" + Path(gf).stem + ".png"
            render_report(gt, pred, out_path=figdir / name)

    mean = mean_report(reports)
    save_json({"pairs": rows, "mean": mean.to_json()}, args.out)
    if args.csv:
        fields = ["pred", "gt", "2DIoU", "3DIoU", "CE", "PE", "RMSE", "delta_1.25"]
        with open(args.csv, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            writer.writerows(rows)
            writer.writerow({"pred": "mean", "gt": "", **mean.to_json()})
    print(f"evaluated {len(reports)} pairs -> {args.out}")
    for key, val in mean.to_json().items():
        print(f"  {key}: {'n/a' if val is None else f'{val:.4f}'}")
    return 0


def _cmd_gradcheck(args) -> int:
    from .checks import run_cases
    reports = run_cases(args.op, eps=args.eps, seed=args.seed)
    if not reports:
        raise ValidationError(f"no gradcheck case matches {args.op!r}")
    failed = []
    for r in reports:
        status = "PASS" if r.ok(GRADCHECK_TOL) else "FAIL"
        print(f"{r.op_name:24s} max_rel_err {r.max_rel_err:10.3e}  "
              f"({r.checked} coords)  {status}")
        if not r.ok(GRADCHECK_TOL):
            failed.append(r.op_name)
    if failed:
        raise NumericalError(f"gradient certification failed: {', '.join(failed)}")
    print(f"all {len(reports)} cases within {GRADCHECK_TOL:g} at eps {args.eps:g}")
    return 0


def _cmd_render(args) -> int:
    from .render import render_report
    grid = _parse_size(args.size)
    gt = layout_from_json(load_json(args.layout))
    pred = _load_pred_file(args.pred) if args.pred else None
    render_report(gt, pred, out_path=args.out, grid=grid)
    print(f"wrote {args.out}")
    return 0


_COMMANDS = {
    "gen": _cmd_gen,
    "train": _cmd_train,
    "infer": _cmd_infer,
    "eval": _cmd_eval,
    "gradcheck": _cmd_gradcheck,
    "render": _cmd_render,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except (ValidationError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except NumericalError as e:
        print(f"numerical error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
