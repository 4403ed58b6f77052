"""Command-line entry point: ``regnet-calib <subcommand> ...``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

from . import experiments, storage
from .config import ProjectConfig
from .decalib import make_initial, sample_decalib
from .encoding import DecalibRange
from .expert import Expert
from .kitti import write_velodyne
from .metrics import evaluate
from .nn import gradcheck
from .overlay import emit_overlay
from .pipeline import AVERAGE, MEDIAN, cascade
from .projection import project_points
from .scene import generate_scene, make_frame, scene_seed

log = logging.getLogger("regnet_calib")


class UsageError(Exception):
    pass


def _range(text: str) -> DecalibRange:
    try:
        return DecalibRange.parse(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _load_experts(spec: str):
    """Comma-separated checkpoint paths; the token ``oracle`` stands for a ground-truth stub."""
    out = []
    for item in (s.strip() for s in spec.split(",")):
        if not item:
            continue
        if item == "oracle":
            out.append("oracle")
            continue
        if not Path(item).is_file():
            raise UsageError(f"expert checkpoint not found: {item}")
        out.append(Expert.load(item))
    if not out:
        raise UsageError("no experts given")
    return out


def _resolve(registry, frame):
    return experiments._registry_for(registry, frame)


def cmd_synth_gen(args) -> int:
    cfg = ProjectConfig.load(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rig = cfg.scene.rig()
    n = cfg.evaluation.frames if args.frames is None else args.frames
    base = cfg.evaluation.sequence_seed if args.seed is None else args.seed
    cfg.save(out / "config.json")
    from PIL import Image

    from .overlay import to_uint8_image

    for i in range(n):
        frame = make_frame(generate_scene(scene_seed(base, i), rig), rig)
        stem = out / storage.frame_name(i)
        storage.save_frame(stem.with_suffix(".npz"), frame)
        Image.fromarray(to_uint8_image(frame.rgb)).save(stem.with_suffix(".png"), format="PNG")
        write_velodyne(stem.with_suffix(".bin"), frame.cloud)
    print(f"wrote {n} frames to {out}")
    return 0


def cmd_train(args) -> int:
    cfg = ProjectConfig.load(args.config)
    if args.steps is not None:
        cfg.training.steps = args.steps
    rep = args.representation or cfg.training.representation
    n_val = cfg.training.n_val if args.n_val is None else args.n_val
    val = experiments.validation_samples(cfg, args.range, rep, n_val) if n_val else None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    _, result = experiments.train_expert(cfg, args.range, rep, checkpoint_path=out, val_samples=val)
    trace = Path(args.trace) if args.trace else out.with_name(out.name + ".trace.jsonl")
    with trace.open("w") as fh:
        for step, loss in result.loss_trace:
            fh.write(json.dumps({"type": "loss", "step": step, "loss": loss}) + "\n")
        for step, mae in result.val_trace:
            fh.write(json.dumps({"type": "validation", "step": step, "mae": mae.to_dict()}) + "\n")
    print(f"trained {result.steps} steps in {result.seconds:.1f}s; checkpoint {out}; trace {trace}")
    if result.val_trace:
        print(f"final validation rotation MAE {result.val_trace[-1][1].mean_angle:.4f} deg")
    return 0


def cmd_calibrate(args) -> int:
    frame = storage.load_frame(args.frame)
    registry = _resolve(_load_experts(args.experts), frame)
    h_init = storage.parse_transform(args.h_init)
    h_gt = storage.parse_transform(args.h_gt) if args.h_gt else frame.h_gt
    est = cascade(registry, h_init, frame.cloud, frame.rgb, frame.intrinsics, args.passes, h_gt=h_gt)
    print("H_hat:")
    print(storage.format_transform(est.h))
    print(f"initial error: {_fmt_err(evaluate(h_init, h_gt))}")
    for i, st in enumerate(est.stages):
        finite = st.ranges is not None and math.isfinite(st.ranges.x_max)
        rng = f"{st.ranges.x_max:g} m / {st.ranges.y_max:g} deg" if finite else "oracle"
        print(f"stage {i + 1} ({rng}): {_fmt_err(st.error)}")
    if args.overlay:
        d = Path(args.overlay)
        d.mkdir(parents=True, exist_ok=True)
        poses = [("initial", h_init)] + [(f"stage{i + 1}", s.h) for i, s in enumerate(est.stages)]
        poses.append(("ground_truth", h_gt))
        for name, H in poses:
            emit_overlay(frame.rgb, project_points(frame.cloud, H, frame.intrinsics), d / f"{name}.png")
        print(f"overlays written to {d}")
    return 0


def _fmt_err(e) -> str:
    return (f"yaw {e.yaw:.4f} pitch {e.pitch:.4f} roll {e.roll:.4f} deg (mean {e.mean_angle:.4f}); "
            f"x {e.x:.4f} y {e.y:.4f} z {e.z:.4f} m (mean {e.mean_translation:.4f})")


def cmd_evaluate(args) -> int:
    frames = storage.load_sequence(args.sequence)
    registry = _load_experts(args.experts)
    mode = AVERAGE if args.filter == "avg" else args.filter
    records = experiments.evaluate_protocol(registry, frames, args.runs, args.range, seed=args.seed,
                                            filter_mode=mode, window=args.window,
                                            passes_per_stage=args.passes)
    fh = open(args.out, "w") if args.out else sys.stdout
    try:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            if rec["type"] == "run":
                e = rec["filtered_error"]
                print(f"run {rec['run']}: filtered mean angle {e['mean_angle']:.4f} deg, "
                      f"mean translation {e['mean_translation']:.4f} m", file=sys.stderr)
            elif rec["type"] == "aggregate":
                m = rec["mae"]
                print(f"aggregate over {rec['runs']} runs: mean angle {m['mean_angle']:.4f} deg, "
                      f"mean translation {m['mean_translation']:.4f} m", file=sys.stderr)
    finally:
        if fh is not sys.stdout:
            fh.close()
    return 0


def cmd_decalibrate(args) -> int:
    h_gt = storage.parse_transform(args.h_gt)
    print(storage.format_transform(make_initial(h_gt, sample_decalib(args.seed, args.range))))
    return 0


def cmd_gradcheck(args) -> int:
    ok = gradcheck.run_all(args.seed, verbose=True, include_model=not args.layers_only)
    print("gradcheck: " + ("PASS" if ok else "FAIL"))
    return 0 if ok else 1


def cmd_compare(args) -> int:
    cfg = ProjectConfig.load(args.config)
    rows = experiments.compare_representations(cfg, args.range, args.steps, args.eval_every, args.n_val)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    table = experiments.format_comparison(rows)
    (out / "comparison.md").write_text(table)
    with (out / "comparison.jsonl").open("w") as fh:
        for r in rows:
            fh.write(json.dumps(r, sort_keys=True) + "\n")
    with (out / "comparison.csv").open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["representation"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(table, end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="regnet-calib", description="LiDAR-camera extrinsic calibration toolkit")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-gen", help="write a synthetic frame sequence")
    s.add_argument("--config")
    s.add_argument("--out", required=True)
    s.add_argument("--frames", type=int)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth_gen)

    s = sub.add_parser("train", help="train one expert")
    s.add_argument("--config")
    s.add_argument("--range", type=_range, required=True, help="X,Y: meters, degrees")
    s.add_argument("--out", required=True)
    s.add_argument("--steps", type=int)
    s.add_argument("--representation", choices=["euler", "quaternion", "dual_quaternion"])
    s.add_argument("--n-val", type=int)
    s.add_argument("--trace")
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("calibrate", help="run the expert cascade on one frame")
    s.add_argument("--experts", required=True, help="comma-separated checkpoints, coarse to fine")
    s.add_argument("--frame", required=True)
    s.add_argument("--h-init", required=True)
    s.add_argument("--h-gt", help="ground truth for residuals (default: stored in the frame)")
    s.add_argument("--passes", type=int, default=1)
    s.add_argument("--overlay")
    s.set_defaults(func=cmd_calibrate)

    s = sub.add_parser("evaluate", help="fixed decalibration over a sequence, filtered, repeated")
    s.add_argument("--experts", required=True)
    s.add_argument("--sequence", required=True)
    s.add_argument("--runs", type=int, default=10)
    s.add_argument("--range", type=_range, required=True)
    s.add_argument("--filter", choices=[MEDIAN, "avg"], default=MEDIAN)
    s.add_argument("--window", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--passes", type=int, default=1)
    s.add_argument("--out", help="metric records file (default: stdout)")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("decalibrate", help="print a sampled initial calibration")
    s.add_argument("--h-gt", required=True)
    s.add_argument("--range", type=_range, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.set_defaults(func=cmd_decalibrate)

    s = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--layers-only", action="store_true")
    s.set_defaults(func=cmd_gradcheck)

    s = sub.add_parser("compare-representations", help="train all output representations and tabulate MAE")
    s.add_argument("--config")
    s.add_argument("--range", type=_range, default=DecalibRange(0.3, 5.0))
    s.add_argument("--steps", type=int, default=2000)
    s.add_argument("--eval-every", type=int, default=500)
    s.add_argument("--n-val", type=int, default=50)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("runs", "frames", "steps", "passes", "window", "eval_every", "n_val"):
        v = getattr(args, name, None)
        if v is not None and v < (0 if name == "n_val" else 1):
            parser.error(f"--{name.replace('_', '-')} must be positive")
    try:
        return args.func(args)
    except (UsageError, ValueError, OSError, KeyError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"regnet-calib {args.command}: error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
