"""Experiment protocols: expert training, cascades over trials, sequence evaluation
with temporal filtering, and the output-representation comparison."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import encoding
from .config import ProjectConfig
from .decalib import SampleStream, make_initial, sample_decalib
from .encoding import DecalibRange
from .expert import Expert, OracleExpert
from .metrics import CalibError, evaluate, mean_absolute_error
from .model import RegNet
from .pipeline import CalibrationEstimate, TemporalFilter, cascade
from .scene import Frame, generate_scene, make_frame, scene_seed
from .se3 import RigidTransform
from .training import TrainResult, train

log = logging.getLogger(__name__)


def training_stream(cfg: ProjectConfig, ranges: DecalibRange, representation: str | None = None) -> SampleStream:
    t = cfg.training
    return SampleStream(ranges, representation or t.representation, seed=t.seed,
                        scene_seed=cfg.scene.scene_seed, n_scenes=cfg.scene.n_scenes,
                        f=t.f, densify_k=t.densify_k, rig=cfg.scene.rig())


def validation_samples(cfg: ProjectConfig, ranges: DecalibRange, representation: str | None = None,
                       n: int | None = None):
    t = cfg.training
    stream = SampleStream(ranges, representation or t.representation, seed=t.val_seed,
                          scene_seed=cfg.scene.val_scene_seed, n_scenes=cfg.scene.n_val_scenes,
                          f=t.f, densify_k=t.densify_k, rig=cfg.scene.rig())
    return stream.take(t.n_val if n is None else n)


def train_expert(cfg: ProjectConfig, ranges: DecalibRange, representation: str | None = None,
                 steps: int | None = None, checkpoint_path=None, val_samples=None,
                 eval_every: int | None = None) -> tuple[Expert, TrainResult]:
    t = cfg.training
    rep = representation or t.representation
    model = RegNet(cfg.model_config(rep), seed=t.model_seed)
    stream = training_stream(cfg, ranges, rep)
    result = train(
        model, stream, t.steps if steps is None else steps, t.solver(),
        log_every=t.log_every, val_samples=val_samples,
        eval_every=t.eval_every if eval_every is None else eval_every,
        ranges=ranges, f=t.f, init_output_bias=t.init_output_bias, checkpoint_path=checkpoint_path,
    )
    return Expert(model, ranges, t.f), result


def heldout_errors(expert, samples) -> list[CalibError]:
    """Per-sample errors after one refinement with ``expert``."""
    from .decalib import apply_estimate

    out = []
    for s in samples:
        out.append(evaluate(apply_estimate(s.h_init, expert.estimate(s.rgb, s.depth, s.h_init)), s.h_gt))
    return out


def sequence_frames(cfg: ProjectConfig, n: int, seed: int | None = None) -> list[Frame]:
    """A fixed synthetic test sequence of ``n`` frames (one scene per frame)."""
    base = cfg.evaluation.sequence_seed if seed is None else seed
    rig = cfg.scene.rig()
    return [make_frame(generate_scene(scene_seed(base, i), rig), rig) for i in range(n)]


@dataclass
class SequenceRun:
    phi: RigidTransform
    estimates: list = field(default_factory=list)     # CalibrationEstimate per frame
    frame_errors: list = field(default_factory=list)  # CalibError per frame
    filtered: RigidTransform | None = None
    filtered_error: CalibError | None = None

    @property
    def median_frame_error(self) -> float:
        return float(np.median([e.mean_angle for e in self.frame_errors]))


def _registry_for(registry, frame: Frame):
    return [OracleExpert(frame.h_gt) if e == "oracle" else e for e in registry]


def run_sequence(registry, frames: list[Frame], phi: RigidTransform, filter_mode: str = "median",
                 window: int | None = None, passes_per_stage: int = 1, densify_k: int = 5,
                 estimates_override: dict | None = None) -> SequenceRun:
    """Hold ``phi`` fixed over ``frames``, calibrate each frame, then filter over time.

    ``registry`` entries may be the string ``"oracle"`` for a ground-truth stub.
    ``estimates_override`` maps frame indices to transforms that replace the
    per-frame estimate (used to inject outliers).
    """
    run = SequenceRun(phi)
    h_init = make_initial(frames[0].h_gt, phi)
    filt = TemporalFilter(filter_mode, window, reference=h_init)
    for i, fr in enumerate(frames):
        h_init_i = make_initial(fr.h_gt, phi)
        est = cascade(_registry_for(registry, fr), h_init_i, fr.cloud, fr.rgb, fr.intrinsics,
                      passes_per_stage, h_gt=fr.h_gt, densify_k=densify_k)
        if estimates_override and i in estimates_override:
            est = CalibrationEstimate(estimates_override[i], est.stages)
        run.estimates.append(est)
        run.frame_errors.append(evaluate(est.h, fr.h_gt))
        run.filtered = filt.update(est)
    run.filtered_error = evaluate(run.filtered, frames[0].h_gt)
    return run


def evaluate_protocol(registry, frames: list[Frame], runs: int, ranges: DecalibRange, seed: int = 0,
                      filter_mode: str = "median", window: int | None = None,
                      passes_per_stage: int = 1, densify_k: int = 5):
    """Repeat: sample a decalibration, keep it for the whole sequence, filter, score.

    Yields metric records (dicts) suitable for line-delimited JSON.
    """
    filtered = []
    for r in range(runs):
        phi = sample_decalib([seed, r], ranges)
        run = run_sequence(registry, frames, phi, filter_mode, window, passes_per_stage, densify_k)
        for i, (est, err) in enumerate(zip(run.estimates, run.frame_errors)):
            yield {
                "type": "frame", "run": r, "frame": i,
                "stages": [{"range": None if s.ranges is None else [s.ranges.x_max, s.ranges.y_max],
                            "error": s.error.to_dict() if s.error else None} for s in est.stages],
                "estimate": est.h.matrix[:3].tolist(),
                "error": err.to_dict(),
            }
        filtered.append(run.filtered_error)
        yield {
            "type": "run", "run": r,
            "decalibration": phi.matrix[:3].tolist(),
            "filter": {"mode": filter_mode, "window": window},
            "filtered_estimate": run.filtered.matrix[:3].tolist(),
            "filtered_error": run.filtered_error.to_dict(),
            "median_frame_mean_angle": run.median_frame_error,
        }
    if filtered:
        yield {"type": "aggregate", "runs": runs, "mae": mean_absolute_error(filtered).to_dict()}


def write_records(records, fh) -> None:
    for rec in records:
        fh.write(json.dumps(rec, sort_keys=True) + "\n")


@dataclass
class CascadeTrial:
    before: CalibError
    stages: list    # CalibError after each stage


def cascade_trials(registry, frames: list[Frame], n_trials: int, ranges: DecalibRange,
                   seed: int = 0, densify_k: int = 5) -> list[CascadeTrial]:
    """Paired trials: the same frame and decalibration go through every stage."""
    out = []
    for i in range(n_trials):
        fr = frames[i % len(frames)]
        phi = sample_decalib([seed, i], ranges)
        h_init = make_initial(fr.h_gt, phi)
        est = cascade(_registry_for(registry, fr), h_init, fr.cloud, fr.rgb, fr.intrinsics,
                      h_gt=fr.h_gt, densify_k=densify_k)
        out.append(CascadeTrial(evaluate(h_init, fr.h_gt), [s.error for s in est.stages]))
    return out


def compare_representations(cfg: ProjectConfig, ranges: DecalibRange, steps: int, eval_every: int,
                            n_val: int, representations=encoding.REPRESENTATIONS) -> list[dict]:
    """Train one network per output representation under identical seeds and budgets.

    Returns rows ``{"representation", "step", "rot_mae", "yaw", "pitch", "roll", "trans_mae"}``.
    """
    rows = []
    for rep in representations:
        val = validation_samples(cfg, ranges, rep, n_val)
        _, result = train_expert(cfg, ranges, rep, steps=steps, val_samples=val, eval_every=eval_every)
        for step, mae in result.val_trace:
            rows.append({"representation": rep, "step": step, "rot_mae": round(mae.mean_angle, 6),
                         "yaw": round(mae.yaw, 6), "pitch": round(mae.pitch, 6), "roll": round(mae.roll, 6),
                         "trans_mae": round(mae.mean_translation, 6)})
    return rows


def format_comparison(rows: list[dict]) -> str:
    """Markdown table of rotational MAE (degrees) against training step, one column per representation."""
    reps = list(dict.fromkeys(r["representation"] for r in rows))
    steps = sorted({r["step"] for r in rows})
    lookup = {(r["representation"], r["step"]): r["rot_mae"] for r in rows}
    lines = ["| step | " + " | ".join(reps) + " |", "|---:|" + "---:|" * len(reps)]
    for s in steps:
        cells = [f"{lookup[(rep, s)]:.4f}" if (rep, s) in lookup else "" for rep in reps]
        lines.append(f"| {s} | " + " | ".join(cells) + " |")
    final = {rep: lookup.get((rep, steps[-1])) for rep in reps} if steps else {}
    ranked = sorted((v, k) for k, v in final.items() if v is not None)
    if ranked:
        lines.append("")
        lines.append("final ranking (best first): " + ", ".join(f"{k} {v:.4f}" for v, k in ranked))
    return "\n".join(lines) + "\n"
