"""Subcommand handlers. Each takes parsed arguments and returns report text."""

import argparse
import logging
from dataclasses import replace
from pathlib import Path
from typing import Dict

import numpy as np

from ..errors import NumericError
from ..fields.clip import validate_clip
from ..fields.container import load_clip, save_clip
from ..fields.dense import Grid
from ..metrics import evaluate_clips
from ..optimizer import OptimConfig, ablation_sweep, make_teachers, log_lines, run, write_log
from ..priors.gradcheck import THRESHOLDS, finite_difference_check
from ..priors.objective import ClipData, ClipVariables, total_objective
from ..priors.types import CONSTRAINT_NAMES, load_prior_config
from ..synthbench import dump_flow_ppms, generate_scene
from .report import render_ablation, render_gradcheck, render_report, render_scores

logger = logging.getLogger(__name__)


def gen(args: argparse.Namespace) -> str:
    grid = Grid.parse(args.size)
    clip = generate_scene(
        args.preset,
        grid,
        args.frames,
        dt=args.dt,
        seed=args.seed,
        orbit=args.orbit,
        subdivisions=args.subdivisions,
    )
    written = save_clip(clip, args.out)
    lines = [f"wrote {args.out}: {len(clip)} frames, {grid.width}x{grid.height}, {written} bytes"]
    if args.dump_ppm:
        paths = dump_flow_ppms(clip, args.dump_ppm)
        lines.append(f"wrote {len(paths)} flow images to {args.dump_ppm}")
    return "\n".join(lines) + "\n"


def evaluate(args: argparse.Namespace) -> str:
    report = evaluate_clips(load_clip(args.pred), load_clip(args.gt))
    return render_report({"pred": report})


def _weights(args: argparse.Namespace):
    tolerances, weights = load_prior_config(args.config)
    if args.disable:
        weights = weights.without(*args.disable)
    if args.contacts_on_mask:
        tolerances = replace(tolerances, contacts_on_mask=True)
    return tolerances, weights


def score(args: argparse.Namespace) -> str:
    clip = load_clip(args.clip)
    tolerances, weights = _weights(args)
    teachers = make_teachers(clip, args.teacher_depth_noise, args.teacher_bias, args.teacher_pose_noise, args.seed)
    result = total_objective(
        ClipVariables.from_clip(clip),
        ClipData.from_clip(clip, tolerances),
        teachers,
        weights,
        tolerances,
        args.seed,
    )
    extras: Dict[str, object] = {
        "window": list(result.window) if result.window else None,
        "gradient_norm": result.gradient_norm(),
        "intrinsics_gradient": result.grad_intrinsics.tolist(),
    }
    by_name = {name: weights.weight(name) for name in CONSTRAINT_NAMES}
    return render_scores(result.parts, by_name, result.value, extras)


def _optim_config(args: argparse.Namespace) -> OptimConfig:
    tolerances, weights = _weights(args)
    return OptimConfig(
        steps=args.steps,
        weights=weights,
        tolerances=tolerances,
        sigma_flow=args.sigma_flow,
        sigma_depth=args.sigma_depth,
        sigma_pose=args.sigma_pose,
        seed=args.seed,
    )


def optimize(args: argparse.Namespace) -> str:
    config = _optim_config(args)
    _, log = run(load_clip(args.clip), config)
    if args.log:
        write_log(log, args.log)
    return "\n".join(log_lines(log)) + "\n"


def ablate(args: argparse.Namespace) -> str:
    rows = ablation_sweep(load_clip(args.clip), _optim_config(args), components=args.components)
    return render_ablation(rows)


def gradcheck(args: argparse.Namespace) -> str:
    names = CONSTRAINT_NAMES if args.constraint == "all" else (args.constraint,)
    seeds = range(args.seed, args.seed + args.seeds)
    results = {name: {seed: finite_difference_check(name, seed, step=args.step) for seed in seeds} for name in names}
    text = render_gradcheck(results, THRESHOLDS)
    failed = [name for name, errors in results.items() if max(errors.values()) > THRESHOLDS[name]]
    if failed:
        raise NumericError(f"gradient check failed for {', '.join(failed)}\n{text}")
    return text


def info(args: argparse.Namespace) -> str:
    path = Path(args.clip)
    clip = load_clip(path)
    grid = clip.grid
    violations = validate_clip(clip)
    foreground = [frame.mask.count for frame in clip]
    lines = [
        f"file: {path.name} ({path.stat().st_size} bytes)",
        f"format version: {clip.meta.format_version}",
        f"frames: {len(clip)}",
        f"grid: {grid.width}x{grid.height}",
        f"joints: {clip[0].pose.joints.shape[0]}",
        f"seed: {clip.meta.seed}",
        f"dt: {clip.meta.dt_seconds:.6g} s",
        f"raster buffers: {'yes' if all(frame.raster is not None for frame in clip) else 'no'}",
        f"foreground pixels: min {min(foreground)}, mean {np.mean(foreground):.1f}, max {max(foreground)}",
        f"violations: {len(violations)}",
    ]
    lines += [f"  {violation}" for violation in violations]
    return "\n".join(lines) + "\n"
