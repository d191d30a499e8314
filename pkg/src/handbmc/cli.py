"""Batch command-line interface.

Subcommands: fit-limits, evaluate, project, solve-depth, grad-check.
Batch outputs are JSON lines (one object per input sample, input
order); limit sets are single JSON files.  Every flag can also be
supplied through a JSON config file (--config); explicit flags win.
Passing --figures DIR renders matplotlib summaries next to the
delimited output.

Exit codes: 0 success/feasible, 1 violation found (or failed
grad-check), 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .camera import load_25d, load_intrinsics, solve_root_depth
from .errors import (DataError, DegeneracyError, NumericalError, SchemaError,
                     ToolkitError)
from .figures import (ensure_dir, save_hull_figure, save_loss_summary_figure,
                      save_pose_figure, save_trace_figure)
from .limits import fit_limits, load_limits, save_limits
from .losses import LossWeights, evaluate_batch, pose_quantities
from .projection import ProjectionConfig, project_batch
from .skeleton import load_poses, save_poses
from .synthetic import gradient_selfcheck

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_INPUT = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="handbmc",
        description="Biomechanical feasibility checks for 21-joint 3D hand poses")
    parser.add_argument("--config", help="JSON file with default values for any flag")
    sub = parser.add_subparsers(dest="command", required=True)

    fit = sub.add_parser("fit-limits", help="fit a limit file from 3D poses")
    fit.add_argument("poses", help="pose file (JSON array of 21x3 samples)")
    fit.add_argument("--out", help="output limit file path")
    fit.add_argument("--quantile", type=float, default=None,
                     help="interval quantile in [0, 0.5); 0 = exact min/max")
    fit.add_argument("--mode", choices=("strict", "lenient"), default=None,
                     help="degenerate samples: raise (strict) or skip (lenient)")
    fit.add_argument("--length-unit", default=None, help="unit recorded in metadata")
    fit.add_argument("--figures", default=None, help="directory for figure output")

    ev = sub.add_parser("evaluate", help="evaluate the constraint loss per sample")
    ev.add_argument("poses", help="pose file")
    ev.add_argument("--limits", help="limit file", default=None)
    ev.add_argument("--weights", default=None,
                    help="bone-length,root-bone,angle weights (e.g. 0.1,0.1,0.01)")
    ev.add_argument("--mode", choices=("strict", "lenient"), default=None)
    ev.add_argument("--threshold", type=float, default=None,
                    help="feasibility threshold on the weighted total")
    ev.add_argument("--out", default=None, help="JSON-lines output (default stdout)")
    ev.add_argument("--figures", default=None)

    pr = sub.add_parser("project", help="project poses onto the feasible set")
    pr.add_argument("poses", help="pose file")
    pr.add_argument("--limits", default=None)
    pr.add_argument("--weights", default=None)
    pr.add_argument("--out", default=None, help="corrected pose file")
    pr.add_argument("--report", default=None, help="JSON-lines report (default stdout)")
    pr.add_argument("--max-iterations", type=int, default=None)
    pr.add_argument("--tolerance", type=float, default=None)
    pr.add_argument("--anchor-weight", type=float, default=None,
                    help="weight of ||J - J_input||^2 keeping the result near the input")
    pr.add_argument("--figures", default=None)

    sd = sub.add_parser("solve-depth", help="recover absolute root depth from 2.5D data")
    sd.add_argument("data", help="2.5D sample file")
    sd.add_argument("--camera", default=None, help="JSON file with K (9 numbers)")
    sd.add_argument("--out", default=None, help="JSON-lines output (default stdout)")

    gc = sub.add_parser("grad-check", help="self-check gradients against finite differences")
    gc.add_argument("--samples", type=int, default=None)
    gc.add_argument("--seed", type=int, default=None)
    gc.add_argument("--step", type=float, default=None)
    gc.add_argument("--threshold", type=float, default=None,
                    help="max allowed relative error (default 1e-4)")
    return parser


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        doc = json.loads(Path(path).read_text())
    except OSError as exc:
        raise SchemaError(str(path), f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"config is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("(root)", "config must be a JSON object")
    return doc


def _opt(args, config: dict, name: str, default):
    """Flag value if given, else config entry, else default."""
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    if name in config:
        return config[name]
    return default


def _weights(args, config) -> LossWeights:
    spec = _opt(args, config, "weights", None)
    if spec is None:
        return LossWeights()
    if isinstance(spec, str):
        parts = [float(x) for x in spec.split(",")]
    else:
        parts = [float(x) for x in spec]
    if len(parts) != 3:
        raise SchemaError("weights", "expected three numbers: bone-length,root-bone,angle")
    return LossWeights(bone_length=parts[0], root_bone=parts[1], angle=parts[2])


def _require_limits(args, config):
    path = _opt(args, config, "limits", None)
    if path is None:
        raise SchemaError("limits", "a limit file is required (--limits or config)")
    return load_limits(path)


def _emit_lines(lines, out_path):
    text = "".join(json.dumps(line) + "\n" for line in lines)
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)


def _cmd_fit(args, config) -> int:
    poses = load_poses(args.poses)
    quantile = float(_opt(args, config, "quantile", 0.0))
    mode = _opt(args, config, "mode", "strict")
    unit = _opt(args, config, "length-unit", "m")
    out = _opt(args, config, "out", None)
    if out is None:
        raise SchemaError("out", "an output path is required (--out or config)")
    limits = fit_limits(poses, quantile=quantile, mode=mode,
                        source=str(args.poses), length_unit=unit)
    save_limits(limits, out)
    lengths_lo, lengths_hi = limits.bounds("bone_length")
    print(f"fitted limits from {limits.metadata.sample_count} poses "
          f"(quantile {quantile}) -> {out}")
    print(f"bone lengths: [{lengths_lo.min():.6g}, {lengths_hi.max():.6g}] {unit}")
    c_lo, c_hi = limits.bounds("curvature")
    s_lo, s_hi = limits.bounds("angular_distance")
    print(f"curvature: [{c_lo.min():.6g}, {c_hi.max():.6g}] 1/{unit}; "
          f"spread: [{s_lo.min():.6g}, {s_hi.max():.6g}] rad")
    figures = _opt(args, config, "figures", None)
    if figures:
        outdir = ensure_dir(figures)
        q = pose_quantities(np.stack([p.joints for p in poses]))
        pts = np.stack([q.flexion, q.abduction], axis=-1)
        save_hull_figure(limits, outdir / "angle_hulls.png", angle_points=pts)
        print(f"figures -> {outdir}")
    return EXIT_OK


def _cmd_evaluate(args, config) -> int:
    poses = load_poses(args.poses)
    limits = _require_limits(args, config)
    weights = _weights(args, config)
    mode = _opt(args, config, "mode", "strict")
    threshold = float(_opt(args, config, "threshold", 1e-9))
    reports = evaluate_batch(poses, limits, weights, mode=mode)
    lines = []
    for i, rep in enumerate(reports):
        doc = {"index": i}
        doc.update(rep.to_json_dict())
        doc["feasible"] = bool(rep.total < threshold)
        lines.append(doc)
    _emit_lines(lines, _opt(args, config, "out", None))
    figures = _opt(args, config, "figures", None)
    if figures:
        outdir = ensure_dir(figures)
        save_loss_summary_figure(reports, outdir / "loss_summary.png")
        q = pose_quantities(np.stack([p.joints for p in poses]))
        pts = np.stack([q.flexion, q.abduction], axis=-1)
        save_hull_figure(limits, outdir / "angle_hulls.png", angle_points=pts)
    all_ok = all(rep.total < threshold for rep in reports)
    return EXIT_OK if all_ok else EXIT_VIOLATION


def _cmd_project(args, config) -> int:
    poses = load_poses(args.poses)
    limits = _require_limits(args, config)
    weights = _weights(args, config)
    cfg = ProjectionConfig(
        max_iterations=int(_opt(args, config, "max-iterations", 2000)),
        tolerance=float(_opt(args, config, "tolerance", 1e-9)),
        anchor_weight=float(_opt(args, config, "anchor-weight", 0.0)))
    results = project_batch(poses, limits, weights, cfg)
    out = _opt(args, config, "out", None)
    if out:
        save_poses([r.pose for r in results], out)
    lines = []
    for i, (pose, r) in enumerate(zip(poses, results)):
        lines.append({
            "index": i,
            "iterations": r.iterations,
            "converged": r.converged,
            "stalled": r.stalled,
            "initial_loss": float(r.loss_trace[0]),
            "final_loss": r.report.total,
            "bone_length": r.report.bone_length,
            "root_bone": r.report.root_bone,
            "angle": r.report.angle,
            "input_joints": pose.joints.tolist(),
            "output_joints": r.pose.joints.tolist(),
        })
    _emit_lines(lines, _opt(args, config, "report", None))
    figures = _opt(args, config, "figures", None)
    if figures:
        outdir = ensure_dir(figures)
        save_trace_figure([r.trace for r in results], outdir / "projection_traces.png")
        save_pose_figure([poses[0], results[0].pose], outdir / "projection_sample0.png",
                         labels=["input", "projected"])
    return EXIT_OK


def _cmd_solve_depth(args, config) -> int:
    samples = load_25d(args.data)
    camera_path = _opt(args, config, "camera", None)
    if camera_path is None:
        raise SchemaError("camera", "a camera file is required (--camera or config)")
    intrinsics = load_intrinsics(camera_path)
    lines = []
    for i, (data, reference) in enumerate(samples):
        depth = solve_root_depth(data, intrinsics, reference)
        lines.append({"index": i, "root_depth": depth,
                      "reference": list(reference)})
    _emit_lines(lines, _opt(args, config, "out", None))
    return EXIT_OK


def _cmd_grad_check(args, config) -> int:
    result = gradient_selfcheck(
        samples=int(_opt(args, config, "samples", 50)),
        seed=int(_opt(args, config, "seed", 0)),
        step=float(_opt(args, config, "step", 1e-5)))
    threshold = float(_opt(args, config, "threshold", 1e-4))
    print(json.dumps({**result, "threshold": threshold}))
    return EXIT_OK if result["max_relative_error"] < threshold else EXIT_VIOLATION


_COMMANDS = {
    "fit-limits": _cmd_fit,
    "evaluate": _cmd_evaluate,
    "project": _cmd_project,
    "solve-depth": _cmd_solve_depth,
    "grad-check": _cmd_grad_check,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return _COMMANDS[args.command](args, config)
    except (SchemaError, DataError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (DegeneracyError, NumericalError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ToolkitError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
