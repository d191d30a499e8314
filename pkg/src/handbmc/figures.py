"""Matplotlib figure rendering for CLI reports.

All functions write PNG files and use the Agg backend; matplotlib is
imported lazily so library users without a display (or without figures
requested) never touch it.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .limits import LimitSet
from .skeleton import BONE_CHILD_JOINT, BONE_PARENT_JOINT, FINGER_NAMES


def _plt():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


_ROW_NAMES = ("PIP", "DIP", "TIP")


def save_hull_figure(limits: LimitSet, path, angle_points: np.ndarray | None = None):
    """5x3 grid of fitted angle hulls, one panel per finger bone.

    `angle_points` is an optional (N, 15, 2) array of extracted
    (flexion, abduction) pairs scattered under each hull, with the
    independent min/max box drawn for comparison.
    """
    plt = _plt()
    fig, axes = plt.subplots(5, 3, figsize=(10, 14), sharex=False, sharey=False)
    for b in range(15):
        axc = axes[b // 3][b % 3]
        verts = limits.angle_hulls[b].vertices
        closed = np.vstack([verts, verts[:1]])
        axc.plot(closed[:, 0], closed[:, 1], "g-", lw=1.5, label="hull")
        if angle_points is not None:
            pts = angle_points[:, b, :]
            axc.plot(pts[:, 0], pts[:, 1], "r.", ms=2, alpha=0.5)
            lo = pts.min(axis=0)
            hi = pts.max(axis=0)
            box = np.array([[lo[0], lo[1]], [lo[0], hi[1]], [hi[0], hi[1]],
                            [hi[0], lo[1]], [lo[0], lo[1]]])
            axc.plot(box[:, 0], box[:, 1], "r--", lw=0.8, label="min/max box")
        finger, row = divmod(b, 3)
        axc.set_title(f"{FINGER_NAMES[finger]} {_ROW_NAMES[row]}", fontsize=9)
        axc.tick_params(labelsize=7)
    for axc in axes[-1]:
        axc.set_xlabel("flexion (rad)", fontsize=8)
    for row in axes:
        row[0].set_ylabel("abduction (rad)", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def _draw_skeleton(axc, joints: np.ndarray, color: str, label: str | None = None):
    for i in range(len(BONE_PARENT_JOINT)):
        seg = joints[[BONE_PARENT_JOINT[i], BONE_CHILD_JOINT[i]]]
        axc.plot(seg[:, 0], seg[:, 1], seg[:, 2], color=color, lw=1.2,
                 label=label if i == 0 else None)
    axc.scatter(*joints.T, color=color, s=6)


def save_pose_figure(poses, path, labels=None, title: str | None = None):
    """3D skeleton plot of one or more poses (e.g. input vs projected)."""
    plt = _plt()
    joints_list = [np.asarray(getattr(p, "joints", p)) for p in poses]
    colors = ["tab:red", "tab:green", "tab:blue", "tab:orange"]
    fig = plt.figure(figsize=(6, 6))
    axc = fig.add_subplot(projection="3d")
    for i, joints in enumerate(joints_list):
        label = labels[i] if labels else None
        _draw_skeleton(axc, joints, colors[i % len(colors)], label)
    if labels:
        axc.legend(fontsize=8)
    if title:
        axc.set_title(title, fontsize=10)
    axc.set_box_aspect((1, 1, 1))
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_trace_figure(traces, path):
    """Objective traces of projection runs on a log scale."""
    plt = _plt()
    fig, axc = plt.subplots(figsize=(6, 4))
    for trace in traces:
        trace = np.asarray(trace)
        axc.semilogy(np.maximum(trace, 1e-18), lw=0.8, alpha=0.7)
    axc.set_xlabel("accepted iteration")
    axc.set_ylabel("objective")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def save_loss_summary_figure(reports, path):
    """Histogram of totals plus mean per-term breakdown of a batch."""
    plt = _plt()
    totals = np.array([r.total for r in reports])
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 4))
    finite = totals[np.isfinite(totals)]
    ax1.hist(finite, bins=min(30, max(5, len(finite) // 3 + 1)), color="tab:blue")
    ax1.set_xlabel("weighted total loss")
    ax1.set_ylabel("samples")
    names = ("bone length", "root bones", "angles")
    means = [float(np.mean([r.bone_length for r in reports])),
             float(np.mean([r.root_bone for r in reports])),
             float(np.mean([r.angle for r in reports]))]
    ax2.bar(names, means, color=["tab:blue", "tab:orange", "tab:green"])
    ax2.set_ylabel("mean unweighted term")
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def ensure_dir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p
