"""Canonical 21-joint right-hand skeleton and shared geometric primitives.

Joint layout (0-based indices, fixed across the toolkit):

    0           root (wrist/CMC)
    4f+1..4f+4  finger f's MCP, PIP, DIP, TIP in chain order,
                fingers f = 0..4 ordered thumb, index, middle, ring, pinky

Bone layout (20 bones, child joint minus parent joint):

    0..4        root bones, root -> MCP of finger f
    5+3f..7+3f  finger f's PIP, DIP, TIP bones (finger-major order)

All poses are right hands; mirror left hands (negate x) on ingestion.
Coordinates are meters or any consistent length unit — fitted limits
must use the same unit as inference inputs (palm curvature scales as
1/length).

The vector helpers (`dot`, `cross`, `norm`, ...) operate on the last
axis and accept either plain ndarrays or autodiff :class:`~handbmc.autodiff.Var`
values, so every loss in the toolkit is built from this one set of
primitives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .errors import DegenerateBasis, DegenerateVector, SchemaError

N_JOINTS = 21
N_BONES = 20
N_FINGERS = 5
FINGER_NAMES = ("thumb", "index", "middle", "ring", "pinky")
HANDEDNESS = "right"

#: Degeneracy threshold for all normalizations, in pose length units.
EPS = 1e-8

ROOT_JOINT = 0
#: Sentinel parent for the five root bones.
ROOT_BONE = -1

ROOT_BONES = tuple(range(5))


def mcp_joint(finger: int) -> int:
    return 4 * finger + 1


def finger_joints(finger: int) -> tuple[int, int, int, int]:
    """(MCP, PIP, DIP, TIP) joint indices of a finger."""
    base = 4 * finger
    return (base + 1, base + 2, base + 3, base + 4)


def finger_bones(finger: int) -> tuple[int, int, int]:
    """(PIP, DIP, TIP) bone indices of a finger."""
    base = 5 + 3 * finger
    return (base, base + 1, base + 2)


def _build_bone_tables():
    parent_joint = np.empty(N_BONES, dtype=np.intp)
    child_joint = np.empty(N_BONES, dtype=np.intp)
    parent_bone = np.empty(N_BONES, dtype=np.intp)
    for f in range(N_FINGERS):
        mcp, pip, dip, tip = finger_joints(f)
        parent_joint[f], child_joint[f], parent_bone[f] = ROOT_JOINT, mcp, ROOT_BONE
        b_pip, b_dip, b_tip = finger_bones(f)
        parent_joint[b_pip], child_joint[b_pip], parent_bone[b_pip] = mcp, pip, f
        parent_joint[b_dip], child_joint[b_dip], parent_bone[b_dip] = pip, dip, b_pip
        parent_joint[b_tip], child_joint[b_tip], parent_bone[b_tip] = dip, tip, b_dip
    return parent_joint, child_joint, parent_bone


#: BONE_PARENT_JOINT[i], BONE_CHILD_JOINT[i]: joint pair of bone i.
#: BONE_PARENT_BONE[i]: parent bone index, ROOT_BONE for root bones.
BONE_PARENT_JOINT, BONE_CHILD_JOINT, BONE_PARENT_BONE = _build_bone_tables()

#: PIP-row bone indices per finger (parents are the root bones).
PIP_BONES = np.array([finger_bones(f)[0] for f in range(N_FINGERS)], dtype=np.intp)
DIP_BONES = PIP_BONES + 1
TIP_BONES = PIP_BONES + 2


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HandPose:
    """21 joints x 3 coordinates of a right hand (meters or consistent unit)."""

    joints: np.ndarray

    def __post_init__(self):
        joints = np.asarray(self.joints, dtype=np.float64)
        if joints.shape != (N_JOINTS, 3):
            raise ValueError(f"pose must be {N_JOINTS}x3, got {joints.shape}")
        if not np.all(np.isfinite(joints)):
            raise ValueError("pose contains non-finite coordinates")
        joints = joints.copy()
        joints.flags.writeable = False
        object.__setattr__(self, "joints", joints)

    @property
    def root(self) -> np.ndarray:
        return self.joints[ROOT_JOINT]


@dataclass(frozen=True)
class BoneSet:
    """20 bone vectors (child joint minus parent joint) in the fixed layout."""

    bones: np.ndarray

    def __post_init__(self):
        bones = np.asarray(self.bones, dtype=np.float64)
        if bones.shape != (N_BONES, 3):
            raise ValueError(f"bones must be {N_BONES}x3, got {bones.shape}")
        bones = bones.copy()
        bones.flags.writeable = False
        object.__setattr__(self, "bones", bones)

    @property
    def lengths(self) -> np.ndarray:
        return np.linalg.norm(self.bones, axis=-1)

    @property
    def root_bones(self) -> np.ndarray:
        return self.bones[:N_FINGERS]

    def parent_bone(self, i: int) -> int:
        return int(BONE_PARENT_BONE[i])


@dataclass(frozen=True)
class Interval:
    """[lower, upper] range used by the interval penalty."""

    lower: float
    upper: float

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not (np.isfinite(self.lower) and np.isfinite(self.upper)):
            raise ValueError("interval bounds must be finite")
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} > upper {self.upper}")


# ---------------------------------------------------------------------------
# Generic vector helpers (last-axis semantics, Var or ndarray)
# ---------------------------------------------------------------------------

def dot(a, b):
    return ad.vsum(a * b, axis=-1)


def cross(a, b):
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return ad.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def norm_sq(v):
    return ad.vsum(v * v, axis=-1)


def norm(v):
    return ad.sqrt(norm_sq(v))


def scale(v, s):
    """Multiply vectors by per-vector scalars (s gains a trailing axis)."""
    return v * ad.expand_last(s)


def normalize(v, bad=None):
    """Unit vectors; where `bad` is set the denominator is replaced by 1."""
    n = norm(v)
    if bad is not None:
        n = ad.where(bad, np.ones_like(ad.val(n)), n)
    return scale(v, 1.0 / n)


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def bones_from_pose(pose: HandPose) -> BoneSet:
    """Derive the 20 bone vectors of a pose (total on valid poses)."""
    return BoneSet(bones_from_joints(pose.joints))


def bones_from_joints(joints):
    """Generic bone derivation for (..., 21, 3) joints (Var or ndarray)."""
    child = ad.take(joints, BONE_CHILD_JOINT, axis=-2)
    parent = ad.take(joints, BONE_PARENT_JOINT, axis=-2)
    return child - parent


def _as_vec(x):
    return x if isinstance(x, ad.Var) else np.asarray(x, dtype=np.float64)


def angle_between(v1, v2):
    """Angle in [0, pi] between two vectors, arccos of the normalized dot.

    Raises DegenerateVector if either norm is below EPS.  The arccos
    argument is clamped to [-1, 1] against round-off.
    """
    v1, v2 = _as_vec(v1), _as_vec(v2)
    n1 = ad.val(norm(v1))
    n2 = ad.val(norm(v2))
    if np.any(n1 < EPS) or np.any(n2 < EPS):
        raise DegenerateVector("angle_between: vector norm below threshold")
    return ad.arccos(dot(v1, v2) / (norm(v1) * norm(v2)))


def interval_penalty(x, spec):
    """0 inside [lower, upper], linear outside, continuous everywhere.

    `spec` is an Interval or any (lower, upper) pair; `x` may be a
    scalar, an array, or a Var.  The subgradient at the two kinks is 0.
    """
    lo, hi = (spec.lower, spec.upper) if isinstance(spec, Interval) else spec
    return penalty_outside(x, lo, hi)


def penalty_outside(x, lo, hi):
    """Interval penalty with raw (possibly array) bounds; see interval_penalty."""
    v = ad.val(x)
    below = ad.where(v < lo, lo - x, np.zeros_like(v))
    above = ad.where(v > hi, x - hi, np.zeros_like(v))
    return below + above


def project_onto_plane(v, x, y):
    """Orthogonal projection of `v` onto span{x, y}.

    `x` and `y` must be linearly independent (unit vectors per the
    calling convention, but any independent pair works); raises
    DegenerateBasis when |x × y| < EPS.
    """
    v, x, y = _as_vec(v), _as_vec(x), _as_vec(y)
    xx, yy, xy = dot(x, x), dot(y, y), dot(x, y)
    det = ad.val(xx) * ad.val(yy) - ad.val(xy) ** 2
    if np.any(det < EPS * EPS):
        raise DegenerateBasis("project_onto_plane: basis vectors are near-parallel")
    vx, vy = dot(v, x), dot(v, y)
    a = (vx * yy - vy * xy) / (xx * yy - xy * xy)
    b = (vy * xx - vx * xy) / (xx * yy - xy * xy)
    return scale(x, a) + scale(y, b)


# ---------------------------------------------------------------------------
# Pose files
# ---------------------------------------------------------------------------

def load_poses(path) -> list[HandPose]:
    """Read a pose file: a JSON array of samples, each 21 x 3 numbers."""
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"not valid JSON: {exc}") from exc
    if not isinstance(data, list):
        raise SchemaError("(root)", "pose file must be a top-level JSON array")
    poses = []
    for i, sample in enumerate(data):
        arr = np.asarray(sample, dtype=np.float64)
        if arr.shape != (N_JOINTS, 3):
            raise SchemaError(f"[{i}]", f"sample must be {N_JOINTS}x3, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise SchemaError(f"[{i}]", "sample contains non-finite values")
        poses.append(HandPose(arr))
    return poses


def save_poses(poses, path) -> None:
    data = [np.asarray(getattr(p, "joints", p)).tolist() for p in poses]
    Path(path).write_text(json.dumps(data))
