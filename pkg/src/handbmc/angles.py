"""Per-bone local frames and flexion/abduction angle extraction.

Every finger bone gets a right-handed orthonormal frame whose z axis is
its parent bone's direction.  For the first row (PIP bones) the x axis
comes from the palm plane normals (negated, with the thumb/index,
middle/ring, pinky case split); deeper rows are built by rotating the
parent frame with the parent bone's own angles, which makes the frames
consistent across poses: rigidly moving the hand moves the frames with
it and leaves all angles unchanged.

In a bone's frame, flexion is the angle of the bone's x-z-plane
projection from z and abduction the out-of-plane angle, both made
signed by an octant lookup (flexion negated when the frame-local x
component is negative, abduction when the y component is).  This gives
flexion in [-pi, pi] and abduction in [-pi/2, pi/2].  The inverse map

    direction(flexion, abduction)
        = (cos a * sin f,  sin a,  cos a * cos f)

is exact for |abduction| < pi/2, and the frame rotation is
R = rotate_y(flexion) then rotate about the flexed -x axis by
abduction, the unique order consistent with the angle definitions.

When a bone is parallel to its frame's y axis (abduction = +-pi/2) the
x-z projection vanishes and flexion is set to 0 by convention, with the
`gimbal` flag raised (strict callers get GimbalDegenerate instead).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DegenerateBone, DegeneratePalm, GimbalDegenerate
from .palm import PalmDescriptor, PalmQuantities, palm_quantities
from .skeleton import (DIP_BONES, EPS, PIP_BONES, TIP_BONES, BoneSet,
                       HandPose, N_FINGERS, bones_from_joints, cross, dot,
                       mcp_joint, normalize, scale)

_HALF_PI = math.pi / 2.0


@dataclass(frozen=True)
class BoneFrame:
    """Right-handed orthonormal basis (axes as world-space rows x, y, z)."""

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        axes = []
        for name in ("x", "y", "z"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (3,):
                raise ValueError(f"frame axis {name} must be a 3-vector")
            object.__setattr__(self, name, v)
            axes.append(v)
        m = np.stack(axes, axis=-1)
        if np.max(np.abs(m.T @ m - np.eye(3))) > 1e-9:
            raise ValueError("frame axes must be orthonormal within 1e-9")
        if abs(np.linalg.det(m) - 1.0) > 1e-9:
            raise ValueError("frame must be right-handed (det +1 within 1e-9)")

    def to_local(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        return np.stack([v @ self.x, v @ self.y, v @ self.z], axis=-1)

    def to_world(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=np.float64)
        return v[..., 0] * self.x + v[..., 1] * self.y + v[..., 2] * self.z


@dataclass(frozen=True)
class AnglePair:
    """Flexion in [-pi, pi] and abduction in [-pi/2, pi/2], radians."""

    flexion: float
    abduction: float
    gimbal: bool = False

    def __post_init__(self):
        object.__setattr__(self, "flexion", float(self.flexion))
        object.__setattr__(self, "abduction", float(self.abduction))
        if abs(self.flexion) > math.pi + 1e-9:
            raise ValueError(f"flexion {self.flexion} outside [-pi, pi]")
        if abs(self.abduction) > _HALF_PI + 1e-9:
            raise ValueError(f"abduction {self.abduction} outside [-pi/2, pi/2]")


class FrameRows(NamedTuple):
    """Axes of five per-finger frames, each (..., 5, 3)."""

    x: object
    y: object
    z: object


class RowAngles(NamedTuple):
    """Extraction output for one row of five bones."""

    flexion: object      # (..., 5)
    abduction: object    # (..., 5)
    local_x: np.ndarray  # (..., 5) frame-local bone x components (values)
    local_y: np.ndarray  # (..., 5)
    cos_flexion: np.ndarray  # raw arccos arguments (values, diagnostics)
    cos_abduction: np.ndarray
    zero: np.ndarray     # (..., 5) bone norm below EPS
    gimbal: np.ndarray   # (..., 5) x-z projection below EPS


def pip_frame_rows(root_bones, palm: PalmQuantities) -> FrameRows:
    """Frames of the five PIP bones from the palm quantities (generic)."""
    bad_z = ad.val(ad.vsum(root_bones * root_bones, axis=-1)) < EPS * EPS
    z = normalize(root_bones, bad=bad_z)
    n = palm.plane_normals
    mids = palm.mid_normals  # norm(n_i + n_{i-1}) for i in 1..3
    x = -ad.concat(
        [ad.take(n, np.array([0, 1]), axis=-2),
         ad.take(mids, np.array([1, 2]), axis=-2),
         ad.take(n, np.array([3]), axis=-2)], axis=-2)
    y = normalize(cross(z, x), bad=palm.bad[..., None] | bad_z)
    return FrameRows(x=x, y=y, z=z)


def extract_row(bones_row, frames: FrameRows) -> RowAngles:
    """Angles of one row of bones in their frames, octant-disambiguated."""
    bx = dot(bones_row, frames.x)
    by = dot(bones_row, frames.y)
    bz = dot(bones_row, frames.z)
    proj_sq = bx * bx + bz * bz
    bone_sq = proj_sq + by * by
    zero = ad.val(bone_sq) < EPS * EPS
    gimbal = (ad.val(proj_sq) < EPS * EPS) & ~zero

    ones = np.ones_like(ad.val(proj_sq))
    proj = ad.sqrt(ad.where(gimbal | zero, ones, proj_sq))
    bone = ad.sqrt(ad.where(zero, ones, bone_sq))

    cos_f = bz / proj
    flex = ad.arccos(cos_f)
    flex = ad.where(ad.val(bx) < 0.0, -flex, flex)
    flex = ad.where(gimbal | zero, np.zeros_like(ones), flex)

    cos_a = proj / bone
    abd = ad.arccos(cos_a)
    abd = ad.where(ad.val(by) < 0.0, -abd, abd)
    gimbal_abd = np.where(ad.val(by) < 0.0, -_HALF_PI, _HALF_PI)
    abd = ad.where(gimbal, gimbal_abd, abd)
    abd = ad.where(zero, np.zeros_like(ones), abd)

    return RowAngles(flexion=flex, abduction=abd,
                     local_x=ad.val(bx), local_y=ad.val(by),
                     cos_flexion=ad.val(cos_f), cos_abduction=ad.val(cos_a),
                     zero=zero, gimbal=gimbal)


def propagate_rows(frames: FrameRows, flexion, abduction) -> FrameRows:
    """Child frames after rotating by (flexion, abduction); generic.

    The child z axis is the parent frame applied to
    direction(flexion, abduction).
    """
    sf, cf = ad.sin(flexion), ad.cos(flexion)
    sa, ca = ad.sin(abduction), ad.cos(abduction)
    flexed = scale(frames.x, sf) + scale(frames.z, cf)
    new_x = scale(frames.x, cf) - scale(frames.z, sf)
    new_y = scale(flexed, -sa) + scale(frames.y, ca)
    new_z = scale(flexed, ca) + scale(frames.y, sa)
    return FrameRows(x=new_x, y=new_y, z=new_z)


class FingerAngles(NamedTuple):
    """All 15 finger-bone angles plus value-level diagnostics.

    Arrays are ordered like bones 5..19 (finger-major PIP, DIP, TIP).
    `invalid` marks angles whose defining frames/bones are degenerate
    (zero bones, bad palm, or any such ancestor); `gimbal` marks the
    flexion-by-convention bones.
    """

    flexion: object   # (..., 15)
    abduction: object  # (..., 15)
    local_x: np.ndarray
    local_y: np.ndarray
    cos_flexion: np.ndarray
    cos_abduction: np.ndarray
    zero: np.ndarray
    gimbal: np.ndarray
    invalid: np.ndarray


_ROW_BONES = (PIP_BONES, DIP_BONES, TIP_BONES)


def finger_angles(bones, palm: PalmQuantities) -> FingerAngles:
    """Extract the 15 angle pairs of (..., 20, 3) bones (generic)."""
    root_bones = ad.take(bones, np.arange(N_FINGERS), axis=-2)
    frames = pip_frame_rows(root_bones, palm)
    corrupt = np.broadcast_to(palm.bad[..., None], ad.val(root_bones).shape[:-1]).copy()

    per_row = []
    invalid_rows = []
    for r, idx in enumerate(_ROW_BONES):
        row = extract_row(ad.take(bones, idx, axis=-2), frames)
        per_row.append(row)
        invalid_rows.append(corrupt | row.zero)
        if r < 2:
            frames = propagate_rows(frames, row.flexion, row.abduction)
            corrupt = corrupt | row.zero
    # interleave rows so the order matches bone indices 5..19
    def weave(field):
        rows = [getattr(row, field) for row in per_row]
        stacked = ad.stack(rows, axis=-1)  # (..., 5, 3)
        shape = ad.val(stacked).shape
        return ad.reshape(stacked, shape[:-2] + (15,))

    return FingerAngles(
        flexion=weave("flexion"), abduction=weave("abduction"),
        local_x=weave("local_x"), local_y=weave("local_y"),
        cos_flexion=weave("cos_flexion"), cos_abduction=weave("cos_abduction"),
        zero=weave("zero").astype(bool), gimbal=weave("gimbal").astype(bool),
        invalid=np.stack(invalid_rows, axis=-1).reshape(
            ad.val(per_row[0].flexion).shape[:-1] + (15,)).astype(bool))


# ---------------------------------------------------------------------------
# Public single-pose API
# ---------------------------------------------------------------------------

def pip_frames(bones: BoneSet, palm: PalmDescriptor | None = None) -> list[BoneFrame]:
    """Frames of the five PIP bones (one per finger), strict.

    Uses the plane/edge normals of `palm` when given (they must come
    from the same bones), otherwise recomputes them.
    """
    if palm is None:
        q = palm_quantities(bones.root_bones)
        if bool(q.bad):
            raise DegeneratePalm("root bones do not span a usable palm")
        normals, mids = ad.val(q.plane_normals), ad.val(q.mid_normals)
    else:
        normals, mids = palm.plane_normals, palm.edge_normals[1:4]
    rb = bones.root_bones
    lens = np.linalg.norm(rb, axis=-1)
    if np.any(lens < EPS):
        raise DegeneratePalm("a root bone has (near-)zero length")
    z = rb / lens[:, None]
    x = -np.stack([normals[0], normals[1], mids[1], mids[2], normals[3]])
    y = np.cross(z, x)
    y /= np.linalg.norm(y, axis=-1, keepdims=True)
    return [BoneFrame(x=x[f], y=y[f], z=z[f]) for f in range(N_FINGERS)]


def extract_angles(bone, frame: BoneFrame, strict: bool = True) -> AnglePair:
    """Flexion/abduction of a bone vector in a frame.

    Strict mode raises DegenerateBone for zero bones and
    GimbalDegenerate when the bone is parallel to the frame's y axis;
    lenient mode returns the flagged convention values instead.
    """
    local = frame.to_local(bone)
    return extract_angles_local(local, strict=strict)


def extract_angles_local(local, strict: bool = True) -> AnglePair:
    """extract_angles for a bone already given in frame-local coordinates."""
    local = np.asarray(local, dtype=np.float64)
    frames = FrameRows(x=np.array([1.0, 0.0, 0.0]), y=np.array([0.0, 1.0, 0.0]),
                       z=np.array([0.0, 0.0, 1.0]))
    row = extract_row(local, frames)
    if bool(row.zero):
        if strict:
            raise DegenerateBone("bone norm below threshold")
        return AnglePair(0.0, 0.0, gimbal=False)
    if bool(row.gimbal):
        if strict:
            raise GimbalDegenerate("bone parallel to frame y axis")
        return AnglePair(0.0, float(row.abduction), gimbal=True)
    return AnglePair(float(row.flexion), float(row.abduction))


def reconstruct_direction(pair) -> np.ndarray:
    """Frame-local unit direction for an angle pair (inverse of extraction)."""
    f, a = _pair_values(pair)
    ca = math.cos(a)
    return np.array([ca * math.sin(f), math.sin(a), ca * math.cos(f)])


def propagate_frame(parent: BoneFrame, pair) -> BoneFrame:
    """Child frame after rotating the parent by an angle pair.

    The child z axis equals reconstruct_direction(pair) expressed in
    parent coordinates.
    """
    f, a = _pair_values(pair)
    rows = propagate_rows(FrameRows(x=parent.x, y=parent.y, z=parent.z),
                          np.float64(f), np.float64(a))
    return BoneFrame(x=ad.val(rows.x), y=ad.val(rows.y), z=ad.val(rows.z))


def _pair_values(pair) -> tuple[float, float]:
    if isinstance(pair, AnglePair):
        return pair.flexion, pair.abduction
    f, a = pair
    return float(f), float(a)


def all_finger_angles(pose: HandPose, strict: bool = True) -> list[AnglePair]:
    """The 15 angle pairs of a pose, ordered like bones 5..19."""
    bones = bones_from_joints(pose.joints)
    q = palm_quantities(bones[:N_FINGERS])
    if bool(q.bad):
        raise DegeneratePalm("root bones do not span a usable palm")
    fa = finger_angles(bones, q)
    if strict:
        if fa.zero.any():
            b = int(np.argmax(fa.zero))
            raise DegenerateBone(f"finger bone {5 + b} has (near-)zero length")
        if fa.gimbal.any():
            b = int(np.argmax(fa.gimbal))
            raise GimbalDegenerate(f"finger bone {5 + b} is parallel to its frame y axis")
    return [AnglePair(float(ad.val(fa.flexion)[i]), float(ad.val(fa.abduction)[i]),
                      gimbal=bool(fa.gimbal[i]))
            for i in range(15)]


def synthesize_pose(root, root_bones, lengths, pairs: Sequence) -> HandPose:
    """Forward kinematics: build a pose from root bones, lengths and angles.

    `lengths` and `pairs` are ordered like bones 5..19 (finger-major
    PIP, DIP, TIP).  all_finger_angles of the result reproduces `pairs`
    and the bone lengths match `lengths` exactly up to round-off.
    """
    root = np.asarray(root, dtype=np.float64)
    root_bones = np.asarray(root_bones, dtype=np.float64)
    lengths = np.asarray(lengths, dtype=np.float64)
    if root_bones.shape != (5, 3) or lengths.shape != (15,) or len(pairs) != 15:
        raise ValueError("expected 5 root bones, 15 lengths and 15 angle pairs")
    if np.any(lengths <= 0):
        raise DegenerateBone("all finger bone lengths must be positive")

    q = palm_quantities(root_bones)
    if bool(q.bad):
        raise DegeneratePalm("root bones do not span a usable palm")
    frames = pip_frame_rows(root_bones, q)

    flex = np.array([_pair_values(p)[0] for p in pairs]).reshape(5, 3)
    abd = np.array([_pair_values(p)[1] for p in pairs]).reshape(5, 3)
    seg = lengths.reshape(5, 3)

    joints = np.empty((21, 3))
    joints[0] = root
    pos = root + root_bones  # MCP joints, (5, 3)
    for f in range(N_FINGERS):
        joints[mcp_joint(f)] = pos[f]
    for r in range(3):
        sf, cf = np.sin(flex[:, r]), np.cos(flex[:, r])
        sa, ca = np.sin(abd[:, r]), np.cos(abd[:, r])
        local = np.stack([ca * sf, sa, ca * cf], axis=-1)  # (5, 3)
        direction = (local[:, 0:1] * ad.val(frames.x)
                     + local[:, 1:2] * ad.val(frames.y)
                     + local[:, 2:3] * ad.val(frames.z))
        pos = pos + seg[:, r:r + 1] * direction
        for f in range(N_FINGERS):
            joints[mcp_joint(f) + 1 + r] = pos[f]
        if r < 2:
            frames = propagate_rows(frames, flex[:, r], abd[:, r])
    return HandPose(joints)
