"""Pinhole projection and analytic root-depth recovery.

A pose in camera coordinates projects through the intrinsic matrix K as
u = K (X/Z, Y/Z, 1).  The 2.5D representation keeps per-joint image
coordinates plus root-relative depths normalized by a reference bone
length s (root depth entry is exactly 0):

    rel_depth_i = (Z_i - Z_root) / s

The absolute, scale-normalized root depth comes back from the unit
length constraint on the reference bone expressed through back-projected
rays r_i = K^-1 [u_i, v_i, 1]:

    || (Z + z_a) r_a - (Z + z_b) r_b ||^2 = 1

a quadratic in Z with coefficients a = ||r_a - r_b||^2,
b = 2 (r_a - r_b).(z_a r_a - z_b r_b), c = ||z_a r_a - z_b r_b||^2 - 1.
The positive root is returned; when both roots are positive, the one
giving every joint positive depth wins, ties to the larger (farther)
root.  Small errors in the 2D points or relative depths can move the
recovered depth a lot; this module reports, it does not smooth (a
learned residual corrector can be plugged in via `refiner`).

The default reference pair (root, middle-finger MCP) is a toolkit
choice: this bone is nearly rigid and present in all common datasets.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import (BehindCamera, ComplexRoots, DegenerateReference,
                     NoPositiveRoot, SchemaError)
from .skeleton import EPS, N_JOINTS, mcp_joint

#: Reference bone endpoints used for scale normalization: root and
#: middle-finger MCP.
DEFAULT_REFERENCE = (0, mcp_joint(2))


@dataclass(frozen=True)
class CameraIntrinsics:
    """3x3 pinhole intrinsic matrix (positive focals, invertible)."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"intrinsics must be 3x3, got {m.shape}")
        if m[0, 0] <= 0 or m[1, 1] <= 0:
            raise ValueError("focal entries must be positive")
        if abs(np.linalg.det(m)) < 1e-12:
            raise ValueError("intrinsic matrix must be invertible")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def from_params(cls, fx: float, fy: float, cx: float, cy: float) -> "CameraIntrinsics":
        return cls(np.array([[fx, 0.0, cx], [0.0, fy, cy], [0.0, 0.0, 1.0]]))

    @property
    def inverse(self) -> np.ndarray:
        return np.linalg.inv(self.matrix)


@dataclass(frozen=True)
class TwoPointFiveD:
    """21 image points plus root-relative, scale-normalized depths."""

    joints_2d: np.ndarray  # (21, 2) pixels
    rel_depths: np.ndarray  # (21,) unit-free, root entry exactly 0

    def __post_init__(self):
        j2d = np.asarray(self.joints_2d, dtype=np.float64)
        zr = np.asarray(self.rel_depths, dtype=np.float64)
        if j2d.shape != (N_JOINTS, 2):
            raise ValueError(f"joints_2d must be {N_JOINTS}x2, got {j2d.shape}")
        if zr.shape != (N_JOINTS,):
            raise ValueError(f"rel_depths must have {N_JOINTS} entries, got {zr.shape}")
        if not (np.all(np.isfinite(j2d)) and np.all(np.isfinite(zr))):
            raise ValueError("2.5D data must be finite")
        if zr[0] != 0.0:
            raise ValueError("root relative depth must be exactly 0")
        for name, arr in (("joints_2d", j2d), ("rel_depths", zr)):
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def project(pose, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Pinhole projection of all joints; raises BehindCamera for Z <= EPS."""
    joints = np.asarray(getattr(pose, "joints", pose), dtype=np.float64)
    z = joints[..., 2]
    if np.any(z <= EPS):
        raise BehindCamera(f"joint {int(np.argmax(z <= EPS))} has depth <= {EPS}")
    uvw = joints @ intrinsics.matrix.T
    return uvw[..., :2] / uvw[..., 2:]


def decompose_25d(pose, intrinsics: CameraIntrinsics,
                  reference: tuple[int, int] = DEFAULT_REFERENCE,
                  ) -> tuple[TwoPointFiveD, float]:
    """Split a camera-space pose into its 2.5D representation and scale.

    Returns (data, s) with s the reference bone length; rel_depths are
    (Z_i - Z_root)/s and the root entry is exactly 0.
    """
    joints = np.asarray(getattr(pose, "joints", pose), dtype=np.float64)
    a, b = reference
    if a == b:
        raise DegenerateReference("reference joints must be distinct")
    scale = float(np.linalg.norm(joints[a] - joints[b]))
    if scale < EPS:
        raise DegenerateReference(f"reference bone ({a}, {b}) has (near-)zero length")
    rel = (joints[:, 2] - joints[0, 2]) / scale
    rel[0] = 0.0
    return TwoPointFiveD(joints_2d=project(joints, intrinsics), rel_depths=rel), scale


def backproject_rays(data: TwoPointFiveD, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Unnormalized rays K^-1 [u, v, 1] of all image points, (21, 3)."""
    ones = np.ones((N_JOINTS, 1))
    pix = np.concatenate([data.joints_2d, ones], axis=-1)
    return pix @ intrinsics.inverse.T


def solve_root_depth(data: TwoPointFiveD, intrinsics: CameraIntrinsics,
                     reference: tuple[int, int] = DEFAULT_REFERENCE,
                     refiner: Callable[[TwoPointFiveD, np.ndarray, float], float] | None = None,
                     ) -> float:
    """Scale-normalized absolute root depth from the 2.5D representation.

    Raises ComplexRoots when the discriminant is negative (inconsistent
    input) and NoPositiveRoot when no positive solution exists.  An
    optional `refiner(data, rays, depth)` hook returns a residual added
    to the analytic solution (e.g. a learned corrector); none ships
    with the toolkit.
    """
    a_idx, b_idx = reference
    if a_idx == b_idx:
        raise DegenerateReference("reference joints must be distinct")
    rays = backproject_rays(data, intrinsics)
    ra, rb = rays[a_idx], rays[b_idx]
    za, zb = data.rel_depths[a_idx], data.rel_depths[b_idx]
    p = ra - rb
    q = za * ra - zb * rb
    a = float(p @ p)
    b = 2.0 * float(p @ q)
    c = float(q @ q) - 1.0
    if a < EPS * EPS:
        raise DegenerateReference("reference rays are (near-)identical")
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        raise ComplexRoots(f"discriminant {disc} < 0")
    sq = np.sqrt(disc)
    roots = sorted(((-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)))
    positive = [r for r in roots if r > 0.0]
    if not positive:
        raise NoPositiveRoot(f"no positive root among {roots}")
    if len(positive) == 2:
        all_pos = [r for r in positive if np.all(r + data.rel_depths > 0.0)]
        depth = max(all_pos) if all_pos else max(positive)
    else:
        depth = positive[0]
    if refiner is not None:
        depth = depth + float(refiner(data, rays, depth))
    return float(depth)


def reconstruct_joints(data: TwoPointFiveD, intrinsics: CameraIntrinsics,
                       root_depth: float) -> np.ndarray:
    """Scale-normalized 3D joints (Z_root + rel_depth_i) * ray_i, (21, 3)."""
    rays = backproject_rays(data, intrinsics)
    return (root_depth + data.rel_depths)[:, None] * rays


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def load_intrinsics(path) -> CameraIntrinsics:
    """Read K from a JSON file: either a 9-number row-major array or
    an object with a "K" field holding one."""
    try:
        doc = json.loads(open(path).read())
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"not valid JSON: {exc}") from exc
    raw = doc.get("K") if isinstance(doc, dict) else doc
    arr = np.asarray(raw, dtype=np.float64).reshape(-1)
    if arr.shape != (9,):
        raise SchemaError("K", f"expected 9 numbers row-major, got {arr.shape}")
    return CameraIntrinsics(arr.reshape(3, 3))


def load_25d(path) -> list[tuple[TwoPointFiveD, tuple[int, int]]]:
    """Read a 2.5D sample file (JSON array of objects).

    Each sample holds "joints_2d" (21 x [u, v]), "rel_depths" (21
    numbers, root entry 0) and optionally "reference" ([a, b] joint
    indices, default root and middle-finger MCP).
    """
    try:
        doc = json.loads(open(path).read())
    except json.JSONDecodeError as exc:
        raise SchemaError(str(path), f"not valid JSON: {exc}") from exc
    if not isinstance(doc, list):
        raise SchemaError("(root)", "2.5D file must be a top-level JSON array")
    out = []
    for i, sample in enumerate(doc):
        if not isinstance(sample, dict):
            raise SchemaError(f"[{i}]", "sample must be an object")
        for fieldname in ("joints_2d", "rel_depths"):
            if fieldname not in sample:
                raise SchemaError(f"[{i}].{fieldname}", "missing field")
        try:
            data = TwoPointFiveD(joints_2d=np.asarray(sample["joints_2d"]),
                                 rel_depths=np.asarray(sample["rel_depths"]))
        except ValueError as exc:
            raise SchemaError(f"[{i}]", str(exc)) from exc
        ref = tuple(sample.get("reference", DEFAULT_REFERENCE))
        if len(ref) != 2 or not all(0 <= int(r) < N_JOINTS for r in ref):
            raise SchemaError(f"[{i}].reference", "expected two joint indices")
        out.append((data, (int(ref[0]), int(ref[1]))))
    return out


def save_25d(samples: Sequence, path) -> None:
    """Write 2.5D samples: (TwoPointFiveD, reference) pairs or bare data."""
    doc = []
    for s in samples:
        data, ref = s if isinstance(s, tuple) else (s, DEFAULT_REFERENCE)
        doc.append({"joints_2d": data.joints_2d.tolist(),
                    "rel_depths": data.rel_depths.tolist(),
                    "reference": list(ref)})
    with open(path, "w") as fh:
        json.dump(doc, fh)
