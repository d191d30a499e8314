"""Palm structure: edge normals, discrete curvature, root-bone spread.

The five root bones span the palm.  Each adjacent pair (i, i+1) defines
a plane normal; averaging neighbouring plane normals gives the edge
normal at each root bone, and the discrete mesh curvature at fan
triangle i is

    c_i = (e_{i+1} - e_i) . (b_{i+1} - b_i) / ||b_{i+1} - b_i||^2

A flat palm has zero curvature; an arched palm (thumb and pinky bent
toward each other across the palm) gives positive values.  Curvature
carries units of 1/length: scaling a pose by s scales c_i by 1/s, so
limits must be fitted in the same unit as the poses they are applied
to.  The spread angles phi_i between adjacent root bones are unit-free.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .errors import DegeneratePalm
from .skeleton import (EPS, BoneSet, Interval, cross, dot, norm, norm_sq,
                       normalize, penalty_outside)

_LO = np.array([0, 1, 2, 3], dtype=np.intp)
_HI = np.array([1, 2, 3, 4], dtype=np.intp)
_MID_A = np.array([0, 1, 2], dtype=np.intp)
_MID_B = np.array([1, 2, 3], dtype=np.intp)


class PalmQuantities(NamedTuple):
    """Generic palm pipeline output; `bad` is a value-level mask."""

    plane_normals: object   # (..., 4, 3) unit, n_i = norm(b_{i+1} x b_i)
    edge_normals: object    # (..., 5, 3) unit
    mid_normals: object     # (..., 3, 3) unit, interior edge normals
    curvatures: object      # (..., 4)
    angular_distances: object  # (..., 4) radians in [0, pi]
    bad: np.ndarray         # (...,) palm not usable (any sub-quantity degenerate)
    cos_spread: np.ndarray  # (..., 4) raw arccos arguments (diagnostics)
    chord_norm: np.ndarray  # (..., 4) ||b_{i+1} - b_i|| values (diagnostics)


def palm_quantities(root_bones) -> PalmQuantities:
    """Evaluate the palm pipeline on (..., 5, 3) root bones (Var or ndarray).

    Degenerate inputs never raise here; they set `bad` and all guarded
    denominators are replaced by 1 so values and gradients stay finite.
    """
    rb_lo = ad.take(root_bones, _LO, axis=-2)
    rb_hi = ad.take(root_bones, _HI, axis=-2)

    n_raw = cross(rb_hi, rb_lo)
    n_len = ad.val(norm(n_raw))
    bad_n = n_len < EPS
    normals = normalize(n_raw, bad=bad_n)

    mid_raw = ad.take(normals, _MID_B, axis=-2) + ad.take(normals, _MID_A, axis=-2)
    mid_len = ad.val(norm(mid_raw))
    bad_mid = mid_len < EPS
    mids = normalize(mid_raw, bad=bad_mid)

    edges = ad.concat(
        [ad.take(normals, np.array([0]), axis=-2), mids,
         ad.take(normals, np.array([3]), axis=-2)], axis=-2)

    chord = rb_hi - rb_lo
    chord_sq = norm_sq(chord)
    chord_len = np.sqrt(ad.val(chord_sq))
    bad_chord = chord_len < EPS
    safe_chord_sq = ad.where(bad_chord, np.ones_like(chord_len), chord_sq)
    edge_delta = ad.take(edges, _HI, axis=-2) - ad.take(edges, _LO, axis=-2)
    curvatures = dot(edge_delta, chord) / safe_chord_sq

    len_lo = norm(rb_lo)
    len_hi = norm(rb_hi)
    bad_len = (ad.val(len_lo) < EPS) | (ad.val(len_hi) < EPS)
    denom = ad.where(bad_len, np.ones_like(ad.val(len_lo)), len_lo * len_hi)
    cos_spread = dot(rb_lo, rb_hi) / denom
    spread = ad.arccos(cos_spread)

    bad = (bad_n.any(axis=-1) | bad_mid.any(axis=-1)
           | bad_chord.any(axis=-1) | bad_len.any(axis=-1))
    return PalmQuantities(
        plane_normals=normals, edge_normals=edges, mid_normals=mids,
        curvatures=curvatures, angular_distances=spread, bad=bad,
        cos_spread=ad.val(cos_spread), chord_norm=chord_len)


@dataclass(frozen=True)
class PalmDescriptor:
    """Palm geometry of one pose: normals, curvatures, spread angles."""

    plane_normals: np.ndarray      # (4, 3) unit
    edge_normals: np.ndarray       # (5, 3) unit
    curvatures: np.ndarray         # (4,)
    angular_distances: np.ndarray  # (4,) radians in [0, pi]

    def __post_init__(self):
        for name, shape in (("plane_normals", (4, 3)), ("edge_normals", (5, 3)),
                            ("curvatures", (4,)), ("angular_distances", (4,))):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.shape != shape:
                raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
            object.__setattr__(self, name, arr)
        for name in ("plane_normals", "edge_normals"):
            lens = np.linalg.norm(getattr(self, name), axis=-1)
            if np.any(np.abs(lens - 1.0) > 1e-9):
                raise ValueError(f"{name} must be unit length within 1e-9")


def palm_descriptor(bones: BoneSet) -> PalmDescriptor:
    """Compute the palm descriptor of a bone set (strict: raises on degeneracy)."""
    q = palm_quantities(bones.root_bones)
    if bool(q.bad):
        raise DegeneratePalm("root bones do not span a usable palm "
                             "(zero/parallel adjacent root bones or collapsed fan)")
    return PalmDescriptor(
        plane_normals=ad.val(q.plane_normals),
        edge_normals=ad.val(q.edge_normals),
        curvatures=ad.val(q.curvatures),
        angular_distances=ad.val(q.angular_distances))


def root_bone_penalties(curvatures, spreads, curv_lo, curv_hi, spread_lo, spread_hi):
    """Per-triangle penalty pairs; generic over Var/ndarray quantities."""
    return (penalty_outside(curvatures, curv_lo, curv_hi),
            penalty_outside(spreads, spread_lo, spread_hi))


def root_bone_loss(descriptor: PalmDescriptor,
                   curvature_limits: Sequence[Interval],
                   spread_limits: Sequence[Interval]) -> float:
    """Mean of the 4 curvature and 4 spread interval penalties.

    Zero iff every curvature and angular distance lies inside its
    interval.
    """
    if len(curvature_limits) != 4 or len(spread_limits) != 4:
        raise ValueError("expected 4 curvature and 4 angular-distance intervals")
    c_lo = np.array([iv.lower for iv in curvature_limits])
    c_hi = np.array([iv.upper for iv in curvature_limits])
    s_lo = np.array([iv.lower for iv in spread_limits])
    s_hi = np.array([iv.upper for iv in spread_limits])
    pen_c, pen_s = root_bone_penalties(
        descriptor.curvatures, descriptor.angular_distances, c_lo, c_hi, s_lo, s_hi)
    return float(np.mean(pen_c + pen_s))
