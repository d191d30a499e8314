"""Constraint losses and their weighted composition.

Three terms, each a mean of per-quantity penalties and zero exactly on
the feasible set:

* bone length — interval penalty on the 20 bone lengths (mean / 20);
* root bones — interval penalties on the 4 palm curvatures and the 4
  root-bone spread angles (mean / 4);
* joint angles — containment-gated hull distance of the 15
  (flexion, abduction) pairs (mean / 15).

The weighted total uses the default weights 0.1 / 0.1 / 0.01.  All
terms run on plain ndarrays (single pose or any batch shape) and on
autodiff Vars, so values, batched evaluation and exact gradients share
one code path.

In lenient mode degenerate inputs (collapsed palm, zero bones and their
downstream angles) contribute a large constant penalty with zero
gradient instead of raising; strict mode raises the specific
degeneracy error.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad
from .angles import finger_angles
from .autodiff import GradientReport, Var, backward
from .errors import DegenerateBone, DegeneratePalm, DegenerateSample, GimbalDegenerate
from .hull import (AngleHull, EdgeTables, angle_loss_term, contains_many,
                   distance_many, edge_projections, edge_tables)
from .limits import LimitSet
from .palm import palm_quantities
from .skeleton import (BONE_CHILD_JOINT, BONE_PARENT_JOINT, EPS, N_BONES,
                       BoneSet, HandPose, Interval, bones_from_joints,
                       mcp_joint, norm_sq, penalty_outside)

#: Loss value substituted (with zero gradient) for degenerate quantities
#: in lenient mode.
LENIENT_PENALTY = 1e6


@dataclass(frozen=True)
class LossWeights:
    """Weights of the loss terms (defaults 0.1, 0.1, 0.01 and, for the
    full training-loss shell, 1, 5, 1)."""

    bone_length: float = 0.1
    root_bone: float = 0.1
    angle: float = 0.01
    joints_2d: float = 1.0
    rel_depth: float = 5.0
    root_depth: float = 1.0

    def __post_init__(self):
        for name in ("bone_length", "root_bone", "angle",
                     "joints_2d", "rel_depth", "root_depth"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0.0:
                raise ValueError(f"weight {name} must be finite and nonnegative")
            object.__setattr__(self, name, v)


class Quantities(NamedTuple):
    """Every constrained quantity of a pose (or batch), plus diagnostics.

    The five main fields are generic (Var or ndarray); everything else
    is a plain ndarray.  Leading axes follow the input joints.
    """

    lengths: object            # (..., 20)
    curvatures: object         # (..., 4)
    angular_distances: object  # (..., 4)
    flexion: object            # (..., 15)
    abduction: object          # (..., 15)
    local_x: np.ndarray        # (..., 15) frame-local bone components
    local_y: np.ndarray
    cos_flexion: np.ndarray    # raw arccos arguments
    cos_abduction: np.ndarray
    cos_spread: np.ndarray     # (..., 4)
    palm_bad: np.ndarray       # (...,)
    zero_bone: np.ndarray      # (..., 20)
    gimbal: np.ndarray         # (..., 15)
    angle_invalid: np.ndarray  # (..., 15) angle undefined (bad palm/zero chain)
    degenerate: np.ndarray     # (...,) any of the above per sample


def pose_quantities(joints) -> Quantities:
    """Extract all constrained quantities from (..., 21, 3) joints."""
    bones = bones_from_joints(joints)
    bone_sq = norm_sq(bones)
    zero_bone = ad.val(bone_sq) < EPS * EPS
    lengths = ad.sqrt(bone_sq)

    palm = palm_quantities(ad.take(bones, np.arange(5), axis=-2))
    fa = finger_angles(bones, palm)
    degenerate = palm.bad | zero_bone.any(axis=-1) | fa.gimbal.any(axis=-1)
    return Quantities(
        lengths=lengths,
        curvatures=palm.curvatures,
        angular_distances=palm.angular_distances,
        flexion=fa.flexion,
        abduction=fa.abduction,
        local_x=fa.local_x, local_y=fa.local_y,
        cos_flexion=fa.cos_flexion, cos_abduction=fa.cos_abduction,
        cos_spread=palm.cos_spread,
        palm_bad=palm.bad, zero_bone=zero_bone,
        gimbal=fa.gimbal, angle_invalid=fa.invalid,
        degenerate=degenerate)


class BmcParts(NamedTuple):
    """Per-term values of the composed loss (generic over Var/ndarray)."""

    total: object
    bone_length: object
    root_bone: object
    angle: object
    length_penalties: object     # (..., 20)
    curvature_penalties: object  # (..., 4)
    spread_penalties: object     # (..., 4)
    angle_terms: object          # (..., 15)
    quantities: Quantities


def bmc_terms(joints, limits: LimitSet, weights: LossWeights,
              lenient: bool = False, tables: EdgeTables | None = None) -> BmcParts:
    """Assemble all loss terms from (..., 21, 3) joints (Var or ndarray)."""
    q = pose_quantities(joints)

    bl_lo, bl_hi = limits.bounds("bone_length")
    length_pen = penalty_outside(q.lengths, bl_lo, bl_hi)
    loss_bl = ad.vmean(length_pen, axis=-1)

    c_lo, c_hi = limits.bounds("curvature")
    s_lo, s_hi = limits.bounds("angular_distance")
    curv_pen = penalty_outside(q.curvatures, c_lo, c_hi)
    spread_pen = penalty_outside(q.angular_distances, s_lo, s_hi)
    loss_rb = ad.vmean(curv_pen + spread_pen, axis=-1)
    if lenient:
        loss_rb = ad.where(q.palm_bad, np.full_like(ad.val(loss_rb), LENIENT_PENALTY),
                           loss_rb)

    if tables is None:
        tables = edge_tables(limits.angle_hulls)
    contained = contains_many(tables, ad.val(q.flexion), ad.val(q.abduction))
    dist = distance_many(tables, q.flexion, q.abduction)
    terms = ad.where(contained, np.zeros_like(ad.val(dist)), dist)
    if lenient:
        terms = ad.where(q.angle_invalid, np.full_like(ad.val(dist), LENIENT_PENALTY),
                         terms)
    loss_a = ad.vmean(terms, axis=-1)

    total = weights.bone_length * loss_bl + weights.root_bone * loss_rb \
        + weights.angle * loss_a
    return BmcParts(total=total, bone_length=loss_bl, root_bone=loss_rb,
                    angle=loss_a, length_penalties=length_pen,
                    curvature_penalties=curv_pen, spread_penalties=spread_pen,
                    angle_terms=terms, quantities=q)


# ---------------------------------------------------------------------------
# Public losses
# ---------------------------------------------------------------------------

def bone_length_loss(bones, intervals: Sequence[Interval]):
    """Mean interval penalty of the 20 bone lengths; 0 iff all inside."""
    if len(intervals) != N_BONES:
        raise ValueError(f"expected {N_BONES} intervals")
    lo = np.array([iv.lower for iv in intervals])
    hi = np.array([iv.upper for iv in intervals])
    b = bones.bones if isinstance(bones, BoneSet) else bones
    lengths = ad.sqrt(norm_sq(b))
    out = ad.vmean(penalty_outside(lengths, lo, hi), axis=-1)
    if isinstance(out, np.ndarray) and out.ndim == 0:
        return float(out)
    return out


def angle_constraint_loss(pairs, hulls: Sequence[AngleHull]) -> float:
    """Mean containment-gated hull distance of 15 angle pairs."""
    if len(hulls) != 15 or len(pairs) != 15:
        raise ValueError("expected 15 angle pairs and 15 hulls")
    return float(np.mean([angle_loss_term(h, p) for h, p in zip(hulls, pairs)]))


def _raise_degenerate(q: Quantities) -> None:
    """Raise the specific degeneracy error for a single-pose Quantities."""
    if bool(q.palm_bad):
        raise DegeneratePalm("root bones do not span a usable palm")
    if q.zero_bone.any():
        raise DegenerateBone(f"bone {int(np.argmax(q.zero_bone))} has (near-)zero length")
    if q.gimbal.any():
        raise GimbalDegenerate(
            f"finger bone {5 + int(np.argmax(q.gimbal))} is parallel to its frame y axis")


@dataclass
class LossReport:
    """Per-term losses, weighted total, per-bone breakdown, gradient."""

    bone_length: float
    root_bone: float
    angle: float
    total: float
    length_penalties: np.ndarray     # (20,)
    curvature_penalties: np.ndarray  # (4,)
    spread_penalties: np.ndarray     # (4,)
    angle_terms: np.ndarray          # (15,)
    gradient: GradientReport | None = None
    degenerate: bool = False

    def to_json_dict(self) -> dict:
        out = {
            "total": self.total,
            "bone_length": self.bone_length,
            "root_bone": self.root_bone,
            "angle": self.angle,
            "length_penalties": [float(x) for x in self.length_penalties],
            "curvature_penalties": [float(x) for x in self.curvature_penalties],
            "spread_penalties": [float(x) for x in self.spread_penalties],
            "angle_terms": [float(x) for x in self.angle_terms],
            "degenerate": self.degenerate,
        }
        if self.gradient is not None:
            out["gradient"] = [[float(v) for v in row] for row in self.gradient.gradient]
        return out


def bmc_loss(pose: HandPose, limits: LimitSet, weights: LossWeights = LossWeights(),
             mode: str = "strict", with_gradient: bool = True) -> LossReport:
    """Evaluate the composed constraint loss of one pose.

    Strict mode raises degeneracy errors; lenient mode substitutes the
    large constant penalty.  The gradient covers all 63 coordinates and
    follows the documented subgradient conventions.
    """
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    joints = np.asarray(pose.joints if isinstance(pose, HandPose) else pose,
                        dtype=np.float64)
    lenient = mode == "lenient"

    gradient = None
    if with_gradient:
        j = Var(joints)
        parts = bmc_terms(j, limits, weights, lenient=lenient)
        if not lenient and bool(parts.quantities.degenerate):
            _raise_degenerate(parts.quantities)
        g = backward(parts.total, j)
        gradient = GradientReport(
            value=float(ad.val(parts.total)), gradient=g,
            nondifferentiable=kink_flags(joints, limits))
    else:
        parts = bmc_terms(joints, limits, weights, lenient=lenient)
        if not lenient and bool(parts.quantities.degenerate):
            _raise_degenerate(parts.quantities)

    return LossReport(
        bone_length=float(ad.val(parts.bone_length)),
        root_bone=float(ad.val(parts.root_bone)),
        angle=float(ad.val(parts.angle)),
        total=float(ad.val(parts.total)),
        length_penalties=ad.val(parts.length_penalties),
        curvature_penalties=ad.val(parts.curvature_penalties),
        spread_penalties=ad.val(parts.spread_penalties),
        angle_terms=ad.val(parts.angle_terms),
        gradient=gradient,
        degenerate=bool(parts.quantities.degenerate))


def evaluate_batch(poses, limits: LimitSet, weights: LossWeights = LossWeights(),
                   mode: str = "strict") -> list[LossReport]:
    """LossReports (no gradients) for an (N, 21, 3) batch, input order."""
    joints = _stack_poses(poses)
    parts = bmc_terms(joints, limits, weights, lenient=(mode == "lenient"))
    deg = parts.quantities.degenerate
    if mode == "strict" and deg.any():
        raise DegenerateSample(int(np.argmax(deg)), "degenerate pose in batch")
    reports = []
    for i in range(len(joints)):
        reports.append(LossReport(
            bone_length=float(ad.val(parts.bone_length)[i]),
            root_bone=float(ad.val(parts.root_bone)[i]),
            angle=float(ad.val(parts.angle)[i]),
            total=float(ad.val(parts.total)[i]),
            length_penalties=ad.val(parts.length_penalties)[i],
            curvature_penalties=ad.val(parts.curvature_penalties)[i],
            spread_penalties=ad.val(parts.spread_penalties)[i],
            angle_terms=ad.val(parts.angle_terms)[i],
            degenerate=bool(deg[i])))
    return reports


def batch_values(poses, limits: LimitSet, weights: LossWeights = LossWeights(),
                 lenient: bool = True) -> np.ndarray:
    """Fast total-loss values for an (N, 21, 3) batch."""
    joints = _stack_poses(poses)
    return ad.val(bmc_terms(joints, limits, weights, lenient=lenient).total)


def batch_gradients(poses, limits: LimitSet, weights: LossWeights = LossWeights(),
                    lenient: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """(values (N,), gradients (N, 21, 3)) for a batch, one backward pass."""
    joints = _stack_poses(poses)
    j = Var(joints)
    parts = bmc_terms(j, limits, weights, lenient=lenient)
    g = backward(parts.total, j)
    return ad.val(parts.total), g


def _stack_poses(poses) -> np.ndarray:
    if isinstance(poses, np.ndarray):
        joints = np.asarray(poses, dtype=np.float64)
    else:
        joints = np.stack([np.asarray(getattr(p, "joints", p), dtype=np.float64)
                           for p in poses])
    if joints.ndim != 3 or joints.shape[1:] != (21, 3):
        raise ValueError(f"expected N x 21 x 3 poses, got {joints.shape}")
    return joints


def finite_difference_error(poses, limits: LimitSet,
                            weights: LossWeights = LossWeights(),
                            step: float = 1e-5) -> float:
    """Max relative disagreement between analytic and central-FD gradients.

    Per coordinate the error is |analytic - fd| / max(1, |fd|); the max
    runs over all poses and all 63 coordinates.  Poses should sit at
    least ~1e-3 from every loss kink (see kink_margins) for the FD side
    to be trustworthy.
    """
    joints = _stack_poses(poses)
    _, grads = batch_gradients(joints, limits, weights)
    n = len(joints)
    plus = np.repeat(joints, 63, axis=0)
    minus = plus.copy()
    eye = np.eye(63).reshape(63, 21, 3)
    for k in range(63):
        plus[k::63] += step * eye[k]
        minus[k::63] -= step * eye[k]
    f_plus = batch_values(plus, limits, weights).reshape(n, 63)
    f_minus = batch_values(minus, limits, weights).reshape(n, 63)
    fd = (f_plus - f_minus) / (2.0 * step)
    rel = np.abs(grads.reshape(n, 63) - fd) / np.maximum(1.0, np.abs(fd))
    return float(rel.max())


def full_training_loss(bmc_total: float,
                       joints_2d=None, joints_2d_label=None,
                       rel_depth=None, rel_depth_label=None,
                       root_depth=None, root_depth_label=None,
                       weights: LossWeights = LossWeights()) -> float:
    """Value-level shell of the full training objective.

    Mean absolute errors on whichever of the 2D / relative-depth /
    root-depth labels are provided, plus the (already weighted) BMC
    total.  No training loop ships with the toolkit.
    """
    total = float(bmc_total)
    if joints_2d is not None and joints_2d_label is not None:
        total += weights.joints_2d * float(
            np.mean(np.abs(np.asarray(joints_2d) - np.asarray(joints_2d_label))))
    if rel_depth is not None and rel_depth_label is not None:
        total += weights.rel_depth * float(
            np.mean(np.abs(np.asarray(rel_depth) - np.asarray(rel_depth_label))))
    if root_depth is not None and root_depth_label is not None:
        total += weights.root_depth * float(
            np.mean(np.abs(np.asarray(root_depth) - np.asarray(root_depth_label))))
    return total


# ---------------------------------------------------------------------------
# Kink analysis (finite-difference safety margins and gradient flags)
# ---------------------------------------------------------------------------

def _interval_margin(values: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    return np.minimum(np.abs(values - lo), np.abs(values - hi))


def _boundary_distance(vertices: np.ndarray, flexion: np.ndarray,
                       abduction: np.ndarray) -> np.ndarray:
    """Raw Euclidean distance from angle points to their hull boundaries.

    `vertices` is (15, 10, 2); flexion/abduction are (..., 15).
    """
    start = vertices
    edge = np.roll(vertices, -1, axis=1) - vertices
    esq = np.einsum("kij,kij->ki", edge, edge)
    esq = np.where(esq == 0.0, 1.0, esq)
    wf = flexion[..., None] - start[..., 0]
    wa = abduction[..., None] - start[..., 1]
    t = np.clip((wf * edge[..., 0] + wa * edge[..., 1]) / esq, 0.0, 1.0)
    df = wf - t * edge[..., 0]
    da = wa - t * edge[..., 1]
    return np.sqrt(df * df + da * da).min(axis=-1)


def kink_margins(pose, limits: LimitSet) -> dict[str, np.ndarray]:
    """Distance of every monitored quantity from its nearest active kink.

    Used by the finite-difference oracle to reject poses closer than
    1e-3 to a kink of the composed loss.  Keys map to arrays with the
    quantity's natural shape; "overall" is the per-sample minimum.
    Units are the quantity's own (lengths in pose units, angles in
    radians, arccos arguments dimensionless).

    Kinks of an inactive branch are invisible: where a quantity sits
    strictly inside its interval (or an angle point strictly inside its
    hull) the local loss is identically zero, so smoothness kinks of
    that branch (arccos arguments, octant signs, edge ties) only count
    when the branch's penalty is active.
    """
    joints = np.asarray(getattr(pose, "joints", pose), dtype=np.float64)
    q = pose_quantities(joints)
    out: dict[str, np.ndarray] = {}
    out["bone_length"] = _interval_margin(ad.val(q.lengths), *limits.bounds("bone_length"))
    out["curvature"] = _interval_margin(ad.val(q.curvatures), *limits.bounds("curvature"))
    out["angular_distance"] = _interval_margin(
        ad.val(q.angular_distances), *limits.bounds("angular_distance"))

    s_lo, s_hi = limits.bounds("angular_distance")
    spread = ad.val(q.angular_distances)
    spread_active = (spread < s_lo) | (spread > s_hi)
    out["acos_spread"] = np.where(
        spread_active, np.minimum(spread, np.pi - spread), np.inf)

    flexion = ad.val(q.flexion)
    abduction = ad.val(q.abduction)
    out["hull_boundary"] = _boundary_distance(
        limits.hull_vertex_array(), flexion, abduction)
    tables = edge_tables(limits.angle_hulls)
    active = ~contains_many(tables, flexion, abduction)
    inf = np.full_like(flexion, np.inf)
    # octant sign flips only jump when the angle itself is nonzero
    out["octant_x"] = np.where(active & (np.abs(flexion) > 1e-6),
                               np.abs(q.local_x), inf)
    out["octant_y"] = np.where(active & (np.abs(abduction) > 1e-6),
                               np.abs(q.local_y), inf)
    # arccos clamp margins measured in radians from the clamped angle
    out["acos_flexion"] = np.where(
        active, np.minimum(np.abs(flexion), np.pi - np.abs(flexion)), inf)
    out["acos_abduction"] = np.where(active, np.abs(abduction), inf)
    out["gimbal"] = np.where(active, np.pi / 2.0 - np.abs(abduction), inf)

    per_edge, pf, pa, along = edge_projections(tables, flexion, abduction)
    best = np.argmin(per_edge, axis=-1)[..., None]
    d_best = np.take_along_axis(per_edge, best, axis=-1)
    f_best = np.take_along_axis(pf, best, axis=-1)
    a_best = np.take_along_axis(pa, best, axis=-1)
    # edges projecting to the same boundary point tie benignly (same
    # local function); only distinct-projection ties are kinks
    same = np.hypot(pf - f_best, pa - a_best) < 1e-9
    others = np.where(same, np.inf, per_edge)
    out["edge_tie"] = np.where(active, others.min(axis=-1) - d_best[..., 0], inf)
    t_best = np.take_along_axis(along, best, axis=-1)[..., 0]
    len_sq = np.broadcast_to(tables.length_sq, along.shape)
    edge_len = np.sqrt(np.take_along_axis(len_sq, best, axis=-1)[..., 0])
    t_margin = np.minimum(np.abs(t_best), np.abs(t_best - 1.0)) * edge_len
    out["edge_clamp"] = np.where(active, t_margin, inf)

    lead = joints.shape[:-2]
    mins = [v.reshape(lead + (-1,)).min(axis=-1) for v in out.values()]
    out["overall"] = np.min(np.stack(mins, axis=-1), axis=-1)
    return out


_EXACT = 1e-9


def kink_flags(joints, limits: LimitSet) -> np.ndarray:
    """Per-joint flags set where a kink/clamp/boundary is hit exactly.

    A quantity sitting within 1e-9 of an interval endpoint, hull
    boundary, octant sign flip or degeneracy marks every joint that
    feeds it (static support sets).
    """
    joints = np.asarray(joints, dtype=np.float64)
    if joints.shape != (21, 3):
        raise ValueError("kink_flags expects a single 21x3 pose")
    q = pose_quantities(joints)
    m = kink_margins(joints, limits)
    flags = np.zeros(21, dtype=bool)

    for i in np.flatnonzero((m["bone_length"] <= _EXACT) | q.zero_bone):
        flags[[BONE_PARENT_JOINT[i], BONE_CHILD_JOINT[i]]] = True
    for i in np.flatnonzero(
            (m["curvature"] <= _EXACT) | (m["acos_spread"] <= _EXACT)
            | (m["angular_distance"] <= _EXACT)):
        lo_f, hi_f = max(0, i - 1), min(4, i + 2)
        flags[0] = True
        flags[[mcp_joint(f) for f in range(lo_f, hi_f + 1)]] = True
    angle_hit = ((m["hull_boundary"] <= _EXACT)
                 | (np.abs(q.local_x) <= _EXACT) | (np.abs(q.local_y) <= _EXACT)
                 | q.gimbal | q.angle_invalid)
    for b in np.flatnonzero(angle_hit):
        flags[list(_ANGLE_SUPPORT[b])] = True
    if bool(q.palm_bad):
        flags[0] = True
        flags[[mcp_joint(f) for f in range(5)]] = True
    return flags


def _angle_support() -> list[tuple[int, ...]]:
    frame_fingers = {0: (0, 1), 1: (1, 2), 2: (1, 2, 3), 3: (2, 3, 4), 4: (3, 4)}
    out = []
    for b in range(15):
        f, row = divmod(b, 3)
        joints = {0}
        for g in frame_fingers[f] + (f,):
            joints.add(mcp_joint(g))
        for r in range(row + 2):
            joints.add(mcp_joint(f) + r)
        out.append(tuple(sorted(joints)))
    return out


_ANGLE_SUPPORT = _angle_support()
