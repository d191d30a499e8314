"""Projection of arbitrary poses onto the feasible set.

Plain gradient descent with Armijo backtracking on the composed
constraint loss, optionally anchored to the input pose by a quadratic
term (anchor_weight * ||J - J_input||^2).  Feasible points are
stationary (kink subgradients are zero on the feasible side), so an
already feasible pose is returned unchanged.

The loss is piecewise smooth; descent can pin quantities exactly onto
kink manifolds (fitted interval endpoints, hull boundaries, the
absolute-value components of the hull metric) where the negative
gradient points across a "wall" that any step would climb.  When the
line search fails, or accepted moves collapse to sub-1e-11 lengths, a
recovery pass probes the gradient jump across the blocking wall and
re-searches along the direction projected to run parallel to every
discovered wall (the steepest-descent direction of the nonsmooth
objective on the kink manifold).  Walls found this way are cached per
pose while the iterate crawls along a valley and dropped once normal
steps resume.

Each accepted step satisfies the sufficient-decrease condition, so the
recorded objective trace is monotone non-increasing by construction.
A batch of poses descends in lock-step (per-pose step sizes,
acceptance and termination) so one vectorized evaluation serves all
poses per iteration.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .angles import synthesize_pose
from .autodiff import Var, backward
from .errors import ToolkitError
from .hull import contains_many, edge_tables
from .limits import LimitSet, scale_limits
from .losses import LossReport, LossWeights, bmc_loss, bmc_terms, pose_quantities
from .skeleton import HandPose, bones_from_joints

#: Accepted moves shorter than this (pose length units) trigger wall
#: recovery; they indicate zigzag crawling in a kink valley.
_TREADMILL = 1e-11
#: Offset used to probe the gradient jump across a blocking wall.
_PROBE = 1e-9
#: Max cached wall normals per pose and probe attempts per recovery.
_MAX_WALLS = 16
_MAX_PROBES = 6


@dataclass(frozen=True)
class ProjectionConfig:
    """Gradient-descent and line-search parameters.

    The first trial of a line search moves the pose by `initial_step`
    length units (step size initial_step / ||gradient||, warm-started
    from the previously accepted step); `tolerance` stops the descent
    once the constraint loss falls below it.
    """

    max_iterations: int = 2000
    tolerance: float = 1e-9
    anchor_weight: float = 0.0
    initial_step: float = 1.0
    backtrack_factor: float = 0.5
    sufficient_decrease: float = 1e-4
    min_step: float = 1e-16

    def __post_init__(self):
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        for name in ("tolerance", "initial_step", "min_step"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 < self.backtrack_factor < 1.0:
            raise ValueError("backtrack_factor must be in (0, 1)")
        if not 0.0 < self.sufficient_decrease < 1.0:
            raise ValueError("sufficient_decrease must be in (0, 1)")
        if self.anchor_weight < 0.0:
            raise ValueError("anchor_weight must be >= 0")


@dataclass
class ProjectionResult:
    """Projected pose, objective trace and termination status."""

    pose: HandPose
    trace: np.ndarray          # objective after each accepted iterate (incl. start)
    iterations: int
    converged: bool
    stalled: bool
    report: LossReport
    loss_trace: np.ndarray = field(default=None)  # constraint loss per iterate

    @property
    def final_loss(self) -> float:
        return self.report.total


def _pairs_into_hulls(limits: LimitSet, flexion: np.ndarray,
                      abduction: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Project exterior angle pairs onto their hull boundaries (raw plane)."""
    verts = limits.hull_vertex_array()
    contained = contains_many(edge_tables(limits.angle_hulls), flexion, abduction)
    out_f, out_a = flexion.copy(), abduction.copy()
    for b in np.flatnonzero(~contained):
        v = verts[b]
        e = np.roll(v, -1, axis=0) - v
        esq = np.maximum(np.einsum("ij,ij->i", e, e), 1e-300)
        w = np.array([flexion[b], abduction[b]]) - v
        t = np.clip((w[:, 0] * e[:, 0] + w[:, 1] * e[:, 1]) / esq, 0.0, 1.0)
        p = v + t[:, None] * e
        d2 = np.einsum("ij,ij->i", w - t[:, None] * e, w - t[:, None] * e)
        out_f[b], out_a[b] = p[int(np.argmin(d2))]
    return out_f, out_a


def _fk_candidate(joints: np.ndarray, limits: LimitSet) -> np.ndarray | None:
    """Re-synthesize the pose with lengths clamped into their intervals
    and angles projected into their hulls (exact forward kinematics).

    Root-bone directions are kept, so the extraction frames and the
    re-extracted angles match the projected ones: the candidate has
    zero bone-length and angle loss by construction.  Used as a stall
    rescue; callers accept it only if the objective strictly drops.
    """
    q = pose_quantities(joints)
    if bool(q.degenerate):
        return None
    lo, hi = limits.bounds("bone_length")
    lengths = np.clip(ad.val(q.lengths), lo, hi)
    roots = bones_from_joints(joints)[:5]
    norms = np.linalg.norm(roots, axis=-1, keepdims=True)
    roots = roots / norms * lengths[:5, None]
    flexion, abduction = _pairs_into_hulls(
        limits, ad.val(q.flexion), ad.val(q.abduction))
    flexion = np.clip(flexion, -np.pi + 1e-12, np.pi - 1e-12)
    abduction = np.clip(abduction, -np.pi / 2 + 1e-12, np.pi / 2 - 1e-12)
    try:
        pose = synthesize_pose(joints[0], roots, lengths[5:],
                               list(zip(flexion, abduction)))
    except (ToolkitError, ValueError):
        return None
    return pose.joints


def _warm_start(config: ProjectionConfig, d: np.ndarray, warm_t: float) -> float:
    full = config.initial_step / float(np.sqrt(np.sum(d * d)))
    if np.isfinite(warm_t) and warm_t > 0.0:
        return min(full, max(8.0 * warm_t, 1e-2 * full))
    return full


def _tangent_direction(gradient: np.ndarray,
                       walls: list[np.ndarray]) -> np.ndarray | None:
    """-gradient projected to run parallel to every wall normal."""
    d = -gradient.copy()
    for _ in range(4 * max(1, len(walls))):
        worst, worst_s = None, 1e-15
        for n in walls:
            s = abs(float(np.sum(n * d)))
            if s > worst_s:
                worst, worst_s = n, s
        if worst is None:
            break
        d = d - float(np.sum(worst * d)) * worst
    dn = float(np.sqrt(np.sum(d * d)))
    slope = float(np.sum(gradient * d))
    if dn < 1e-15 or slope >= -1e-15 * dn:
        return None
    return d


def project_to_feasible(pose: HandPose, limits: LimitSet,
                        weights: LossWeights = LossWeights(),
                        config: ProjectionConfig = ProjectionConfig(),
                        ) -> ProjectionResult:
    """Project one pose onto the feasible set; see project_batch."""
    return project_batch([pose], limits, weights, config)[0]


def project_batch(poses, limits: LimitSet, weights: LossWeights = LossWeights(),
                  config: ProjectionConfig = ProjectionConfig(),
                  ) -> list[ProjectionResult]:
    """Project a batch of poses by lock-step gradient descent.

    Every pose descends independently (own step size, own acceptance,
    own termination); results come back in input order.  Evaluation is
    lenient: degenerate iterates incur the large constant penalty with
    zero gradient, which stalls that pose rather than raising.
    """
    inputs = [p if isinstance(p, HandPose) else HandPose(np.asarray(p)) for p in poses]
    if not inputs:
        return []
    n = len(inputs)
    anchored = config.anchor_weight > 0.0

    # descend in a normalized frame (mean bone-length bound around 0.4)
    # so curvature walls (units 1/length) and length slopes are
    # comparably conditioned regardless of the caller's length unit
    mids = np.array([(iv.lower + iv.upper) / 2.0 for iv in limits.bone_length])
    mean_mid = float(mids.mean())
    scale = 0.4 / mean_mid if mean_mid > 1e-12 else 1.0
    scale = float(np.clip(scale, 1e-6, 1e6))
    work_limits = scale_limits(limits, scale) if scale != 1.0 else limits
    anchor_w = config.anchor_weight / (scale * scale)

    x = np.stack([p.joints for p in inputs]) * scale  # (N, 21, 3), normalized
    x0 = x.copy()

    def objective(joints: np.ndarray, ref: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(descent objective, normalized constraint loss), values only."""
        loss = ad.val(bmc_terms(joints, work_limits, weights, lenient=True).total)
        if anchored:
            anchor = anchor_w * np.sum((joints - ref) ** 2, axis=(-2, -1))
            return loss + anchor, loss
        return loss, loss

    def gradient(joints: np.ndarray, ref: np.ndarray):
        j = Var(joints)
        parts = bmc_terms(j, work_limits, weights, lenient=True)
        loss = ad.val(parts.total)
        g = backward(parts.total, j)
        if anchored:
            obj = loss + anchor_w * np.sum((joints - ref) ** 2, axis=(-2, -1))
            g = g + 2.0 * anchor_w * (joints - ref)
            return obj, loss, g
        return loss, loss, g

    def true_loss(joints: np.ndarray) -> np.ndarray:
        """Constraint loss in the caller's unit system."""
        return ad.val(bmc_terms(joints / scale, limits, weights, lenient=True).total)

    def search(xi: np.ndarray, fi: float, d: np.ndarray, slope: float,
               ref: np.ndarray, t_start: float) -> tuple[float, np.ndarray, float] | None:
        """Backtracking Armijo search along d; (t, point, f) or None."""
        dn = float(np.sqrt(np.sum(d * d)))
        t = t_start
        while t * dn >= config.min_step:
            cand = xi + t * d
            f_t, _ = objective(cand[None], ref[None])
            if f_t[0] <= fi + config.sufficient_decrease * t * slope:
                return t, cand, float(f_t[0])
            t *= config.backtrack_factor
        return None

    def sq_gradient(joints: np.ndarray) -> np.ndarray:
        """Gradient of the squared-penalty surrogate (same zero set,
        C1 smooth); a fallback direction source at kink corners."""
        j = Var(joints)
        parts = bmc_terms(j, work_limits, weights, lenient=True)
        sq = (weights.bone_length * ad.vmean(parts.length_penalties ** 2, axis=-1)
              + weights.root_bone * ad.vmean(parts.curvature_penalties ** 2
                                             + parts.spread_penalties ** 2, axis=-1)
              + weights.angle * ad.vmean(parts.angle_terms ** 2, axis=-1))
        return backward(sq, j)

    def recover(pose_i: int, fi: float, gi: np.ndarray, warm_t: float,
                walls: list[np.ndarray]) -> tuple[float, np.ndarray, float] | None:
        """Probe blocking walls and search along wall-parallel directions.

        Discovered walls stay in the pose's cache so later iterations
        project their directions for free.  As a last resort the
        squared-surrogate antigradient is tried: it balances opposing
        wall slopes and is often a usable descent direction exactly at
        kink corners.
        """
        xi, ref = x[pose_i], x0[pose_i]
        cand = _fk_candidate(xi, work_limits)
        if cand is not None:
            f_c, _ = objective(cand[None], ref[None])
            if f_c[0] < fi:
                move = float(np.sqrt(np.sum((cand - xi) ** 2)))
                return max(move, config.min_step), cand, float(f_c[0])
        for _ in range(_MAX_PROBES):
            d = _tangent_direction(gi, walls)
            if d is None:
                break
            dn = float(np.sqrt(np.sum(d * d)))
            hit = search(xi, fi, d, float(np.sum(gi * d)), ref,
                         _warm_start(config, d, warm_t))
            if hit is not None:
                return hit
            probe = xi + (_PROBE / dn) * d
            _, _, g_probe = gradient(probe[None], ref[None])
            jump = g_probe[0] - gi
            jn = float(np.sqrt(np.sum(jump * jump)))
            if jn <= 1e-8 * (1.0 + float(np.sqrt(np.sum(gi * gi)))):
                break
            walls.append(jump / jn)
            del walls[:-_MAX_WALLS]
        d = -sq_gradient(xi[None])[0]
        slope = float(np.sum(gi * d))
        if slope < 0.0:
            hit = search(xi, fi, d, slope, ref, _warm_start(config, d, warm_t))
            if hit is not None:
                return hit
        return None

    f_cur, _ = objective(x, x0)
    loss_cur = true_loss(x)
    traces = [[float(f_cur[i])] for i in range(n)]
    loss_traces = [[float(loss_cur[i])] for i in range(n)]
    iterations = np.zeros(n, dtype=int)
    stalled = np.zeros(n, dtype=bool)
    active = loss_cur > config.tolerance
    step = np.full(n, np.nan)
    wall_cache: list[list[np.ndarray]] = [[] for _ in range(n)]

    for _ in range(config.max_iterations):
        if not active.any():
            break
        idx = np.flatnonzero(active)
        obj_a, _, grad_a = gradient(x[idx], x0[idx])
        f_cur[idx] = obj_a
        gnorm = np.sqrt(np.sum(grad_a ** 2, axis=(-2, -1)))
        zero_grad = gnorm <= 0.0
        if zero_grad.any():
            rows = idx[zero_grad]
            stalled[rows] = True
            active[rows] = False
            idx = idx[~zero_grad]
            grad_a = grad_a[~zero_grad]
            gnorm = gnorm[~zero_grad]
            if idx.size == 0:
                continue
        # per-pose search direction: the antigradient, projected to run
        # parallel to any cached valley walls
        direction = -grad_a
        for k, pose_i in enumerate(idx):
            if wall_cache[pose_i]:
                d = _tangent_direction(grad_a[k], wall_cache[pose_i])
                if d is not None:
                    direction[k] = d
        slope = np.sum(grad_a * direction, axis=(-2, -1))
        dnorm = np.sqrt(np.sum(direction ** 2, axis=(-2, -1)))
        base = config.initial_step / dnorm
        warm = step[idx] * 2.0
        t = np.where(np.isnan(warm), base, np.minimum(base, warm))

        searching = np.ones(len(idx), dtype=bool)
        accepted = np.zeros(len(idx), dtype=bool)
        trial = x[idx].copy()
        f_tr = f_cur[idx].copy()
        while searching.any():
            sub = np.flatnonzero(searching)
            cand = x[idx[sub]] + t[sub, None, None] * direction[sub]
            f_t, _ = objective(cand, x0[idx[sub]])
            needed = (f_cur[idx[sub]]
                      + config.sufficient_decrease * t[sub] * slope[sub])
            good = f_t <= needed
            trial[sub[good]] = cand[good]
            f_tr[sub[good]] = f_t[good]
            accepted[sub[good]] = True
            searching[sub[good]] = False
            shrink = sub[~good]
            t[shrink] *= config.backtrack_factor
            dead = shrink[t[shrink] * dnorm[shrink] < config.min_step]
            searching[dead] = False

        # failed searches, microscopic moves and (rate-limited) stalled
        # progress go through wall recovery; a successful full-size step
        # leaves valley mode
        for k in range(len(idx)):
            pose_i = idx[k]
            if accepted[k]:
                move = float(np.sqrt(np.sum((trial[k] - x[pose_i]) ** 2)))
                progress = f_cur[pose_i] - f_tr[k]
                healthy = (move >= _TREADMILL
                           and progress > 1e-4 * max(f_tr[k], config.tolerance))
                if healthy or iterations[pose_i] % 8 != 0:
                    if move >= 1e-4 * config.initial_step:
                        wall_cache[pose_i].clear()
                    continue
            hit = recover(pose_i, float(f_cur[pose_i]), grad_a[k],
                          float(step[pose_i]), wall_cache[pose_i])
            if hit is not None and (not accepted[k] or hit[2] < f_tr[k]):
                t[k], trial[k], f_tr[k] = hit
                accepted[k] = True
            elif not accepted[k]:
                stalled[pose_i] = True
                active[pose_i] = False

        moved = np.flatnonzero(accepted)
        if moved.size:
            rows = idx[moved]
            x[rows] = trial[moved]
            step[rows] = t[moved]
            iterations[rows] += 1
            f_new, _ = objective(x[rows], x0[rows])
            loss_new = true_loss(x[rows])
            f_cur[rows] = f_new
            loss_cur[rows] = loss_new
            for k, i in enumerate(rows):
                traces[i].append(float(f_new[k]))
                loss_traces[i].append(float(loss_new[k]))
            done = rows[loss_new <= config.tolerance]
            active[done] = False

    results = []
    for i in range(n):
        converged = loss_cur[i] <= config.tolerance
        if iterations[i] == 0:
            out_pose = inputs[i]  # untouched input, bit-identical
        else:
            out_pose = HandPose(x[i] / scale)
        report = bmc_loss(out_pose, limits, weights, mode="lenient",
                          with_gradient=False)
        results.append(ProjectionResult(
            pose=out_pose, trace=np.asarray(traces[i]), iterations=int(iterations[i]),
            converged=bool(converged), stalled=bool(stalled[i]), report=report,
            loss_trace=np.asarray(loss_traces[i])))
    return results
