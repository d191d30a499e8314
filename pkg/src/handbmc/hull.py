"""Fixed-size convex polygons bounding feasible (flexion, abduction) pairs.

A bone's feasible angle region is approximated by a 10-vertex convex
counter-clockwise polygon.  Building one from data runs:

1. exact convex hull (monotone chain, strict turns);
2. if more than 10 vertices: Ramer-Douglas-Peucker simplification of
   the closed hull (tolerance in radians), then greedy vertex removal
   (drop the vertex whose deletion keeps the most input points
   enclosed, ties by smallest index) down to 10;
3. a containment repair pass that shifts any violated edge line outward
   by its worst violation plus 1e-9 and re-intersects neighbouring
   edges, so every input point ends up inside the final polygon;
4. if fewer than 10 vertices: midpoints of the longest edges are
   inserted (collinear padding) until there are exactly 10.

Containment uses the 2D cross product sign per edge (boundary counts as
inside).  The distance of a point to the polygon projects onto each
edge in raw angle coordinates but measures the offset through the
cos/sin embedding of both coordinates (wraparound-aware), exactly

    D_k = |cos t - cos p_k| + |sin t - sin p_k|   (elementwise, 4 terms)

minimized over the 10 edges.  The loss term is 0 for contained points
and this distance otherwise.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import autodiff as ad
from .errors import DegenerateDistribution, InsufficientPoints

HULL_SIZE = 10
#: Default Ramer-Douglas-Peucker tolerance, radians.
RDP_TOLERANCE = 0.01
#: Outward slack added when repairing containment, radians.
REPAIR_PAD = 1e-9


def _cross2(a, b):
    """z component of the 2D cross product, last-axis semantics."""
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


@dataclass(frozen=True)
class AngleHull:
    """Ordered 10-vertex convex CCW polygon on the (flexion, abduction) plane."""

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64)
        if v.shape != (HULL_SIZE, 2):
            raise ValueError(f"hull must have exactly {HULL_SIZE} 2D vertices, got {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("hull vertices must be finite")
        edges = np.roll(v, -1, axis=0) - v
        lengths = np.linalg.norm(edges, axis=-1)
        if np.any(lengths == 0.0):
            raise ValueError("hull has coincident consecutive vertices")
        turns = _cross2(edges, np.roll(edges, -1, axis=0))
        scale = float(np.max(lengths)) ** 2
        if np.any(turns < -1e-9 * max(scale, 1e-300)):
            raise ValueError("hull must be convex (no clockwise turns)")
        area = 0.5 * float(np.sum(_cross2(v, np.roll(v, -1, axis=0))))
        if area <= 0.0:
            raise ValueError("hull must be oriented counter-clockwise with positive area")
        v = v.copy()
        v.flags.writeable = False
        object.__setattr__(self, "vertices", v)

    @property
    def area(self) -> float:
        v = self.vertices
        return 0.5 * float(np.sum(_cross2(v, np.roll(v, -1, axis=0))))


class EdgeTables(NamedTuple):
    """Constant per-edge arrays of one or more hulls, shape (K, 10, ...)."""

    start: np.ndarray     # (K, 10, 2) edge start vertices
    direction: np.ndarray  # (K, 10, 2) edge vectors (wrapping)
    length_sq: np.ndarray  # (K, 10) with zero-length edges replaced by 1
    degenerate: np.ndarray  # (K, 10) mask of zero-length edges


def edge_tables(hulls) -> EdgeTables:
    """Precompute edge constants for a hull or a sequence of hulls."""
    if isinstance(hulls, AngleHull):
        verts = hulls.vertices[None]
    else:
        verts = np.stack([h.vertices for h in hulls])
    direction = np.roll(verts, -1, axis=1) - verts
    length_sq = np.einsum("kij,kij->ki", direction, direction)
    degenerate = length_sq < 1e-300
    return EdgeTables(start=verts, direction=direction,
                      length_sq=np.where(degenerate, 1.0, length_sq),
                      degenerate=degenerate)


def contains_many(tables: EdgeTables, flexion: np.ndarray, abduction: np.ndarray) -> np.ndarray:
    """Vectorized containment: (..., K) point arrays against K hulls.

    True iff the point is inside or on the boundary: the 2D cross
    product (point - start) x direction is <= 0 for every edge of the
    CCW polygon.
    """
    wf = flexion[..., None] - tables.start[..., 0]
    wa = abduction[..., None] - tables.start[..., 1]
    crossed = wf * tables.direction[..., 1] - wa * tables.direction[..., 0]
    return np.all(crossed <= 0.0, axis=-1)


def edge_distances(tables: EdgeTables, flexion, abduction):
    """Embedded-metric distance to every edge, shape (..., K, 10).

    The edge parameter comes from the raw-angle projection (clamped to
    the segment); the offset to the projected point is measured through
    cos/sin of both coordinates.
    """
    tf = ad.expand_last(flexion)   # (..., K, 1)
    ta = ad.expand_last(abduction)
    hf, ha = tables.start[..., 0], tables.start[..., 1]
    vf, va = tables.direction[..., 0], tables.direction[..., 1]

    along = ((tf - hf) * vf + (ta - ha) * va) / tables.length_sq
    t = ad.clip(along, 0.0, 1.0)
    pf = hf + t * vf
    pa = ha + t * va
    per_edge = (ad.absolute(ad.cos(tf) - ad.cos(pf))
                + ad.absolute(ad.sin(tf) - ad.sin(pf))
                + ad.absolute(ad.cos(ta) - ad.cos(pa))
                + ad.absolute(ad.sin(ta) - ad.sin(pa)))
    if tables.degenerate.any():
        per_edge = ad.where(tables.degenerate, np.full_like(ad.val(per_edge), np.inf),
                            per_edge)
    return per_edge


def distance_many(tables: EdgeTables, flexion, abduction):
    """Minimum embedded-metric edge distance to each of K hulls.

    `flexion`/`abduction` have shape (..., K); the result does too.
    """
    return ad.vmin(edge_distances(tables, flexion, abduction), axis=-1)


def edge_projections(tables: EdgeTables, flexion: np.ndarray, abduction: np.ndarray):
    """Value-level per-edge details: (distances, proj_f, proj_a, raw_t).

    Same formulas as `edge_distances`, ndarray only; used for kink
    diagnostics.
    """
    tf = flexion[..., None]
    ta = abduction[..., None]
    hf, ha = tables.start[..., 0], tables.start[..., 1]
    vf, va = tables.direction[..., 0], tables.direction[..., 1]
    along = ((tf - hf) * vf + (ta - ha) * va) / tables.length_sq
    t = np.clip(along, 0.0, 1.0)
    pf = hf + t * vf
    pa = ha + t * va
    dist = (np.abs(np.cos(tf) - np.cos(pf)) + np.abs(np.sin(tf) - np.sin(pf))
            + np.abs(np.cos(ta) - np.cos(pa)) + np.abs(np.sin(ta) - np.sin(pa)))
    if tables.degenerate.any():
        dist = np.where(tables.degenerate, np.inf, dist)
    return dist, pf, pa, along


def _point(p) -> tuple[float, float]:
    if hasattr(p, "flexion"):
        return float(p.flexion), float(p.abduction)
    f, a = p
    return float(f), float(a)


def contains(hull: AngleHull, point) -> bool:
    """True iff the angle point is inside the hull or on its boundary."""
    f, a = _point(point)
    return bool(contains_many(edge_tables(hull), np.array([f]), np.array([a]))[0])


def hull_distance(hull: AngleHull, point) -> float:
    """Minimum embedded-metric distance from the point to the hull edges."""
    f, a = _point(point)
    return float(distance_many(edge_tables(hull), np.array([f]), np.array([a]))[0])


def angle_loss_term(hull: AngleHull, point) -> float:
    """0 for contained points, hull_distance otherwise."""
    if contains(hull, point):
        return 0.0
    return hull_distance(hull, point)


# ---------------------------------------------------------------------------
# Hull construction
# ---------------------------------------------------------------------------

#: Distributions thinner than this (radians) across their long axis are
#: treated as collinear.
_COLLINEAR_EPS = 1e-8


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Monotone chain; CCW strict hull (collinear points dropped)."""
    pts = np.unique(points, axis=0)  # lexicographic sort + dedupe
    if len(pts) < 3:
        raise DegenerateDistribution("fewer than 3 distinct angle points")

    def half(seq):
        out: list[np.ndarray] = []
        for p in seq:
            while len(out) >= 2 and _cross2(out[-1] - out[-2], p - out[-2]) <= 0.0:
                out.pop()
            out.append(p)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        raise DegenerateDistribution("angle points are collinear")
    area = 0.5 * float(np.sum(_cross2(hull, np.roll(hull, -1, axis=0))))
    diameter = float(np.linalg.norm(hull.max(axis=0) - hull.min(axis=0)))
    if diameter > 0.0 and 2.0 * area / diameter < _COLLINEAR_EPS:
        raise DegenerateDistribution("angle points are collinear within tolerance")
    return hull


def _rdp_chain(chain: np.ndarray, tol: float) -> np.ndarray:
    """Standard RDP on an open polyline, keeping endpoints."""
    if len(chain) <= 2:
        return chain
    start, end = chain[0], chain[-1]
    seg = end - start
    seg_len = np.linalg.norm(seg)
    if seg_len == 0.0:
        dists = np.linalg.norm(chain[1:-1] - start, axis=-1)
    else:
        dists = np.abs(_cross2(seg, chain[1:-1] - start)) / seg_len
    worst = int(np.argmax(dists))
    if dists[worst] <= tol:
        return np.array([start, end])
    left = _rdp_chain(chain[:worst + 2], tol)
    right = _rdp_chain(chain[worst + 1:], tol)
    return np.concatenate([left[:-1], right])


def _rdp_closed(verts: np.ndarray, tol: float) -> np.ndarray:
    """RDP on a closed polygon, anchored at the two most distant vertices."""
    diff = verts[:, None, :] - verts[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    i, j = np.unravel_index(int(np.argmax(d2)), d2.shape)
    i, j = min(i, j), max(i, j)
    chain_a = verts[i:j + 1]
    chain_b = np.concatenate([verts[j:], verts[:i + 1]])
    out_a = _rdp_chain(chain_a, tol)
    out_b = _rdp_chain(chain_b, tol)
    return np.concatenate([out_a[:-1], out_b[:-1]])


def _count_inside(verts: np.ndarray, points: np.ndarray, slack: float) -> int:
    """Points inside the polygon or within `slack` of its boundary.

    The slack matches the RDP tolerance: points the simplification gave
    away still count as encompassed, which keeps the greedy counts
    informative (and the removals balanced) on dense boundaries.
    """
    edges = np.roll(verts, -1, axis=0) - verts
    lengths = np.linalg.norm(edges, axis=-1)
    w = points[:, None, :] - verts[None, :, :]
    crossed = w[..., 0] * edges[None, :, 1] - w[..., 1] * edges[None, :, 0]
    return int(np.all(crossed <= slack * lengths[None, :], axis=-1).sum())


def _greedy_reduce(verts: np.ndarray, points: np.ndarray, target: int,
                   slack: float) -> np.ndarray:
    """Remove vertices one by one, keeping the most points enclosed
    (ties go to the smallest vertex index)."""
    verts = verts.copy()
    while len(verts) > target:
        best_k, best_count = 0, -1
        for k in range(len(verts)):
            candidate = np.delete(verts, k, axis=0)
            count = _count_inside(candidate, points, slack)
            if count > best_count:
                best_k, best_count = k, count
        verts = np.delete(verts, best_k, axis=0)
    return verts


def _edge_violations(verts: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Max signed outward distance of any point beyond each edge line."""
    edges = np.roll(verts, -1, axis=0) - verts
    lengths = np.linalg.norm(edges, axis=-1)
    w = points[:, None, :] - verts[None, :, :]
    crossed = w[..., 0] * edges[None, :, 1] - w[..., 1] * edges[None, :, 0]
    return crossed.max(axis=0) / np.where(lengths == 0.0, 1.0, lengths)


def _repair_containment(verts: np.ndarray, points: np.ndarray,
                        force: bool = False) -> np.ndarray | None:
    """Shift violated edge lines outward and re-intersect; None on failure.

    With `force` every edge moves out by at least the pad, which puts
    all input points strictly inside (guards against 1-ulp sign flips
    when padding later re-anchors the cross products).
    """
    violations = _edge_violations(verts, points)
    if not force and np.all(violations <= 0.0):
        return verts
    base = REPAIR_PAD if force else 0.0
    shift = np.where(violations > 0.0, violations + REPAIR_PAD, base)
    edges = np.roll(verts, -1, axis=0) - verts
    lengths = np.linalg.norm(edges, axis=-1)
    if np.any(lengths == 0.0):
        return None
    outward = np.stack([edges[:, 1], -edges[:, 0]], axis=-1) / lengths[:, None]
    anchor = verts + outward * shift[:, None]
    # vertex k = intersection of (shifted) edge lines k-1 and k
    new = np.empty_like(verts)
    for k in range(len(verts)):
        a0, d0 = anchor[k - 1], edges[k - 1]
        a1, d1 = anchor[k], edges[k]
        det = d0[0] * d1[1] - d0[1] * d1[0]
        if abs(det) < 1e-300:
            return None
        s = ((a1[0] - a0[0]) * d1[1] - (a1[1] - a0[1]) * d1[0]) / det
        new[k] = a0 + s * d0
    limit = -REPAIR_PAD / 2.0 if force else 0.0
    if np.any(_edge_violations(new, points) > limit):
        return None
    turns = _cross2(np.roll(new, -1, axis=0) - new,
                    np.roll(new, -2, axis=0) - np.roll(new, -1, axis=0))
    if np.any(turns < 0.0):
        return None
    return new


def _pad_midpoints(verts: np.ndarray, target: int) -> np.ndarray:
    """Insert midpoints of the longest edges until `target` vertices."""
    verts = list(verts)
    while len(verts) < target:
        arr = np.array(verts)
        lengths = np.linalg.norm(np.roll(arr, -1, axis=0) - arr, axis=-1)
        k = int(np.argmax(lengths))
        mid = (arr[k] + arr[(k + 1) % len(verts)]) / 2.0
        verts.insert(k + 1, mid)
    return np.array(verts)


def enclosing_decagon(points: np.ndarray, pad: float = 1e-6) -> AngleHull:
    """Regular decagon circumscribing all points (fallback for degenerate data).

    The decagon's incircle radius is the max point distance from the
    bounding-box center plus `pad`, so every input point is strictly
    inside.
    """
    points = np.asarray(points, dtype=np.float64)
    center = (points.min(axis=0) + points.max(axis=0)) / 2.0
    radius = float(np.linalg.norm(points - center, axis=-1).max()) + pad
    outer = radius / np.cos(np.pi / HULL_SIZE)
    ang = 2.0 * np.pi * np.arange(HULL_SIZE) / HULL_SIZE
    verts = center + outer * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    return AngleHull(verts)


def build_hull(points, rdp_tolerance: float = RDP_TOLERANCE) -> AngleHull:
    """Build the 10-vertex bounding polygon of a set of angle points.

    Deterministic for a fixed input; every input point is inside the
    result.  Raises InsufficientPoints (< 10 points) or
    DegenerateDistribution (collinear/collapsed distribution).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValueError(f"points must be (N, 2), got {pts.shape}")
    if len(pts) < HULL_SIZE:
        raise InsufficientPoints(f"need at least {HULL_SIZE} points, got {len(pts)}")
    if not np.all(np.isfinite(pts)):
        raise ValueError("angle points must be finite")

    reduced = _convex_hull(pts)
    if len(reduced) > HULL_SIZE:
        reduced = _rdp_closed(reduced, rdp_tolerance)
        if len(reduced) > HULL_SIZE:
            reduced = _greedy_reduce(reduced, pts, HULL_SIZE, rdp_tolerance)
    if len(reduced) < 3:
        return enclosing_decagon(pts)

    # strict-hull construction drops collinear inputs and the
    # simplification steps can exclude points; shift any violated edge
    # line outward so every input point ends up inside.  If the padded
    # result still grazes a point (1-ulp sign flips against the new
    # midpoint anchors), redo the repair with a forced outward pad.
    for force in (False, True):
        repaired = _repair_containment(reduced, pts, force=force)
        if repaired is None:
            break
        verts = repaired
        if len(verts) < HULL_SIZE:
            verts = _pad_midpoints(verts, HULL_SIZE)
        if np.any(_edge_violations(verts, pts) > 0.0):
            continue
        try:
            return AngleHull(verts)
        except ValueError:
            break
    # numerically awkward geometry: fall back to a safe cover
    return enclosing_decagon(pts)
