"""Fitting and serialization of the complete feasibility parameter set.

A LimitSet holds every fitted parameter: 20 bone-length intervals,
4 palm-curvature intervals (unit 1/length — same length unit as the
poses), 4 root-bone spread intervals (radians) and 15 angle hulls.

Fitting takes the [q, 1-q] empirical quantiles of each scalar quantity
(q = 0 gives exact min/max) and builds the hulls from all extracted
angle pairs, so with q = 0 every corpus sample evaluates to exactly
zero loss under its own limits.

The file format is a single versioned JSON object; floats are written
with full round-trip precision, so save -> load is bit-exact.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (DegenerateDistribution, DegenerateSample,
                     InsufficientData, SchemaError)
from .hull import HULL_SIZE, RDP_TOLERANCE, AngleHull, build_hull, enclosing_decagon
from .skeleton import HandPose, Interval, N_BONES

SCHEMA_VERSION = 1

#: Padding (radians) of the fallback decagon used for degenerate angle
#: distributions (e.g. a corpus of identical poses).
DEGENERATE_HULL_PAD = 1e-6


@dataclass(frozen=True)
class LimitMetadata:
    source: str = ""
    sample_count: int = 0
    length_unit: str = "m"
    quantile: float = 0.0


@dataclass(frozen=True)
class LimitSet:
    """All fitted feasibility parameters of the constraint model."""

    bone_length: tuple
    curvature: tuple
    angular_distance: tuple
    angle_hulls: tuple
    metadata: LimitMetadata = LimitMetadata()

    def __post_init__(self):
        groups = (("bone_length", N_BONES), ("curvature", 4), ("angular_distance", 4))
        for name, count in groups:
            items = tuple(getattr(self, name))
            if len(items) != count or not all(isinstance(iv, Interval) for iv in items):
                raise ValueError(f"{name} must be {count} Intervals")
            object.__setattr__(self, name, items)
        hulls = tuple(self.angle_hulls)
        if len(hulls) != 15 or not all(isinstance(h, AngleHull) for h in hulls):
            raise ValueError("angle_hulls must be 15 AngleHulls")
        object.__setattr__(self, "angle_hulls", hulls)

    def bounds(self, group: str) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) arrays of an interval group."""
        items = getattr(self, group)
        return (np.array([iv.lower for iv in items]),
                np.array([iv.upper for iv in items]))

    def hull_vertex_array(self) -> np.ndarray:
        return np.stack([h.vertices for h in self.angle_hulls])


def fit_limits(corpus: Sequence[HandPose] | np.ndarray, quantile: float = 0.0,
               mode: str = "strict", source: str = "fit",
               length_unit: str = "m",
               rdp_tolerance: float = RDP_TOLERANCE) -> LimitSet:
    """Fit a LimitSet from at least 10 non-degenerate poses.

    `quantile` in [0, 0.5) sets intervals to the [q, 1-q] empirical
    quantiles (0 = exact min/max).  Hulls are always built from all
    extracted angle pairs.  Degenerate samples raise DegenerateSample
    in strict mode and are skipped with a warning in lenient mode.
    """
    from .losses import pose_quantities  # local import; losses builds on limits

    if not 0.0 <= quantile < 0.5:
        raise ValueError(f"quantile must be in [0, 0.5), got {quantile}")
    if mode not in ("strict", "lenient"):
        raise ValueError(f"mode must be 'strict' or 'lenient', got {mode!r}")
    joints = np.stack([np.asarray(getattr(p, "joints", p), dtype=np.float64)
                       for p in corpus])
    if joints.ndim != 3 or joints.shape[1:] != (21, 3):
        raise ValueError(f"corpus must be N x 21 x 3, got {joints.shape}")

    q = pose_quantities(joints)
    bad = q.degenerate
    if bad.any():
        first = int(np.argmax(bad))
        if mode == "strict":
            raise DegenerateSample(first, "degenerate pose (palm, zero bone or gimbal)")
        for idx in np.flatnonzero(bad):
            warnings.warn(f"fit_limits: skipping degenerate sample {int(idx)}",
                          stacklevel=2)
        keep = ~bad
        joints = joints[keep]
        q = pose_quantities(joints)
    if len(joints) < 10:
        raise InsufficientData(
            f"need at least 10 non-degenerate poses, got {len(joints)}")

    def intervals(values: np.ndarray) -> tuple[Interval, ...]:
        lo = np.quantile(values, quantile, axis=0)
        hi = np.quantile(values, 1.0 - quantile, axis=0)
        return tuple(Interval(float(a), float(b)) for a, b in zip(lo, hi))

    hulls = []
    for b in range(15):
        pts = np.stack([q.flexion[:, b], q.abduction[:, b]], axis=-1)
        try:
            hulls.append(build_hull(pts, rdp_tolerance=rdp_tolerance))
        except DegenerateDistribution:
            hulls.append(enclosing_decagon(pts, pad=DEGENERATE_HULL_PAD))

    return LimitSet(
        bone_length=intervals(q.lengths),
        curvature=intervals(q.curvatures),
        angular_distance=intervals(q.angular_distances),
        angle_hulls=tuple(hulls),
        metadata=LimitMetadata(source=source, sample_count=len(joints),
                               length_unit=length_unit, quantile=float(quantile)))


def scale_limits(limits: LimitSet, factor: float) -> LimitSet:
    """Limits matching poses whose coordinates are multiplied by `factor`.

    Bone-length bounds scale with the factor, curvature bounds with its
    inverse (curvature has units 1/length); spread angles and angle
    hulls are scale-free.
    """
    f = float(factor)
    if not np.isfinite(f) or f <= 0.0:
        raise ValueError(f"scale factor must be positive and finite, got {factor}")
    meta = limits.metadata
    return LimitSet(
        bone_length=tuple(Interval(iv.lower * f, iv.upper * f)
                          for iv in limits.bone_length),
        curvature=tuple(Interval(iv.lower / f, iv.upper / f)
                        for iv in limits.curvature),
        angular_distance=limits.angular_distance,
        angle_hulls=limits.angle_hulls,
        metadata=LimitMetadata(source=f"{meta.source} (rescaled x{f:g})",
                               sample_count=meta.sample_count,
                               length_unit=meta.length_unit,
                               quantile=meta.quantile))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def save_limits(limits: LimitSet, path) -> None:
    """Write a LimitSet as versioned JSON (floats at full precision)."""
    doc = {
        "version": SCHEMA_VERSION,
        "metadata": {
            "source": limits.metadata.source,
            "sample_count": limits.metadata.sample_count,
            "length_unit": limits.metadata.length_unit,
            "quantile": limits.metadata.quantile,
        },
        "bone_length": [[iv.lower, iv.upper] for iv in limits.bone_length],
        "curvature": [[iv.lower, iv.upper] for iv in limits.curvature],
        "angular_distance": [[iv.lower, iv.upper] for iv in limits.angular_distance],
        "angle_hulls": [h.vertices.tolist() for h in limits.angle_hulls],
    }
    Path(path).write_text(json.dumps(doc, indent=1))


def _interval_list(doc: dict, field: str, count: int) -> tuple[Interval, ...]:
    if field not in doc:
        raise SchemaError(field, "missing field")
    raw = doc[field]
    if not isinstance(raw, list) or len(raw) != count:
        raise SchemaError(field, f"expected a list of {count} [lower, upper] pairs")
    out = []
    for i, pair in enumerate(raw):
        if (not isinstance(pair, list) or len(pair) != 2
                or not all(isinstance(x, (int, float)) for x in pair)):
            raise SchemaError(f"{field}[{i}]", "expected [lower, upper] numbers")
        lo, hi = float(pair[0]), float(pair[1])
        if not (np.isfinite(lo) and np.isfinite(hi)):
            raise SchemaError(f"{field}[{i}]", "bounds must be finite")
        if lo > hi:
            raise SchemaError(f"{field}[{i}]", f"lower {lo} > upper {hi}")
        out.append(Interval(lo, hi))
    return tuple(out)


def load_limits(path) -> LimitSet:
    """Read a LimitSet; schema violations raise SchemaError naming the field."""
    try:
        text = Path(path).read_text()
    except OSError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("(root)", f"not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("(root)", "limit file must be a JSON object")
    if "version" not in doc:
        raise SchemaError("version", "missing field")
    if doc["version"] != SCHEMA_VERSION:
        raise SchemaError("version", f"unsupported version {doc['version']!r}")

    meta_raw = doc.get("metadata")
    if not isinstance(meta_raw, dict):
        raise SchemaError("metadata", "missing or not an object")
    try:
        metadata = LimitMetadata(
            source=str(meta_raw.get("source", "")),
            sample_count=int(meta_raw.get("sample_count", 0)),
            length_unit=str(meta_raw.get("length_unit", "m")),
            quantile=float(meta_raw.get("quantile", 0.0)))
    except (TypeError, ValueError) as exc:
        raise SchemaError("metadata", str(exc)) from exc

    if "angle_hulls" not in doc:
        raise SchemaError("angle_hulls", "missing field")
    raw_hulls = doc["angle_hulls"]
    if not isinstance(raw_hulls, list) or len(raw_hulls) != 15:
        raise SchemaError("angle_hulls", "expected a list of 15 hulls")
    hulls = []
    for i, raw in enumerate(raw_hulls):
        arr = np.asarray(raw, dtype=np.float64)
        if arr.shape != (HULL_SIZE, 2):
            raise SchemaError(f"angle_hulls[{i}]",
                              f"expected {HULL_SIZE} [flexion, abduction] vertices")
        try:
            hulls.append(AngleHull(arr))
        except ValueError as exc:
            raise SchemaError(f"angle_hulls[{i}]", str(exc)) from exc

    return LimitSet(
        bone_length=_interval_list(doc, "bone_length", N_BONES),
        curvature=_interval_list(doc, "curvature", 4),
        angular_distance=_interval_list(doc, "angular_distance", 4),
        angle_hulls=tuple(hulls),
        metadata=metadata)
