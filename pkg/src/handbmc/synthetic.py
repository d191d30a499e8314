"""Synthetic right-hand pose generation for self-checks and tests.

Poses are built by forward kinematics from a template with realistic
adult proportions (meters at scale=1): a fanned set of root bones with
a configurable palm arch (bowing toward the palm side gives positive
curvature) and per-row flexion/abduction sampled inside plausible
ranges.  The generator deliberately keeps angles away from the flexion
and abduction zero/pi clamps so fitted limits have usable interiors for
finite-difference checks.
"""

from __future__ import annotations

import numpy as np

from .angles import AnglePair, synthesize_pose
from .limits import LimitSet, fit_limits
from .losses import LossWeights, finite_difference_error, kink_margins
from .skeleton import HandPose

#: Root-bone azimuths in the palm plane, thumb to pinky (radians).
PALM_AZIMUTH = np.deg2rad([50.0, 15.0, 0.0, -12.0, -28.0])
#: Root-bone (root -> MCP) lengths, meters.
ROOT_LENGTHS = np.array([0.045, 0.085, 0.080, 0.070, 0.065])
#: Finger segment lengths (PIP, DIP, TIP rows per finger), meters.
SEGMENT_LENGTHS = np.array([
    [0.034, 0.028, 0.024],   # thumb
    [0.040, 0.024, 0.020],   # index
    [0.044, 0.027, 0.021],   # middle
    [0.041, 0.025, 0.020],   # ring
    [0.032, 0.019, 0.017],   # pinky
])
#: Relative palm-arch depth per finger (thumb/pinky bow the most).
CUP_PROFILE = np.array([1.2, 0.25, 0.0, 0.3, 1.0])


def sample_root_bones(rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Root bones of a randomly cupped, jittered palm, (5, 3)."""
    az = PALM_AZIMUTH + rng.uniform(-0.06, 0.06, 5)
    cup = rng.uniform(0.05, 0.3)
    elev = -cup * CUP_PROFILE + rng.uniform(-0.02, 0.02, 5)
    lengths = ROOT_LENGTHS * scale * rng.uniform(0.92, 1.08, 5)
    return np.stack([np.sin(az) * np.cos(elev) * lengths,
                     np.sin(elev) * lengths,
                     np.cos(az) * np.cos(elev) * lengths], axis=-1)


def sample_pose(rng: np.random.Generator, scale: float = 1.0,
                flexion_range: tuple[float, float] = (0.15, 1.2),
                abduction_range: tuple[float, float] = (0.08, 0.4),
                ) -> HandPose:
    """One synthetic pose; abduction signs are random, magnitudes bounded
    away from zero so arccos clamps stay clear."""
    root_bones = sample_root_bones(rng, scale)
    seg = SEGMENT_LENGTHS.reshape(15) * scale * rng.uniform(0.92, 1.08, 15)
    flexion = rng.uniform(*flexion_range, 15)
    abduction = rng.uniform(*abduction_range, 15) * rng.choice([-1.0, 1.0], 15)
    pairs = [AnglePair(f, a) for f, a in zip(flexion, abduction)]
    root = rng.normal(0.0, 0.1 * scale, 3)
    return synthesize_pose(root, root_bones, seg, pairs)


def sample_corpus(rng: np.random.Generator, count: int, scale: float = 1.0,
                  **kwargs) -> list[HandPose]:
    return [sample_pose(rng, scale, **kwargs) for _ in range(count)]


def perturb_pose(pose: HandPose, rng: np.random.Generator, sigma: float) -> HandPose:
    return HandPose(pose.joints + rng.normal(0.0, sigma, (21, 3)))


def sample_checked_poses(rng: np.random.Generator, corpus, limits: LimitSet,
                         count: int, sigma: float, margin: float = 1e-3,
                         max_tries: int | None = None) -> np.ndarray:
    """Perturbed corpus poses at least `margin` away from every loss kink.

    Returns an (count, 21, 3) array; raises RuntimeError if rejection
    sampling cannot find enough poses.
    """
    max_tries = max_tries if max_tries is not None else 60 * count
    out = []
    for _ in range(max_tries):
        if len(out) == count:
            break
        base = corpus[int(rng.integers(0, len(corpus)))]
        joints = base.joints + rng.normal(0.0, sigma, (21, 3))
        if float(kink_margins(joints, limits)["overall"]) >= margin:
            out.append(joints)
    if len(out) < count:
        raise RuntimeError(
            f"only {len(out)}/{count} poses passed the {margin} kink margin")
    return np.stack(out)


def gradient_selfcheck(samples: int = 50, seed: int = 0, step: float = 1e-5,
                       margin: float = 1e-3) -> dict:
    """End-to-end gradient check on synthetic data.

    Fits limits to a synthetic unit-scale corpus, draws `samples`
    margin-checked perturbed poses and compares the analytic gradient
    of the composed loss against central finite differences.
    """
    rng = np.random.default_rng(seed)
    corpus = sample_corpus(rng, 64, scale=10.0)
    limits = fit_limits(corpus, quantile=0.0, length_unit="0.1m")
    poses = sample_checked_poses(rng, corpus, limits, samples, sigma=0.03,
                                 margin=margin)
    max_err = finite_difference_error(poses, limits, LossWeights(), step=step)
    return {"samples": samples, "seed": seed, "step": step,
            "margin": margin, "max_relative_error": max_err}
