import numpy as np
import pytest

from handbmc import (DegeneratePalm, HandPose, Interval, LossWeights,
                     all_finger_angles, angle_constraint_loss, bmc_loss,
                     bone_length_loss, bones_from_pose, evaluate_batch,
                     full_training_loss, hull_distance)
from handbmc.hull import AngleHull, contains
from handbmc.losses import LENIENT_PENALTY, kink_margins
from tests.conftest import random_rotation


def test_weights_defaults():
    w = LossWeights()
    assert (w.bone_length, w.root_bone, w.angle) == (0.1, 0.1, 0.01)
    assert (w.joints_2d, w.rel_depth, w.root_depth) == (1.0, 5.0, 1.0)
    with pytest.raises(ValueError):
        LossWeights(bone_length=-0.1)


class TestBoneLengthLoss:
    def test_all_inside_zero(self, corpus, limits):
        assert bone_length_loss(bones_from_pose(corpus[0]),
                                limits.bone_length) == 0.0

    def test_single_violation_is_twentieth(self, corpus, limits):
        bones = bones_from_pose(corpus[0])
        intervals = list(limits.bone_length)
        delta = 0.0123
        length = bones.lengths[7]
        intervals[7] = Interval(length - 1.0, length - delta)
        assert bone_length_loss(bones, intervals) == pytest.approx(
            delta / 20, abs=1e-15)

    def test_random_matches_oracle(self, corpus):
        rng = np.random.default_rng(0)
        for pose in corpus[:20]:
            bones = bones_from_pose(pose)
            intervals = [Interval(*sorted(rng.uniform(0, 0.1, 2)))
                         for _ in range(20)]
            expected = np.mean([
                max(iv.lower - L, 0.0) + max(L - iv.upper, 0.0)
                for L, iv in zip(bones.lengths, intervals)])
            assert bone_length_loss(bones, intervals) == pytest.approx(
                expected, abs=1e-14)


class TestAngleConstraintLoss:
    def test_all_contained_zero(self, corpus, limits):
        pairs = all_finger_angles(corpus[2])
        assert angle_constraint_loss(pairs, limits.angle_hulls) == 0.0

    def test_single_exterior_is_fifteenth(self, limits):
        pairs = [(0.0, 0.0)] * 15
        hulls = list(limits.angle_hulls)
        square = AngleHull(np.array([
            [1.0, 1.0], [1.5, 1.0], [2.0, 1.0], [2.0, 1.5], [2.0, 2.0],
            [1.5, 2.0], [1.0, 2.0], [1.0, 1.75], [1.0, 1.5], [1.0, 1.25]]))
        # make every hull contain the origin except one known square
        big = AngleHull(np.array([
            [-3.0, -1.5], [0.0, -1.5], [3.0, -1.5], [3.0, 0.0], [3.0, 1.5],
            [0.0, 1.5], [-3.0, 1.5], [-3.0, 0.75], [-3.0, 0.0], [-3.0, -0.75]]))
        hulls = [big] * 15
        hulls[4] = square
        d = hull_distance(square, (0.0, 0.0))
        assert angle_constraint_loss(pairs, hulls) == pytest.approx(d / 15)

    def test_random_matches_summation_oracle(self, limits):
        rng = np.random.default_rng(1)
        hulls = limits.angle_hulls
        for _ in range(50):
            pairs = [(rng.uniform(-2, 2), rng.uniform(-1.2, 1.2))
                     for _ in range(15)]
            expected = np.mean([
                0.0 if contains(h, p) else hull_distance(h, p)
                for h, p in zip(hulls, pairs)])
            assert angle_constraint_loss(pairs, hulls) == pytest.approx(
                expected, abs=1e-14)


class TestBmcLoss:
    def test_zero_on_corpus_sample(self, corpus, limits):
        report = bmc_loss(corpus[0], limits)
        assert report.total == 0.0
        np.testing.assert_array_equal(report.gradient.gradient, 0.0)

    def test_stretched_bone_composition(self, corpus, limits):
        pose = corpus[1]
        joints = pose.joints.copy()
        # stretch the pinky TIP bone well beyond its max; the tip joint
        # moves nothing else
        direction = joints[20] - joints[19]
        direction /= np.linalg.norm(direction)
        stretch = 0.05
        joints[20] = joints[20] + stretch * direction
        report = bmc_loss(HandPose(joints), limits, with_gradient=False)
        length = np.linalg.norm(joints[20] - joints[19])
        delta = length - limits.bone_length[19].upper
        assert delta > 0
        assert report.bone_length == pytest.approx(delta / 20, abs=1e-12)
        assert report.root_bone == 0.0
        w = LossWeights()
        assert report.total == pytest.approx(
            w.bone_length * delta / 20 + w.angle * report.angle, abs=1e-12)

    def test_total_is_exact_weighted_sum(self, corpus, limits):
        rng = np.random.default_rng(2)
        w = LossWeights(bone_length=0.3, root_bone=0.7, angle=0.05)
        for pose in corpus[:10]:
            joints = pose.joints + rng.normal(0, 0.003, (21, 3))
            rep = bmc_loss(HandPose(joints), limits, w, mode="lenient",
                           with_gradient=False)
            assert rep.total == (0.3 * rep.bone_length + 0.7 * rep.root_bone
                                 + 0.05 * rep.angle)

    def test_report_matches_term_functions(self, corpus, limits):
        rng = np.random.default_rng(3)
        joints = corpus[4].joints + rng.normal(0, 0.002, (21, 3))
        pose = HandPose(joints)
        rep = bmc_loss(pose, limits, mode="lenient", with_gradient=False)
        bones = bones_from_pose(pose)
        assert rep.bone_length == pytest.approx(
            bone_length_loss(bones, limits.bone_length), abs=1e-15)
        if not rep.degenerate:
            pairs = all_finger_angles(pose, strict=False)
            assert rep.angle == pytest.approx(
                angle_constraint_loss(pairs, limits.angle_hulls), abs=1e-14)

    def test_rigid_invariance(self, corpus, limits):
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(1000):
            pose = corpus[int(rng.integers(len(corpus)))]
            joints = pose.joints + rng.normal(0, 0.002, (21, 3))
            base = bmc_loss(HandPose(joints), limits, mode="lenient",
                            with_gradient=False).total
            rot = random_rotation(rng)
            moved = HandPose(joints @ rot.T + rng.normal(size=3))
            total = bmc_loss(moved, limits, mode="lenient",
                             with_gradient=False).total
            worst = max(worst, abs(total - base) / max(1.0, base))
        assert worst < 1e-9

    def test_monotone_in_limits(self, corpus, limits):
        # enlarging every interval and hull never increases any term
        rng = np.random.default_rng(5)
        from handbmc.limits import LimitSet

        def enlarge(iv, pad):
            return Interval(iv.lower - pad, iv.upper + pad)

        def dilate(hull, factor):
            c = hull.vertices.mean(axis=0)
            return AngleHull(c + factor * (hull.vertices - c))

        bigger = LimitSet(
            bone_length=tuple(enlarge(iv, 0.01) for iv in limits.bone_length),
            curvature=tuple(enlarge(iv, 0.5) for iv in limits.curvature),
            angular_distance=tuple(enlarge(iv, 0.05)
                                   for iv in limits.angular_distance),
            angle_hulls=tuple(dilate(h, 1.4) for h in limits.angle_hulls),
            metadata=limits.metadata)
        for _ in range(30):
            pose = corpus[int(rng.integers(len(corpus)))]
            joints = pose.joints + rng.normal(0, 0.004, (21, 3))
            a = bmc_loss(HandPose(joints), limits, mode="lenient",
                         with_gradient=False)
            b = bmc_loss(HandPose(joints), bigger, mode="lenient",
                         with_gradient=False)
            assert b.bone_length <= a.bone_length + 1e-15
            assert b.root_bone <= a.root_bone + 1e-15
            # dilated hulls contain the originals, so each angle term shrinks
            assert b.angle <= a.angle + 1e-12

    def test_strict_raises_lenient_penalizes(self, corpus, limits):
        joints = corpus[0].joints.copy()
        joints[1] = joints[0]  # collapse thumb root bone
        with pytest.raises(DegeneratePalm):
            bmc_loss(HandPose(joints), limits)
        rep = bmc_loss(HandPose(joints), limits, mode="lenient")
        assert rep.degenerate
        assert rep.root_bone == LENIENT_PENALTY
        # the constant penalty has zero gradient
        np.testing.assert_array_equal(
            np.isfinite(rep.gradient.gradient), True)


def test_evaluate_batch_matches_single(corpus, limits):
    reports = evaluate_batch(corpus[:10], limits)
    for pose, rep in zip(corpus[:10], reports):
        single = bmc_loss(pose, limits, with_gradient=False)
        assert rep.total == single.total
        assert rep.bone_length == single.bone_length
        np.testing.assert_array_equal(rep.angle_terms, single.angle_terms)


def test_full_training_loss_shell():
    rng = np.random.default_rng(6)
    pred2d = rng.normal(size=(21, 2))
    lab2d = pred2d + 0.5
    zr = rng.normal(size=21)
    w = LossWeights()
    total = full_training_loss(0.25, joints_2d=pred2d, joints_2d_label=lab2d,
                               rel_depth=zr, rel_depth_label=zr,
                               root_depth=2.0, root_depth_label=1.5)
    assert total == pytest.approx(0.25 + w.joints_2d * 0.5 + 0.0
                                  + w.root_depth * 0.5)
    assert full_training_loss(0.125) == 0.125


def test_kink_margins_shapes(corpus, limits):
    m = kink_margins(corpus[0], limits)
    assert m["bone_length"].shape == (20,)
    assert m["hull_boundary"].shape == (15,)
    assert np.ndim(m["overall"]) == 0
    batch = np.stack([p.joints for p in corpus[:4]])
    m = kink_margins(batch, limits)
    assert m["bone_length"].shape == (4, 20)
    assert m["overall"].shape == (4,)
