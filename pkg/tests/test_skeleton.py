import json

import numpy as np
import pytest

from handbmc import (DegenerateBasis, DegenerateVector, HandPose, Interval,
                     SchemaError, angle_between, bones_from_pose,
                     interval_penalty, load_poses, project_onto_plane,
                     save_poses)
from handbmc.skeleton import (BONE_CHILD_JOINT, BONE_PARENT_BONE,
                              BONE_PARENT_JOINT, ROOT_BONE, finger_bones,
                              finger_joints)
from tests.conftest import random_rotation


def test_layout_tables():
    # root bones come first and have no parent bone
    assert list(BONE_PARENT_JOINT[:5]) == [0] * 5
    assert list(BONE_CHILD_JOINT[:5]) == [1, 5, 9, 13, 17]
    assert list(BONE_PARENT_BONE[:5]) == [ROOT_BONE] * 5
    # finger bones chain PIP -> DIP -> TIP
    for f in range(5):
        mcp, pip, dip, tip = finger_joints(f)
        b_pip, b_dip, b_tip = finger_bones(f)
        assert (BONE_PARENT_JOINT[b_pip], BONE_CHILD_JOINT[b_pip]) == (mcp, pip)
        assert (BONE_PARENT_JOINT[b_dip], BONE_CHILD_JOINT[b_dip]) == (pip, dip)
        assert (BONE_PARENT_JOINT[b_tip], BONE_CHILD_JOINT[b_tip]) == (dip, tip)
        assert BONE_PARENT_BONE[b_pip] == f
        assert BONE_PARENT_BONE[b_dip] == b_pip
        assert BONE_PARENT_BONE[b_tip] == b_dip


def test_pose_validation():
    with pytest.raises(ValueError):
        HandPose(np.zeros((20, 3)))
    with pytest.raises(ValueError):
        joints = np.zeros((21, 3))
        joints[3, 1] = np.nan
        HandPose(joints)
    pose = HandPose(np.zeros((21, 3)))
    with pytest.raises(ValueError):
        pose.joints[0, 0] = 1.0  # frozen


def test_first_bone_is_child_minus_parent():
    joints = np.random.default_rng(0).normal(size=(21, 3))
    joints[0] = 0.0
    joints[1] = [0.0, 0.0, 0.04]
    bones = bones_from_pose(HandPose(joints))
    np.testing.assert_array_equal(bones.bones[0], [0.0, 0.0, 0.04])


def test_identical_joints_give_zero_bones():
    pose = HandPose(np.ones((21, 3)) * 0.3)
    bones = bones_from_pose(pose)
    np.testing.assert_array_equal(bones.bones, np.zeros((20, 3)))


def test_bones_match_elementwise_subtraction_oracle():
    rng = np.random.default_rng(1)
    joints = rng.normal(size=(21, 3))
    bones = bones_from_pose(HandPose(joints))
    for i in range(20):
        expected = joints[BONE_CHILD_JOINT[i]] - joints[BONE_PARENT_JOINT[i]]
        np.testing.assert_array_equal(bones.bones[i], expected)


def test_bone_equivariance_under_rigid_motion():
    rng = np.random.default_rng(2)
    joints = rng.normal(size=(21, 3))
    bones = bones_from_pose(HandPose(joints)).bones
    for _ in range(50):
        t = rng.normal(size=3)
        np.testing.assert_allclose(
            bones_from_pose(HandPose(joints + t)).bones, bones, atol=1e-12)
        rot = random_rotation(rng)
        np.testing.assert_allclose(
            bones_from_pose(HandPose(joints @ rot.T)).bones, bones @ rot.T,
            atol=1e-12)


class TestAngleBetween:
    def test_orthogonal(self):
        assert angle_between([1, 0, 0], [0, 1, 0]) == pytest.approx(np.pi / 2)

    def test_identity(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            v = rng.normal(size=3)
            assert angle_between(v, v) == pytest.approx(0.0, abs=1e-7)

    def test_analytic_quarter(self):
        assert angle_between([1, 0, 0], [1, 1, 0]) == pytest.approx(np.pi / 4)

    def test_symmetry_and_scaling(self):
        rng = np.random.default_rng(4)
        for _ in range(100):
            v1, v2 = rng.normal(size=(2, 3))
            a = angle_between(v1, v2)
            assert angle_between(v2, v1) == a
            assert angle_between(3.7 * v1, v2) == pytest.approx(a, abs=1e-12)
            assert 0.0 <= a <= np.pi

    def test_degenerate(self):
        with pytest.raises(DegenerateVector):
            angle_between([0, 0, 0], [1, 0, 0])
        with pytest.raises(DegenerateVector):
            angle_between([1, 0, 0], [1e-9, 0, 0])


class TestIntervalPenalty:
    def test_inside(self):
        assert interval_penalty(0.5, Interval(0.0, 1.0)) == 0.0

    def test_above(self):
        assert interval_penalty(1.2, Interval(0.0, 1.0)) == pytest.approx(0.2)

    def test_below(self):
        assert interval_penalty(-0.3, Interval(0.0, 1.0)) == pytest.approx(0.3)

    def test_endpoints_are_zero(self):
        spec = Interval(-1.5, 2.5)
        assert interval_penalty(-1.5, spec) == 0.0
        assert interval_penalty(2.5, spec) == 0.0

    def test_convex_piecewise_linear(self):
        spec = Interval(-1.0, 1.0)
        rng = np.random.default_rng(5)
        xs = rng.uniform(-4, 4, 200)
        vals = np.array([interval_penalty(x, spec) for x in xs])
        assert np.all(vals >= 0)
        # convexity: midpoint value below chord
        for _ in range(200):
            a, b = rng.uniform(-4, 4, 2)
            mid = interval_penalty((a + b) / 2, spec)
            chord = (interval_penalty(a, spec) + interval_penalty(b, spec)) / 2
            assert mid <= chord + 1e-12

    def test_invalid_interval(self):
        with pytest.raises(ValueError):
            Interval(2.0, 1.0)


class TestProjectOntoPlane:
    def test_axis_aligned(self):
        out = project_onto_plane([1.0, 2.0, 3.0], [1, 0, 0], [0, 0, 1])
        np.testing.assert_allclose(out, [1.0, 0.0, 3.0], atol=1e-15)

    def test_idempotent_on_plane(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            x = rng.normal(size=3)
            x /= np.linalg.norm(x)
            y = rng.normal(size=3)
            y -= (y @ x) * x
            y /= np.linalg.norm(y)
            v = rng.normal() * x + rng.normal() * y
            np.testing.assert_allclose(project_onto_plane(v, x, y), v, atol=1e-12)

    def test_residual_orthogonality_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            x = rng.normal(size=3)
            x /= np.linalg.norm(x)
            y = rng.normal(size=3)
            y -= (y @ x) * x
            y /= np.linalg.norm(y)
            v = rng.normal(size=3)
            p = project_onto_plane(v, x, y)
            assert abs((v - p) @ x) < 1e-12
            assert abs((v - p) @ y) < 1e-12
            twice = project_onto_plane(p, x, y)
            np.testing.assert_allclose(twice, p, atol=1e-12)

    def test_degenerate_basis(self):
        with pytest.raises(DegenerateBasis):
            project_onto_plane([1, 2, 3], [1, 0, 0], [1 + 1e-12, 0, 0])


def test_pose_file_round_trip(tmp_path, corpus):
    path = tmp_path / "poses.json"
    save_poses(corpus[:5], path)
    loaded = load_poses(path)
    assert len(loaded) == 5
    for a, b in zip(loaded, corpus[:5]):
        np.testing.assert_array_equal(a.joints, b.joints)


def test_pose_file_schema_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"not": "a list"}))
    with pytest.raises(SchemaError):
        load_poses(bad)
    bad.write_text(json.dumps([[[0, 0, 0]] * 20]))
    with pytest.raises(SchemaError, match=r"\[0\]"):
        load_poses(bad)
