import numpy as np
import pytest

from flowpriors.errors import DomainError, ValidationError
from flowpriors.kinematics import (
    JointAngles,
    MassProfile,
    Pose,
    center_of_mass,
    forward_kinematics,
    inverse_kinematics,
    load_skeleton,
    min_jerk_derivative,
    min_jerk_phi,
    min_jerk_reference,
    minimal_rotation,
    nearest_bone,
    nearest_bones,
)


def _random_angles(rng, s, scale=0.6):
    rotvecs = rng.normal(scale=scale, size=(s.bone_count, 3))
    lengths = s.rest_lengths * rng.uniform(0.8, 1.2, size=s.bone_count)
    return JointAngles(rng.normal(size=3), rotvecs, lengths)


def test_default_skeleton(skeleton, mass):
    assert skeleton.joint_count == 24
    assert skeleton.bone_count == 23
    assert [skeleton.names[j] for j in skeleton.end_effectors] == [
        "left_foot",
        "right_foot",
        "left_hand",
        "right_hand",
        "head",
    ]
    assert abs(mass.weights.sum() - 1.0) < 1e-12
    assert mass.weights[skeleton.index("pelvis")] == 0.0


def test_rest_angles_give_rest_pose(skeleton):
    pose = forward_kinematics(JointAngles.rest(skeleton), skeleton)
    assert np.allclose(pose.joints, skeleton.rest_pose().joints, atol=1e-15)


def test_fk_and_ik_accept_read_only_arrays(skeleton, rng):
    q = _random_angles(rng, skeleton, scale=0.3)
    assert not q.rotvecs.flags.writeable
    pose = forward_kinematics(q, skeleton)
    assert not pose.joints.flags.writeable
    again = inverse_kinematics(pose, skeleton)
    assert not again.rotvecs.flags.writeable
    assert np.allclose(forward_kinematics(again, skeleton).joints, pose.joints, atol=1e-9)


def test_fk_ik_round_trip(skeleton, rng):
    worst = 0.0
    for _ in range(100):
        pose = forward_kinematics(_random_angles(rng, skeleton), skeleton)
        again = forward_kinematics(inverse_kinematics(pose, skeleton), skeleton)
        worst = max(worst, float(np.max(np.abs(again.joints - pose.joints))))
    assert worst < 1e-6


def test_ik_is_roll_free(skeleton, rng):
    q = inverse_kinematics(forward_kinematics(_random_angles(rng, skeleton), skeleton), skeleton)
    projections = np.einsum("bk,bk->b", q.rotvecs, skeleton.rest_directions)
    assert np.max(np.abs(projections)) < 1e-9


def test_ik_rejects_zero_length_bone(skeleton):
    joints = skeleton.rest_pose().joints.copy()
    joints[skeleton.index("left_knee")] = joints[skeleton.index("left_hip")]
    with pytest.raises(ValidationError):
        inverse_kinematics(Pose(joints), skeleton)


def test_minimal_rotation_antiparallel():
    rotvec = minimal_rotation(np.array([0.0, 1.0, 0.0]), np.array([0.0, -1.0, 0.0]))
    assert np.isclose(np.linalg.norm(rotvec), np.pi)
    assert abs(rotvec[1]) < 1e-15


def test_min_jerk_boundary_conditions():
    eps = np.finfo(float).eps
    assert min_jerk_phi(0.0) == 0.0
    assert abs(min_jerk_phi(1.0) - 1.0) <= eps
    for order in (1, 2):
        assert abs(min_jerk_derivative(0.0, order)) <= eps
        assert abs(min_jerk_derivative(1.0, order)) <= 60 * eps
    assert min_jerk_phi(0.5) == pytest.approx(0.5)


def test_min_jerk_derivative_matches_difference():
    h = 1e-6
    for tau in (0.2, 0.45, 0.8):
        numeric = (min_jerk_phi(tau + h) - min_jerk_phi(tau - h)) / (2 * h)
        assert numeric == pytest.approx(min_jerk_derivative(tau), rel=1e-7)


def test_min_jerk_domain():
    with pytest.raises(DomainError):
        min_jerk_phi(1.5)
    with pytest.raises(DomainError):
        min_jerk_derivative(0.5, order=4)


def test_min_jerk_reference_endpoints(skeleton, rng):
    p0 = forward_kinematics(_random_angles(rng, skeleton, 0.3), skeleton)
    pT = forward_kinematics(_random_angles(rng, skeleton, 0.3), skeleton)
    assert np.max(np.abs(min_jerk_reference(p0, pT, 2, 10, 2, skeleton).joints - p0.joints)) < 1e-9
    assert np.max(np.abs(min_jerk_reference(p0, pT, 2, 10, 10, skeleton).joints - pT.joints)) < 1e-9
    with pytest.raises(DomainError):
        min_jerk_reference(p0, pT, 4, 4, 4, skeleton)
    with pytest.raises(DomainError):
        min_jerk_reference(p0, pT, 2, 10, 11, skeleton)


def test_min_jerk_reference_keeps_bone_lengths(skeleton, rng):
    p0 = forward_kinematics(JointAngles.rest(skeleton), skeleton)
    pT = forward_kinematics(_random_angles(rng, skeleton, 0.3).replace(lengths=skeleton.rest_lengths), skeleton)
    middle = min_jerk_reference(p0, pT, 0, 8, 4, skeleton)
    assert np.allclose(middle.bone_lengths(skeleton), skeleton.rest_lengths, atol=1e-12)


def _brute_distances(point, pose, s):
    distances, alphas = [], []
    for a, b in s.bones:
        start, end = pose.joints[a], pose.joints[b]
        segment = end - start
        alpha = np.clip(np.dot(point - start, segment) / np.dot(segment, segment), 0.0, 1.0)
        alphas.append(alpha)
        distances.append(np.linalg.norm(point - (start + alpha * segment)))
    return np.array(distances), np.array(alphas)


def test_nearest_bone_matches_brute_force(skeleton, rng):
    pose = forward_kinematics(_random_angles(rng, skeleton, 0.4), skeleton)
    points = pose.joints[0] + rng.uniform(-1.0, 1.0, size=(1000, 3))
    bones, alphas, distances = nearest_bones(points, pose, skeleton)
    for point, bone, alpha, distance in zip(points, bones, alphas, distances):
        expected, brute_alphas = _brute_distances(point, pose, skeleton)
        assert distance == pytest.approx(expected.min(), abs=1e-12)
        # bones meeting at a joint tie up to round-off
        assert expected[bone] - expected.min() < 1e-12
        assert alpha == pytest.approx(brute_alphas[bone], abs=1e-12)
        if np.sort(expected)[1] - expected.min() > 1e-9:
            assert bone == int(np.argmin(expected))


def test_nearest_bone_single_point(skeleton):
    pose = skeleton.rest_pose()
    knee = pose.joints[skeleton.index("left_knee")]
    bone, alpha, distance = nearest_bone(knee + np.array([0.0, 0.19, 0.05]), pose, skeleton)
    assert bone == skeleton.index("left_knee") - 1
    assert alpha == pytest.approx(0.5)
    assert distance == pytest.approx(0.05)


def test_center_of_mass():
    pose = Pose(np.array([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]]))
    assert np.allclose(center_of_mass(pose, MassProfile.uniform(2)), [1.0, 0.0, 0.0])
    assert np.allclose(center_of_mass(pose, MassProfile.delta(2, 1)), [2.0, 0.0, 0.0])
    with pytest.raises(ValidationError):
        MassProfile(np.array([0.5, 0.6]))


def test_pose_violations(skeleton):
    joints = skeleton.rest_pose().joints.copy()
    assert Pose(joints).violations(skeleton) == []
    joints[skeleton.index("left_hand")] = joints[skeleton.index("left_wrist")] + [2.0, 0.0, 0.0]
    assert Pose(joints).violations(skeleton) == ["bone length in (0.01, 1.0)"]


def test_skeleton_file_errors(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("root -1 0 0 0\nchild 2 0 1 0\n", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_skeleton(path)
