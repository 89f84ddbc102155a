import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from trajkit.errors import LengthMismatchError, PoseValidationError
from trajkit.pose import (
    Pose,
    PoseSequence,
    align_first_frame,
    check_rotation,
    compose,
    interpolate,
    invert,
    orthonormal_error,
    rot_x,
    rot_y,
    rot_z,
    rotation_angle_between,
    rotation_angles_between,
)

seeds = st.integers(0, 2**32 - 1)


def random_pose(seed):
    rng = np.random.default_rng(seed)
    return Pose(Rotation.random(random_state=rng).as_matrix(), rng.uniform(-5, 5, 3))


def test_identity_row_layout():
    assert Pose.identity().as_row().tolist() == [1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]


def test_compose_identity_and_inverse():
    p = random_pose(1)
    assert compose(Pose.identity(), p).isclose(p, 1e-12)
    assert compose(p, invert(p)).isclose(Pose.identity(), 1e-9)


def test_compose_hand_example():
    a = Pose(rot_z(90), [1, 0, 0])
    c = compose(a, a)
    assert c.isclose(Pose(rot_z(180), [1, 1, 0]), 1e-12)


def test_invert_examples():
    assert invert(Pose.identity()) == Pose.identity()
    assert invert(Pose(np.eye(3), [1, 2, 3])).isclose(Pose(np.eye(3), [-1, -2, -3]), 0)
    assert invert(Pose(rot_z(90), [1, 0, 0])).isclose(Pose(rot_z(-90), [0, 1, 0]), 1e-12)


def test_compose_matches_homogeneous_product():
    a, b = random_pose(2), random_pose(3)
    np.testing.assert_allclose(compose(a, b).as_matrix(), a.as_matrix() @ b.as_matrix(), atol=1e-12)


def test_non_orthonormal_rejected_with_name():
    R = np.eye(3)
    R[0, 0] = 1.1
    with pytest.raises(PoseValidationError, match="R"):
        Pose(R, np.zeros(3))


def test_small_drift_is_repaired():
    R = rot_z(30) + 1e-8
    p = Pose(R, np.zeros(3))
    assert orthonormal_error(p.R) < 1e-12


def test_repair_leaves_clean_frames_untouched():
    good = rot_x(10)
    stack = np.stack([good, rot_z(20) + 1e-8])
    out = check_rotation(stack)
    assert np.array_equal(out[0], good)
    assert orthonormal_error(out[1]) < 1e-12


def test_reflection_rejected():
    with pytest.raises(PoseValidationError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))


def test_poses_are_immutable():
    p = Pose.identity()
    with pytest.raises(ValueError):
        p.T[0] = 1.0


def test_angle_examples():
    assert rotation_angle_between(np.eye(3), np.eye(3)) == 0.0
    assert rotation_angle_between(np.eye(3), rot_z(90)) == pytest.approx(90.0, abs=1e-12)
    # relative rotation Ry(45) has axis-angle magnitude 45
    assert rotation_angle_between(rot_x(30), rot_x(30) @ rot_y(45)) == pytest.approx(45.0, abs=1e-12)


def test_angle_agrees_with_axis_angle():
    rng = np.random.default_rng(0)
    a = Rotation.random(500, random_state=rng)
    b = Rotation.random(500, random_state=rng)
    ref = np.degrees((a.inv() * b).magnitude())
    got = [rotation_angle_between(x, y) for x, y in zip(a.as_matrix(), b.as_matrix())]
    np.testing.assert_allclose(got, ref, atol=1e-9)


def test_angle_exact_zero_for_identical_rotations():
    R = Rotation.random(50, random_state=4).as_matrix()
    seq = PoseSequence(R, np.zeros((50, 3)))
    assert np.all(rotation_angles_between(seq, seq) == 0.0)


@settings(max_examples=60, deadline=None)
@given(seeds, seeds, seeds)
def test_compose_associative(s1, s2, s3):
    a, b, c = random_pose(s1), random_pose(s2), random_pose(s3)
    assert compose(compose(a, b), c).isclose(compose(a, compose(b, c)), 1e-8)


@settings(max_examples=60, deadline=None)
@given(seeds)
def test_invert_involution(s):
    p = random_pose(s)
    assert invert(invert(p)).isclose(p, 1e-9)


@settings(max_examples=60, deadline=None)
@given(seeds, seeds)
def test_angle_symmetric_and_bounded(s1, s2):
    a, b = random_pose(s1).R, random_pose(s2).R
    x, y = rotation_angle_between(a, b), rotation_angle_between(b, a)
    assert x == pytest.approx(y, abs=1e-12)
    assert 0.0 <= x <= 180.0


def _seq(T, R=None):
    T = np.asarray(T, dtype=float)
    R = np.repeat(np.eye(3)[None], len(T), axis=0) if R is None else R
    return PoseSequence(R, T)


def test_align_examples():
    rng = np.random.default_rng(5)
    gt = _seq(rng.normal(size=(6, 3)))
    assert align_first_frame(gt, gt) == gt
    shifted = gt.translated([1, 1, 0])
    np.testing.assert_allclose(align_first_frame(shifted, gt).translations, gt.translations, atol=1e-15)
    d = np.array([0.1, -0.2, 0.05])
    drift = _seq(gt.translations + np.arange(6)[:, None] * d + 3.0)
    out = align_first_frame(drift, gt)
    np.testing.assert_allclose(out.translations, gt.translations + np.arange(6)[:, None] * d, atol=1e-12)


@settings(max_examples=80, deadline=None)
@given(seeds)
def test_align_pins_first_frame_bit_exactly(s):
    rng = np.random.default_rng(s)
    scale = 10.0 ** rng.uniform(-6, 6)
    est, gt = _seq(rng.normal(size=(4, 3)) * scale), _seq(rng.normal(size=(4, 3)))
    out = align_first_frame(est, gt)
    assert np.array_equal(out.translations[0], gt.translations[0])
    assert np.array_equal(out.rotations, est.rotations)


def test_align_length_mismatch_carries_lengths():
    with pytest.raises(LengthMismatchError) as e:
        align_first_frame(_seq(np.zeros((3, 3))), _seq(np.zeros((4, 3))))
    assert "3" in str(e.value) and "4" in str(e.value)


def test_interpolate_examples():
    a = Pose(np.eye(3), [0, 0, 0])
    b = Pose(rot_z(90), [4, 0, 0])
    assert interpolate(a, b, 0.0) == a
    assert interpolate(a, b, 1.0) == b
    mid = interpolate(a, b, 0.5)
    np.testing.assert_allclose(mid.R, rot_z(45), atol=1e-12)
    np.testing.assert_allclose(interpolate(a, b, 0.25).T, [1, 0, 0], atol=1e-15)


def test_interpolate_takes_shortest_arc():
    a, b = Pose(rot_z(170), np.zeros(3)), Pose(rot_z(-170), np.zeros(3))
    np.testing.assert_allclose(interpolate(a, b, 0.5).R, rot_z(180), atol=1e-12)


@pytest.mark.parametrize("s", [-0.1, 1.5, float("nan")])
def test_interpolate_range(s):
    with pytest.raises(ValueError):
        interpolate(Pose.identity(), Pose.identity(), s)


@settings(max_examples=60, deadline=None)
@given(seeds, seeds, st.floats(0, 1))
def test_interpolate_stays_orthonormal(s1, s2, s):
    p = interpolate(random_pose(s1), random_pose(s2), s)
    assert orthonormal_error(p.R) < 1e-9


def test_sequence_rows_round_trip():
    rng = np.random.default_rng(7)
    seq = PoseSequence(Rotation.random(5, random_state=rng).as_matrix(), rng.normal(size=(5, 3)), 24.0)
    assert PoseSequence.from_rows(seq.as_rows(), 24.0) == seq
    assert PoseSequence.from_poses(seq.poses, 24.0) == seq


@pytest.mark.parametrize("fps", [0.0, -1.0, float("inf")])
def test_sequence_rejects_bad_fps(fps):
    with pytest.raises(PoseValidationError):
        PoseSequence(np.eye(3)[None], np.zeros((1, 3)), fps)


def test_sequence_needs_a_frame():
    with pytest.raises(PoseValidationError):
        PoseSequence(np.zeros((0, 3, 3)), np.zeros((0, 3)))


def test_static_copy_and_drop_leading():
    seq = _seq(np.arange(12.0).reshape(4, 3))
    st_ = seq.static_copy()
    assert all(np.array_equal(st_.translations[i], seq.translations[0]) for i in range(4))
    assert seq.drop_leading(1).num_frames == 3
