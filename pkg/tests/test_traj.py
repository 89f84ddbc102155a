import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajkit.errors import CompositionError, DegenerateTangentError, ValidationError
from trajkit.pose import orthonormal_error, rot_z, rotation_angle_between
from trajkit.traj import (
    ANIMAL_SCALE,
    STAGE_SIZE,
    CatmullRom,
    EntitySlot,
    SceneComposition,
    SceneEntity,
    TrajectoryTemplate,
    compose_scene,
    default_template_library,
    eval_spline,
    exceeds_yaw_limit,
    generate_template,
    line_template,
    min_pairwise_distance,
    orientation_from_tangent,
    static_template,
    yaw_pitch,
    yaw_steps_deg,
)

LIB = default_template_library()


# -- spline -----------------------------------------------------------------


def test_two_point_spline_midpoint():
    pos, tan = eval_spline([(0, 0, 0), (4, 0, 0)], 0.5)
    np.testing.assert_allclose(pos, [2, 0, 0], atol=1e-12)
    assert tan[0] > 0 and abs(tan[1]) < 1e-12 and abs(tan[2]) < 1e-12


def test_spline_interpolates_endpoints_exactly():
    pts = [(0.3, -1.0, 0.0), (1.0, 2.0, 0.5), (2.0, 0.0, 0.0)]
    assert np.array_equal(eval_spline(pts, 0.0)[0], np.array(pts[0]))
    np.testing.assert_allclose(eval_spline(pts, 1.0)[0], pts[-1], atol=1e-12)


def test_symmetric_three_point_spline():
    pos, tan = eval_spline([(0, 0, 0), (1, 1, 0), (2, 0, 0)], 0.5)
    np.testing.assert_allclose(pos, [1, 1, 0], atol=1e-12)
    assert tan[0] > 0
    assert abs(tan[1]) < 1e-12 * np.linalg.norm(tan)


def test_end_tangents_do_not_vanish():
    _, t0 = eval_spline([(0, 0, 0), (1, 1, 0), (2, 0, 0)], 0.0)
    _, t1 = eval_spline([(0, 0, 0), (1, 1, 0), (2, 0, 0)], 1.0)
    assert np.linalg.norm(t0) > 0.1 and np.linalg.norm(t1) > 0.1


def test_tangent_is_the_derivative():
    pts = np.array([(0, 0, 0), (1, 2, 0.3), (2.5, 1, 0), (3, -1, 0.2)], dtype=float)
    h = 1e-6
    for u in (0.1, 0.37, 0.5, 0.81):
        _, tan = eval_spline(pts, u)
        fd = (eval_spline(pts, u + h)[0] - eval_spline(pts, u - h)[0]) / (2 * h)
        np.testing.assert_allclose(tan, fd, rtol=1e-6, atol=1e-6)


@pytest.mark.parametrize("u", [-0.01, 1.01])
def test_spline_parameter_range(u):
    with pytest.raises(ValidationError):
        eval_spline([(0, 0, 0), (1, 0, 0)], u)


def test_spline_needs_two_points():
    with pytest.raises(ValidationError):
        CatmullRom([(0, 0, 0)])


# -- orientation --------------------------------------------------------------


def test_orientation_examples():
    np.testing.assert_allclose(orientation_from_tangent([1, 0, 0]), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(orientation_from_tangent([0, 1, 0]), rot_z(90), atol=1e-15)
    yaw, pitch = yaw_pitch(orientation_from_tangent([1, 0, 1]))
    assert yaw == pytest.approx(0.0, abs=1e-12)
    assert pitch == pytest.approx(45.0, abs=1e-12)


def test_degenerate_tangent():
    with pytest.raises(DegenerateTangentError):
        orientation_from_tangent([1e-9, 0, 0])


@settings(max_examples=100, deadline=None)
@given(st.tuples(*[st.floats(-10, 10)] * 3).filter(lambda t: np.linalg.norm(t) > 1e-3))
def test_orientation_properties(t):
    R = orientation_from_tangent(t)
    assert orthonormal_error(R) < 1e-9
    np.testing.assert_allclose(R[:, 0], np.asarray(t) / np.linalg.norm(t), atol=1e-9)
    # zero roll: body y axis stays horizontal
    assert R[2, 1] == 0.0


# -- templates ----------------------------------------------------------------


def test_static_template():
    seq = generate_template(static_template((1, 1, 0)), 10)
    assert seq.num_frames == 10
    assert np.all(seq.translations == np.array([1.0, 1.0, 0.0]))
    assert np.all(seq.rotations == np.eye(3))


def test_line_sampling():
    # a 4 m line must sit inside the centered stage, so it spans x in [-2, 2]
    seq = generate_template(TrajectoryTemplate("line", ((-2, 0, 0), (2, 0, 0))), 5)
    np.testing.assert_allclose(seq.translations[:, 0], [-2, -1, 0, 1, 2], atol=1e-9)
    np.testing.assert_allclose(seq.rotations, np.repeat(np.eye(3)[None], 5, axis=0), atol=1e-12)


def test_first_pose_is_first_control_point():
    for t in LIB[::7]:
        seq = generate_template(t, 40)
        assert np.array_equal(seq.translations[0], np.asarray(t.control_points[0]))


def test_coincident_points_rejected():
    with pytest.raises(ValidationError):
        generate_template(TrajectoryTemplate("line", ((1, 1, 0), (1, 1, 0))), 10)


def test_template_validation():
    with pytest.raises(ValidationError):
        TrajectoryTemplate("static", ((0, 0, 0), (1, 0, 0)))
    with pytest.raises(ValidationError):
        TrajectoryTemplate("line", ((0, 0, 0),))
    with pytest.raises(ValidationError):
        TrajectoryTemplate("line", ((0, 0, 0), (3, 0, 0)))
    with pytest.raises(ValidationError):
        TrajectoryTemplate("zigzag", ((0, 0, 0), (1, 0, 0)))


def test_library_size_and_names():
    assert len(LIB) >= 96
    assert len({t.name for t in LIB}) == len(LIB)
    assert len(set(LIB)) == len(LIB)
    assert {t.family for t in LIB} == {
        "line", "arc", "s_curve", "circle", "turn_back_180", "inward_turn_90", "figure_eight", "static",
    }


def test_library_inside_stage():
    for t in LIB:
        seq = generate_template(t)
        assert np.all(np.abs(seq.translations[:, :2]) <= STAGE_SIZE / 2 + 1e-9), t.name


def test_turn_back_ends_reversed():
    tb = [t for t in LIB if t.family == "turn_back_180"]
    assert tb
    for t in tb:
        seq = generate_template(t)
        assert rotation_angle_between(seq.rotations[0], seq.rotations[-1]) == pytest.approx(180.0, abs=1.0), t.name


def test_inward_turn_ends_quarter_turned():
    for t in (t for t in LIB if t.family == "inward_turn_90"):
        seq = generate_template(t)
        assert rotation_angle_between(seq.rotations[0], seq.rotations[-1]) == pytest.approx(90.0, abs=1.0), t.name


def _dense_arc_positions(template, seq, n=40000):
    """Arc length of every frame, found by marching along a dense polyline."""
    curve = CatmullRom(template.points)
    dense, _ = curve.evaluate(np.linspace(0, 1, n))
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(dense, axis=0), axis=1))])
    out, j = [], 0
    for p in seq.translations:
        window = dense[j : j + n // 10]
        k = j + int(np.argmin(np.linalg.norm(window - p, axis=1)))
        out.append(cum[k])
        j = k
    return np.array(out)


@pytest.mark.parametrize("template", [t for t in LIB if t.family != "static"], ids=lambda t: t.name)
def test_constant_speed(template):
    seq = generate_template(template)
    steps = np.diff(_dense_arc_positions(template, seq))
    mean = steps.mean()
    assert np.max(np.abs(steps - mean)) <= 0.02 * mean


@pytest.mark.parametrize("template", LIB[::5], ids=lambda t: t.name)
def test_rotations_orthonormal_zero_roll(template):
    seq = generate_template(template)
    assert orthonormal_error(seq.rotations) < 1e-9
    assert np.all(seq.rotations[:, 2, 1] == 0.0)


def test_yaw_clamp_logs_and_limits(caplog):
    # a hairpin sampled coarsely turns faster than the limit
    t = TrajectoryTemplate("turn_back_180", ((0, 0, 0), (1, 0, 0), (1.05, 0.05, 0), (1, 0.1, 0), (0, 0.1, 0)))
    assert exceeds_yaw_limit(t, 8)
    with caplog.at_level(logging.WARNING, logger="trajkit"):
        seq = generate_template(t, 8)
    assert np.all(yaw_steps_deg(seq) <= 30.0 + 1e-9)
    assert any("yaw" in r.getMessage() for r in caplog.records)


def test_library_templates_within_yaw_limit():
    assert not any(exceeds_yaw_limit(t) for t in LIB)


# -- scenes -------------------------------------------------------------------


def test_single_static_scene():
    scene = compose_scene([(static_template(), "human")], 10, 20.0, seed=1)
    assert len(scene.entities) == 1
    assert np.all(np.abs(scene.entities[0].trajectory.translations[:, :2]) <= 2.5)


def test_compose_is_deterministic():
    slots = [EntitySlot(line_template(3.0)), EntitySlot(line_template(2.0), "animal")]
    a = compose_scene(slots, 50, 20.0, seed=9)
    b = compose_scene(slots, 50, 20.0, seed=9)
    assert all(x.trajectory == y.trajectory for x, y in zip(a.entities, b.entities))
    assert a.entities[1].scale_factor == ANIMAL_SCALE
    assert a.entities[0].scale_factor == 1.0


def test_crossing_lines_respect_clearance():
    slots = [EntitySlot(line_template(4.5)), EntitySlot(line_template(4.5))]
    for seed in range(30):
        scene = compose_scene(slots, 100, 20.0, seed=seed)
        a, b = (e.trajectory.translations for e in scene.entities)
        assert min(np.linalg.norm(a[f] - b[f]) for f in range(100)) >= 0.5


def test_compose_failure_names_pair():
    big = EntitySlot(static_template())
    with pytest.raises(CompositionError) as e:
        compose_scene([big, big], 5, 20.0, seed=0, clearance=10.0, max_retries=4)
    assert e.value.pair == ("e0", "e1")


def test_random_scenes_satisfy_invariants():
    rng = np.random.default_rng(2024)
    for seed in range(1000):
        n = int(rng.integers(1, 4))
        picks = rng.choice(len(LIB), n, replace=False)
        kinds = rng.choice(["human", "animal"], n)
        scene = compose_scene([EntitySlot(LIB[i], k) for i, k in zip(picks, kinds)], 100, 20.0, seed=seed)
        assert 1 <= len(scene.entities) <= 3
        for e in scene.entities:
            assert np.all(np.abs(e.trajectory.translations[:, :2]) <= 2.5 + 1e-9)
        for i in range(n):
            for j in range(i + 1, n):
                assert min_pairwise_distance(scene.entities[i].trajectory, scene.entities[j].trajectory) >= 0.5


def test_scene_validation():
    seq = generate_template(line_template(2.0), 10)
    e = SceneEntity("a", "x", 1.0, seq)
    with pytest.raises(ValidationError):
        SceneComposition(())
    with pytest.raises(ValidationError):
        SceneComposition((e, e))
    with pytest.raises(ValidationError):
        SceneComposition((e, SceneEntity("b", "x", 1.0, generate_template(line_template(2.0), 11))))
    with pytest.raises(ValidationError):
        SceneComposition((SceneEntity("a", "x", 1.0, seq.translated([3, 0, 0])),))
    with pytest.raises(ValidationError):
        SceneComposition(tuple(SceneEntity(str(i), "x", 1.0, seq) for i in range(4)))


def test_drop_leading_frames():
    scene = compose_scene([(line_template(3.0), "human")], 100, 20.0, seed=0)
    assert scene.drop_leading().num_frames == 90
