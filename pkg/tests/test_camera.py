import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trajkit.camera import (
    BehindCameraError,
    BehindCameraWarning,
    CameraModel,
    Intrinsics,
    build_rig,
    occlusion_order,
    project_point,
    project_points,
    read_tracks_csv,
    stage_corners,
    track_rows,
    write_tracks_csv,
)
from trajkit.errors import ValidationError
from trajkit.pose import Pose, PoseSequence
from trajkit.traj import SceneComposition, SceneEntity

RIG = build_rig()


def _entity(eid, xyz):
    xyz = np.atleast_2d(np.asarray(xyz, dtype=float))
    R = np.repeat(np.eye(3)[None], len(xyz), axis=0)
    return SceneEntity(eid, eid, 1.0, PoseSequence(R, xyz))


def test_intrinsics_defaults():
    k = Intrinsics.from_hfov()
    assert (k.width, k.height, k.cx, k.cy) == (672, 384, 336.0, 192.0)
    # fx from 60 degree HFOV: (W / 2) / tan(30 deg)
    assert k.fx == pytest.approx(336.0 / np.tan(np.radians(30.0)), rel=1e-15)
    assert k.fx == k.fy


@pytest.mark.parametrize("kw", [dict(fx=0.0), dict(fy=-1.0), dict(cx=672.0), dict(cy=-1.0)])
def test_intrinsics_validation(kw):
    base = dict(fx=500.0, fy=500.0, cx=336.0, cy=192.0)
    base.update(kw)
    with pytest.raises(ValidationError):
        Intrinsics(**base)


def test_rig_has_twelve_evenly_spaced_cameras():
    assert len(RIG.cameras) == 12
    az = RIG.azimuths_deg()
    np.testing.assert_allclose(np.diff(np.unwrap(np.radians(az))), np.radians(30.0), atol=1e-12)
    assert (az[3] - az[2]) == pytest.approx(30.0, abs=1e-12)


def test_opposite_cameras_and_symmetry():
    c = np.array([0.0, 0.0, 0.0])
    top = c + [0, 0, 2.0]
    np.testing.assert_allclose(RIG.cameras[0].position + RIG.cameras[6].position, 2 * top, atol=1e-12)
    np.testing.assert_allclose(sum(cam.position for cam in RIG.cameras), 12 * top, atol=1e-9)


@settings(max_examples=30, deadline=None)
@given(
    st.tuples(st.floats(-10, 10), st.floats(-10, 10), st.floats(-3, 3)),
    st.floats(1.0, 30.0),
    st.floats(-5.0, 5.0),
)
def test_optical_axes_hit_center(center, radius, height):
    rig = build_rig(center, radius, height)
    for cam in rig.cameras:
        to_c = np.asarray(center) - cam.position
        cosang = np.dot(cam.optical_axis, to_c) / np.linalg.norm(to_c)
        assert np.arccos(min(1.0, cosang)) < 1e-6
        u, v, _ = project_point(cam, center)
        assert abs(u - cam.intrinsics.cx) < 1e-6 and abs(v - cam.intrinsics.cy) < 1e-6


def test_camera_frame_convention():
    cam = RIG.cameras[0]
    R = cam.extrinsic.R
    assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-12)
    # image y points down: world up maps to negative camera y
    assert (np.array([0, 0, 1.0]) @ R)[1] < 0


def test_pinhole_similar_triangles():
    cam = RIG.cameras[4]
    R, T = cam.extrinsic.R, cam.extrinsic.T
    d = 5.0
    p = T + d * R[:, 2] + 1.0 * R[:, 0]
    u, v, depth = project_point(cam, p)
    assert depth == pytest.approx(d, abs=1e-12)
    assert u == pytest.approx(cam.intrinsics.cx + cam.intrinsics.fx / d, abs=1e-9)
    assert v == pytest.approx(cam.intrinsics.cy, abs=1e-9)


def test_line_projects_to_line():
    cam = RIG.cameras[2]
    a, b = np.array([1.0, -1.5, 0.3]), np.array([-1.2, 2.0, 1.1])
    pts = a + np.linspace(0, 1, 50)[:, None] * (b - a)
    uv = project_points(cam, pts)[:, :2]
    d = uv[-1] - uv[0]
    n = np.array([-d[1], d[0]]) / np.linalg.norm(d)
    assert np.max(np.abs((uv - uv[0]) @ n)) < 0.5


def test_behind_camera_rejected():
    cam = RIG.cameras[0]
    behind = cam.position - cam.optical_axis
    with pytest.raises(BehindCameraError):
        project_point(cam, behind)
    with pytest.raises(BehindCameraError):
        project_points(cam, [[0, 0, 0], behind])


@pytest.mark.parametrize("z", [0.0, 1.8])
def test_stage_inside_every_frustum(z):
    corners = stage_corners(z=z)
    for cam in RIG.cameras:
        assert cam.in_frame(corners).all()


def test_occlusion_examples():
    cam = RIG.cameras[0]  # at +x looking toward -x
    scene = SceneComposition((_entity("solo", [0, 0, 0]),))
    assert occlusion_order(cam, scene, 0) == ["solo"]
    scene = SceneComposition((_entity("far", [-1.0, 0, 0]), _entity("near", [1.0, 0, 0])))
    assert occlusion_order(cam, scene, 0) == ["near", "far"]


def test_occlusion_tie_breaks_by_id_and_ignores_list_order():
    cam = RIG.cameras[0]
    a, b = _entity("b", [0, 1.0, 0]), _entity("a", [0, -1.0, 0])
    assert occlusion_order(cam, SceneComposition((a, b)), 0) == occlusion_order(cam, SceneComposition((b, a)), 0)


def test_occlusion_warns_for_entities_behind_camera():
    cam = CameraModel(Pose(RIG.cameras[0].extrinsic.R, [0.0, 0.0, 2.0]), RIG.cameras[0].intrinsics)
    scene = SceneComposition((_entity("front", [-2.0, 0, 0]), _entity("back", [2.0, 0, 0])))
    with pytest.warns(BehindCameraWarning):
        order = occlusion_order(cam, scene, 0)
    assert order == ["front"]


def test_occlusion_frame_range():
    scene = SceneComposition((_entity("a", [0, 0, 0]),))
    with pytest.raises(ValidationError):
        occlusion_order(RIG.cameras[0], scene, 1)


def test_tracks_csv_round_trip():
    xs = np.linspace(-2, 2, 7)
    scene = SceneComposition(
        (_entity("m", np.column_stack([xs, np.ones(7), np.zeros(7)])), _entity("z", np.column_stack([-xs, -np.ones(7), np.zeros(7)])))
    )
    rows = track_rows(RIG.cameras[3], scene)
    text = write_tracks_csv(rows)
    assert text.splitlines()[0] == "frame,entity_id,u,v,depth"
    assert read_tracks_csv(text) == [tuple(r) for r in rows]
    assert len(rows) == 14


def test_tracks_skip_frames_behind_camera():
    cam = CameraModel(Pose(RIG.cameras[0].extrinsic.R, [0.0, 0.0, 2.0]), RIG.cameras[0].intrinsics)
    scene = SceneComposition((_entity("a", [[-1.0, 0, 0], [1.0, 0, 0]]),))
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        rows = track_rows(cam, scene)
    assert [r[0] for r in rows] == [0]
