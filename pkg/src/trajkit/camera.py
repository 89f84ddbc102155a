"""Twelve-camera surround rig, pinhole projection and depth ordering.

Camera frames use the computer-vision convention: +x right, +y down, +z
along the optical axis. Extrinsics are camera-to-world poses.
"""

from __future__ import annotations

import csv
import io
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, TextIO

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ValidationError
from .pose import Pose
from .traj import STAGE_SIZE, SceneComposition

WIDTH = 672
HEIGHT = 384
NUM_CAMERAS = 12
RIG_RADIUS = 8.0
RIG_HEIGHT = 2.0
HFOV_DEG = 60.0
NEAR_PLANE = 0.01

TRACK_HEADER = ("frame", "entity_id", "u", "v", "depth")


class BehindCameraError(ValidationError):
    """A point sits at or behind the near plane."""


class BehindCameraWarning(UserWarning):
    """An entity was left out of a depth ordering because it is behind the camera."""


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int = WIDTH
    height: int = HEIGHT

    def __post_init__(self) -> None:
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got {self.fx}, {self.fy}", "fx/fy", "> 0")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError(f"principal point ({self.cx}, {self.cy}) outside image", "cx/cy", "inside image")

    @classmethod
    def from_hfov(cls, hfov_deg: float = HFOV_DEG, width: int = WIDTH, height: int = HEIGHT) -> Intrinsics:
        f = (width / 2) / math.tan(math.radians(hfov_deg) / 2)
        return cls(f, f, width / 2, height / 2, width, height)

    @property
    def K(self) -> NDArray[np.float64]:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class CameraModel:
    extrinsic: Pose
    intrinsics: Intrinsics

    @property
    def position(self) -> NDArray[np.float64]:
        return self.extrinsic.T

    @property
    def optical_axis(self) -> NDArray[np.float64]:
        return self.extrinsic.R[:, 2]

    def to_camera(self, p_world: ArrayLike) -> NDArray[np.float64]:
        p = np.asarray(p_world, dtype=np.float64)
        return (p - self.extrinsic.T) @ self.extrinsic.R

    def in_frame(self, p_world: ArrayLike) -> NDArray[np.bool_]:
        """True where points project inside the image and in front of the near plane."""
        pc = np.atleast_2d(self.to_camera(p_world))
        z = pc[:, 2]
        ok = z > NEAR_PLANE
        with np.errstate(divide="ignore", invalid="ignore"):
            u = self.intrinsics.fx * pc[:, 0] / z + self.intrinsics.cx
            v = self.intrinsics.fy * pc[:, 1] / z + self.intrinsics.cy
        return ok & (u >= 0) & (u <= self.intrinsics.width) & (v >= 0) & (v <= self.intrinsics.height)


@dataclass(frozen=True)
class CameraRig:
    cameras: tuple[CameraModel, ...]
    look_at: NDArray[np.float64]
    radius: float
    height: float

    def __post_init__(self) -> None:
        if len(self.cameras) != NUM_CAMERAS:
            raise ValidationError(f"a rig has exactly {NUM_CAMERAS} cameras, got {len(self.cameras)}", "cameras", "== 12")

    def azimuths_deg(self) -> NDArray[np.float64]:
        rel = np.array([c.position - self.look_at for c in self.cameras])
        return np.degrees(np.arctan2(rel[:, 1], rel[:, 0]))

    def to_dict(self) -> dict:
        return {
            "look_at": [float(x) for x in self.look_at],
            "radius": float(self.radius),
            "height": float(self.height),
            "cameras": [
                {
                    "index": k,
                    "extrinsic": [float(x) for x in cam.extrinsic.as_row()],
                    "fx": cam.intrinsics.fx,
                    "fy": cam.intrinsics.fy,
                    "cx": cam.intrinsics.cx,
                    "cy": cam.intrinsics.cy,
                    "width": cam.intrinsics.width,
                    "height": cam.intrinsics.height,
                }
                for k, cam in enumerate(self.cameras)
            ],
        }


def look_at_rotation(eye: ArrayLike, target: ArrayLike, up: ArrayLike = (0.0, 0.0, 1.0)) -> NDArray[np.float64]:
    """Camera-to-world rotation with columns (right, down, forward)."""
    eye, target, up = (np.asarray(v, dtype=np.float64) for v in (eye, target, up))
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n == 0:
        raise ValidationError("camera position coincides with its target", "look_at", "eye != target")
    fwd = fwd / n
    right = np.cross(fwd, up)
    rn = np.linalg.norm(right)
    if rn < 1e-12:
        raise ValidationError("viewing direction is parallel to the up vector", "up", "not parallel to view")
    right /= rn
    down = np.cross(fwd, right)
    return np.column_stack([right, down, fwd])


def build_rig(
    center: ArrayLike = (0.0, 0.0, 0.0),
    radius: float = RIG_RADIUS,
    height: float = RIG_HEIGHT,
    intrinsics: Intrinsics | None = None,
) -> CameraRig:
    """Place 12 cameras every 30 degrees on a circle, all looking at ``center``."""
    if not radius > 0:
        raise ValidationError(f"rig radius must be positive, got {radius}", "radius", "> 0")
    intr = intrinsics or Intrinsics.from_hfov()
    c = np.asarray(center, dtype=np.float64)
    cams = []
    for k in range(NUM_CAMERAS):
        a = math.radians(30.0 * k)
        eye = c + np.array([radius * math.cos(a), radius * math.sin(a), height])
        cams.append(CameraModel(Pose(look_at_rotation(eye, c), eye), intr))
    c.setflags(write=False)
    return CameraRig(tuple(cams), c, float(radius), float(height))


def project_point(cam: CameraModel, p_world: ArrayLike) -> tuple[float, float, float]:
    """Pinhole projection to pixels plus camera-frame depth (meters).

    Pixels may fall outside the image; only points behind the near plane
    are rejected.
    """
    x, y, z = cam.to_camera(p_world)
    if z <= NEAR_PLANE:
        raise BehindCameraError(f"point at depth {z:.4g} m is behind the near plane", "depth", f"> {NEAR_PLANE}")
    k = cam.intrinsics
    return float(k.fx * x / z + k.cx), float(k.fy * y / z + k.cy), float(z)


def project_points(cam: CameraModel, points: ArrayLike) -> NDArray[np.float64]:
    """Vectorized :func:`project_point`: ``(n, 3)`` world points to ``(n, 3)`` of (u, v, depth)."""
    pc = np.atleast_2d(cam.to_camera(points))
    z = pc[:, 2]
    if np.any(z <= NEAR_PLANE):
        i = int(np.argmin(z))
        raise BehindCameraError(f"point {i} at depth {z[i]:.4g} m is behind the near plane", "depth", f"> {NEAR_PLANE}")
    k = cam.intrinsics
    return np.column_stack([k.fx * pc[:, 0] / z + k.cx, k.fy * pc[:, 1] / z + k.cy, z])


def occlusion_order(cam: CameraModel, scene: SceneComposition, frame: int) -> list[str]:
    """Entity ids sorted near to far by center depth; ties broken by id.

    Entities behind the camera are dropped with a :class:`BehindCameraWarning`.
    """
    if not 0 <= frame < scene.num_frames:
        raise ValidationError(f"frame {frame} out of range [0, {scene.num_frames})", "frame", "0 <= frame < F")
    keyed = []
    for e in scene.entities:
        depth = float(cam.to_camera(e.trajectory.translations[frame])[2])
        if depth <= NEAR_PLANE:
            warnings.warn(f"entity {e.entity_id} is behind the camera at frame {frame}", BehindCameraWarning, stacklevel=2)
            continue
        keyed.append((depth, e.entity_id))
    return [eid for _, eid in sorted(keyed)]


def stage_corners(stage_size: float = STAGE_SIZE, z: float = 0.0) -> NDArray[np.float64]:
    h = stage_size / 2
    return np.array([[-h, -h, z], [h, -h, z], [h, h, z], [-h, h, z]])


def track_rows(cam: CameraModel, scene: SceneComposition) -> list[tuple[int, str, float, float, float]]:
    """Per-frame 2D tracks of every entity; frames behind the camera are skipped."""
    rows = []
    for e in scene.entities:
        pc = cam.to_camera(e.trajectory.translations)
        k = cam.intrinsics
        for f, (x, y, z) in enumerate(pc):
            if z <= NEAR_PLANE:
                continue
            rows.append((f, e.entity_id, k.fx * x / z + k.cx, k.fy * y / z + k.cy, z))
    rows.sort(key=lambda r: (r[0], r[1]))
    return rows


def write_tracks_csv(rows: Iterable[tuple], out: TextIO | None = None) -> str:
    """Write ``frame,entity_id,u,v,depth`` rows; returns the CSV text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACK_HEADER)
    for f, eid, u, v, d in rows:
        w.writerow([int(f), eid, repr(float(u)), repr(float(v)), repr(float(d))])
    text = buf.getvalue()
    if out is not None:
        out.write(text)
    return text


def read_tracks_csv(text: str) -> list[tuple[int, str, float, float, float]]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if tuple(header or ()) != TRACK_HEADER:
        raise ValidationError(f"bad track header {header}", "header", ",".join(TRACK_HEADER))
    return [(int(f), eid, float(u), float(v), float(d)) for f, eid, u, v, d in reader]
