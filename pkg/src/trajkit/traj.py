"""Procedural 6DoF trajectory templates and multi-entity scene composition.

Locations follow a centripetal Catmull-Rom spline through the template's
control points and are resampled to constant speed. Headings come from the
analytic spline tangent (yaw and pitch, never roll).
"""

from __future__ import annotations

import functools
import itertools
import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import CompositionError, DegenerateTangentError, ValidationError
from .pose import Pose, PoseSequence, rot_z

log = logging.getLogger(__name__)

STAGE_SIZE = 5.0
DEFAULT_FRAMES = 100
DEFAULT_FPS = 20.0
DISCARD_LEADING_FRAMES = 10
ANIMAL_SCALE = 0.6
MAX_ENTITIES = 3
CLEARANCE = 0.5
MAX_PLACEMENT_RETRIES = 64
MAX_YAW_STEP_DEG = 30.0
TANGENT_EPS = 1e-8

FAMILIES = (
    "line",
    "arc",
    "s_curve",
    "circle",
    "turn_back_180",
    "inward_turn_90",
    "figure_eight",
    "static",
)

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(24)


# --------------------------------------------------------------------------
# spline


def _lerp_with_slope(pa, pb, ta, tb, t):
    """Value and d/dt of the knot-parameterized lerp; collapses when ta == tb."""
    dt = tb - ta
    if dt <= 0.0:
        return np.broadcast_to(pb, np.broadcast_shapes(pb.shape, t.shape)), np.zeros_like(t * pb)
    w = (t - ta) / dt
    return pa + w * (pb - pa), np.broadcast_to((pb - pa) / dt, np.broadcast_shapes(pb.shape, t.shape))


class CatmullRom:
    """Centripetal Catmull-Rom curve through ``points`` on a global parameter ``u`` in [0, 1].

    Each segment spans an equal slice of ``u``. Boundary segments use phantom
    points reflected through the end points, so the end tangents point along
    the first and last chords.
    """

    def __init__(self, points: ArrayLike, alpha: float = 0.5):
        P = np.asarray(points, dtype=np.float64)
        if P.ndim != 2 or P.shape[1] != 3:
            raise ValidationError(f"control points must be (n, 3), got {P.shape}", "control_points", "shape (n, 3)")
        if len(P) < 2:
            raise ValidationError("a spline needs at least 2 control points", "control_points", ">= 2 points")
        self.points = P
        padded = np.vstack([2 * P[0] - P[1], P, 2 * P[-1] - P[-2]])
        d = np.linalg.norm(np.diff(padded, axis=0), axis=1)
        self._knots = np.concatenate([[0.0], np.cumsum(d**alpha)])
        self._padded = padded
        self.num_segments = len(P) - 1
        self._seg_lengths = np.array([self._segment_length(i, 1.0) for i in range(self.num_segments)])
        self._cum = np.concatenate([[0.0], np.cumsum(self._seg_lengths)])

    @property
    def length(self) -> float:
        return float(self._cum[-1])

    def _segment(self, i: int, s: NDArray) -> tuple[NDArray, NDArray]:
        """Position and d/ds on segment ``i`` for local ``s`` in [0, 1]; ``s`` is 1-D."""
        p0, p1, p2, p3 = self._padded[i : i + 4]
        t0, t1, t2, t3 = self._knots[i : i + 4]
        s = s[:, None]
        if t2 <= t1:
            return np.broadcast_to(p1, (len(s), 3)).copy(), np.zeros((len(s), 3))
        t = t1 + s * (t2 - t1)
        A1, dA1 = _lerp_with_slope(p0, p1, t0, t1, t)
        A2, dA2 = _lerp_with_slope(p1, p2, t1, t2, t)
        A3, dA3 = _lerp_with_slope(p2, p3, t2, t3, t)
        B1 = ((t2 - t) * A1 + (t - t0) * A2) / (t2 - t0)
        dB1 = (A2 - A1 + (t2 - t) * dA1 + (t - t0) * dA2) / (t2 - t0)
        B2 = ((t3 - t) * A2 + (t - t1) * A3) / (t3 - t1)
        dB2 = (A3 - A2 + (t3 - t) * dA2 + (t - t1) * dA3) / (t3 - t1)
        C = ((t2 - t) * B1 + (t - t1) * B2) / (t2 - t1)
        dC = (B2 - B1 + (t2 - t) * dB1 + (t - t1) * dB2) / (t2 - t1)
        return C, dC * (t2 - t1)

    def _segment_length(self, i: int, s_end: float) -> float:
        return float(self._partial_lengths(i, np.array([s_end]))[0])

    def _partial_lengths(self, i: int, s_end: NDArray) -> NDArray:
        """Arc length from the start of segment ``i`` to each local ``s_end`` (Gauss-Legendre)."""
        nodes = 0.5 * s_end[:, None] * (_GL_NODES + 1.0)
        _, d = self._segment(i, nodes.ravel())
        speed = np.linalg.norm(d, axis=1).reshape(nodes.shape)
        return 0.5 * s_end * (speed @ _GL_WEIGHTS)

    def _locate(self, u: NDArray) -> tuple[NDArray, NDArray]:
        x = u * self.num_segments
        i = np.minimum(np.floor(x).astype(int), self.num_segments - 1)
        return i, x - i

    def evaluate(self, u: ArrayLike) -> tuple[NDArray, NDArray]:
        """Positions and analytic tangents ``d position / du`` for an array of ``u``."""
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        if np.any((u < 0.0) | (u > 1.0)) or not np.all(np.isfinite(u)):
            raise ValidationError("spline parameter must lie in [0, 1]", "u", "0 <= u <= 1")
        seg, s = self._locate(u)
        pos = np.empty((len(u), 3))
        tan = np.empty((len(u), 3))
        for i in np.unique(seg):
            m = seg == i
            pos[m], tan[m] = self._segment(int(i), s[m])
        return pos, tan * self.num_segments

    def u_at_length(self, target: float) -> float:
        """Invert arc length: the ``u`` whose curve length from the start is ``target``."""
        return float(self.u_at_lengths(np.array([target]))[0])

    def u_at_lengths(self, targets: ArrayLike) -> NDArray[np.float64]:
        """Vectorized arc-length inversion by safeguarded Newton iteration per segment."""
        targets = np.clip(np.asarray(targets, dtype=np.float64), 0.0, self.length)
        seg = np.clip(np.searchsorted(self._cum, targets, side="right") - 1, 0, self.num_segments - 1)
        out = np.empty_like(targets)
        for i in np.unique(seg):
            m = seg == i
            local = targets[m] - self._cum[i]
            seg_len = self._seg_lengths[i]
            if seg_len <= 0.0:
                out[m] = i / self.num_segments
                continue
            lo, hi = np.zeros_like(local), np.ones_like(local)
            s = np.clip(local / seg_len, 0.0, 1.0)
            for _ in range(50):
                g = self._partial_lengths(int(i), s) - local
                if np.all(np.abs(g) < 1e-13):
                    break
                hi = np.where(g > 0, s, hi)
                lo = np.where(g > 0, lo, s)
                speed = np.linalg.norm(self._segment(int(i), s)[1], axis=1)
                with np.errstate(divide="ignore", invalid="ignore"):
                    step = s - g / speed
                # Newton, falling back to bisection when it leaves the bracket
                inside = (step > lo) & (step < hi) & np.isfinite(step)
                s = np.where(np.abs(g) < 1e-13, s, np.where(inside, step, 0.5 * (lo + hi)))
            out[m] = (i + s) / self.num_segments
        return out


def eval_spline(control_points: ArrayLike, u: float) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Position and analytic tangent of the centripetal Catmull-Rom spline at ``u``."""
    pos, tan = CatmullRom(control_points).evaluate(u)
    return pos[0], tan[0]


def orientation_from_tangent(tangent: ArrayLike) -> NDArray[np.float64]:
    """Rotation whose body +x axis points along ``tangent``, with zero roll.

    ``yaw = atan2(t_y, t_x)`` and ``pitch = asin(t_z / |t|)``; positive pitch
    raises the nose toward +z. The result is ``Rz(yaw) @ Ry(-pitch)``.
    """
    t = np.asarray(tangent, dtype=np.float64)
    n = float(np.linalg.norm(t))
    if not n > TANGENT_EPS:
        raise DegenerateTangentError(f"tangent norm {n:.3g} too small for a heading", "tangent", "norm > 1e-8")
    yaw = np.arctan2(t[1], t[0])
    pitch = np.arcsin(np.clip(t[2] / n, -1.0, 1.0))
    return _yaw_pitch_matrix(yaw, pitch)


def _yaw_pitch_matrix(yaw: float, pitch: float) -> NDArray[np.float64]:
    cy, sy = np.cos(yaw), np.sin(yaw)
    cp, sp = np.cos(pitch), np.sin(pitch)
    # Rz(yaw) @ Ry(-pitch), written out so R[2, 1] is exactly 0
    return np.array(
        [
            [cy * cp, -sy, -cy * sp],
            [sy * cp, cy, -sy * sp],
            [sp, 0.0, cp],
        ]
    )


def yaw_pitch(R: ArrayLike) -> tuple[float, float]:
    """Yaw and pitch (degrees) of the body +x axis."""
    R = np.asarray(R)
    fwd = R[:, 0]
    return float(np.degrees(np.arctan2(fwd[1], fwd[0]))), float(np.degrees(np.arcsin(np.clip(fwd[2], -1, 1))))


# --------------------------------------------------------------------------
# templates


def _stage_contains(xy: NDArray, half: float, tol: float = 1e-9) -> bool:
    return bool(np.all(np.abs(xy) <= half + tol))


@dataclass(frozen=True)
class TrajectoryTemplate:
    """A canonical-space motion: control points in meters plus family metadata.

    ``duration`` is the nominal clip length in seconds; generated sequences
    take their timing from the requested frame count and fps.
    """

    family: str
    control_points: tuple[tuple[float, float, float], ...]
    duration: float = DEFAULT_FRAMES / DEFAULT_FPS
    params: tuple[tuple[str, float], ...] = ()
    name: str = ""

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValidationError(f"unknown family {self.family!r}", "family", f"one of {FAMILIES}")
        pts = tuple(tuple(float(c) for c in p) for p in self.control_points)
        object.__setattr__(self, "control_points", pts)
        object.__setattr__(self, "params", tuple((str(k), float(v)) for k, v in self.params))
        if self.family == "static":
            if len(pts) != 1:
                raise ValidationError("static templates take exactly one control point", "control_points", "== 1 point")
        elif len(pts) < 2:
            raise ValidationError("spline templates need at least two control points", "control_points", ">= 2 points")
        arr = np.asarray(pts)
        if arr.shape[1] != 3 or not np.all(np.isfinite(arr)):
            raise ValidationError("control points must be finite 3-vectors", "control_points", "finite (n, 3)")
        if not _stage_contains(arr[:, :2], STAGE_SIZE / 2):
            raise ValidationError("control points leave the 5 m stage", "control_points", "|x|, |y| <= 2.5")
        if self.duration <= 0:
            raise ValidationError("duration must be positive", "duration", "> 0")
        if not self.name:
            object.__setattr__(self, "name", self.family + "".join(f"_{k}{v:g}" for k, v in self.params))

    @property
    def points(self) -> NDArray[np.float64]:
        return np.asarray(self.control_points)

    def param(self, key: str, default: float | None = None) -> float | None:
        return dict(self.params).get(key, default)


def generate_template(template: TrajectoryTemplate, F: int = DEFAULT_FRAMES, fps: float = DEFAULT_FPS) -> PoseSequence:
    """Sample ``F`` constant-speed poses along a template.

    Per-frame yaw changes above 30 degrees are clamped and logged.
    """
    return _generate_cached(template, int(F), float(fps))


@functools.lru_cache(maxsize=1024)
def _generate_cached(template: TrajectoryTemplate, F: int, fps: float) -> PoseSequence:
    if fps <= 0:
        raise ValidationError(f"fps must be positive, got {fps}", "fps", "> 0")
    pts = template.points
    if template.family == "static":
        if F < 1:
            raise ValidationError(f"need at least one frame, got {F}", "F", ">= 1")
        R = rot_z(template.param("yaw", 0.0))
        return PoseSequence(np.repeat(R[None], F, axis=0), np.repeat(pts[:1], F, axis=0), fps)
    if F < 2:
        raise ValidationError(f"moving templates need F >= 2, got {F}", "F", ">= 2")
    if np.all(np.linalg.norm(pts - pts[0], axis=1) == 0.0):
        raise ValidationError(f"template {template.name} has coincident control points", "control_points", "distinct")
    curve = _curve(template)
    u = curve.u_at_lengths(np.linspace(0.0, curve.length, F))
    u[0], u[-1] = 0.0, 1.0
    pos, tan = curve.evaluate(u)
    pos[0] = pts[0]
    rots = _headings(tan, template.name)
    return PoseSequence(rots, pos, fps)


@functools.lru_cache(maxsize=1024)
def _curve(template: TrajectoryTemplate) -> CatmullRom:
    return CatmullRom(template.points)


def _headings(tangents: NDArray, label: str = "") -> NDArray[np.float64]:
    rots = np.empty((len(tangents), 3, 3))
    prev_yaw: float | None = None
    prev_R = np.eye(3)
    clamped = 0
    max_step = np.radians(MAX_YAW_STEP_DEG)
    for f, t in enumerate(tangents):
        n = np.linalg.norm(t)
        if not n > TANGENT_EPS:
            rots[f] = prev_R
            continue
        yaw = float(np.arctan2(t[1], t[0]))
        pitch = float(np.arcsin(np.clip(t[2] / n, -1.0, 1.0)))
        if prev_yaw is not None:
            step = (yaw - prev_yaw + np.pi) % (2 * np.pi) - np.pi
            if abs(step) > max_step:
                yaw = prev_yaw + np.copysign(max_step, step)
                clamped += 1
        rots[f] = prev_R = _yaw_pitch_matrix(yaw, pitch)
        prev_yaw = yaw
    if clamped:
        log.warning("template %s: clamped %d yaw steps above %.0f deg/frame", label, clamped, MAX_YAW_STEP_DEG)
    return rots


def yaw_steps_deg(seq: PoseSequence) -> NDArray[np.float64]:
    """Absolute wrapped yaw change between consecutive frames, degrees."""
    yaw = np.arctan2(seq.rotations[:, 1, 0], seq.rotations[:, 0, 0])
    step = (np.diff(yaw) + np.pi) % (2 * np.pi) - np.pi
    return np.degrees(np.abs(step))


def exceeds_yaw_limit(template: TrajectoryTemplate, F: int = DEFAULT_FRAMES) -> bool:
    """True if the raw spline heading turns faster than 30 deg/frame anywhere."""
    if template.family == "static":
        return False
    curve = _curve(template)
    u = curve.u_at_lengths(np.linspace(0.0, curve.length, F))
    _, tan = curve.evaluate(u)
    yaw = np.arctan2(tan[:, 1], tan[:, 0])
    step = np.abs((np.diff(yaw) + np.pi) % (2 * np.pi) - np.pi)
    return bool(np.any(np.degrees(step) > MAX_YAW_STEP_DEG))


def _centered(points: NDArray) -> NDArray:
    lo, hi = points.min(axis=0), points.max(axis=0)
    c = 0.5 * (lo + hi)
    c[2] = 0.0
    return points - c


def _make(family: str, pts: ArrayLike, **params: float) -> TrajectoryTemplate:
    pts = _centered(np.asarray(pts, dtype=np.float64))
    return TrajectoryTemplate(family, tuple(map(tuple, pts)), params=tuple(params.items()))


def _arc_points(center, radius, start_deg, sweep_deg, n):
    a = np.radians(start_deg + np.linspace(0.0, sweep_deg, n))
    return np.column_stack([center[0] + radius * np.cos(a), center[1] + radius * np.sin(a), np.zeros(n)])


def line_template(length: float) -> TrajectoryTemplate:
    n = max(2, int(np.ceil(length)) + 1)
    x = np.linspace(0.0, length, n)
    return _make("line", np.column_stack([x, np.zeros(n), np.zeros(n)]), length=length)


def arc_template(radius: float, sweep: float, side: int) -> TrajectoryTemplate:
    """Constant-curvature turn; ``side`` +1 turns left (counter-clockwise), -1 right."""
    n = max(3, int(np.ceil(sweep / 15.0)) + 1)
    pts = _arc_points((0.0, side * radius), radius, -90.0 * side, side * sweep, n)
    return _make("arc", pts, radius=radius, sweep=sweep, side=side)


def s_curve_template(length: float, amplitude: float, side: int) -> TrajectoryTemplate:
    x = np.linspace(0.0, length, 9)
    y = side * amplitude * np.sin(2 * np.pi * x / length)
    return _make("s_curve", np.column_stack([x, y, np.zeros_like(x)]), length=length, amplitude=amplitude, side=side)


def circle_template(radius: float, side: int) -> TrajectoryTemplate:
    pts = _arc_points((0.0, side * radius), radius, -90.0 * side, side * 360.0, 17)
    pts[-1] = pts[0]
    return _make("circle", pts, radius=radius, side=side)


def turn_back_template(leg: float, radius: float, side: int) -> TrajectoryTemplate:
    """Out along +x, a half-circle U-turn, and back along -x."""
    out = np.column_stack([np.linspace(0.0, leg, 3), np.zeros(3), np.zeros(3)])
    turn = _arc_points((leg, side * radius), radius, -90.0 * side, side * 180.0, 7)[1:-1]
    back = np.column_stack([np.linspace(leg, 0.0, 3), np.full(3, 2 * side * radius), np.zeros(3)])
    return _make("turn_back_180", np.vstack([out, turn, back]), leg=leg, radius=radius, side=side)


def inward_turn_template(leg: float, radius: float, side: int) -> TrajectoryTemplate:
    """Along +x, a quarter-circle turn, then along +/-y."""
    out = np.column_stack([np.linspace(0.0, leg, 3), np.zeros(3), np.zeros(3)])
    turn = _arc_points((leg, side * radius), radius, -90.0 * side, side * 90.0, 5)[1:-1]
    end = np.array([leg + radius, side * radius, 0.0])
    up = np.column_stack([np.full(3, end[0]), side * (radius + np.linspace(0.0, leg, 3)), np.zeros(3)])
    return _make("inward_turn_90", np.vstack([out, turn, up]), leg=leg, radius=radius, side=side)


def figure_eight_template(size: float, side: int) -> TrajectoryTemplate:
    """Figure-eight (x = s sin a, y = s/2 sin 2a) traced once from its crossing point."""
    a = np.linspace(0.0, 2 * np.pi, 25)
    x = size * np.sin(a)
    y = side * 0.5 * size * np.sin(2 * a)
    pts = np.column_stack([x, y, np.zeros_like(x)])
    pts[-1] = pts[0]
    return _make("figure_eight", pts, size=size, side=side)


def static_template(position: ArrayLike = (0.0, 0.0, 0.0), yaw: float = 0.0) -> TrajectoryTemplate:
    return TrajectoryTemplate("static", (tuple(position),), params=(("yaw", yaw),))


@functools.lru_cache(maxsize=1)
def default_template_library() -> tuple[TrajectoryTemplate, ...]:
    """Procedural template library: family x parameter grid, 97 entries."""
    sides = (1, -1)
    lib: list[TrajectoryTemplate] = []
    lib += [line_template(L) for L in (1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5)]
    lib += [arc_template(r, s, d) for r, s, d in itertools.product((1.0, 1.5, 2.0), (45.0, 90.0, 135.0), sides)]
    lib += [s_curve_template(L, a, d) for L, a, d in itertools.product((2.0, 3.0, 4.0), (0.3, 0.6, 0.9), sides)]
    lib += [circle_template(r, d) for r, d in itertools.product((0.75, 1.0, 1.25, 1.5), sides)]
    lib += [turn_back_template(L, r, d) for L, r, d in itertools.product((1.0, 1.5, 2.0), (0.4, 0.6, 0.8), sides)]
    lib += [inward_turn_template(L, r, d) for L, r, d in itertools.product((1.0, 1.5, 2.0), (0.4, 0.6, 0.8), sides)]
    lib += [figure_eight_template(s, d) for s, d in itertools.product((0.8, 1.0, 1.2), sides)]
    lib += [static_template(yaw=y) for y in (0.0, 90.0, 180.0, 270.0)]
    return tuple(lib)


# --------------------------------------------------------------------------
# scenes


@dataclass(frozen=True)
class SceneEntity:
    entity_id: str
    prompt: str
    scale_factor: float
    trajectory: PoseSequence
    kind: str = "human"


@dataclass(frozen=True)
class SceneComposition:
    """One to three entities moving on the 5 m x 5 m stage centered at the origin."""

    entities: tuple[SceneEntity, ...]
    location_tag: str = "city"
    stage_size: float = STAGE_SIZE

    def __post_init__(self) -> None:
        ents = tuple(self.entities)
        object.__setattr__(self, "entities", ents)
        if not 1 <= len(ents) <= MAX_ENTITIES:
            raise ValidationError(f"a scene holds 1 to {MAX_ENTITIES} entities, got {len(ents)}", "entities", "1 <= N <= 3")
        ids = [e.entity_id for e in ents]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate entity ids {ids}", "entities.id", "unique")
        F, fps = ents[0].trajectory.num_frames, ents[0].trajectory.fps
        for e in ents:
            if e.trajectory.num_frames != F:
                raise ValidationError(
                    f"entity {e.entity_id} has {e.trajectory.num_frames} frames, expected {F}",
                    "entities.poses",
                    "shared frame count",
                )
            if e.trajectory.fps != fps:
                raise ValidationError(f"entity {e.entity_id} has fps {e.trajectory.fps}, expected {fps}", "fps", "shared fps")
            if not _stage_contains(e.trajectory.translations[:, :2], self.stage_size / 2):
                raise ValidationError(f"entity {e.entity_id} leaves the stage", "entities.poses", "inside stage bounds")
            if not e.scale_factor > 0:
                raise ValidationError(f"entity {e.entity_id} has scale {e.scale_factor}", "entities.scale", "> 0")

    @property
    def num_frames(self) -> int:
        return self.entities[0].trajectory.num_frames

    @property
    def fps(self) -> float:
        return self.entities[0].trajectory.fps

    def entity(self, entity_id: str) -> SceneEntity:
        for e in self.entities:
            if e.entity_id == entity_id:
                return e
        raise KeyError(entity_id)

    def drop_leading(self, n: int = DISCARD_LEADING_FRAMES) -> SceneComposition:
        """Discard the first ``n`` frames of every trajectory."""
        ents = tuple(
            SceneEntity(e.entity_id, e.prompt, e.scale_factor, e.trajectory.drop_leading(n), e.kind) for e in self.entities
        )
        return SceneComposition(ents, self.location_tag, self.stage_size)


def scale_for(kind: str) -> float:
    return ANIMAL_SCALE if kind == "animal" else 1.0


def min_pairwise_distance(a: PoseSequence, b: PoseSequence) -> float:
    """Smallest per-frame center distance between two equal-length trajectories."""
    return float(np.min(np.linalg.norm(a.translations - b.translations, axis=1)))


@dataclass(frozen=True)
class EntitySlot:
    template: TrajectoryTemplate
    kind: str = "human"
    prompt: str | None = None
    entity_id: str | None = None


def _as_slot(entry) -> EntitySlot:
    if isinstance(entry, EntitySlot):
        return entry
    if isinstance(entry, TrajectoryTemplate):
        return EntitySlot(entry)
    return EntitySlot(*entry)


def compose_scene(
    entries: Sequence,
    F: int = DEFAULT_FRAMES,
    fps: float = DEFAULT_FPS,
    seed: int = 0,
    *,
    location_tag: str = "city",
    clearance: float = CLEARANCE,
    max_retries: int = MAX_PLACEMENT_RETRIES,
) -> SceneComposition:
    """Place 1-3 templates on the stage with a seeded random yaw and offset each.

    ``entries`` items are :class:`EntitySlot` or tuples
    ``(template, kind[, prompt[, entity_id]])``. A placement is accepted when
    every pair of entities stays ``clearance`` apart at every frame; otherwise
    it is redrawn up to ``max_retries`` times.
    """
    slots = [_as_slot(e) for e in entries]
    if not 1 <= len(slots) <= MAX_ENTITIES:
        raise ValidationError(f"a scene holds 1 to {MAX_ENTITIES} entities, got {len(slots)}", "entities", "1 <= N <= 3")
    rng = np.random.default_rng(seed)
    ids = [s.entity_id or f"e{i}" for i, s in enumerate(slots)]
    canon = [generate_template(s.template, F, fps) for s in slots]
    half = STAGE_SIZE / 2 - 1e-9
    pair_failures: dict[tuple[str, str], int] = {}
    fit_failures = 0
    for _ in range(max_retries):
        placed: list[PoseSequence] = []
        for seq in canon:
            R = rot_z(float(rng.uniform(0.0, 360.0)))
            xy = seq.translations @ R.T
            lo = -half - xy.min(axis=0)
            hi = half - xy.max(axis=0)
            u = rng.uniform(0.0, 1.0, size=3)
            if np.any(lo[:2] > hi[:2]):
                break
            offset = np.array([lo[0] + u[0] * (hi[0] - lo[0]), lo[1] + u[1] * (hi[1] - lo[1]), 0.0])
            placed.append(seq.transformed(Pose(R, offset)))
        if len(placed) < len(canon):
            fit_failures += 1
            continue
        bad = [
            (ids[i], ids[j])
            for i, j in itertools.combinations(range(len(placed)), 2)
            if min_pairwise_distance(placed[i], placed[j]) < clearance
        ]
        if not bad:
            ents = tuple(
                SceneEntity(ids[i], s.prompt or _default_prompt(s.kind), scale_for(s.kind), placed[i], s.kind)
                for i, s in enumerate(slots)
            )
            return SceneComposition(ents, location_tag)
        for pair in bad:
            pair_failures[pair] = pair_failures.get(pair, 0) + 1
    if pair_failures:
        worst = max(pair_failures, key=lambda p: pair_failures[p])
        raise CompositionError(
            f"no collision-free placement in {max_retries} tries; {worst[0]} and {worst[1]} "
            f"came within {clearance} m in {pair_failures[worst]} tries",
            worst,
        )
    raise CompositionError(f"templates do not fit on the stage after {max_retries} tries ({fit_failures} misfits)")


def _default_prompt(kind: str) -> str:
    return "an animal" if kind == "animal" else "a person"
