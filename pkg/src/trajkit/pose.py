"""Rigid 6DoF poses and pose sequences.

World frame is right-handed with +z up; a body at zero yaw faces +x.
Rotations are stored as 3x3 matrices. Quaternions only appear inside
:func:`interpolate`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.spatial.transform import Rotation

from .errors import LengthMismatchError, PoseValidationError

COORDINATE_CONVENTION = "right-handed,z-up,x-forward"

ORTHO_TOL = 1e-9
REPAIR_TOL = 1e-6


def _frozen(a: NDArray) -> NDArray:
    a.setflags(write=False)
    return a


def orthonormal_error(R: NDArray) -> float:
    """Max-abs entry of ``R^T R - I`` (works on stacks of matrices too)."""
    R = np.asarray(R, dtype=np.float64)
    eye = np.eye(3)
    return float(np.max(np.abs(np.swapaxes(R, -1, -2) @ R - eye)))


def _polar(R: NDArray) -> NDArray:
    U, _, Vt = np.linalg.svd(R)
    return U @ Vt


def check_rotation(R: ArrayLike, name: str = "R") -> NDArray[np.float64]:
    """Validate a 3x3 (or stacked ``(..., 3, 3)``) rotation.

    Matrices within ``1e-9`` of orthonormal pass unchanged; within ``1e-6``
    they are projected back with a polar decomposition; anything worse raises.
    """
    R = np.array(R, dtype=np.float64)
    if R.shape[-2:] != (3, 3):
        raise PoseValidationError(f"{name} must be 3x3, got shape {R.shape}")
    if not np.all(np.isfinite(R)):
        raise PoseValidationError(f"{name} has non-finite entries")
    flat = R.reshape(-1, 3, 3)
    err = np.max(np.abs(np.swapaxes(flat, -1, -2) @ flat - np.eye(3)), axis=(1, 2))
    det_err = np.abs(np.linalg.det(flat) - 1.0)
    worst = np.maximum(err, det_err)
    bad = worst >= REPAIR_TOL
    if np.any(bad):
        i = int(np.argmax(worst))
        where = f"{name}[{i}]" if R.ndim > 2 else name
        raise PoseValidationError(
            f"{where} is not a rotation: |R^T R - I|_inf = {err[i]:.3g}, det = {np.linalg.det(flat[i]):.6g}"
        )
    fix = worst >= ORTHO_TOL
    if np.any(fix):
        flat = flat.copy()
        flat[fix] = _polar(flat[fix])
        R = flat.reshape(R.shape)
    return R


def _check_translation(T: ArrayLike, shape: tuple[int, ...], name: str = "T") -> NDArray[np.float64]:
    T = np.array(T, dtype=np.float64)
    if T.shape != shape:
        raise PoseValidationError(f"{name} must have shape {shape}, got {T.shape}")
    if not np.all(np.isfinite(T)):
        raise PoseValidationError(f"{name} has non-finite entries")
    return T


@dataclass(frozen=True, eq=False)
class Pose:
    """A rigid transform ``x -> R @ x + T`` (translation in meters)."""

    R: NDArray[np.float64]
    T: NDArray[np.float64]

    def __post_init__(self) -> None:
        R = check_rotation(self.R)
        if R.shape != (3, 3):
            raise PoseValidationError(f"R must be 3x3, got shape {R.shape}")
        object.__setattr__(self, "R", _frozen(R))
        object.__setattr__(self, "T", _frozen(_check_translation(self.T, (3,))))

    @classmethod
    def identity(cls) -> Pose:
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, H: ArrayLike) -> Pose:
        H = np.asarray(H, dtype=np.float64)
        if H.shape != (4, 4):
            raise PoseValidationError(f"homogeneous matrix must be 4x4, got {H.shape}")
        return cls(H[:3, :3], H[:3, 3])

    def as_matrix(self) -> NDArray[np.float64]:
        H = np.eye(4)
        H[:3, :3] = self.R
        H[:3, 3] = self.T
        return H

    def as_row(self) -> NDArray[np.float64]:
        """Flatten to 12 floats: R row-major, then T."""
        return np.concatenate([self.R.ravel(), self.T])

    @classmethod
    def from_row(cls, row: ArrayLike) -> Pose:
        row = np.asarray(row, dtype=np.float64)
        if row.shape != (12,):
            raise PoseValidationError(f"pose row must have 12 values, got {row.shape}")
        return cls(row[:9].reshape(3, 3), row[9:])

    def apply(self, points: ArrayLike) -> NDArray[np.float64]:
        """Transform points of shape ``(3,)`` or ``(n, 3)``."""
        return np.asarray(points, dtype=np.float64) @ self.R.T + self.T

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.R, other.R) and np.array_equal(self.T, other.T))

    def isclose(self, other: Pose, atol: float = 1e-9) -> bool:
        return bool(np.allclose(self.R, other.R, rtol=0, atol=atol) and np.allclose(self.T, other.T, rtol=0, atol=atol))

    def __repr__(self) -> str:
        return f"Pose(R={self.R.tolist()}, T={self.T.tolist()})"


@dataclass(frozen=True, eq=False)
class PoseSequence:
    """Per-frame poses sampled at ``fps``.

    Stored as stacked arrays: ``rotations`` is ``(F, 3, 3)`` and
    ``translations`` is ``(F, 3)``.
    """

    rotations: NDArray[np.float64]
    translations: NDArray[np.float64]
    fps: float = 20.0

    def __post_init__(self) -> None:
        R = np.array(self.rotations, dtype=np.float64)
        if R.ndim != 3 or R.shape[0] < 1:
            raise PoseValidationError(f"rotations must be (F, 3, 3) with F >= 1, got {R.shape}")
        R = check_rotation(R, "rotations")
        T = _check_translation(self.translations, (R.shape[0], 3), "translations")
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise PoseValidationError(f"fps must be positive, got {self.fps}")
        object.__setattr__(self, "rotations", _frozen(R))
        object.__setattr__(self, "translations", _frozen(T))
        object.__setattr__(self, "fps", float(self.fps))

    @classmethod
    def from_poses(cls, poses: Sequence[Pose], fps: float = 20.0) -> PoseSequence:
        if len(poses) == 0:
            raise PoseValidationError("a pose sequence needs at least one frame")
        return cls(np.stack([p.R for p in poses]), np.stack([p.T for p in poses]), fps)

    @classmethod
    def from_rows(cls, rows: ArrayLike, fps: float = 20.0) -> PoseSequence:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.ndim != 2 or rows.shape[1] != 12:
            raise PoseValidationError(f"pose rows must be (F, 12), got {rows.shape}")
        return cls(rows[:, :9].reshape(-1, 3, 3), rows[:, 9:], fps)

    @property
    def num_frames(self) -> int:
        return self.rotations.shape[0]

    @property
    def poses(self) -> list[Pose]:
        return [Pose(R, T) for R, T in zip(self.rotations, self.translations)]

    def as_rows(self) -> NDArray[np.float64]:
        """``(F, 12)`` array, each row R row-major followed by T."""
        return np.concatenate([self.rotations.reshape(-1, 9), self.translations], axis=1)

    def __len__(self) -> int:
        return self.num_frames

    def __getitem__(self, i: int) -> Pose:
        return Pose(self.rotations[i], self.translations[i])

    def __iter__(self) -> Iterator[Pose]:
        return iter(self.poses)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PoseSequence):
            return NotImplemented
        return (
            self.fps == other.fps
            and np.array_equal(self.rotations, other.rotations)
            and np.array_equal(self.translations, other.translations)
        )

    def translated(self, offset: ArrayLike) -> PoseSequence:
        return PoseSequence(self.rotations, self.translations + np.asarray(offset, dtype=np.float64), self.fps)

    def transformed(self, placement: Pose) -> PoseSequence:
        """Left-compose every frame with ``placement``."""
        R = placement.R @ self.rotations
        T = self.translations @ placement.R.T + placement.T
        return PoseSequence(R, T, self.fps)

    def static_copy(self) -> PoseSequence:
        """Same length, every frame equal to frame 0."""
        F = self.num_frames
        return PoseSequence(
            np.repeat(self.rotations[:1], F, axis=0),
            np.repeat(self.translations[:1], F, axis=0),
            self.fps,
        )

    def drop_leading(self, n: int) -> PoseSequence:
        if not 0 <= n < self.num_frames:
            raise ValueError(f"cannot drop {n} of {self.num_frames} frames")
        return PoseSequence(self.rotations[n:], self.translations[n:], self.fps)


def rot_x(deg: float) -> NDArray[np.float64]:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg: float) -> NDArray[np.float64]:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg: float) -> NDArray[np.float64]:
    c, s = np.cos(np.radians(deg)), np.sin(np.radians(deg))
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_of(R: ArrayLike) -> float:
    """Heading of the body +x axis in the ground plane, degrees in (-180, 180]."""
    R = np.asarray(R)
    return float(np.degrees(np.arctan2(R[1, 0], R[0, 0])))


def compose(a: Pose, b: Pose) -> Pose:
    """``a ∘ b``: apply ``b`` first, then ``a``."""
    return Pose(a.R @ b.R, a.R @ b.T + a.T)


def invert(p: Pose) -> Pose:
    Rt = p.R.T
    return Pose(Rt, -Rt @ p.T)


def rotation_angle_between(a: ArrayLike, b: ArrayLike) -> float:
    """Geodesic angle between two rotations in degrees, in [0, 180]."""
    a = check_rotation(a, "a")
    b = check_rotation(b, "b")
    return float(_angles_deg(a[None], b[None])[0])


def _angles_deg(Ra: NDArray, Rb: NDArray) -> NDArray[np.float64]:
    # M = Ra Rb^T: sin from the antisymmetric part, cos from the trace. Both
    # carry absolute error ~eps, so atan2 is accurate over the whole range.
    P = Ra[:, :, None, :] * Rb[:, None, :, :]  # P[f, i, j, k] = Ra[i, k] Rb[j, k]
    A = (P - np.swapaxes(P, 1, 2)).sum(axis=-1)  # M - M^T, exactly 0 when Ra == Rb
    sin = 0.5 * np.sqrt(A[:, 2, 1] ** 2 + A[:, 0, 2] ** 2 + A[:, 1, 0] ** 2)
    cos = 0.5 * (np.einsum("fij,fij->f", Ra, Rb) - 1.0)
    return np.degrees(np.arctan2(sin, cos))


def rotation_angles_between(a: PoseSequence, b: PoseSequence) -> NDArray[np.float64]:
    """Per-frame geodesic angles (degrees) between two equal-length sequences."""
    if a.num_frames != b.num_frames:
        raise LengthMismatchError(a.num_frames, b.num_frames)
    return _angles_deg(a.rotations, b.rotations)


def align_first_frame(est: PoseSequence, gt: PoseSequence) -> PoseSequence:
    """Shift ``est`` so its frame-0 location equals ``gt``'s. Rotations are untouched."""
    if est.num_frames != gt.num_frames:
        raise LengthMismatchError(est.num_frames, gt.num_frames)
    offset = gt.translations[0] - est.translations[0]
    T = est.translations + offset
    # x + (g - x) need not round to g; pin frame 0
    T[0] = gt.translations[0]
    return PoseSequence(est.rotations, T, est.fps)


def _slerp_quat(q0: NDArray, q1: NDArray, s: float) -> NDArray:
    dot = float(np.dot(q0, q1))
    if dot < 0.0:
        q1, dot = -q1, -dot
    dot = min(dot, 1.0)
    theta = np.arccos(dot)
    if theta < 1e-12:
        q = (1.0 - s) * q0 + s * q1
    else:
        q = (np.sin((1.0 - s) * theta) * q0 + np.sin(s * theta) * q1) / np.sin(theta)
    return q / np.linalg.norm(q)


def interpolate(a: Pose, b: Pose, s: float) -> Pose:
    """Blend two poses: linear in translation, shortest-arc slerp in rotation."""
    if not 0.0 <= s <= 1.0:
        raise ValueError(f"interpolation parameter must lie in [0, 1], got {s}")
    if s == 0.0:
        return a
    if s == 1.0:
        return b
    q0 = Rotation.from_matrix(a.R).as_quat()
    q1 = Rotation.from_matrix(b.R).as_quat()
    R = Rotation.from_quat(_slerp_quat(q0, q1, s)).as_matrix()
    return Pose(R, (1.0 - s) * a.T + s * b.T)
