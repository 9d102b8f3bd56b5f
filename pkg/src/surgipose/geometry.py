"""SE(3) poses, rotations, pinhole projection, and pose interpolation.

Conventions:
  - translations and depths in millimeters;
  - camera frame is the computer-vision standard: x right, y down, z forward
    into the scene;
  - a Pose maps points from its source frame into its target frame via
    p' = R @ p + t (e.g. a model-to-camera pose maps model points into the
    camera frame).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BehindCamera, InvalidParam, OutOfRange

# Accepted orthonormality drift; beyond this the matrix is snapped to the
# nearest rotation (small drift) or rejected (gross drift).
ROTATION_TOL = 1e-9
_ROTATION_SNAP_LIMIT = 1e-5


def _as_array(value, shape, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise InvalidParam(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParam(f"{name} contains non-finite values")
    return arr


def rotation_drift(r: np.ndarray) -> float:
    """Max elementwise deviation of R^T R from identity, plus |det - 1|."""
    ortho = float(np.max(np.abs(r.T @ r - np.eye(3))))
    det = abs(float(np.linalg.det(r)) - 1.0)
    return max(ortho, det)


def nearest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a 3x3 matrix onto SO(3) (Frobenius-nearest rotation)."""
    u, _, vt = np.linalg.svd(m)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def _checked_rotation(r: np.ndarray, name: str = "rotation") -> np.ndarray:
    drift = rotation_drift(r)
    if drift <= ROTATION_TOL:
        return r
    if drift <= _ROTATION_SNAP_LIMIT:
        return nearest_rotation(r)
    raise InvalidParam(f"{name} is not a rotation matrix (drift {drift:.3e})")


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: 3x3 rotation plus translation in mm.

    Immutable; the wrapped arrays are marked read-only so instances can be
    shared freely between threads.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = _checked_rotation(_as_array(self.rotation, (3, 3), "rotation"))
        t = _as_array(self.translation, (3,), "translation")
        r = np.ascontiguousarray(r)
        t = np.ascontiguousarray(t)
        r.flags.writeable = False
        t.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_rt(cls, rotation, translation) -> "Pose":
        return cls(np.asarray(rotation, dtype=np.float64),
                   np.asarray(translation, dtype=np.float64))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform a (3,) point or (N, 3) point array."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def allclose(self, other: "Pose", tol: float = 1e-9) -> bool:
        return (np.max(np.abs(self.rotation - other.rotation)) <= tol
                and np.max(np.abs(self.translation - other.translation)) <= tol)

    def __repr__(self):
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        return f"Pose(t=[{t}], angle={math.degrees(axis_angle(self.rotation).angle):.4g} deg)"


def compose(a: Pose, b: Pose) -> Pose:
    """a then b applied right-to-left: (a*b).apply(p) == a.apply(b.apply(p))."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: Pose) -> Pose:
    return Pose(p.rotation.T, -(p.rotation.T @ p.translation))


def rotation_x(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rotation_y(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_z(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class AxisAngle:
    """Unit rotation axis and angle in [0, pi]."""

    axis: np.ndarray
    angle: float

    def __post_init__(self):
        axis = _as_array(self.axis, (3,), "axis")
        norm = float(np.linalg.norm(axis))
        if abs(norm - 1.0) > 1e-9:
            raise InvalidParam(f"axis must be unit length, |axis| = {norm}")
        if not 0.0 <= self.angle <= math.pi + 1e-12:
            raise InvalidParam(f"angle must lie in [0, pi], got {self.angle}")
        axis = np.ascontiguousarray(axis)
        axis.flags.writeable = False
        object.__setattr__(self, "axis", axis)
        object.__setattr__(self, "angle", float(min(self.angle, math.pi)))


def _quat_from_rotation(r: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) via the numerically stable branch method."""
    t = r[0, 0] + r[1, 1] + r[2, 2]
    if t > 0:
        s = math.sqrt(t + 1.0) * 2.0
        q = np.array([0.25 * s,
                      (r[2, 1] - r[1, 2]) / s,
                      (r[0, 2] - r[2, 0]) / s,
                      (r[1, 0] - r[0, 1]) / s])
    elif r[0, 0] >= r[1, 1] and r[0, 0] >= r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q = np.array([(r[2, 1] - r[1, 2]) / s,
                      0.25 * s,
                      (r[0, 1] + r[1, 0]) / s,
                      (r[0, 2] + r[2, 0]) / s])
    elif r[1, 1] >= r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        q = np.array([(r[0, 2] - r[2, 0]) / s,
                      (r[0, 1] + r[1, 0]) / s,
                      0.25 * s,
                      (r[1, 2] + r[2, 1]) / s])
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        q = np.array([(r[1, 0] - r[0, 1]) / s,
                      (r[0, 2] + r[2, 0]) / s,
                      (r[1, 2] + r[2, 1]) / s,
                      0.25 * s])
    return q / np.linalg.norm(q)


def axis_angle(rotation: np.ndarray) -> AxisAngle:
    """Axis-angle of a rotation matrix, angle in [0, pi].

    The zero rotation returns an arbitrary unit axis (+x).  At angle pi the
    axis sign is inherently ambiguous; either sign reconstructs the same
    rotation.
    """
    r = _checked_rotation(_as_array(rotation, (3, 3), "rotation"))
    q = _quat_from_rotation(r)
    if q[0] < 0:
        q = -q
    vec_norm = float(np.linalg.norm(q[1:]))
    angle = 2.0 * math.atan2(vec_norm, q[0])
    if vec_norm < 1e-12:
        return AxisAngle(np.array([1.0, 0.0, 0.0]), 0.0)
    return AxisAngle(q[1:] / vec_norm, angle)


def rotation_from(axis: np.ndarray, angle: float) -> np.ndarray:
    """Rotation matrix from a unit axis and angle (Rodrigues)."""
    a = np.asarray(axis, dtype=np.float64)
    norm = float(np.linalg.norm(a))
    if norm < 1e-12:
        raise InvalidParam("axis must be nonzero")
    a = a / norm
    c, s = math.cos(angle), math.sin(angle)
    k = np.array([[0.0, -a[2], a[1]], [a[2], 0.0, -a[0]], [-a[1], a[0], 0.0]])
    return np.eye(3) + s * k + (1.0 - c) * (k @ k)


def interpolate_pose(a: Pose, b: Pose, s: float) -> Pose:
    """Constant-speed shortest-path interpolation between two poses.

    Translation is linear; rotation follows the geodesic on SO(3).
    s = 0 and s = 1 return the endpoints exactly.
    """
    if not 0.0 <= s <= 1.0:
        raise OutOfRange(f"interpolation factor must lie in [0, 1], got {s}")
    if s == 0.0:
        return a
    if s == 1.0:
        return b
    rel = axis_angle(a.rotation.T @ b.rotation)
    rot = a.rotation @ rotation_from(rel.axis, s * rel.angle)
    trans = (1.0 - s) * a.translation + s * b.translation
    return Pose(rot, trans)


@dataclass(frozen=True)
class CameraModel:
    """Pinhole intrinsics plus image resolution (no distortion)."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near_clip: float = 1.0

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidParam("focal lengths must be positive")
        if self.width <= 0 or self.height <= 0:
            raise InvalidParam("resolution must be positive")
        if self.near_clip <= 0:
            raise InvalidParam("near_clip must be positive")

    @property
    def k_matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def project(self, point_cam) -> tuple[float, float]:
        """Project one camera-frame point (mm) to real-valued pixel coords."""
        p = _as_array(point_cam, (3,), "point_cam")
        if p[2] < self.near_clip:
            raise BehindCamera(f"point depth {p[2]} mm is closer than near clip {self.near_clip} mm")
        return (self.fx * p[0] / p[2] + self.cx, self.fy * p[1] / p[2] + self.cy)

    def project_points(self, points_cam: np.ndarray, check: bool = True) -> np.ndarray:
        """Vectorized projection of (N, 3) camera-frame points to (N, 2) pixels."""
        pts = np.asarray(points_cam, dtype=np.float64).reshape(-1, 3)
        if check and np.any(pts[:, 2] < self.near_clip):
            raise BehindCamera("one or more points are closer than the near clip")
        z = pts[:, 2]
        uv = np.empty((len(pts), 2))
        uv[:, 0] = self.fx * pts[:, 0] / z + self.cx
        uv[:, 1] = self.fy * pts[:, 1] / z + self.cy
        return uv

    def scaled(self, width: int, height: int) -> "CameraModel":
        """Intrinsics rescaled to a different resolution (preview rendering)."""
        sx = width / self.width
        sy = height / self.height
        return CameraModel(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy,
                           width, height, self.near_clip)


def pose_to_list(p: Pose) -> list[float]:
    """Flat 12-float encoding: 9 rotation entries row-major, then translation."""
    return [float(v) for v in p.rotation.reshape(9)] + [float(v) for v in p.translation]


def pose_from_list(values) -> Pose:
    vals = np.asarray(values, dtype=np.float64).reshape(-1)
    if vals.shape != (12,):
        raise InvalidParam(f"pose list must hold 12 floats, got {vals.shape[0]}")
    return Pose(vals[:9].reshape(3, 3), vals[9:])
