"""Rigid transforms and the pinhole camera model.

Conventions used throughout the package:

* quaternions are stored ``(w, x, y, z)`` and must be unit norm;
* a ``Pose`` maps points from its own frame into the parent frame
  (``p_parent = R p_local + t``); a camera pose is camera-to-world, so
  world points are brought into the camera frame with ``pose.inverse()``;
* the camera looks down +z, x right, y down; pixel centers sit on integer
  coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

QUAT_NORM_TOL = 1e-9


class BehindCameraError(ValueError):
    """A point with z <= 0 was passed to a projection."""

    def __init__(self, index: int, z: float):
        self.index = index
        self.z = z
        super().__init__(f"point {index} is behind the camera (z={z:.6g} <= 0)")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Pose:
    """Rigid transform: unit quaternion (w,x,y,z) plus translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        q = _readonly(self.rotation)
        t = _readonly(self.translation)
        if q.shape != (4,):
            raise ValueError(f"quaternion must have shape (4,), got {q.shape}")
        if t.shape != (3,):
            raise ValueError(f"translation must have shape (3,), got {t.shape}")
        if not np.all(np.isfinite(q)) or not np.all(np.isfinite(t)):
            raise ValueError("pose has non-finite components")
        norm = float(np.linalg.norm(q))
        if abs(norm - 1.0) > QUAT_NORM_TOL:
            raise ValueError(f"quaternion norm {norm!r} is not 1 within {QUAT_NORM_TOL}")
        object.__setattr__(self, "rotation", q)
        object.__setattr__(self, "translation", t)

    # -- constructors ---------------------------------------------------

    @staticmethod
    def identity() -> "Pose":
        return Pose(np.array([1.0, 0.0, 0.0, 0.0]), np.zeros(3))

    @staticmethod
    def from_quat(wxyz, translation=(0.0, 0.0, 0.0), normalize: bool = False) -> "Pose":
        q = np.asarray(wxyz, dtype=np.float64)
        if normalize:
            q = q / np.linalg.norm(q)
        return Pose(q, np.asarray(translation, dtype=np.float64))

    @staticmethod
    def from_matrix(rot: np.ndarray, translation=(0.0, 0.0, 0.0)) -> "Pose":
        x, y, z, w = Rotation.from_matrix(np.asarray(rot, dtype=np.float64)).as_quat()
        return Pose(np.array([w, x, y, z]), np.asarray(translation, dtype=np.float64))

    @staticmethod
    def from_rotvec(rotvec, translation=(0.0, 0.0, 0.0)) -> "Pose":
        x, y, z, w = Rotation.from_rotvec(np.asarray(rotvec, dtype=np.float64)).as_quat()
        return Pose(np.array([w, x, y, z]), np.asarray(translation, dtype=np.float64))

    @staticmethod
    def random_rotation(rng: np.random.Generator, translation=(0.0, 0.0, 0.0)) -> "Pose":
        """Uniform random orientation (normalized 4-d Gaussian quaternion)."""
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        return Pose(q, np.asarray(translation, dtype=np.float64))

    # -- accessors ------------------------------------------------------

    @property
    def _scipy_rot(self) -> Rotation:
        w, x, y, z = self.rotation
        return Rotation.from_quat([x, y, z, w])

    def rotation_matrix(self) -> np.ndarray:
        return self._scipy_rot.as_matrix()

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix()
        m[:3, 3] = self.translation
        return m

    # -- operations -----------------------------------------------------

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (N,3) or (3,) points into the parent frame."""
        pts = np.asarray(points, dtype=np.float64)
        return self._scipy_rot.apply(pts) + self.translation

    def inverse(self) -> "Pose":
        rinv = self._scipy_rot.inv()
        x, y, z, w = rinv.as_quat()
        return Pose(np.array([w, x, y, z]), -rinv.apply(self.translation))

    def compose(self, other: "Pose") -> "Pose":
        """Return self @ other: apply ``other`` first, then ``self``."""
        r = self._scipy_rot * other._scipy_rot
        x, y, z, w = r.as_quat()
        q = np.array([w, x, y, z])
        q /= np.linalg.norm(q)
        return Pose(q, self.apply(other.translation))

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        # q and -q are the same rotation
        qd = min(
            np.max(np.abs(self.rotation - other.rotation)),
            np.max(np.abs(self.rotation + other.rotation)),
        )
        return bool(qd <= atol and np.max(np.abs(self.translation - other.translation)) <= atol)


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole model: focal lengths / principal point in pixels, image size."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 <= self.cx < self.width):
            raise ValueError(f"cx={self.cx} outside [0, {self.width})")
        if not (0 <= self.cy < self.height):
            raise ValueError(f"cy={self.cy} outside [0, {self.height})")

    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )


def project_points(points: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Project (N,3) camera-frame points to (N,2) pixel coordinates.

    Raises BehindCameraError naming the first offending index if any z <= 0.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    z = pts[:, 2]
    bad = np.nonzero(z <= 0.0)[0]
    if bad.size:
        raise BehindCameraError(int(bad[0]), float(z[bad[0]]))
    u = intrinsics.fx * pts[:, 0] / z + intrinsics.cx
    v = intrinsics.fy * pts[:, 1] / z + intrinsics.cy
    return np.stack([u, v], axis=1)


def pixel_rays(uv: np.ndarray, intrinsics: CameraIntrinsics) -> np.ndarray:
    """Unit ray directions through the given (N,2) pixel coordinates."""
    uv = np.atleast_2d(np.asarray(uv, dtype=np.float64))
    d = np.stack(
        [
            (uv[:, 0] - intrinsics.cx) / intrinsics.fx,
            (uv[:, 1] - intrinsics.cy) / intrinsics.fy,
            np.ones(len(uv)),
        ],
        axis=1,
    )
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def look_at_pose(eye, target, up=(0.0, 0.0, 1.0)) -> Pose:
    """Camera-to-world pose with +z aimed from eye at target.

    ``up`` is the world direction the image top should point toward
    (camera y runs down the image).
    """
    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    fwd = target - eye
    n = np.linalg.norm(fwd)
    if n < 1e-12:
        raise ValueError("eye and target coincide")
    fwd = fwd / n
    up = np.asarray(up, dtype=np.float64)
    down = -up / np.linalg.norm(up)
    y = down - np.dot(down, fwd) * fwd
    ny = np.linalg.norm(y)
    if ny < 1e-9:
        # looking straight along up/down; pick an arbitrary stable y
        alt = np.array([0.0, 1.0, 0.0]) if abs(fwd[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
        y = alt - np.dot(alt, fwd) * fwd
        ny = np.linalg.norm(y)
    y = y / ny
    x = np.cross(y, fwd)
    rot = np.stack([x, y, fwd], axis=1)
    return Pose.from_matrix(rot, eye)
