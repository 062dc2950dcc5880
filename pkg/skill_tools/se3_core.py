"""
📐 SE(3) Core
Rigid transforms, Euler conversions and pinhole camera primitives.

Euler convention used everywhere in this package: intrinsic Z-Y-X
(yaw-pitch-roll). An orientation (alpha, beta, gamma) is the matrix

    R = Rz(alpha) @ Ry(beta) @ Rx(gamma)

so gamma is applied first when reading the product in the fixed frame.
Angles are stored wrapped to [-pi, pi). At gimbal lock (|beta| within 1e-6
of pi/2) matrix_to_euler returns gamma = 0 and folds the free angle into
alpha.

All values are immutable; every function here is pure.
"""

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np

from .errors import NonFiniteInput, NonOrthonormalInput, NonPositiveDepth

ORTHONORMAL_TOL = 1e-9
GIMBAL_TOL = 1e-6

Vector3 = Tuple[float, float, float]


def wrap_angle(theta: float) -> float:
    """Wrap to [-pi, pi); pi itself maps to -pi"""
    if not math.isfinite(theta):
        raise NonFiniteInput(f"cannot wrap non-finite angle {theta!r}")
    if -math.pi <= theta < math.pi:
        return float(theta)
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped < 0.0:
        wrapped += 2.0 * math.pi
    wrapped -= math.pi
    if wrapped >= math.pi:
        wrapped -= 2.0 * math.pi
    return wrapped


def _frozen(array) -> np.ndarray:
    out = np.array(array, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation (3x3, orthonormal, det +1) and translation in meters"""
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, 'rotation', _frozen(self.rotation).reshape(3, 3))
        object.__setattr__(self, 'translation', _frozen(self.translation).reshape(3))

    @classmethod
    def identity(cls) -> 'RigidTransform':
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> 'RigidTransform':
        matrix = np.asarray(matrix, dtype=float)
        return cls(matrix[:3, :3], matrix[:3, 3])

    def as_matrix(self) -> np.ndarray:
        out = np.eye(4)
        out[:3, :3] = self.rotation
        out[:3, 3] = self.translation
        return out

    def apply(self, point) -> np.ndarray:
        return self.rotation @ np.asarray(point, dtype=float) + self.translation

    def allclose(self, other: 'RigidTransform', atol: float = 1e-9) -> bool:
        return (np.allclose(self.rotation, other.rotation, rtol=0.0, atol=atol)
                and np.allclose(self.translation, other.translation, rtol=0.0, atol=atol))

    def __repr__(self):
        return f"RigidTransform(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


@dataclass(frozen=True)
class Pose6D:
    """Translation (meters) and intrinsic Z-Y-X Euler orientation (radians)"""
    translation: Vector3
    orientation: Vector3

    def __post_init__(self):
        t = tuple(float(v) for v in self.translation)
        o = tuple(wrap_angle(float(v)) for v in self.orientation)
        if len(t) != 3 or len(o) != 3:
            raise ValueError("Pose6D needs 3 translation and 3 orientation values")
        object.__setattr__(self, 'translation', t)
        object.__setattr__(self, 'orientation', o)

    @classmethod
    def identity(cls) -> 'Pose6D':
        return cls((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> 'Pose6D':
        values = [float(v) for v in values]
        if len(values) != 6:
            raise ValueError(f"expected 6 values, got {len(values)}")
        return cls(tuple(values[:3]), tuple(values[3:]))

    @classmethod
    def from_transform(cls, transform: RigidTransform) -> 'Pose6D':
        return cls(tuple(transform.translation.tolist()), matrix_to_euler(transform.rotation))

    def to_transform(self) -> RigidTransform:
        return RigidTransform(euler_to_matrix(self.orientation), self.translation)

    def rotation_matrix(self) -> np.ndarray:
        return euler_to_matrix(self.orientation)

    def as_vector(self) -> Tuple[float, ...]:
        return self.translation + self.orientation


@dataclass(frozen=True)
class CameraFrame:
    """Pinhole intrinsics (fx, fy, cx, cy) and the world-to-camera extrinsic of one frame"""
    intrinsics: Tuple[float, float, float, float]
    extrinsic_world_to_cam: RigidTransform
    frame_id: int

    def __post_init__(self):
        intrinsics = tuple(float(v) for v in self.intrinsics)
        if len(intrinsics) != 4:
            raise ValueError("intrinsics must be (fx, fy, cx, cy)")
        if intrinsics[0] <= 0 or intrinsics[1] <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={intrinsics[0]} fy={intrinsics[1]}")
        object.__setattr__(self, 'intrinsics', intrinsics)
        object.__setattr__(self, 'frame_id', int(self.frame_id))

    def camera_to_world(self) -> RigidTransform:
        return invert(self.extrinsic_world_to_cam)


def _elementary(axis: str, angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    if axis == 'x':
        return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])
    if axis == 'y':
        return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_matrix(angles: Sequence[float]) -> np.ndarray:
    alpha, beta, gamma = (float(a) for a in angles)
    return _elementary('z', alpha) @ _elementary('y', beta) @ _elementary('x', gamma)


def check_rotation(matrix: np.ndarray, tol: float = ORTHONORMAL_TOL) -> np.ndarray:
    m = np.asarray(matrix, dtype=float)
    if m.shape != (3, 3) or not np.all(np.isfinite(m)):
        raise NonOrthonormalInput(f"expected a finite 3x3 matrix, got shape {m.shape}")
    err = np.max(np.abs(m.T @ m - np.eye(3)))
    det = np.linalg.det(m)
    if err > tol or abs(det - 1.0) > tol:
        raise NonOrthonormalInput(f"matrix is not a rotation (orthonormality error {err:.3g}, det {det:.12g})")
    return m


def matrix_to_euler(matrix: np.ndarray) -> Vector3:
    m = check_rotation(matrix)
    # beta from the well-conditioned atan2 form, not asin
    beta = math.atan2(-m[2, 0], math.hypot(m[0, 0], m[1, 0]))
    if abs(abs(beta) - math.pi / 2.0) < GIMBAL_TOL:
        alpha = math.atan2(-m[0, 1], m[1, 1])
        gamma = 0.0
    else:
        alpha = math.atan2(m[1, 0], m[0, 0])
        gamma = math.atan2(m[2, 1], m[2, 2])
    return (wrap_angle(alpha), wrap_angle(beta), wrap_angle(gamma))


def compose(a: RigidTransform, b: RigidTransform) -> RigidTransform:
    """a ∘ b: apply b first, then a"""
    return RigidTransform(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def invert(p: RigidTransform) -> RigidTransform:
    rt = p.rotation.T
    return RigidTransform(rt, -(rt @ p.translation))


def relative_pose(reference: RigidTransform, target: RigidTransform) -> RigidTransform:
    """Target expressed in the reference frame: invert(reference) ∘ target"""
    return compose(invert(reference), target)


def compose_poses(a: Pose6D, b: Pose6D) -> Pose6D:
    return Pose6D.from_transform(compose(a.to_transform(), b.to_transform()))


def lift_pixel(pixel: Sequence[float], depth: float, intrinsics: Sequence[float]) -> np.ndarray:
    """Back-project a pixel at metric depth into the camera frame"""
    if not depth > 0:
        raise NonPositiveDepth(f"depth must be positive, got {depth}")
    u, v = (float(x) for x in pixel)
    fx, fy, cx, cy = (float(x) for x in intrinsics)
    return np.array([depth * (u - cx) / fx, depth * (v - cy) / fy, float(depth)])


def project_point(point_cam: Sequence[float], intrinsics: Sequence[float]) -> Tuple[float, float]:
    x, y, z = (float(c) for c in point_cam)
    if not z > 0:
        raise NonPositiveDepth(f"point is behind the camera (z={z})")
    fx, fy, cx, cy = (float(c) for c in intrinsics)
    return (fx * x / z + cx, fy * y / z + cy)


def rotation_angles(matrices: np.ndarray) -> np.ndarray:
    """Geodesic angle of each rotation in a (..., 3, 3) stack, in [0, pi]"""
    m = np.asarray(matrices, dtype=float)
    cos = (np.trace(m, axis1=-2, axis2=-1) - 1.0) / 2.0
    skew = np.stack([m[..., 2, 1] - m[..., 1, 2],
                     m[..., 0, 2] - m[..., 2, 0],
                     m[..., 1, 0] - m[..., 0, 1]], axis=-1)
    sin = np.linalg.norm(skew, axis=-1) / 2.0
    return np.arctan2(sin, cos)


def rotation_angle(matrix: np.ndarray) -> float:
    return float(rotation_angles(matrix))


def pose_error(a: Pose6D, b: Pose6D) -> Tuple[float, float]:
    """(translation distance in meters, geodesic rotation angle in radians)"""
    dt = float(np.linalg.norm(np.subtract(a.translation, b.translation)))
    dr = rotation_angle(a.rotation_matrix().T @ b.rotation_matrix())
    return dt, dr


def look_at(eye: Iterable[float], target: Iterable[float], up: Iterable[float] = (0.0, 0.0, 1.0)) -> RigidTransform:
    """Camera-to-world transform for a camera at eye looking at target (x right, y down, z forward)"""
    eye = np.asarray(list(eye), dtype=float)
    forward = np.asarray(list(target), dtype=float) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(list(up), dtype=float))
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, [1.0, 0.0, 0.0])
    right /= np.linalg.norm(right)
    down = np.cross(forward, right)
    return RigidTransform(np.column_stack([right, down, forward]), eye)


def frame_from_z(z_axis: Iterable[float], hint: Iterable[float] = (0.0, 0.0, 1.0)) -> np.ndarray:
    """Rotation whose third column is z_axis; first column is orthogonal to hint"""
    z = np.asarray(list(z_axis), dtype=float)
    z /= np.linalg.norm(z)
    x = np.cross(np.asarray(list(hint), dtype=float), z)
    if np.linalg.norm(x) < 1e-9:
        x = np.cross([1.0, 0.0, 0.0], z)
        if np.linalg.norm(x) < 1e-9:
            x = np.cross([0.0, 1.0, 0.0], z)
    x /= np.linalg.norm(x)
    y = np.cross(z, x)
    return np.column_stack([x, y, z])


def axis_rotation(axis: Iterable[float], angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit axis"""
    k = np.asarray(list(axis), dtype=float)
    k = k / np.linalg.norm(k)
    kx = np.array([[0.0, -k[2], k[1]], [k[2], 0.0, -k[0]], [-k[1], k[0], 0.0]])
    return np.eye(3) + math.sin(angle) * kx + (1.0 - math.cos(angle)) * (kx @ kx)
