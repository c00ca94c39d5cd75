"""Rotations, poses, twists and the linear-algebra helpers shared by every
other module.

Twists are stored angular-first, ``[w; v]``.  Use :func:`twist_to_linear_first`
and :func:`twist_from_linear_first` when talking to code that expects
``[v; w]``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

# Relative factor for the singular-value rank cutoff:
# tau = max(m, n) * sigma_max * RANK_RTOL.
RANK_RTOL = 1e-12

_SMALL_ANGLE = 1e-9


def set_rank_tolerance(rtol: float) -> None:
    global RANK_RTOL
    if not rtol > 0:
        raise ValueError("rank tolerance must be positive")
    RANK_RTOL = float(rtol)


def _vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float).reshape(3)
    if not np.all(np.isfinite(v)):
        raise ValueError("non-finite vector")
    return v


def cross3(a, b) -> np.ndarray:
    """``np.cross`` for two 3-vectors without the broadcasting overhead."""
    return np.array([a[1] * b[2] - a[2] * b[1],
                     a[2] * b[0] - a[0] * b[2],
                     a[0] * b[1] - a[1] * b[0]])


def skew(r) -> np.ndarray:
    """Cross-product matrix: ``skew(r) @ x == np.cross(r, x)``."""
    x, y, z = _vec3(r)
    return np.array([[0.0, -z, y],
                     [z, 0.0, -x],
                     [-y, x, 0.0]])


def unskew(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.array([S[2, 1] - S[1, 2], S[0, 2] - S[2, 0], S[1, 0] - S[0, 1]]) / 2.0


def rodrigues_exp(rotvec) -> np.ndarray:
    """Rotation matrix for a rotation vector.

    The axis is normalised before building ``E``; below 1e-9 rad a
    second-order series is used instead.
    """
    w = _vec3(rotvec)
    theta = np.linalg.norm(w)
    if theta < _SMALL_ANGLE:
        W = skew(w)
        return np.eye(3) + W + 0.5 * W @ W
    E = skew(w / theta)
    return np.eye(3) + np.sin(theta) * E + (1.0 - np.cos(theta)) * (E @ E)


def is_rotation(R, tol: float = 1e-9) -> bool:
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        return False
    return (np.allclose(R.T @ R, np.eye(3), atol=tol, rtol=0.0)
            and abs(np.linalg.det(R) - 1.0) <= tol)


def rotation_log(R, tol: float = 1e-6) -> np.ndarray:
    """Rotation vector of a proper rotation (inverse of :func:`rodrigues_exp`)."""
    R = np.asarray(R, dtype=float)
    if not is_rotation(R, tol):
        raise ValueError("rotation_log needs an orthonormal matrix with det +1")
    cos_t = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    axis_sin = unskew(R)  # = sin(theta) * axis
    # atan2 keeps full precision at both ends, unlike arccos near +-1
    theta = np.arctan2(np.linalg.norm(axis_sin), cos_t)
    if theta < 1e-6:
        # sin(theta)/theta ~ 1 - theta^2/6
        return axis_sin * (1.0 + theta * theta / 6.0)
    if np.pi - theta > 1e-4:
        return axis_sin * (theta / np.sin(theta))
    # Near pi the antisymmetric part vanishes; read the axis off R + I.
    # symmetric part only: the antisymmetric sin(theta) term would bias the axis
    B = (R + R.T) / 4.0 + np.eye(3) / 2.0
    k = int(np.argmax(np.diag(B)))
    axis = B[:, k] / np.sqrt(max(B[k, k], 1e-300))
    axis /= np.linalg.norm(axis)
    if np.dot(axis, axis_sin) < 0:
        axis = -axis
    return axis * theta


def quat_from_rotation(R) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` with ``w >= 0``."""
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s,
                      (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(max(1.0 + R[i, i] - R[j, j] - R[k, k], 0.0))
        q = np.empty(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q /= np.linalg.norm(q)
    return q if q[0] >= 0 else -q


def rotation_from_quat(q) -> np.ndarray:
    w, x, y, z = np.asarray(q, dtype=float) / np.linalg.norm(q)
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


@dataclass(frozen=True)
class Pose:
    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    origin: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        o = _vec3(self.origin).copy()
        if not is_rotation(R):
            raise ValueError("pose rotation is not a proper rotation")
        R.flags.writeable = False
        o.flags.writeable = False
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "origin", o)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float).reshape(4, 4)
        if not np.allclose(T[3], [0, 0, 0, 1]):
            raise ValueError("bottom row of a pose matrix must be [0, 0, 0, 1]")
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_rotvec(cls, rotvec, origin=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(rodrigues_exp(rotvec), origin)

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.origin
        return T

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.origin + self.origin)

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.origin)

    def transform_point(self, p) -> np.ndarray:
        return self.rotation @ _vec3(p) + self.origin

    def quaternion(self) -> np.ndarray:
        return quat_from_rotation(self.rotation)


@dataclass(frozen=True)
class Twist:
    angular: np.ndarray = field(default_factory=lambda: np.zeros(3))
    linear: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "angular", _vec3(self.angular).copy())
        object.__setattr__(self, "linear", _vec3(self.linear).copy())

    @classmethod
    def from_vector(cls, x) -> "Twist":
        x = np.asarray(x, dtype=float).reshape(6)
        return cls(x[:3], x[3:])

    def vector(self) -> np.ndarray:
        return np.concatenate([self.angular, self.linear])

    def __neg__(self) -> "Twist":
        return Twist(-self.angular, -self.linear)


def twist_to_linear_first(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(6)
    return np.concatenate([x[3:], x[:3]])


def twist_from_linear_first(x) -> np.ndarray:
    x = np.asarray(x, dtype=float).reshape(6)
    return np.concatenate([x[3:], x[:3]])


@dataclass(frozen=True)
class ScrewDisplacement:
    rotation_vector: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rotation_vector", _vec3(self.rotation_vector).copy())
        object.__setattr__(self, "translation", _vec3(self.translation).copy())

    @property
    def angle(self) -> float:
        return float(np.linalg.norm(self.rotation_vector))

    def pose(self) -> Pose:
        return Pose(rodrigues_exp(self.rotation_vector), self.translation)


def screw_between_poses(T: Pose, T_goal: Pose, duration: float) -> Twist:
    """Constant twist that carries ``T`` onto ``T_goal`` in ``duration`` s.

    The angular part is a world-frame rate: ``R(t) = exp(w t) R``.  The
    linear part moves the object origin along a straight line.
    """
    if not duration > 0:
        raise ValueError("duration must be positive")
    dR = T_goal.rotation @ T.rotation.T
    w = rotation_log(dR) / duration
    v = (T_goal.origin - T.origin) / duration
    return Twist(w, v)


def integrate_twist(T: Pose, twist: Twist, dt: float) -> Pose:
    """Apply a constant world-frame twist for ``dt`` (same convention as
    :func:`screw_between_poses`)."""
    R = rodrigues_exp(twist.angular * dt) @ T.rotation
    # re-orthonormalise to keep drift out of long integrations
    U, _, Vt = np.linalg.svd(R)
    R = U @ Vt
    return Pose(R, T.origin + twist.linear * dt)


def rotation_angle_between(R_a, R_b) -> float:
    return float(np.linalg.norm(rotation_log(np.asarray(R_a) @ np.asarray(R_b).T)))


@dataclass(frozen=True)
class SvdResult:
    singular_values: np.ndarray
    U: np.ndarray
    Vt: np.ndarray
    tol: float

    @property
    def rank(self) -> int:
        return int(np.sum(self.singular_values > self.tol))


def svd(A) -> SvdResult:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError("expected a 2-D matrix")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    U, s, Vt = np.linalg.svd(A, full_matrices=True)
    smax = s[0] if s.size else 0.0
    tol = max(A.shape) * smax * RANK_RTOL
    return SvdResult(s, U, Vt, tol)


def pseudoinverse(A) -> np.ndarray:
    """Moore-Penrose inverse with the module-wide rank cutoff."""
    A = np.asarray(A, dtype=float)
    res = svd(A)
    r = res.rank
    m, n = A.shape
    if r == 0:
        return np.zeros((n, m))
    s_inv = 1.0 / res.singular_values[:r]
    return (res.Vt[:r].T * s_inv) @ res.U[:, :r].T


def null_space_basis(A) -> np.ndarray:
    """Orthonormal null-space basis, one vector per column (``n x (n - rank)``)."""
    A = np.asarray(A, dtype=float)
    res = svd(A)
    return res.Vt[res.rank:].T.copy()


def pinv_and_null(A) -> tuple[np.ndarray, np.ndarray]:
    """:func:`pseudoinverse` and :func:`null_space_basis` from one SVD."""
    A = np.asarray(A, dtype=float)
    res = svd(A)
    r = res.rank
    if r == 0:
        pinv = np.zeros(A.shape[::-1])
    else:
        pinv = (res.Vt[:r].T * (1.0 / res.singular_values[:r])) @ res.U[:, :r].T
    return pinv, res.Vt[r:].T.copy()


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = np.zeros((rows, cols))
    i = j = 0
    for b in blocks:
        out[i:i + b.shape[0], j:j + b.shape[1]] = b
        i += b.shape[0]
        j += b.shape[1]
    return out
