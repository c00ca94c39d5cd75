"""Joint impedance law, torque saturation, squeeze targets and the
resolved-rate outer loop."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .hand import HandProfile, JointState, ObjectJacobian, contact_rows
from .se3 import Twist, pseudoinverse


@dataclass(frozen=True)
class GainSet:
    K: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        K = np.asarray(self.K, dtype=float).reshape(-1)
        D = np.asarray(self.D, dtype=float).reshape(-1)
        if K.shape != D.shape:
            raise ValueError("K and D must have the same length")
        if np.any(K < 0) or np.any(D < 0):
            raise ValueError("gains must be non-negative")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "D", D)

    @classmethod
    def uniform(cls, n: int, k: float = 5.0, d: float = 0.1) -> "GainSet":
        return cls(np.full(n, k), np.full(n, d))


def _zero_vec(q, *_):
    return np.zeros_like(np.asarray(q, dtype=float))


@dataclass(frozen=True)
class DynamicsTerms:
    """Mass matrix, Coriolis and gravity providers; all zero by default
    (high gear ratio)."""
    mass: Callable | None = None
    coriolis: Callable = _zero_vec
    gravity: Callable = _zero_vec

    def M(self, q) -> np.ndarray:
        if self.mass is None:
            return np.zeros((len(q), len(q)))
        return np.asarray(self.mass(q), dtype=float)


@dataclass(frozen=True)
class ControllerConfig:
    eta: float = 0.5
    dt: float = 0.05
    squeeze_depth: float = 0.005
    rotation_error_tol: float = np.deg2rad(0.5)
    max_steps: int = 200
    contact_model: str = "point"
    # resolved-rate increments are shrunk so K * step <= factor * torque limit;
    # None disables the limit
    torque_step_factor: float | None = 1.0
    # fraction of the offset from the grasp posture removed per outer step,
    # using only joint motion the fingertips do not see
    posture_gain: float = 0.2

    def __post_init__(self):
        if not 0 < self.eta <= 2:
            raise ValueError("eta must lie in (0, 2]")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.squeeze_depth < 0:
            raise ValueError("squeeze_depth must be non-negative")
        if self.max_steps < 0:
            raise ValueError("max_steps must be non-negative")
        if self.torque_step_factor is not None and not self.torque_step_factor > 0:
            raise ValueError("torque_step_factor must be positive or None")
        if not 0 <= self.posture_gain <= 1:
            raise ValueError("posture_gain must lie in [0, 1]")


@dataclass(frozen=True)
class TorqueCommand:
    tau: np.ndarray
    clamped: np.ndarray = field(default=None)

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float).reshape(-1)
        object.__setattr__(self, "tau", tau)
        if self.clamped is None:
            object.__setattr__(self, "clamped", np.zeros(tau.shape, dtype=bool))


def impedance_torque(gains: GainSet, dyn: DynamicsTerms, q_des, qdot_des, qddot_des,
                     state: JointState) -> TorqueCommand:
    """``K (q_des - q) + D (qd_des - qd) + M qdd_des + C(q_des, qd_des) + g(q_des)``.

    No saturation is applied here; see :func:`clamp_torque`.
    """
    q_des = np.asarray(q_des, dtype=float)
    qdot_des = np.asarray(qdot_des, dtype=float)
    qddot_des = np.asarray(qddot_des, dtype=float)
    n = gains.K.size
    for name, v in (("q_des", q_des), ("qdot_des", qdot_des), ("qddot_des", qddot_des),
                    ("q", state.q), ("qdot", state.qdot)):
        if np.shape(v) != (n,):
            raise ValueError(f"{name} has shape {np.shape(v)}, expected ({n},)")
    tau = (gains.K * (q_des - state.q) + gains.D * (qdot_des - state.qdot)
           + dyn.M(q_des) @ qddot_des + dyn.coriolis(q_des, qdot_des) + dyn.gravity(q_des))
    return TorqueCommand(tau)


def clamp_torque(cmd: TorqueCommand, profile: HandProfile, scale: float = 1.0) -> TorqueCommand:
    lim = profile.torque_limits_nm * scale
    tau = np.clip(cmd.tau, -lim, lim)
    return TorqueCommand(tau, cmd.clamped | (np.abs(cmd.tau) > lim))


@dataclass(frozen=True)
class Sphere:
    radius: float

    def inradius(self) -> float:
        return self.radius

    def inward_normal(self, p) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return -p / np.linalg.norm(p)


@dataclass(frozen=True)
class Box:
    size: tuple  # full edge lengths along the object x, y, z axes

    def inradius(self) -> float:
        return 0.5 * min(self.size)

    def inward_normal(self, p) -> np.ndarray:
        """Normal of the face whose plane is closest to ``p``."""
        p = np.asarray(p, dtype=float)
        half = 0.5 * np.asarray(self.size, dtype=float)
        gap = np.abs(half - np.abs(p))
        k = int(np.argmin(gap))
        n = np.zeros(3)
        n[k] = -1.0 if p[k] >= 0 else 1.0
        return n


def squeeze_targets(surface, contact_points: Sequence, depth: float) -> np.ndarray:
    """Fingertip goals pushed ``depth`` metres inside the object.

    ``contact_points`` are expressed in the object frame (origin at the
    shape centre).
    """
    if depth < 0:
        raise ValueError("squeeze depth must be non-negative")
    if depth > surface.inradius():
        raise ValueError(f"squeeze depth {depth} exceeds the object inradius {surface.inradius()}")
    pts = np.asarray(contact_points, dtype=float).reshape(-1, 3)
    return np.array([p + depth * surface.inward_normal(p) for p in pts])


def resolved_rate_qdot(J: np.ndarray, J_o: ObjectJacobian, twist: Twist,
                       contact_model: str = "rigid") -> np.ndarray:
    """Least-squares joint rates for the fingertip twists ``J_o $_o``,
    restricted to the rows the contact model transmits."""
    rows = contact_rows(len(J_o.blocks), contact_model)
    target = J_o.stacked[rows] @ twist.vector()
    if not np.all(np.isfinite(target)):
        raise ValueError("object twist must be finite")
    return pseudoinverse(J[rows]) @ target


def resolved_rate_step(J: np.ndarray, J_o: ObjectJacobian, twist: Twist, state: JointState,
                       cfg: ControllerConfig, profile: HandProfile | None = None,
                       max_step=None) -> np.ndarray:
    """Next joint goal ``q + eta * qdot * dt``.

    With a profile, the redundant joints are also pulled back toward the
    grasp posture, and joints that would leave their limits are first locked
    and the step re-solved on the remaining joints, as long as those still
    reproduce the fingertip motion; whatever is left over is handled by
    shrinking the whole step until it fits inside the limits.  Clipping
    joints one by one would instead ask the fingertips for a motion the
    object cannot follow.

    ``max_step`` (per joint, rad) shrinks the whole increment uniformly so no
    joint exceeds it; the direction in joint space is kept.
    """
    rows = contact_rows(len(J_o.blocks), cfg.contact_model)
    target = J_o.stacked[rows] @ twist.vector()
    if not np.all(np.isfinite(target)):
        raise ValueError("object twist must be finite")
    A = J[rows]
    A_pinv = pseudoinverse(A)
    step = cfg.eta * cfg.dt * (A_pinv @ target)
    if profile is not None and cfg.posture_gain > 0:
        drift = profile.grasp_q() - state.q
        step = step + cfg.posture_gain * (drift - A_pinv @ (A @ drift))
    if profile is not None:
        step = _fit_limits(A, cfg.eta * cfg.dt * target, state.q, step, profile.joint_limits_rad)
    if max_step is not None:
        step = step * _shrink(np.abs(step), np.asarray(max_step))
    q_des = state.q + step
    if profile is not None:
        q_des = profile.clamp_joints(q_des)
    return q_des


def _shrink(big: np.ndarray, room: np.ndarray) -> float:
    """Largest factor in [0, 1] with ``factor * big <= room``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(big > 0, np.maximum(room, 0.0) / big, np.inf)
    return min(1.0, float(np.min(ratio)))


def _fit_limits(A, b, q, step, limits) -> np.ndarray:
    lo, hi = limits[:, 0], limits[:, 1]
    free = np.ones(q.size, dtype=bool)
    tol = 1e-9 * max(float(np.linalg.norm(b)), 1e-300)
    while True:
        q_new = q + step
        over = free & ((q_new < lo) | (q_new > hi))
        if not over.any():
            break
        keep = free & ~over
        trial = np.zeros_like(step)
        trial[keep] = pseudoinverse(A[:, keep]) @ b
        if np.linalg.norm(A @ trial - b) > tol:
            break
        free, step = keep, trial
    room = np.where(step > 0, hi - q, q - lo)
    return step * _shrink(np.abs(step), room)
