"""Quasi-static simulated hand/object plant and the two-rate closed loop.

Joints are velocity sources (``qdot = gamma * tau``), contacts stick to the
object, and the object moves with the minimum-norm rigid twist consistent
with the fingertip twists.  Contact forces are bookkeeping: the
equilibrating field for the object's inertial wrench plus an optional
squeeze along the fingertip-joining lines.  Any net wrench left unbalanced
by those forces drifts the object through ``wrench_compliance``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .controller import (Box, ControllerConfig, DynamicsTerms, GainSet, Sphere, TorqueCommand,
                         clamp_torque, impedance_torque, resolved_rate_step, squeeze_targets)
from .grasp import (Contact, ObjectInertia, build_grasp_matrix, force_decompose, object_wrench,
                    select_interaction_forces)
from .hand import (HandProfile, JointState, ObjectJacobian, contact_center, contact_jacobian, contact_rows,
                   fingertip_positions, object_jacobians)
from .se3 import Pose, Twist, integrate_twist, pseudoinverse, rotation_angle_between, screw_between_poses


class NonConvergenceError(RuntimeError):
    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class PlantConfig:
    gamma: float = 2.0                  # rad/s per N m
    shape: str = "sphere"               # "sphere" | "box"
    box_size: tuple = (0.06, 0.06, 0.06)
    object_mass: float = 0.1
    ee_stiffness: float = 200.0         # N/m, fingertip impedance used for squeeze forces
    squeeze: bool = True
    wrench_compliance: float = 1e-3     # object drift per unbalanced N (or N m) per second
    quantize: bool = False
    torque_noise_nm: float = 0.0
    seed: int | None = None
    torque_limit_scale: float = 1.0
    contact_model: str = "point"
    stick: bool = True                  # keep fingertips on their contact points
    stick_gain: float = 0.5             # fraction of tip-to-contact offset removed per step

    def __post_init__(self):
        contact_rows(1, self.contact_model)
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.shape not in ("sphere", "box"):
            raise ValueError(f"unknown object shape {self.shape!r}")
        if not self.torque_limit_scale > 0:
            raise ValueError("torque_limit_scale must be positive")


@dataclass
class PlantState:
    joints: JointState
    object_pose: Pose
    contact_points_object_frame: np.ndarray   # (p, 3)
    contact_forces: np.ndarray                # (p, 3)
    time: float = 0.0
    object_twist: Twist = field(default_factory=Twist)

    def copy(self) -> "PlantState":
        return PlantState(JointState(self.joints.q.copy(), self.joints.qdot.copy()),
                          self.object_pose, self.contact_points_object_frame.copy(),
                          self.contact_forces.copy(), self.time, self.object_twist)


def object_twist_from_fingertips(twists_rh, J_o: ObjectJacobian, contact_model: str = "rigid") -> Twist:
    """Minimum-norm rigid object twist ``J_o^+ $_RH`` over the rows the
    contact model transmits."""
    x = np.asarray(twists_rh, dtype=float).reshape(-1)
    if x.size != J_o.stacked.shape[0]:
        raise ValueError(f"expected {J_o.stacked.shape[0]} stacked twist entries, got {x.size}")
    rows = contact_rows(len(J_o.blocks), contact_model)
    return Twist.from_vector(pseudoinverse(J_o.stacked[rows]) @ x[rows])


class Plant:
    """Hand + grasped object.  Holds the immutable set-up; state is passed in
    and returned by :meth:`step`."""

    def __init__(self, profile: HandProfile, cfg: PlantConfig = PlantConfig(),
                 squeeze_depth: float = 0.005):
        self.profile = profile
        self.cfg = cfg
        self.contact_chains = profile.contact_chains or tuple(range(profile.p))
        if len(self.contact_chains) < 2:
            raise ValueError("the plant needs at least two contacting chains")
        self.squeeze_depth = squeeze_depth
        self._rng = np.random.default_rng(cfg.seed)

    def initial_state(self, q0=None) -> PlantState:
        q = self.profile.grasp_q() if q0 is None else np.asarray(q0, dtype=float)
        tips = fingertip_positions(self.profile, q, self.contact_chains)
        if self.cfg.shape == "sphere":
            center = contact_center(tips)
            radius = float(np.mean(np.linalg.norm(tips - center, axis=1)))
            self.surface = Sphere(radius)
            self.inertia = ObjectInertia.solid_sphere(self.cfg.object_mass, radius)
        else:
            center = tips.mean(axis=0)
            self.surface = Box(tuple(self.cfg.box_size))
            self.inertia = ObjectInertia.solid_box(self.cfg.object_mass, self.cfg.box_size)
        pose = Pose(np.eye(3), center)
        pts = tips - center
        self.squeeze_goals = squeeze_targets(self.surface, pts, self.squeeze_depth)
        state = PlantState(JointState.at_rest(q), pose, pts, np.zeros_like(pts))
        state.contact_forces = self._contact_forces(state, np.zeros(3), np.zeros(3))[0]
        return state

    # -- geometry --------------------------------------------------------

    def contacts_world(self, state: PlantState) -> list[Contact]:
        R = state.object_pose.rotation
        out = []
        for p in state.contact_points_object_frame:
            n = R @ self.surface.inward_normal(p)
            out.append(Contact(R @ p, n / np.linalg.norm(n)))
        return out

    def object_jacobian(self, state: PlantState) -> ObjectJacobian:
        return object_jacobians(self.contacts_world(state))

    def hand_jacobian(self, q) -> np.ndarray:
        return contact_jacobian(self.profile, q, self.contact_chains)

    def measured_q(self, q) -> np.ndarray:
        if not self.cfg.quantize:
            return np.asarray(q, dtype=float).copy()
        res = np.deg2rad(self.profile.encoder_resolution_deg)
        return np.round(np.asarray(q, dtype=float) / res) * res

    @property
    def f_min(self) -> float:
        return self.cfg.ee_stiffness * self.squeeze_depth

    def _contact_forces(self, state: PlantState, a_o, omega_dot):
        contacts = self.contacts_world(state)
        grasp = build_grasp_matrix(contacts)
        inertia = replace(self.inertia, omega=state.object_twist.angular)
        W = object_wrench(inertia, a_o, omega_dot)
        sol = force_decompose(grasp, W)
        if self.cfg.squeeze and self.f_min > 0:
            sol = select_interaction_forces(sol, contacts, self.f_min)
        F = sol.total()
        unbalanced = grasp.G @ F.reshape(-1) - W.vector()
        return F, unbalanced

    # -- dynamics --------------------------------------------------------

    def step(self, state: PlantState, torque: TorqueCommand, dt: float) -> PlantState:
        tau = clamp_torque(torque, self.profile, self.cfg.torque_limit_scale).tau
        if self.cfg.torque_noise_nm > 0:
            tau = tau + self._rng.normal(0.0, self.cfg.torque_noise_nm, tau.shape)
        q0 = state.joints.q
        if not np.any(tau):
            return replace(state.copy(), time=state.time + dt,
                           joints=JointState(q0.copy(), np.zeros_like(q0)),
                           object_twist=Twist())
        qdot = (self.profile.clamp_joints(q0 + self.cfg.gamma * tau * dt) - q0) / dt

        J = self.hand_jacobian(q0)
        J_o = self.object_jacobian(state)
        kin = object_twist_from_fingertips(J @ qdot, J_o, self.cfg.contact_model)
        if self.cfg.stick:
            qdot = self._stick(state, q0, qdot, J, J_o, kin, dt)
        q1 = self.profile.clamp_joints(q0 + qdot * dt)
        qdot = (q1 - q0) / dt
        a_o = (kin.linear - state.object_twist.linear) / dt
        wd = (kin.angular - state.object_twist.angular) / dt
        F, unbalanced = self._contact_forces(replace(state, object_twist=kin), a_o, wd)
        c = self.cfg.wrench_compliance
        twist = Twist(kin.angular + c * unbalanced[3:], kin.linear + c * unbalanced[:3])

        return PlantState(JointState(q1, qdot), integrate_twist(state.object_pose, twist, dt),
                          state.contact_points_object_frame, F, state.time + dt, twist)


    def _stick(self, state, q0, qdot, J, J_o, kin, dt):
        """Project the joint rates so the fingertips move with their contact
        points; the part of the commanded motion the object cannot follow
        is taken up by the contacts instead of slipping.  A fraction of the
        residual tip-to-contact offset is removed each step."""
        rows = contact_rows(len(J_o.blocks), self.cfg.contact_model)
        Jr = J[rows]
        target = J_o.stacked[rows] @ kin.vector()
        pin = state.object_pose.origin + self.contacts_points_world(state)
        gap = (pin - fingertip_positions(self.profile, q0, self.contact_chains)).reshape(-1)
        lin = contact_rows(len(J_o.blocks), "point")
        fix = np.zeros(6 * len(J_o.blocks))
        fix[lin] = self.cfg.stick_gain * gap / dt
        return qdot + pseudoinverse(Jr) @ (target + fix[rows] - Jr @ qdot)

    def contacts_points_world(self, state: PlantState) -> np.ndarray:
        return state.contact_points_object_frame @ state.object_pose.rotation.T


def step_plant(plant: Plant, state: PlantState, torque: TorqueCommand, dt_inner: float) -> PlantState:
    return plant.step(state, torque, dt_inner)


@dataclass
class EpisodeResult:
    converged: bool
    outer_steps: int
    final_error: float                  # rad
    errors: np.ndarray                  # rotation error before each outer step, rad
    t: np.ndarray
    q: np.ndarray
    tau: np.ndarray
    quat: np.ndarray
    position: np.ndarray
    contact_forces: np.ndarray          # (samples, p, 3)
    goal_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    goal_quat: np.ndarray = field(default_factory=lambda: np.zeros((0, 4)))
    final_state: PlantState | None = None

    def object_rotvecs(self) -> np.ndarray:
        from .se3 import rotation_from_quat, rotation_log
        return np.array([rotation_log(rotation_from_quat(q)) for q in self.quat])


TRAJECTORY_HEADER_PREFIX = "t_s"


def trajectory_header(k3: int) -> list[str]:
    return (["t_s"] + [f"q{j + 1:02d}" for j in range(k3)] + [f"tau{j + 1:02d}" for j in range(k3)]
            + ["qw", "qx", "qy", "qz", "px", "py", "pz"])


def write_trajectory_csv(result: EpisodeResult, path) -> None:
    k3 = result.q.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(trajectory_header(k3))
        for i in range(result.t.size):
            row = [result.t[i], *result.q[i], *result.tau[i], *result.quat[i], *result.position[i]]
            w.writerow([f"{x:.10g}" for x in row])


def run_episode(profile: HandProfile, plant_cfg: PlantConfig, ctrl_cfg: ControllerConfig,
                goal: Pose | Callable[[float], Pose], gains: GainSet | None = None,
                dyn: DynamicsTerms | None = None, duration: float | None = None,
                max_goal_rotation: float = np.deg2rad(60.0), q0=None,
                log_every: int = 1) -> EpisodeResult:
    """Run the outer resolved-rate loop at ``1/ctrl_cfg.dt`` with the inner
    impedance loop at the profile's torque rate.

    ``goal`` is a fixed pose (stop at ``rotation_error_tol`` or
    ``max_steps``) or a callable ``t -> Pose`` streamed for ``duration`` s.
    """
    plant = Plant(profile, plant_cfg, ctrl_cfg.squeeze_depth)
    state = plant.initial_state(q0)
    gains = gains or GainSet.uniform(profile.k3)
    dyn = dyn or DynamicsTerms()
    streaming = callable(goal)
    if streaming and duration is None:
        raise ValueError("a streamed goal needs a duration")
    if not streaming:
        rot = rotation_angle_between(goal.rotation, state.object_pose.rotation)
        if rot > max_goal_rotation:
            raise ValueError(f"goal rotation {np.rad2deg(rot):.1f} deg exceeds the "
                             f"{np.rad2deg(max_goal_rotation):.1f} deg cap")
    goal_at = goal if streaming else (lambda t: goal)
    n_outer = int(round(duration / ctrl_cfg.dt)) if streaming else ctrl_cfg.max_steps
    dt_in = 1.0 / profile.torque_rate_hz
    max_step = None
    if ctrl_cfg.torque_step_factor is not None:
        lim = ctrl_cfg.torque_step_factor * profile.torque_limits_nm * plant_cfg.torque_limit_scale
        with np.errstate(divide="ignore"):
            max_step = np.where(gains.K > 0, lim / gains.K, np.inf)

    log_t, log_q, log_tau, log_quat, log_pos, log_f = [], [], [], [], [], []
    goal_t, goal_quat = [], []
    tau = np.zeros(profile.k3)

    def record(s: PlantState, tau_now):
        log_t.append(s.time)
        log_q.append(plant.measured_q(s.joints.q))
        log_tau.append(tau_now)
        log_quat.append(s.object_pose.quaternion())
        log_pos.append(s.object_pose.origin.copy())
        log_f.append(s.contact_forces.copy())

    record(state, tau)
    errors = []
    converged = False
    k = 0
    inner_done = 0
    while True:
        t_outer = k * ctrl_cfg.dt
        T_goal = goal_at(t_outer)
        goal_t.append(t_outer)
        goal_quat.append(T_goal.quaternion())
        err = rotation_angle_between(T_goal.rotation, state.object_pose.rotation)
        errors.append(err)
        if not streaming and err < ctrl_cfg.rotation_error_tol:
            converged = True
            break
        if k >= n_outer:
            break
        twist = screw_between_poses(state.object_pose, T_goal, ctrl_cfg.dt)
        q_meas = plant.measured_q(state.joints.q)
        J = plant.hand_jacobian(q_meas)
        J_o = plant.object_jacobian(state)
        q_des = resolved_rate_step(J, J_o, twist, JointState(q_meas, state.joints.qdot),
                                   ctrl_cfg, profile, max_step)
        # inner ticks that fall inside this outer period
        n_inner = int(np.floor((k + 1) * ctrl_cfg.dt / dt_in + 1e-9)) - inner_done
        zero = np.zeros(profile.k3)
        for _ in range(max(n_inner, 1)):
            js = JointState(plant.measured_q(state.joints.q), state.joints.qdot)
            cmd = impedance_torque(gains, dyn, q_des, zero, zero, js)
            clamped = clamp_torque(cmd, profile, plant_cfg.torque_limit_scale)
            state = plant.step(state, clamped, dt_in)
            inner_done += 1
            if inner_done % log_every == 0:
                record(state, clamped.tau)
        k += 1

    result = EpisodeResult(
        converged=converged if not streaming else True,
        outer_steps=k,
        final_error=errors[-1],
        errors=np.array(errors),
        t=np.array(log_t), q=np.array(log_q), tau=np.array(log_tau),
        quat=np.array(log_quat), position=np.array(log_pos), contact_forces=np.array(log_f),
        goal_t=np.array(goal_t), goal_quat=np.array(goal_quat), final_state=state)
    return result
