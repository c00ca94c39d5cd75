"""Tree-type hand kinematics: DH serial chains, fingertip Jacobians and
object-to-fingertip twist maps.

Fingertip twists are angular-first; the linear part is the velocity of the
fingertip point (the origin of the last DH frame), expressed in the palm
frame.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .se3 import Pose, block_diag, cross3, skew


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class DhParam:
    a: float
    alpha: float
    d: float = 0.0
    theta_offset: float = 0.0

    def transform(self, q: float) -> np.ndarray:
        th = q + self.theta_offset
        ct, st = np.cos(th), np.sin(th)
        ca, sa = np.cos(self.alpha), np.sin(self.alpha)
        return np.array([[ct, -st * ca, st * sa, self.a * ct],
                         [st, ct * ca, -ct * sa, self.a * st],
                         [0.0, sa, ca, self.d],
                         [0.0, 0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class SerialChain:
    joints: tuple
    base_pose: Pose = field(default_factory=Pose)
    name: str = ""

    def __post_init__(self):
        if len(self.joints) < 1:
            raise ProfileError("a serial chain needs at least one joint")
        object.__setattr__(self, "joints", tuple(self.joints))

    @property
    def dof(self) -> int:
        return len(self.joints)


@dataclass(frozen=True)
class HandProfile:
    name: str
    chains: tuple
    joint_limits_deg: np.ndarray     # (k3, 2)
    torque_limits_nm: np.ndarray     # (k3,)
    gear_ratio: float = 369.0
    torque_rate_hz: float = 333.0
    rrm_rate_hz: float = 20.0
    encoder_resolution_deg: float = 0.005
    grasp_q_deg: np.ndarray | None = None
    contact_chains: tuple = ()

    def __post_init__(self):
        k3 = sum(c.dof for c in self.chains)
        lim = np.asarray(self.joint_limits_deg, dtype=float)
        tl = np.asarray(self.torque_limits_nm, dtype=float)
        if lim.shape != (k3, 2):
            raise ProfileError(f"joint_limits_deg must have {k3} [min, max] pairs, got shape {lim.shape}")
        if tl.shape != (k3,):
            raise ProfileError(f"torque_limits_nm must have {k3} entries, got {tl.size}")
        if np.any(lim[:, 0] >= lim[:, 1]):
            raise ProfileError("every joint limit needs min < max")
        if np.any(tl <= 0):
            raise ProfileError("torque limits must be positive")
        for name in ("torque_rate_hz", "rrm_rate_hz", "gear_ratio"):
            if not getattr(self, name) > 0:
                raise ProfileError(f"{name} must be positive")
        object.__setattr__(self, "joint_limits_deg", lim)
        object.__setattr__(self, "torque_limits_nm", tl)
        if self.grasp_q_deg is not None:
            g = np.asarray(self.grasp_q_deg, dtype=float)
            if g.shape != (k3,):
                raise ProfileError(f"grasp_q_deg must have {k3} entries")
            object.__setattr__(self, "grasp_q_deg", g)
        cc = tuple(int(i) for i in self.contact_chains)
        if any(i < 0 or i >= len(self.chains) for i in cc):
            raise ProfileError("contact_chains references a missing chain")
        object.__setattr__(self, "contact_chains", cc)

    @property
    def k3(self) -> int:
        return sum(c.dof for c in self.chains)

    @property
    def p(self) -> int:
        return len(self.chains)

    def joint_slices(self) -> list[slice]:
        out, i = [], 0
        for c in self.chains:
            out.append(slice(i, i + c.dof))
            i += c.dof
        return out

    @property
    def joint_limits_rad(self) -> np.ndarray:
        return np.deg2rad(self.joint_limits_deg)

    def clamp_joints(self, q) -> np.ndarray:
        lim = self.joint_limits_rad
        return np.clip(np.asarray(q, dtype=float), lim[:, 0], lim[:, 1])

    def grasp_q(self) -> np.ndarray:
        if self.grasp_q_deg is None:
            return self.clamp_joints(np.zeros(self.k3))
        return np.deg2rad(self.grasp_q_deg)


@dataclass
class JointState:
    q: np.ndarray
    qdot: np.ndarray

    @classmethod
    def at_rest(cls, q) -> "JointState":
        q = np.asarray(q, dtype=float).copy()
        return cls(q, np.zeros_like(q))


@dataclass(frozen=True)
class ObjectJacobian:
    blocks: tuple        # p blocks of 6x6
    stacked: np.ndarray  # (6p, 6)


def _base_pose_from_json(raw) -> Pose:
    T = np.asarray(raw, dtype=float)
    if T.size != 16:
        raise ProfileError("base_pose must have 16 entries (row-major 4x4)")
    return Pose.from_matrix(T.reshape(4, 4))


def profile_from_dict(data: dict) -> HandProfile:
    try:
        chains = []
        for c in data["chains"]:
            dh = [DhParam(float(j["a"]), float(j["alpha"]), float(j.get("d", 0.0)),
                          float(j.get("theta_offset", 0.0))) for j in c["dh"]]
            base = _base_pose_from_json(c["base_pose"]) if "base_pose" in c else Pose()
            chains.append(SerialChain(tuple(dh), base, c.get("name", "")))
        return HandProfile(
            name=data["name"],
            chains=tuple(chains),
            joint_limits_deg=data["joint_limits_deg"],
            torque_limits_nm=data["torque_limits_nm"],
            gear_ratio=float(data.get("gear_ratio", 369.0)),
            torque_rate_hz=float(data.get("torque_rate_hz", 333.0)),
            rrm_rate_hz=float(data.get("rrm_rate_hz", 20.0)),
            encoder_resolution_deg=float(data.get("encoder_resolution_deg", 0.005)),
            grasp_q_deg=data.get("grasp_q_deg"),
            contact_chains=tuple(data.get("contact_chains", ())),
        )
    except (KeyError, TypeError) as exc:
        raise ProfileError(f"malformed hand profile: {exc!r}") from exc


def load_profile(path=None) -> HandProfile:
    """Load a hand profile JSON file; ``None`` gives the bundled default."""
    if path is None:
        text = resources.files("glovehand.data").joinpath("allegro_like.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"hand profile is not valid JSON: {exc}") from exc
    return profile_from_dict(data)


def _chain_frames(chain: SerialChain, q) -> list[np.ndarray]:
    q = np.asarray(q, dtype=float).reshape(-1)
    if q.size != chain.dof:
        raise ValueError(f"chain has {chain.dof} joints, got {q.size} angles")
    T = chain.base_pose.matrix()
    frames = [T]
    for dh, qj in zip(chain.joints, q):
        T = T @ dh.transform(qj)
        frames.append(T)
    return frames


def forward_kinematics(chain: SerialChain, q) -> Pose:
    T = _chain_frames(chain, q)[-1]
    return Pose(T[:3, :3], T[:3, 3])


def chain_jacobian(chain: SerialChain, q) -> np.ndarray:
    """6 x k geometric Jacobian: column j is ``[z_j; z_j x (p_tip - p_j)]``."""
    frames = _chain_frames(chain, q)
    p_tip = frames[-1][:3, 3]
    J = np.zeros((6, chain.dof))
    for j in range(chain.dof):
        z = frames[j][:3, 2]
        J[:3, j] = z
        J[3:, j] = cross3(z, p_tip - frames[j][:3, 3])
    return J


def fingertip_positions(profile: HandProfile, q, chains: Sequence[int] | None = None) -> np.ndarray:
    idx = range(profile.p) if chains is None else chains
    sl = profile.joint_slices()
    return np.array([forward_kinematics(profile.chains[i], q[sl[i]]).origin for i in idx])


def stacked_jacobian(profile: HandProfile, q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    if q.size != profile.k3:
        raise ValueError(f"expected {profile.k3} joint angles, got {q.size}")
    return block_diag([chain_jacobian(c, q[s]) for c, s in zip(profile.chains, profile.joint_slices())])


def chain_rows(profile: HandProfile, J: np.ndarray, chains: Sequence[int]) -> np.ndarray:
    """Rows of a stacked Jacobian for the given chains, in order."""
    return np.vstack([J[6 * i:6 * i + 6] for i in chains])


def contact_jacobian(profile: HandProfile, q, chains: Sequence[int]) -> np.ndarray:
    """``chain_rows(profile, stacked_jacobian(profile, q), chains)`` without
    evaluating the chains that are left out."""
    q = np.asarray(q, dtype=float)
    sl = profile.joint_slices()
    J = np.zeros((6 * len(chains), profile.k3))
    for r, i in enumerate(chains):
        J[6 * r:6 * r + 6, sl[i]] = chain_jacobian(profile.chains[i], q[sl[i]])
    return J


def contact_center(tips) -> np.ndarray:
    """Centre of the sphere through three fingertips (circumcentre); the
    centroid for any other count."""
    tips = np.asarray(tips, dtype=float).reshape(-1, 3)
    if len(tips) != 3:
        return tips.mean(axis=0)
    a, b, c = tips
    ab, ac = b - a, c - a
    n = np.cross(ab, ac)
    nn = n @ n
    if nn < 1e-18:
        raise ValueError("contact points are collinear")
    return a + (np.cross(n, ab) * (ac @ ac) + np.cross(ac, n) * (ab @ ab)) / (2.0 * nn)


CONTACT_MODELS = ("point", "rigid")


def contact_rows(n_contacts: int, model: str = "rigid") -> np.ndarray:
    """Row indices of a stacked 6p-twist kept by a contact model.

    ``"rigid"`` keeps all six rows per contact.  ``"point"`` (hard finger)
    keeps only the linear rows: a point contact transmits the contact-point
    velocity but not the fingertip's angular velocity, which is the
    kinematic dual of the force-only grasp map.
    """
    if model == "rigid":
        return np.arange(6 * n_contacts)
    if model == "point":
        return np.concatenate([np.arange(6 * i + 3, 6 * i + 6) for i in range(n_contacts)])
    raise ValueError(f"unknown contact model {model!r}; expected one of {CONTACT_MODELS}")


def object_jacobians(contacts) -> ObjectJacobian:
    """Blocks ``[[I, 0], [-skew(r_i), I]]`` mapping the object twist to each
    contact-point twist."""
    contacts = list(contacts)
    if not contacts:
        raise ValueError("need at least one contact")
    blocks = []
    for c in contacts:
        r = c.r if hasattr(c, "r") else np.asarray(c, dtype=float)
        B = np.eye(6)
        B[3:, :3] = -skew(r)
        blocks.append(B)
    return ObjectJacobian(tuple(blocks), np.vstack(blocks))
