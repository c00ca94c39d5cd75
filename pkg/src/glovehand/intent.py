"""Glove signals to object intent.

Glove encoder rates are mapped onto equivalent screws on the robot hand,
giving hypothetical fingertip twists; the least-squares rigid object twist
is accumulated into a cumulative intent ``(d, dtheta)`` and a goal pose.
Also here: PCA of glove traces and synthetic trace generators.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np

from .hand import (HandProfile, ObjectJacobian, ProfileError, chain_jacobian, contact_center,
                   fingertip_positions, object_jacobians)
from .se3 import Pose, Twist, cross3, pseudoinverse, rodrigues_exp

SCREW_KINDS = ("pivot", "joint")


@dataclass(frozen=True)
class GloveChannel:
    name: str
    kind: str            # "bend" | "split"
    chain: int
    screw: str           # "pivot" | "joint"
    axis: tuple = (0.0, 0.0, 1.0)
    joint: int = 0
    scale: float = 1.0
    rest_deg: float = 0.0
    finger: str = ""

    def __post_init__(self):
        if self.kind not in ("bend", "split"):
            raise ProfileError(f"{self.name}: kind must be 'bend' or 'split'")
        if self.screw not in SCREW_KINDS:
            raise ProfileError(f"{self.name}: screw must be one of {SCREW_KINDS}")
        if not np.isfinite(self.scale):
            raise ProfileError(f"{self.name}: scale must be finite")
        if self.screw == "pivot":
            a = np.asarray(self.axis, dtype=float).reshape(3)
            n = np.linalg.norm(a)
            if not n > 0:
                raise ProfileError(f"{self.name}: pivot axis must be non-zero")
            object.__setattr__(self, "axis", tuple(a / n))


@dataclass(frozen=True)
class GloveProfile:
    name: str
    channels: tuple
    sample_rate_hz: float = 200.0
    resolution_deg: float = 0.08
    bend_range_deg: tuple = (0.0, 147.0)
    split_range_deg: tuple = (-15.0, 15.0)
    static_stiffness_kgcm_per_deg: tuple = (0.0, 0.33)
    # kept for completeness; restraint only matters on hardware
    restrained_joints: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(self.channels))
        object.__setattr__(self, "restrained_joints", tuple(int(j) for j in self.restrained_joints))
        if not self.channels:
            raise ProfileError("glove profile needs at least one channel")
        if not self.sample_rate_hz > 0:
            raise ProfileError("sample_rate_hz must be positive")
        if len(self.restrained_joints) > self.k:
            raise ProfileError("more restrained joints than encoders")
        if any(j < 0 or j >= self.k for j in self.restrained_joints):
            raise ProfileError("restrained joint index out of range")
        for lo, hi in (self.bend_range_deg, self.split_range_deg):
            if not lo < hi:
                raise ProfileError("channel ranges need min < max")

    @property
    def k(self) -> int:
        return len(self.channels)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.channels]

    def ranges_deg(self) -> np.ndarray:
        return np.array([self.bend_range_deg if c.kind == "bend" else self.split_range_deg
                         for c in self.channels], dtype=float)

    def rest_deg(self) -> np.ndarray:
        return np.array([c.rest_deg for c in self.channels])

    def chains(self) -> tuple:
        return tuple(sorted({c.chain for c in self.channels}))


def glove_profile_from_dict(data: dict) -> GloveProfile:
    try:
        channels = []
        for c in data["channels"]:
            channels.append(GloveChannel(
                name=c["name"], kind=c["kind"], chain=int(c["chain"]), screw=c["screw"],
                axis=tuple(c.get("axis", (0.0, 0.0, 1.0))), joint=int(c.get("joint", 0)),
                scale=float(c.get("scale", 1.0)), rest_deg=float(c.get("rest_deg", 0.0)),
                finger=c.get("finger", "")))
        k = int(data.get("encoder_count", len(channels)))
        if k != len(channels):
            raise ProfileError(f"encoder_count is {k} but {len(channels)} channels are mapped")
        return GloveProfile(
            name=data["name"], channels=tuple(channels),
            sample_rate_hz=float(data.get("sample_rate_hz", 200.0)),
            resolution_deg=float(data.get("resolution_deg", 0.08)),
            bend_range_deg=tuple(data.get("bend_range_deg", (0.0, 147.0))),
            split_range_deg=tuple(data.get("split_range_deg", (-15.0, 15.0))),
            static_stiffness_kgcm_per_deg=tuple(data.get("static_stiffness_kgcm_per_deg", (0.0, 0.33))),
            restrained_joints=tuple(data.get("restrained_joints", ())))
    except (KeyError, TypeError) as exc:
        raise ProfileError(f"malformed glove profile: {exc!r}") from exc


def load_glove_profile(path=None) -> GloveProfile:
    if path is None:
        text = resources.files("glovehand.data").joinpath("glove_default.json").read_text()
    else:
        text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"glove profile is not valid JSON: {exc}") from exc
    return glove_profile_from_dict(data)


def validate_mapping(glove: GloveProfile, hand: HandProfile) -> None:
    for c in glove.channels:
        if not 0 <= c.chain < hand.p:
            raise ProfileError(f"{c.name} maps to chain {c.chain}; the hand has {hand.p}")
        if c.screw == "joint" and not 0 <= c.joint < hand.chains[c.chain].dof:
            raise ProfileError(f"{c.name} maps to joint {c.joint} of chain {c.chain}, "
                               f"which has {hand.chains[c.chain].dof} joints")


# -- traces ----------------------------------------------------------------

@dataclass(frozen=True)
class GloveSample:
    t: float
    values: np.ndarray   # degrees


@dataclass(frozen=True)
class GloveTrace:
    t: np.ndarray        # (N,)
    values: np.ndarray   # (N, k), degrees

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != t.size:
            raise ValueError("values must be (len(t), k)")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValueError("glove timestamps must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(v))):
            raise ValueError("glove trace has non-finite entries")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.t.size

    def __getitem__(self, i) -> GloveSample:
        return GloveSample(float(self.t[i]), self.values[i].copy())

    def check_ranges(self, glove: GloveProfile, tol: float = 1e-9) -> None:
        if self.values.shape[1] != glove.k:
            raise ValueError(f"trace has {self.values.shape[1]} channels, glove has {glove.k}")
        r = glove.ranges_deg()
        bad = (self.values < r[:, 0] - tol) | (self.values > r[:, 1] + tol)
        if np.any(bad):
            n, j = np.argwhere(bad)[0]
            raise ValueError(f"channel {glove.channels[j].name} = {self.values[n, j]:.3f} deg at "
                             f"t={self.t[n]:.3f} s is outside [{r[j, 0]:g}, {r[j, 1]:g}]")


def glove_header(k: int) -> list[str]:
    return ["t_s"] + [f"jm{j + 1:02d}" for j in range(k)]


def write_glove_csv(trace: GloveTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(glove_header(trace.values.shape[1]))
        for t, row in zip(trace.t, trace.values):
            w.writerow([f"{t:.6f}"] + [f"{x:.10g}" for x in row])


def read_glove_csv(path) -> GloveTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "t_s":
        raise ValueError(f"{path}: expected a header starting with t_s")
    header = rows[0]
    if header != glove_header(len(header) - 1):
        raise ValueError(f"{path}: unexpected glove header {header}")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    if data.size == 0:
        raise ValueError(f"{path}: no samples")
    return GloveTrace(data[:, 0], data[:, 1:])


# -- mapping onto the hand -------------------------------------------------

@dataclass(frozen=True)
class GraspFrame:
    """Hypothetical grasp the glove motion is mapped onto."""
    chains: tuple           # hand chains, in stacking order
    q: np.ndarray
    center: np.ndarray
    tips: np.ndarray        # (n, 3) fingertip positions
    J_o: ObjectJacobian


def grasp_frame(glove: GloveProfile, hand: HandProfile, q=None) -> GraspFrame:
    validate_mapping(glove, hand)
    chains = hand.contact_chains or glove.chains()
    missing = set(glove.chains()) - set(chains)
    if missing:
        raise ProfileError(f"glove maps onto chains {sorted(missing)} that are not in contact")
    q = hand.grasp_q() if q is None else np.asarray(q, dtype=float)
    tips = fingertip_positions(hand, q, chains)
    c = contact_center(tips)
    return GraspFrame(tuple(chains), q, c, tips, object_jacobians(tips - c))


def mapping_matrix(glove: GloveProfile, hand: HandProfile, frame: GraspFrame) -> np.ndarray:
    """``(6n, k)`` matrix whose column ``j`` is the scaled screw of encoder
    ``j`` placed in its chain's rows; ``$_HG = M @ rates``."""
    M = np.zeros((6 * len(frame.chains), glove.k))
    sl = hand.joint_slices()
    for j, ch in enumerate(glove.channels):
        r = frame.chains.index(ch.chain)
        if ch.screw == "joint":
            col = chain_jacobian(hand.chains[ch.chain], frame.q[sl[ch.chain]])[:, ch.joint]
        else:
            u = np.asarray(ch.axis)
            col = np.concatenate([u, cross3(u, frame.tips[r] - frame.center)])
        M[6 * r:6 * r + 6, j] = ch.scale * col
    return M


def glove_to_fingertip_twists(prev: GloveSample, cur: GloveSample, glove: GloveProfile,
                              hand: HandProfile, q=None, frame: GraspFrame | None = None) -> np.ndarray:
    """Stacked hypothetical fingertip twists from a backward difference of
    two consecutive glove samples."""
    dt = cur.t - prev.t
    if not dt > 0:
        raise ValueError("glove samples must be in increasing time order")
    frame = frame or grasp_frame(glove, hand, q)
    rates = np.deg2rad(np.asarray(cur.values, float) - np.asarray(prev.values, float)) / dt
    return mapping_matrix(glove, hand, frame) @ rates


def estimate_object_twist(twists_hg, J_o: ObjectJacobian) -> Twist:
    x = np.asarray(twists_hg, dtype=float).reshape(-1)
    if x.size != J_o.stacked.shape[0]:
        raise ValueError(f"expected {J_o.stacked.shape[0]} stacked twist entries, got {x.size}")
    return Twist.from_vector(pseudoinverse(J_o.stacked) @ x)


# -- intent accumulation ---------------------------------------------------

@dataclass(frozen=True)
class IntentState:
    d: np.ndarray = field(default_factory=lambda: np.zeros(3))
    dtheta: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation_only: bool = False
    last_twist: np.ndarray = field(default_factory=lambda: np.zeros(6))
    t: float = 0.0

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float).reshape(3)
        if self.rotation_only:
            d = np.zeros(3)
        object.__setattr__(self, "d", d)
        object.__setattr__(self, "dtheta", np.asarray(self.dtheta, dtype=float).reshape(3))
        object.__setattr__(self, "last_twist", np.asarray(self.last_twist, dtype=float).reshape(6))

    @property
    def T_o(self) -> Pose:
        return goal_pose_from_intent(self)


def integrate_intent(state: IntentState, twist: Twist, dt: float) -> IntentState:
    """Trapezoidal accumulation of the object twist over ``dt``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    x = twist.vector()
    avg = 0.5 * (state.last_twist + x)
    d = state.d if state.rotation_only else state.d + dt * avg[3:]
    return IntentState(d, state.dtheta + dt * avg[:3], state.rotation_only, x, state.t + dt)


def goal_pose_from_intent(state: IntentState) -> Pose:
    return Pose(rodrigues_exp(state.dtheta), state.d)


@dataclass(frozen=True)
class IntentTrace:
    t: np.ndarray
    dtheta: np.ndarray   # (N, 3) rad
    d: np.ndarray        # (N, 3) m

    def goal_poses(self) -> list[Pose]:
        return [Pose(rodrigues_exp(a), b) for a, b in zip(self.dtheta, self.d)]


INTENT_HEADER = ["t_s", "dthx_rad", "dthy_rad", "dthz_rad", "dx_m", "dy_m", "dz_m"]


def write_intent_csv(intent: IntentTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(INTENT_HEADER)
        for row in np.column_stack([intent.t, intent.dtheta, intent.d]):
            w.writerow([f"{x:.12g}" for x in row])


def read_intent_csv(path) -> IntentTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != INTENT_HEADER:
        raise ValueError(f"{path}: expected header {','.join(INTENT_HEADER)}")
    try:
        a = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float).reshape(-1, 7)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    return IntentTrace(a[:, 0], a[:, 1:4], a[:, 4:7])


def object_twists_from_trace(trace: GloveTrace, glove: GloveProfile, hand: HandProfile,
                             q=None) -> np.ndarray:
    """``(N, 6)`` object twists, one per sample; the first row is zero (no
    backward difference yet)."""
    frame = grasp_frame(glove, hand, q)
    A = pseudoinverse(frame.J_o.stacked) @ mapping_matrix(glove, hand, frame)   # (6, k)
    rates = np.zeros_like(trace.values)
    rates[1:] = np.deg2rad(np.diff(trace.values, axis=0)) / np.diff(trace.t)[:, None]
    return rates @ A.T


def estimate_intent(trace: GloveTrace, glove: GloveProfile, hand: HandProfile, q=None,
                    rotation_only: bool = False) -> IntentTrace:
    """Run the whole glove trace through the twist map and accumulate.

    Vectorised equivalent of repeated :func:`integrate_intent` calls.
    """
    tw = object_twists_from_trace(trace, glove, hand, q)
    dt = np.diff(trace.t)[:, None]
    inc = dt * 0.5 * (tw[:-1] + tw[1:])
    acc = np.vstack([np.zeros((1, 6)), np.cumsum(inc, axis=0)])
    d = np.zeros((len(trace), 3)) if rotation_only else acc[:, 3:]
    return IntentTrace(trace.t.copy(), acc[:, :3], d)


# -- PCA --------------------------------------------------------------------

@dataclass(frozen=True)
class PcaResult:
    eigenvalues: np.ndarray          # (k,), descending, zeros kept
    components: np.ndarray           # (k, r), one unit vector per non-zero eigenvalue
    explained_ratio: np.ndarray      # (k,)


def pca_analysis(traces: Sequence[GloveTrace] | GloveTrace, rtol: float = 1e-12) -> PcaResult:
    if isinstance(traces, GloveTrace):
        traces = [traces]
    X = np.vstack([tr.values for tr in traces])
    if X.shape[0] < 2:
        raise ValueError("PCA needs at least two samples")
    Xc = X - X.mean(axis=0)
    C = Xc.T @ Xc / (X.shape[0] - 1)
    w, V = np.linalg.eigh(C)
    order = np.argsort(w)[::-1]
    w, V = w[order], V[:, order]
    cutoff = rtol * max(float(w[0]), 0.0) * w.size
    w = np.where(w > cutoff, w, 0.0)
    keep = w > 0
    total = w.sum()
    ratio = w / total if total > 0 else np.zeros_like(w)
    return PcaResult(w, V[:, keep], ratio)


# -- synthetic data -----------------------------------------------------------

def logistic_wavelet(t, amplitude: float, midpoint: float, steepness: float) -> np.ndarray:
    return amplitude / (1.0 + np.exp(-steepness * (np.asarray(t, dtype=float) - midpoint)))


def logistic_wavelet_rate(t, amplitude: float, midpoint: float, steepness: float) -> np.ndarray:
    s = 1.0 / (1.0 + np.exp(-steepness * (np.asarray(t, dtype=float) - midpoint)))
    return amplitude * steepness * s * (1.0 - s)


def glove_mixing(glove: GloveProfile, hand: HandProfile, q=None) -> np.ndarray:
    """``(k, 6)`` map from object twist to glove rates (rad per rad or per m):
    the pseudo-inverse of the encoder mapping applied to ``J_o``."""
    frame = grasp_frame(glove, hand, q)
    return pseudoinverse(mapping_matrix(glove, hand, frame)) @ frame.J_o.stacked


@dataclass(frozen=True)
class SigmoidTrace:
    trace: GloveTrace
    t: np.ndarray
    intent: np.ndarray        # (N, 3) ground-truth dtheta, rad
    amplitudes_deg: np.ndarray
    midpoints_s: np.ndarray


def generate_sigmoid_trace(amplitude_deg: float = 20.0, midpoint_s: float = 2.0,
                           steepness: float = 3.0, wavelets: int = 1, rate_hz: float = 200.0,
                           seed: int | None = 0, *, spacing_s: float = 4.0, jitter_s: float = 0.25,
                           amplitude_jitter: float = 0.15, alternate: bool = True,
                           axis=(0.0, 0.0, 1.0), noise_deg: float = 0.02,
                           glove: GloveProfile | None = None, hand: HandProfile | None = None,
                           mixing: np.ndarray | None = None) -> SigmoidTrace:
    """Glove trace whose underlying rotation intent about ``axis`` is a sum
    of logistic wavelets.

    Wavelet ``i`` is centred near ``midpoint_s + i * spacing_s`` (plus
    uniform jitter).  With ``alternate`` every second wavelet returns the
    object to where the previous one started; otherwise every wavelet adds.  Glove angles are
    ``rest + mixing @ [dtheta; 0]`` plus Gaussian noise, where ``mixing``
    defaults to :func:`glove_mixing` for the bundled devices.
    """
    if not rate_hz > 0:
        raise ValueError("rate must be positive")
    if wavelets < 1:
        raise ValueError("need at least one wavelet")
    if not steepness > 0:
        raise ValueError("steepness must be positive")
    rng = np.random.default_rng(seed)
    if glove is None:
        glove = load_glove_profile()
    if mixing is None:
        from .hand import load_profile
        mixing = glove_mixing(glove, hand or load_profile())
    mixing = np.asarray(mixing, dtype=float)
    if mixing.shape != (glove.k, 6):
        raise ValueError(f"mixing must be ({glove.k}, 6)")

    u = np.asarray(axis, dtype=float).reshape(3)
    u = u / np.linalg.norm(u)
    mids = midpoint_s + spacing_s * np.arange(wavelets)
    if wavelets > 1 and jitter_s > 0:
        mids = mids + rng.uniform(-jitter_s, jitter_s, wavelets)
    amps = np.full(wavelets, float(amplitude_deg))
    if amplitude_jitter > 0:
        amps = amps * (1.0 + rng.uniform(-amplitude_jitter, amplitude_jitter, wavelets))
    if alternate:
        # each return exactly undoes the preceding turn
        amps[1::2] = -amps[0::2][:wavelets // 2]

    duration = mids[-1] + midpoint_s
    n = int(np.floor(duration * rate_hz)) + 1
    t = np.arange(n) / rate_hz
    angle = np.zeros(n)
    for a, m in zip(amps, mids):
        angle += logistic_wavelet(t, np.deg2rad(a), m, steepness)
    intent = angle[:, None] * u
    glove_rad = np.concatenate([intent, np.zeros_like(intent)], axis=1) @ mixing.T
    values = glove.rest_deg() + np.rad2deg(glove_rad)
    if noise_deg > 0:
        values = values + rng.normal(0.0, noise_deg, values.shape)
    trace = GloveTrace(t, values)
    trace.check_ranges(glove)
    return SigmoidTrace(trace, t, intent, amps, mids)


def generate_rigid_motion_trace(duration_s: float = 20.0, rate_hz: float = 200.0,
                                seed: int | None = 0, *, rot_amp_deg=(25.0, 18.0, 12.0),
                                trans_amp_m: float = 0.001, noise_deg: float = 0.02,
                                glove: GloveProfile | None = None,
                                hand: HandProfile | None = None) -> tuple[GloveTrace, np.ndarray]:
    """Glove trace driven by a 6-D rigid object motion through the mixing map.

    The motion is a random sum of slow sinusoids per axis: large rotations,
    small translations.  Returns the trace and the ``(N, 6)`` displacement
    ``[rotation; translation]``.
    """
    rng = np.random.default_rng(seed)
    glove = glove or load_glove_profile()
    if hand is None:
        from .hand import load_profile
        hand = load_profile()
    mixing = glove_mixing(glove, hand)
    t = np.arange(int(np.floor(duration_s * rate_hz)) + 1) / rate_hz
    amps = np.concatenate([np.deg2rad(np.broadcast_to(rot_amp_deg, 3)), np.full(3, trans_amp_m)])
    motion = np.zeros((t.size, 6))
    for a in range(6):
        for _ in range(3):
            f = rng.uniform(0.05, 0.4)
            ph = rng.uniform(0, 2 * np.pi)
            motion[:, a] += amps[a] / 3.0 * np.sin(2 * np.pi * f * t + ph)
    values = glove.rest_deg() + np.rad2deg(motion @ mixing.T)
    if noise_deg > 0:
        values = values + rng.normal(0.0, noise_deg, values.shape)
    trace = GloveTrace(t, values)
    trace.check_ranges(glove)
    return trace, motion


def decimate(x, factor: int) -> np.ndarray:
    """Every ``factor``-th sample, starting with the first."""
    if factor < 1:
        raise ValueError("decimation factor must be >= 1")
    return np.asarray(x)[::factor]
