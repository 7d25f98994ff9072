"""Kinematic trot oracle: synthesizes constant-parameter trot trajectories.

Stands in for a full planning/physics stack at desk scale. Legs are
3-DoF abduction-hip-knee chains; the base follows the commanded twist
exactly (unicycle model at constant height); torques and contact forces
come from a static weight distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleGait, OutOfReach

GRAVITY = 9.81
LEG_NAMES = ("LF", "RF", "LH", "RH")
# Diagonal pairs: A = {LF, RH}, B = {RF, LH}.
PAIR_A = (0, 3)
PAIR_B = (1, 2)

JOINT_NAMES = ("abd", "hip", "knee")
AXIS_NAMES = ("x", "y", "z")
TWIST_NAMES = ("vx", "vy", "vz", "wx", "wy", "wz")
POSE_NAMES = ("x", "y", "z", "roll", "pitch", "yaw")

STATE_DIM = 60


def feature_names() -> list[str]:
    names = []
    for leg in LEG_NAMES:
        names += [f"q_{leg}_{j}" for j in JOINT_NAMES]
    for leg in LEG_NAMES:
        names += [f"ee_{leg}_{a}" for a in AXIS_NAMES]
    for leg in LEG_NAMES:
        names += [f"tau_{leg}_{j}" for j in JOINT_NAMES]
    for leg in LEG_NAMES:
        names += [f"lam_{leg}_{a}" for a in AXIS_NAMES]
    names += [f"twist_{t}" for t in TWIST_NAMES]
    names += [f"dpose_{p}" for p in POSE_NAMES]
    return names


@dataclass(frozen=True)
class QuadrupedGeometry:
    """Leg layout; defaults sized to a mid-size 35 kg quadruped."""

    hip_offsets: np.ndarray = field(
        default_factory=lambda: np.array(
            [
                [0.3, 0.1, 0.0],   # LF
                [0.3, -0.1, 0.0],  # RF
                [-0.3, 0.1, 0.0],  # LH
                [-0.3, -0.1, 0.0], # RH
            ]
        )
    )
    l1: float = 0.25
    l2: float = 0.33
    mass: float = 35.0
    standing_height: float = 0.5

    def __post_init__(self):
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("link lengths must be positive")
        if self.standing_height >= self.l1 + self.l2:
            raise ValueError("standing height must be below full leg extension")

    @property
    def max_reach(self):
        return self.l1 + self.l2


@dataclass(frozen=True)
class GaitParams:
    swing_duration: float = 0.5
    full_stance_duration: float = 0.075
    step_height: float = 0.10
    base_twist_cmd: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.swing_duration <= 0:
            raise ValueError("swing_duration must be > 0")
        if self.full_stance_duration < 0 or self.step_height < 0:
            raise ValueError("stance duration and step height must be >= 0")

    @property
    def cycle_duration(self):
        return 2.0 * (self.swing_duration + self.full_stance_duration)

    @property
    def contact_duration(self):
        """Per-foot time in contact each cycle."""
        return self.swing_duration + 2.0 * self.full_stance_duration


@dataclass
class RobotState:
    """One timestep of the planner's state vector (60 features + contacts)."""

    q: np.ndarray           # (12,) rad
    ee: np.ndarray          # (4, 3) m, base frame
    tau: np.ndarray         # (12,) N*m
    lam: np.ndarray         # (4, 3) N
    base_twist: np.ndarray  # (6,) linear m/s + angular rad/s
    pose_delta: np.ndarray  # (6,) translation m + orientation rad
    contact: np.ndarray     # (4,) bool

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [
                self.q,
                self.ee.reshape(-1),
                self.tau,
                self.lam.reshape(-1),
                self.base_twist,
                self.pose_delta,
            ]
        )

    @classmethod
    def from_vector(cls, v: np.ndarray, contact: np.ndarray) -> "RobotState":
        v = np.asarray(v, dtype=np.float64)
        return cls(
            q=v[0:12].copy(),
            ee=v[12:24].reshape(4, 3).copy(),
            tau=v[24:36].copy(),
            lam=v[36:48].reshape(4, 3).copy(),
            base_twist=v[48:54].copy(),
            pose_delta=v[54:60].copy(),
            contact=np.asarray(contact, dtype=bool).copy(),
        )


@dataclass
class Trajectory:
    states: list
    sample_rate: float
    params: GaitParams

    def __len__(self):
        return len(self.states)

    @property
    def times(self):
        return np.arange(len(self.states)) / self.sample_rate

    def to_matrix(self) -> np.ndarray:
        return np.stack([s.as_vector() for s in self.states])

    def contacts(self) -> np.ndarray:
        return np.stack([s.contact for s in self.states])


# ---------------------------------------------------------------------------
# Leg kinematics


def leg_fk(angles, geometry: QuadrupedGeometry, leg_index: int) -> np.ndarray:
    """Analytic FK of the abduction-hip-knee chain, base frame.

    Abduction rolls about x; hip and knee pitch about y. All angles zero
    gives a straight leg pointing down.
    """
    a, h, k = float(angles[0]), float(angles[1]), float(angles[2])
    x = geometry.l1 * math.sin(h) + geometry.l2 * math.sin(h + k)
    zp = -(geometry.l1 * math.cos(h) + geometry.l2 * math.cos(h + k))
    # roll the (0, zp) leg-plane offset about x
    y = -math.sin(a) * zp
    z = math.cos(a) * zp
    return geometry.hip_offsets[leg_index] + np.array([x, y, z])


def leg_ik(foot_position, geometry: QuadrupedGeometry, leg_index: int,
           margin: float = 1e-9) -> np.ndarray:
    """Inverse of `leg_fk`, knee-backward (knee angle >= 0) branch."""
    p = np.asarray(foot_position, dtype=np.float64) - geometry.hip_offsets[leg_index]
    r = float(np.linalg.norm(p))
    l1, l2 = geometry.l1, geometry.l2
    if r > l1 + l2 - margin:
        raise OutOfReach(f"target at {r:.4f} m exceeds reach {l1 + l2:.4f} m")
    abd = math.atan2(p[1], -p[2])
    zp = -math.hypot(p[1], p[2])
    c_knee = (r * r - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)
    knee = math.acos(min(1.0, max(-1.0, c_knee)))
    alpha = math.atan2(p[0], -zp)
    beta = math.atan2(l2 * math.sin(knee), l1 + l2 * math.cos(knee))
    hip = alpha - beta
    return np.array([abd, hip, knee])


def leg_jacobian(angles, geometry: QuadrupedGeometry) -> np.ndarray:
    """3x3 Jacobian of foot position w.r.t. (abd, hip, knee)."""
    a, h, k = float(angles[0]), float(angles[1]), float(angles[2])
    l1, l2 = geometry.l1, geometry.l2
    x = l1 * math.sin(h) + l2 * math.sin(h + k)
    zp = -(l1 * math.cos(h) + l2 * math.cos(h + k))
    dx_dh = l1 * math.cos(h) + l2 * math.cos(h + k)
    dx_dk = l2 * math.cos(h + k)
    dzp_dh = l1 * math.sin(h) + l2 * math.sin(h + k)
    dzp_dk = l2 * math.sin(h + k)
    sa, ca = math.sin(a), math.cos(a)
    J = np.zeros((3, 3))
    J[0, 1], J[0, 2] = dx_dh, dx_dk
    J[1, 0] = -ca * zp
    J[1, 1], J[1, 2] = -sa * dzp_dh, -sa * dzp_dk
    J[2, 0] = -sa * zp
    J[2, 1], J[2, 2] = ca * dzp_dh, ca * dzp_dk
    return J


def swing_profile(phase_fraction: float, step_height: float, stride) -> np.ndarray:
    """Foot displacement from lift-off: cubed-sine vertical, cycloidal
    horizontal.

    The cubed-sine height profile keeps lift-off and touchdown gentle and
    gives the motion library a single odd-harmonic vertical waveform, so a
    latent coordinate that tracks foot height oscillates in the same
    waveform family the drive signal uses.
    """
    s = float(phase_fraction)
    stride = np.asarray(stride, dtype=np.float64)
    horiz = stride * (s - math.sin(2.0 * math.pi * s) / (2.0 * math.pi))
    out = horiz.copy()
    out[2] += step_height * math.sin(math.pi * s) ** 3
    return out


# ---------------------------------------------------------------------------
# Base motion (constant body twist, unicycle at fixed height)


def _rot2(yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s], [s, c]])


def base_pose_at(t: float, twist) -> tuple[np.ndarray, float]:
    """World (x, y) and yaw at elapsed time t from the origin pose."""
    vx, vy, w = twist
    if abs(w) < 1e-12:
        return np.array([vx * t, vy * t]), 0.0 + w * t
    yaw = w * t

    def S(th):
        return np.array([[math.sin(th), math.cos(th)],
                         [-math.cos(th), math.sin(th)]])

    p = (S(yaw) - S(0.0)) @ np.array([vx, vy]) / w
    return p, yaw


def _hip_world(t, twist, geometry, leg):
    base_xy, yaw = base_pose_at(t, twist)
    return base_xy + _rot2(yaw) @ geometry.hip_offsets[leg, :2], yaw


def _hip_world_velocity(t, twist, geometry, leg):
    vx, vy, w = twist
    _, yaw = base_pose_at(t, twist)
    hx, hy = geometry.hip_offsets[leg, :2]
    v_body = np.array([vx - w * hy, vy + w * hx])
    return _rot2(yaw) @ v_body


def stance_set_at(phase: float, params: GaitParams) -> np.ndarray:
    """Contact booleans (4,) at a phase within one gait cycle.

    Cycle layout: full support, pair B swing (LF+RH in contact), full
    support, pair A swing (RF+LH in contact).
    """
    sw, st = params.swing_duration, params.full_stance_duration
    contact = np.ones(4, dtype=bool)
    if st <= phase < st + sw:
        contact[list(PAIR_B)] = False
    elif 2 * st + sw <= phase < 2 * st + 2 * sw:
        contact[list(PAIR_A)] = False
    return contact


def _static_forces(q, contact, twist, geometry, drag_coeff=0.2):
    """Static weight split over stance feet; tau = J^T * lambda per stance leg."""
    lam = np.zeros((4, 3))
    tau = np.zeros(12)
    n = int(np.sum(contact))
    if n == 0:
        return tau, lam
    fz = geometry.mass * GRAVITY / n
    ft = drag_coeff * geometry.mass * np.array([twist[0], twist[1]]) / n
    for leg in range(4):
        if not contact[leg]:
            continue
        lam[leg] = np.array([ft[0], ft[1], fz])
        J = leg_jacobian(q[3 * leg:3 * leg + 3], geometry)
        tau[3 * leg:3 * leg + 3] = J.T @ lam[leg]
    return tau, lam


# ---------------------------------------------------------------------------
# Trot generation


def generate_trot(params: GaitParams, geometry: QuadrupedGeometry,
                  duration: float, sample_rate: float = 100.0, seed: int = 0,
                  frame_reset_period: float = 0.4) -> Trajectory:
    """Constant-parameter trot trajectory at the oracle sample rate.

    Touchdown targets use the half-stance heuristic: hip ground position
    at touchdown plus hip velocity times half the per-foot contact time.
    Deterministic; `seed` is accepted for interface symmetry.
    """
    del seed
    if duration < 2.0 * params.cycle_duration:
        raise ValueError("duration must cover at least two gait cycles")
    twist = params.base_twist_cmd
    dt = 1.0 / sample_rate
    n_ticks = int(round(duration * sample_rate))
    period = params.cycle_duration
    t_contact = params.contact_duration
    reach_limit = 0.95 * geometry.max_reach

    # feet start in nominal stance under the hips
    feet_w = np.zeros((4, 3))
    for leg in range(4):
        feet_w[leg, :2] = geometry.hip_offsets[leg, :2]
    swing_info: list = [None] * 4  # (t_lo, t_td, liftoff, target) while airborne
    prev_contact = np.ones(4, dtype=bool)

    states = []
    for k in range(n_ticks):
        t = k * dt
        phase = math.fmod(t, period)
        contact = stance_set_at(phase, params)
        base_xy, yaw = base_pose_at(t, twist)
        R = _rot2(yaw)

        for leg in range(4):
            if prev_contact[leg] and not contact[leg]:
                # lift-off: plan this swing
                sw = params.swing_duration
                t_lo = t
                t_td = t_lo + sw
                hip_td, _ = _hip_world(t_td, twist, geometry, leg)
                v_hip = _hip_world_velocity(t_td, twist, geometry, leg)
                target = np.zeros(3)
                target[:2] = hip_td + v_hip * (t_contact / 2.0)
                # feasibility at touchdown
                _, yaw_td = base_pose_at(t_td, twist)
                rel = target[:2] - hip_td
                reach = math.sqrt(
                    float(rel @ rel) + geometry.standing_height**2
                )
                if reach > reach_limit:
                    raise InfeasibleGait(
                        f"stride needs {reach:.3f} m reach, limit {reach_limit:.3f} m"
                    )
                swing_info[leg] = (t_lo, t_td, feet_w[leg].copy(), target)
            elif not prev_contact[leg] and contact[leg]:
                # touchdown: snap to target
                feet_w[leg] = swing_info[leg][3]
                swing_info[leg] = None

        foot_pos_w = feet_w.copy()
        for leg in range(4):
            if not contact[leg]:
                t_lo, t_td, liftoff, target = swing_info[leg]
                s = min(1.0, (t - t_lo) / (t_td - t_lo))
                stride = target - liftoff
                foot_pos_w[leg] = liftoff + swing_profile(
                    s, params.step_height, stride
                )

        # states in base frame
        ee = np.zeros((4, 3))
        q = np.zeros(12)
        try:
            for leg in range(4):
                rel_xy = R.T @ (foot_pos_w[leg, :2] - base_xy)
                ee[leg] = np.array(
                    [rel_xy[0], rel_xy[1],
                     foot_pos_w[leg, 2] - geometry.standing_height]
                )
                q[3 * leg:3 * leg + 3] = leg_ik(ee[leg], geometry, leg)
        except OutOfReach as exc:
            raise InfeasibleGait(f"foot left workspace at t={t:.3f}s: {exc}")

        tau, lam = _static_forces(q, contact, twist, geometry)

        t_reset = math.floor(t / frame_reset_period) * frame_reset_period
        p_reset, yaw_reset = base_pose_at(t_reset, twist)
        d_xy = _rot2(yaw_reset).T @ (base_xy - p_reset)
        pose_delta = np.array([d_xy[0], d_xy[1], 0.0, 0.0, 0.0, yaw - yaw_reset])
        base_twist = np.array([twist[0], twist[1], 0.0, 0.0, 0.0, twist[2]])

        states.append(
            RobotState(q=q, ee=ee, tau=tau, lam=lam, base_twist=base_twist,
                       pose_delta=pose_delta, contact=contact.copy())
        )
        prev_contact = contact

    return Trajectory(states=states, sample_rate=sample_rate, params=params)


# ---------------------------------------------------------------------------
# Dataset synthesis


@dataclass
class Dataset:
    trajectories: list
    feature_mean: np.ndarray
    feature_std: np.ndarray
    sample_rate: float
    feature_names: list[str] = field(default_factory=feature_names)

    @property
    def state_dim(self):
        return len(self.feature_mean)


def compute_feature_stats(trajectories) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean/std over all states of all trajectories."""
    rows = np.concatenate([traj.to_matrix() for traj in trajectories])
    mean = rows.mean(axis=0)
    std = rows.std(axis=0)
    std[std < 1e-8] = 1.0  # constant features pass through unscaled
    return mean, std


def synthesize_dataset(n_trajectories: int, twist_range, params: GaitParams,
                       geometry: QuadrupedGeometry | None = None,
                       duration: float = 10.0, sample_rate: float = 100.0,
                       seed: int = 0, gait_ranges=None) -> Dataset:
    """Uniformly sampled twist commands, one trot trajectory each.

    `twist_range` is ((vx_lo, vx_hi), (vy_lo, vy_hi), (wz_lo, wz_hi)).
    `gait_ranges`, when given, additionally samples gait timing and step
    height per trajectory as {"swing": (lo, hi), "stance": (lo, hi),
    "height": (lo, hi)}; omitted keys keep the value from `params`. The
    planner can only command timings the decoder has seen, so the sweep
    should cover the intended operating window. Deterministic under
    `seed`.
    """
    geometry = geometry or QuadrupedGeometry()
    rng = np.random.default_rng(seed)
    ranges = gait_ranges or {}
    trajectories = []
    for _ in range(n_trajectories):
        twist = tuple(
            float(rng.uniform(lo, hi)) for lo, hi in twist_range
        )

        def draw(key, default):
            if key in ranges:
                lo, hi = ranges[key]
                return float(rng.uniform(lo, hi))
            return default

        p = GaitParams(
            swing_duration=draw("swing", params.swing_duration),
            full_stance_duration=draw("stance", params.full_stance_duration),
            step_height=draw("height", params.step_height),
            base_twist_cmd=twist,
        )
        trajectories.append(
            generate_trot(p, geometry, duration, sample_rate)
        )
    mean, std = compute_feature_stats(trajectories)
    return Dataset(trajectories=trajectories, feature_mean=mean,
                   feature_std=std, sample_rate=sample_rate)
