"""Desk-scale stand-in for robot + whole-body controller.

Tracks the planner's joint trajectories with a first-order gain,
integrates the commanded base twist (plus decaying velocity impulses),
and synthesizes the measured state the encoder sees. Also hosts the
rollout/scenario machinery used by the experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .drive import DriveSignalState, design_butterworth, scheduled_support
from .errors import InsufficientHistory, PlannerStall
from .oracle import (
    GaitParams,
    QuadrupedGeometry,
    RobotState,
    _rot2,
    _static_forces,
    generate_trot,
    leg_fk,
)
from .planner import (
    ElboMonitor,
    StateBuffer,
    calibrate_threshold,
    plan_tick,
)
from .vae import VaeModel, oscillator_at_offset


@dataclass
class SimConfig:
    tracking_gain: float = 0.8
    contact_height_threshold: float = 0.02
    joint_noise_std: float = 0.0
    twist_noise_std: float = 0.0
    frame_reset_period: float = 0.4
    train_step_height: float = 0.10


@dataclass
class Disturbance:
    onset_s: float
    impulse: tuple[float, float, float]  # body-frame m/s (vx, vy) + yaw rad/s
    decay_s: float = 0.2

    def __post_init__(self):
        if self.decay_s <= 0:
            raise ValueError("decay must be > 0")


@dataclass
class SimState:
    base_xy: np.ndarray
    yaw: float
    q: np.ndarray
    tick: int
    impulse_v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    anchor_xy: np.ndarray = field(default_factory=lambda: np.zeros(2))
    anchor_yaw: float = 0.0
    anchor_tick: int = 0


def step_sim(sim: SimState, plan, action, geometry: QuadrupedGeometry,
             cfg: SimConfig, f_c: float, impulse_add=None,
             decay_s: float = 0.2, rng: np.random.Generator | None = None,
             scheduled=None):
    """Advances one control tick; returns (SimState, measured RobotState).

    `impulse_add` is an optional body-frame (vx, vy, wz) velocity offset
    injected this tick; active offsets decay exponentially with `decay_s`.

    `scheduled` is the planner's commanded support set for this tick. The
    tracking controller only loads feet the plan holds in stance, so a
    scheduled-swing foot grazing the ground registers no contact; a foot
    registers contact when it is both loaded and within the contact
    height threshold.
    """
    rng = rng or np.random.default_rng()
    dt = 1.0 / f_c
    gain = cfg.tracking_gain
    q = sim.q + gain * (plan.q[1] - sim.q)

    imp = sim.impulse_v * math.exp(-dt / decay_s)
    if impulse_add is not None:
        imp = imp + np.asarray(impulse_add, dtype=np.float64)

    vx, vy, wz = float(action[0]), float(action[1]), float(action[2])
    v_body = np.array([vx + imp[0], vy + imp[1]])
    w = wz + imp[2]
    base_xy = sim.base_xy + _rot2(sim.yaw) @ v_body * dt
    yaw = sim.yaw + w * dt
    tick = sim.tick + 1

    anchor_xy, anchor_yaw, anchor_tick = sim.anchor_xy, sim.anchor_yaw, sim.anchor_tick
    if (tick - anchor_tick) >= int(round(cfg.frame_reset_period * f_c)):
        anchor_xy, anchor_yaw, anchor_tick = base_xy.copy(), yaw, tick

    q_meas = q + rng.normal(0.0, cfg.joint_noise_std, 12) \
        if cfg.joint_noise_std > 0 else q.copy()
    ee = np.stack([
        leg_fk(q_meas[3 * leg:3 * leg + 3], geometry, leg) for leg in range(4)
    ])
    foot_height = geometry.standing_height + ee[:, 2]
    contact = foot_height <= cfg.contact_height_threshold
    if scheduled is not None:
        contact = contact & np.asarray(scheduled, dtype=bool)
    tau, lam = _static_forces(q_meas, contact, (v_body[0], v_body[1], w), geometry)

    twist = np.array([v_body[0], v_body[1], 0.0, 0.0, 0.0, w])
    if cfg.twist_noise_std > 0:
        twist = twist + rng.normal(0.0, cfg.twist_noise_std, 6)

    d_xy = _rot2(anchor_yaw).T @ (base_xy - anchor_xy)
    pose_delta = np.array([d_xy[0], d_xy[1], 0.0, 0.0, 0.0, yaw - anchor_yaw])

    measured = RobotState(q=q_meas, ee=ee, tau=tau, lam=lam,
                          base_twist=twist, pose_delta=pose_delta,
                          contact=contact)
    new_sim = SimState(base_xy=base_xy, yaw=yaw, q=q, tick=tick,
                       impulse_v=imp, anchor_xy=anchor_xy,
                       anchor_yaw=anchor_yaw, anchor_tick=anchor_tick)
    return new_sim, measured


# ---------------------------------------------------------------------------
# Scenarios and rollouts


@dataclass
class ScenarioEvent:
    time_s: float
    name: str   # set_swing_period | set_stance_duration | set_step_height | set_twist
    value: object


@dataclass
class Scenario:
    duration_s: float = 10.0
    action: tuple[float, float, float] = (0.0, 0.0, 0.0)
    step_height: float = 0.10
    gait: GaitParams = field(default_factory=GaitParams)
    events: list = field(default_factory=list)
    disturbances: list = field(default_factory=list)
    monitor_enabled: bool = True
    threshold: float | None = None
    k_sigma: float = 6.0
    warmup_cycles: int = 3


@dataclass
class RolloutReport:
    elbo: np.ndarray
    contacts_executed: np.ndarray     # (T, 4) bool
    contact_probs: np.ndarray         # (T, 4) current-step probabilities
    response_active: np.ndarray       # (T,) bool
    swing_period_cmd: np.ndarray      # (T,) commanded drive period, ticks
    stance_cmd: np.ndarray            # (T,) commanded stance extension, ticks
    threshold: float
    detection_latency_s: float | None
    recovery_steps: int | None
    max_tracking_error: float
    termination: str
    f_c: float

    def __post_init__(self):
        n = len(self.elbo)
        assert all(len(a) == n for a in (
            self.contacts_executed, self.contact_probs, self.response_active,
            self.swing_period_cmd, self.stance_cmd))


def _warmup(model: VaeModel, scenario: Scenario, geometry, cfg: SimConfig):
    """Seeds buffer/sim/oscillator from a nominal oracle rollout."""
    mcfg = model.config
    params = scenario.gait
    need = mcfg.stride * (mcfg.window_len - 1) + 1
    warm_ticks = max(
        need, int(round(scenario.warmup_cycles * params.cycle_duration * mcfg.f_c))
    )
    duration = max(2.0 * params.cycle_duration, (warm_ticks + 1) / mcfg.f_c)
    traj = generate_trot(params, geometry, duration, mcfg.f_c,
                         frame_reset_period=cfg.frame_reset_period)
    buffer = StateBuffer(capacity=need)
    for k in range(warm_ticks):
        buffer.push(k, traj.states[k])

    last = traj.states[warm_ticks - 1]
    t_end = (warm_ticks - 1) / mcfg.f_c
    from .oracle import base_pose_at
    base_xy, yaw = base_pose_at(t_end, params.base_twist_cmd)
    sim = SimState(base_xy=np.asarray(base_xy), yaw=yaw, q=last.q.copy(),
                   tick=warm_ticks - 1)

    base = DriveSignalState.from_durations(
        params.swing_duration, params.full_stance_duration, mcfg.f_c,
        amplitude=model.drive_amplitude * (scenario.step_height
                                           / cfg.train_step_height),
    )
    cycle = base.period_ticks + 2 * base.stance_ticks
    phase_ticks = int(round((model.drive_phase_fraction or 0.0) * cycle))
    elapsed = ((warm_ticks - 1) + phase_ticks) % cycle
    drive = oscillator_at_offset(base, elapsed)
    return buffer, sim, drive


def run_rollout(model: VaeModel, scenario: Scenario,
                geometry: QuadrupedGeometry | None = None,
                sim_cfg: SimConfig | None = None, seed: int = 0,
                elbo_trace_only: bool = False) -> RolloutReport:
    """Full closed loop (planner <-> sim) for a scripted scenario."""
    if model.d_drive is None:
        raise ValueError("model has no identified drive dimension")
    geometry = geometry or QuadrupedGeometry()
    sim_cfg = sim_cfg or SimConfig()
    mcfg = model.config
    f_c = mcfg.f_c
    rng = np.random.default_rng(seed)

    buffer, sim, drive = _warmup(model, scenario, geometry, sim_cfg)
    filt = design_butterworth(10.0, f_c, channels=mcfg.latent_dim)
    theta = scenario.threshold if scenario.threshold is not None else math.inf
    monitor = ElboMonitor(
        threshold=theta,
        t_nominal_ticks=drive.period_ticks,
        t_response_ticks=max(2, drive.period_ticks // 2),
        response_duration_ticks=int(round(1.5 * f_c)),
        enabled=scenario.monitor_enabled and math.isfinite(theta),
    )
    action = np.asarray(scenario.action, dtype=np.float64)

    n_ticks = int(round(scenario.duration_s * f_c))
    events = sorted(scenario.events, key=lambda e: e.time_s)
    ei = 0
    start_tick = sim.tick

    elbo, contacts_exec, probs, resp, period_cmd, stance_cmd = \
        [], [], [], [], [], []
    max_track = 0.0
    onset_ticks = [int(round(d.onset_s * f_c)) + start_tick
                   for d in scenario.disturbances]
    detection_tick = None
    recovery_tick = None
    calm_run = 0
    steps_after_onset = 0
    prev_half = drive.half_cycles
    termination = "completed"

    for i in range(n_ticks):
        t_rel = i / f_c
        while ei < len(events) and events[ei].time_s <= t_rel:
            ev = events[ei]
            if ev.name == "set_swing_period":
                period = max(2, int(round(2.0 * float(ev.value) * f_c)))
                drive = replace(drive, period_ticks=period)
                monitor = replace(monitor, t_nominal_ticks=period,
                                  t_response_ticks=max(2, period // 2))
            elif ev.name == "set_stance_duration":
                drive = replace(
                    drive, stance_ticks=max(0, int(round(float(ev.value) * f_c)))
                )
            elif ev.name == "set_step_height":
                amp = model.drive_amplitude * (
                    float(ev.value) / sim_cfg.train_step_height
                )
                drive = replace(drive, amplitude=max(0.0, amp))
            elif ev.name == "set_twist":
                action = np.asarray(ev.value, dtype=np.float64)
            else:
                raise ValueError(f"unknown scenario event {ev.name!r}")
            ei += 1

        try:
            plan, drive, monitor = plan_tick(model, buffer, drive, filt,
                                             action, monitor)
        except InsufficientHistory as exc:
            raise PlannerStall(str(exc))

        impulse_add = None
        decay = scenario.disturbances[0].decay_s if scenario.disturbances else 0.2
        for d in scenario.disturbances:
            if sim.tick == int(round(d.onset_s * f_c)) + start_tick:
                impulse_add = np.asarray(d.impulse, dtype=np.float64)
                decay = d.decay_s
        sched = scheduled_support(drive, model.drive_positive_pair or (0, 3))
        sim, measured = step_sim(sim, plan, action, geometry, sim_cfg, f_c,
                                 impulse_add=impulse_add, decay_s=decay,
                                 rng=rng, scheduled=sched)
        buffer.push(sim.tick, measured)

        track_err = float(np.max(np.abs(measured.q - plan.q[0])))
        max_track = max(max_track, track_err)

        elbo.append(plan.elbo_value)
        contacts_exec.append(measured.contact.copy())
        probs.append(plan.contact_probs[0].copy())
        resp.append(monitor.response_active)
        period_cmd.append(drive.period_ticks)
        stance_cmd.append(drive.stance_ticks)

        if onset_ticks and detection_tick is None:
            if sim.tick > onset_ticks[0] and plan.elbo_value > monitor.threshold:
                detection_tick = sim.tick
        if onset_ticks and sim.tick > onset_ticks[0]:
            if drive.half_cycles > prev_half:
                steps_after_onset += drive.half_cycles - prev_half
            if plan.elbo_value < monitor.threshold:
                calm_run += 1
                if recovery_tick is None and calm_run >= int(round(0.5 * f_c)):
                    recovery_tick = sim.tick
            else:
                calm_run = 0
                recovery_tick = None
        prev_half = drive.half_cycles

    latency = None
    if detection_tick is not None:
        latency = (detection_tick - onset_ticks[0]) / f_c
    recovery_steps = None
    if recovery_tick is not None:
        span = recovery_tick - onset_ticks[0] - int(round(0.5 * f_c))
        # swings completed between onset and the start of the calm window
        recovery_steps = _count_steps(period_cmd, stance_cmd, span)

    return RolloutReport(
        elbo=np.asarray(elbo),
        contacts_executed=np.asarray(contacts_exec),
        contact_probs=np.asarray(probs),
        response_active=np.asarray(resp),
        swing_period_cmd=np.asarray(period_cmd),
        stance_cmd=np.asarray(stance_cmd),
        threshold=monitor.threshold,
        detection_latency_s=latency,
        recovery_steps=recovery_steps,
        max_tracking_error=max_track,
        termination=termination,
        f_c=f_c,
    )


def _count_steps(period_cmd, stance_cmd, span_ticks: int) -> int:
    """Approximate swing count within a tick span from commanded timing."""
    if span_ticks <= 0:
        return 0
    count = 0.0
    for i in range(min(span_ticks, len(period_cmd))):
        half = math.ceil(period_cmd[i] / 2) + stance_cmd[i]
        count += 1.0 / half
    return max(1, int(round(count)))


def calibrate_model_threshold(model: VaeModel, scenario: Scenario | None = None,
                              geometry=None, sim_cfg=None, seed: int = 0,
                              k_sigma: float = 6.0):
    """Runs a nominal rollout and returns (theta, mean, std)."""
    scenario = scenario or Scenario(duration_s=30.0, monitor_enabled=False)
    scenario = replace(scenario, monitor_enabled=False, disturbances=[],
                       threshold=None)
    report = run_rollout(model, scenario, geometry, sim_cfg, seed=seed)
    return calibrate_threshold(report.elbo, k_sigma)


def measure_swing_durations(contacts: np.ndarray) -> list[tuple[int, int, int]]:
    """(leg, start_tick, length) for each airborne interval in a schedule."""
    out = []
    T = contacts.shape[0]
    for leg in range(4):
        airborne = ~contacts[:, leg]
        start = None
        for k in range(T):
            if airborne[k] and start is None:
                start = k
            elif not airborne[k] and start is not None:
                out.append((leg, start, k - start))
                start = None
        if start is not None:
            out.append((leg, start, T - start))
    return out


def disturbance_envelope(model: VaeModel, magnitudes, with_response: bool,
                         trials: int = 20, seed: int = 0, theta: float = None,
                         geometry=None, sim_cfg=None) -> dict:
    """Recovery fraction per impulse magnitude; envelope at >= 80% recovery."""
    if theta is None:
        theta, _, _ = calibrate_model_threshold(model, geometry=geometry,
                                                sim_cfg=sim_cfg, seed=seed)
    fractions = []
    for mag in magnitudes:
        ok = 0
        for trial in range(trials):
            onset = 3.0 + (trial % 5) * 0.11
            scen = Scenario(
                duration_s=8.0,
                disturbances=[Disturbance(onset_s=onset, impulse=(mag, 0.0, 0.0))],
                monitor_enabled=with_response,
                threshold=theta,
            )
            report = run_rollout(model, scen, geometry, sim_cfg,
                                 seed=seed * 1000 + trial)
            if report.recovery_steps is not None:
                ok += 1
        fractions.append(ok / trials)
    envelope = 0.0
    for mag, frac in zip(magnitudes, fractions):
        if frac >= 0.8:
            envelope = mag
    return {"magnitudes": list(magnitudes), "fractions": fractions,
            "envelope": envelope, "threshold": theta}
