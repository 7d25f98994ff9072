"""Closed-loop planning: state buffering, encode/overwrite/filter/decode,
ELBO monitoring, and the cadence-raising disturbance response."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .drive import BiquadFilter, DriveSignalState, advance_phase, apply_drive
from .errors import InsufficientHistory
from .vae import VaeModel, decode, encode, online_elbo, predict_contacts


class StateBuffer:
    """Ring buffer of measured robot states at contiguous control ticks."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self._states: list = []
        self._ticks: list = []

    def push(self, tick: int, state):
        if self._ticks and tick != self._ticks[-1] + 1:
            raise ValueError(
                f"non-contiguous tick {tick} after {self._ticks[-1]}"
            )
        self._states.append(state)
        self._ticks.append(tick)
        if len(self._states) > self.capacity:
            self._states.pop(0)
            self._ticks.pop(0)

    def __len__(self):
        return len(self._states)

    @property
    def newest_tick(self):
        return self._ticks[-1] if self._ticks else None

    def tail(self, n: int):
        return self._states[-n:]


def build_window(buffer: StateBuffer, model: VaeModel) -> np.ndarray:
    """Normalized flat encoder window from the newest buffered states.

    Selects states at stride r ending at the newest; zeroes contact
    forces on feet reporting no contact before normalizing.
    """
    cfg = model.config
    r = cfg.stride
    need = r * (cfg.window_len - 1) + 1
    if len(buffer) < need:
        raise InsufficientHistory(f"buffer has {len(buffer)}/{need} states")
    states = buffer.tail(need)[::r]
    rows = np.stack([s.as_vector() for s in states])
    contacts = np.stack([s.contact for s in states])
    lam = rows[:, 36:48].reshape(-1, 4, 3)
    lam[~contacts] = 0.0
    rows[:, 36:48] = lam.reshape(-1, 12)
    return model.normalize(rows).reshape(-1)


@dataclass(frozen=True)
class ElboMonitor:
    """Threshold monitor driving the cadence response."""

    threshold: float
    t_nominal_ticks: int
    t_response_ticks: int
    response_duration_ticks: int
    calib_mean: float = 0.0
    calib_std: float = 0.0
    enabled: bool = True
    response_active: bool = False
    response_remaining: int = 0


def elbo_monitor_update(monitor: ElboMonitor, elbo_value: float,
                        drive: DriveSignalState):
    """Applies the threshold test; halves cadence for the response window.

    A spike during an active response re-arms the full duration.
    """
    if monitor.enabled and elbo_value > monitor.threshold:
        return (
            replace(monitor, response_active=True,
                    response_remaining=monitor.response_duration_ticks),
            replace(drive, period_ticks=monitor.t_response_ticks),
        )
    if monitor.response_active:
        remaining = monitor.response_remaining - 1
        if remaining <= 0:
            return (
                replace(monitor, response_active=False, response_remaining=0),
                replace(drive, period_ticks=monitor.t_nominal_ticks),
            )
        return replace(monitor, response_remaining=remaining), drive
    return monitor, drive


def calibrate_threshold(elbo_trace, k_sigma: float = 6.0):
    """theta = mean + k_sigma * std of a nominal-operation ELBO trace."""
    trace = np.asarray(elbo_trace, dtype=np.float64)
    mean, std = float(trace.mean()), float(trace.std())
    return mean + k_sigma * std, mean, std


def extract_plan(positions: np.ndarray, f_c: float):
    """Velocities/accelerations by central differences (one-sided at ends)."""
    q = np.asarray(positions, dtype=np.float64)
    if q.shape[0] < 3:
        raise ValueError("need at least 3 predicted steps (M >= 2)")
    qd = np.empty_like(q)
    qd[1:-1] = (q[2:] - q[:-2]) * (f_c / 2.0)
    qd[0] = (q[1] - q[0]) * f_c
    qd[-1] = (q[-1] - q[-2]) * f_c
    qdd = np.empty_like(q)
    qdd[1:-1] = (qd[2:] - qd[:-2]) * (f_c / 2.0)
    qdd[0] = (qd[1] - qd[0]) * f_c
    qdd[-1] = (qd[-1] - qd[-2]) * f_c
    return qd, qdd


@dataclass
class PlanTick:
    tick: int
    prediction: np.ndarray       # (M+1, D) denormalized
    q: np.ndarray                # (M+1, 12)
    qd: np.ndarray
    qdd: np.ndarray
    base_twist: np.ndarray       # (M+1, 6)
    contact_probs: np.ndarray    # (J, 4)
    z: np.ndarray                # filtered latent
    elbo_value: float
    drive: DriveSignalState
    response_active: bool = False


def plan_tick(model: VaeModel, buffer: StateBuffer, drive: DriveSignalState,
              filt: BiquadFilter, action, monitor: ElboMonitor):
    """One control cycle of the closed loop.

    Order: encode (mean) -> ELBO for the monitor -> monitor update ->
    advance phase -> overwrite drive dim -> Butterworth -> decode ->
    contact prediction -> plan derivatives.
    Returns (PlanTick, drive, monitor); the filter mutates in place.
    """
    cfg = model.config
    window = build_window(buffer, model)
    latent = encode(model, window, mode="mean")

    action = np.asarray(action, dtype=np.float64)
    current = buffer.tail(1)[0]
    current_norm = model.normalize(current.as_vector())
    elbo_value = online_elbo(model, window, current_norm, action)

    monitor, drive = elbo_monitor_update(monitor, elbo_value, drive)
    drive = advance_phase(drive)
    z = apply_drive(latent.mean, drive, model.d_drive)
    z = filt.apply(z)

    prediction = decode(model, z, action)
    contact_probs = predict_contacts(model, z)
    q = prediction[:, 0:12]
    qd, qdd = extract_plan(q, cfg.f_c)
    tick = PlanTick(
        tick=buffer.newest_tick,
        prediction=prediction,
        q=q, qd=qd, qdd=qdd,
        base_twist=prediction[:, 48:54],
        contact_probs=contact_probs,
        z=z,
        elbo_value=elbo_value,
        drive=drive,
        response_active=monitor.response_active,
    )
    return tick, drive, monitor
