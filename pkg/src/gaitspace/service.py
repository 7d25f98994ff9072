"""Live session host: planner + sim at the control rate, telemetry out,
operator commands in.

One control loop owns all planner/sim state; commands arrive through a
mailbox and take effect on the next tick. Telemetry is decimated for the
wire and pushed through bounded per-client queues, so a slow client
drops frames instead of stalling the loop. Wire messages are JSON text
with a `type` tag and `v: 1`.
"""

from __future__ import annotations

import json
import math
import queue
import threading
import time
from dataclasses import dataclass, replace

import numpy as np

from .config import RunConfig
from .drive import design_butterworth, scheduled_support
from .errors import GaitspaceError, MalformedMessage
from .oracle import QuadrupedGeometry
from .planner import ElboMonitor
from .sim import Scenario, SimState, _warmup, calibrate_model_threshold, step_sim
from .vae import VaeModel
from .ws import WsServer

PROTOCOL_VERSION = 1


@dataclass
class TelemetryFrame:
    tick: int
    time_s: float
    amplitude: float
    swing_period_s: float
    stance_duration_s: float
    phase: float
    twist: list
    contact_probs: list          # J x 4
    contacts: list               # 4 booleans, executed
    elbo: float
    threshold: float | None
    response_active: bool
    base: list                   # x, y, yaw
    q: list                      # 12 joint positions
    foot_heights: list           # 4


def encode_telemetry(frame: TelemetryFrame) -> str:
    return json.dumps({
        "type": "telemetry",
        "v": PROTOCOL_VERSION,
        "tick": frame.tick,
        "time_s": frame.time_s,
        "drive": {
            "amplitude": frame.amplitude,
            "swing_period_s": frame.swing_period_s,
            "stance_duration_s": frame.stance_duration_s,
            "phase": frame.phase,
        },
        "twist": frame.twist,
        "contact_probs": frame.contact_probs,
        "contacts": frame.contacts,
        "elbo": frame.elbo,
        "threshold": frame.threshold,
        "response_active": frame.response_active,
        "base": frame.base,
        "q": frame.q,
        "foot_heights": frame.foot_heights,
    })


def encode_fault(message: str) -> str:
    return json.dumps({"type": "fault", "v": PROTOCOL_VERSION,
                       "message": message})


def encode_error(message: str) -> str:
    return json.dumps({"type": "error", "v": PROTOCOL_VERSION,
                       "message": message})


# Command name -> required numeric fields (None = special-cased).
_COMMANDS = {
    "set_amplitude": ("value",),
    "set_swing_period": ("value",),
    "set_stance_duration": ("value",),
    "set_twist": ("vx", "vy", "wz"),
    "inject_impulse": None,
    "set_auto_response": None,
    "reset": (),
}


def decode_command(text: str) -> dict:
    """Validated command dict from a wire message; MalformedMessage on
    anything that does not parse. Unknown extra fields are dropped."""
    try:
        doc = json.loads(text)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise MalformedMessage(f"not valid JSON: {exc}")
    if not isinstance(doc, dict):
        raise MalformedMessage("message must be a JSON object")
    if doc.get("type") != "command":
        raise MalformedMessage(f"unsupported message type {doc.get('type')!r}")
    name = doc.get("name")
    if name not in _COMMANDS:
        raise MalformedMessage(f"unknown command {name!r}")
    out = {"name": name}
    fields = _COMMANDS[name]
    if name == "inject_impulse":
        vec = doc.get("vector")
        if (not isinstance(vec, (list, tuple)) or len(vec) != 3
                or not all(isinstance(v, (int, float)) for v in vec)):
            raise MalformedMessage("inject_impulse needs a 3-vector 'vector'")
        out["vector"] = [float(v) for v in vec]
        decay = doc.get("decay_s", 0.2)
        if not isinstance(decay, (int, float)) or decay <= 0:
            raise MalformedMessage("decay_s must be a positive number")
        out["decay_s"] = float(decay)
    elif name == "set_auto_response":
        value = doc.get("value")
        if not isinstance(value, bool):
            raise MalformedMessage("set_auto_response needs boolean 'value'")
        out["value"] = value
    else:
        for key in fields:
            value = doc.get(key)
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                raise MalformedMessage(f"{name} needs finite numeric {key!r}")
            out[key] = float(value)
    return out


class Session:
    """Planner/sim pair owned by the control loop; one tick per call."""

    def __init__(self, model: VaeModel, cfg: RunConfig, seed: int = 0,
                 threshold: float | None = None):
        if model.d_drive is None:
            raise ValueError("model has no identified drive dimension")
        self.model = model
        self.cfg = cfg
        self.geometry = QuadrupedGeometry()
        self.seed = seed
        self.threshold = threshold
        self.rng = np.random.default_rng(seed)
        self.reset()

    def reset(self):
        from .planner import plan_tick  # local to keep import cycle shallow

        self._plan_tick = plan_tick
        scenario = Scenario(gait=self.cfg.gait, monitor_enabled=False)
        self.buffer, self.sim, self.drive = _warmup(
            self.model, scenario, self.geometry, self.cfg.sim
        )
        mcfg = self.model.config
        self.filt = design_butterworth(10.0, mcfg.f_c, channels=mcfg.latent_dim)
        theta = self.threshold if self.threshold is not None else math.inf
        self.monitor = ElboMonitor(
            threshold=theta,
            t_nominal_ticks=self.drive.period_ticks,
            t_response_ticks=max(2, self.drive.period_ticks // 2),
            response_duration_ticks=int(round(1.5 * mcfg.f_c)),
            enabled=math.isfinite(theta),
        )
        self.action = np.zeros(3)
        self.pending_impulse = None
        self.impulse_decay = 0.2
        self.tick_count = 0

    def apply_command(self, cmd: dict):
        name = cmd["name"]
        f_c = self.model.config.f_c
        if name == "set_amplitude":
            scale = cmd["value"] / self.cfg.sim.train_step_height
            amp = max(0.0, self.model.drive_amplitude * scale)
            self.drive = replace(self.drive, amplitude=amp)
        elif name == "set_swing_period":
            period = max(2, int(round(2.0 * cmd["value"] * f_c)))
            self.drive = replace(self.drive, period_ticks=period)
            self.monitor = replace(self.monitor, t_nominal_ticks=period,
                                   t_response_ticks=max(2, period // 2))
        elif name == "set_stance_duration":
            stance = max(0, int(round(cmd["value"] * f_c)))
            self.drive = replace(self.drive, stance_ticks=stance)
        elif name == "set_twist":
            self.action = np.array([cmd["vx"], cmd["vy"], cmd["wz"]])
        elif name == "inject_impulse":
            self.pending_impulse = np.asarray(cmd["vector"], dtype=np.float64)
            self.impulse_decay = cmd["decay_s"]
        elif name == "set_auto_response":
            enabled = cmd["value"] and math.isfinite(self.monitor.threshold)
            self.monitor = replace(self.monitor, enabled=enabled)
        elif name == "reset":
            self.reset()

    def step(self) -> TelemetryFrame:
        plan, self.drive, self.monitor = self._plan_tick(
            self.model, self.buffer, self.drive, self.filt, self.action,
            self.monitor,
        )
        sched = scheduled_support(self.drive,
                                  self.model.drive_positive_pair or (0, 3))
        impulse = self.pending_impulse
        self.pending_impulse = None
        self.sim, measured = step_sim(
            self.sim, plan, self.action, self.geometry, self.cfg.sim,
            self.model.config.f_c, impulse_add=impulse,
            decay_s=self.impulse_decay, rng=self.rng, scheduled=sched,
        )
        self.buffer.push(self.sim.tick, measured)
        self.tick_count += 1

        foot_heights = self.geometry.standing_height + measured.ee[:, 2]
        theta = self.monitor.threshold
        return TelemetryFrame(
            tick=self.sim.tick,
            time_s=self.tick_count / self.model.config.f_c,
            amplitude=float(self.drive.amplitude),
            swing_period_s=self.drive.period_ticks / (2.0 * self.model.config.f_c),
            stance_duration_s=self.drive.stance_ticks / self.model.config.f_c,
            phase=float(self.drive.phase),
            twist=[float(v) for v in self.action],
            contact_probs=plan.contact_probs.tolist(),
            contacts=[bool(c) for c in measured.contact],
            elbo=float(plan.elbo_value),
            threshold=theta if math.isfinite(theta) else None,
            response_active=bool(self.monitor.response_active),
            base=[float(self.sim.base_xy[0]), float(self.sim.base_xy[1]),
                  float(self.sim.yaw)],
            q=[float(v) for v in measured.q],
            foot_heights=[float(h) for h in foot_heights],
        )


class _ClientWriter:
    """Bounded queue + writer thread; full queue drops the frame."""

    def __init__(self, client, depth: int = 16):
        self.client = client
        self.queue: queue.Queue = queue.Queue(maxsize=depth)
        self.thread = threading.Thread(target=self._run, daemon=True)
        self.thread.start()

    def offer(self, message: str):
        try:
            self.queue.put_nowait(message)
        except queue.Full:
            pass

    def _run(self):
        while True:
            message = self.queue.get()
            if message is None:
                return
            try:
                self.client.send_text(message)
            except OSError:
                return

    def stop(self):
        try:
            self.queue.put_nowait(None)
        except queue.Full:
            pass


class Service:
    """Socket server plus the deadline-scheduled control loop."""

    def __init__(self, model: VaeModel, cfg: RunConfig, port: int | None = None,
                 seed: int = 0, threshold: float | None = None):
        if threshold is None:
            threshold, _, _ = calibrate_model_threshold(
                model, sim_cfg=cfg.sim, seed=seed
            )
        self.session = Session(model, cfg, seed=seed, threshold=threshold)
        self.cfg = cfg
        self.mailbox: queue.Queue = queue.Queue()
        self.writers: dict = {}
        self._writers_lock = threading.Lock()
        self.server = WsServer(
            cfg.service.host,
            cfg.service.port if port is None else port,
            on_message=self._on_message,
            on_connect=self._on_connect,
            on_disconnect=self._on_disconnect,
        )
        self.port = self.server.port
        self._stop = threading.Event()
        self.fault: str | None = None
        self.ticks_run = 0
        self._loop_thread: threading.Thread | None = None

    def _on_connect(self, client):
        with self._writers_lock:
            self.writers[client] = _ClientWriter(client)

    def _on_disconnect(self, client):
        with self._writers_lock:
            writer = self.writers.pop(client, None)
        if writer:
            writer.stop()

    def _on_message(self, client, text):
        try:
            cmd = decode_command(text)
        except MalformedMessage as exc:
            try:
                client.send_text(encode_error(str(exc)))
            except OSError:
                pass
            return
        self.mailbox.put(cmd)

    def _broadcast(self, message: str):
        with self._writers_lock:
            writers = list(self.writers.values())
        for writer in writers:
            writer.offer(message)

    def start(self, duration_s: float | None = None):
        self.server.start()
        self._loop_thread = threading.Thread(
            target=self._control_loop, args=(duration_s,), daemon=True
        )
        self._loop_thread.start()

    def stop(self):
        self._stop.set()
        if self._loop_thread:
            self._loop_thread.join(timeout=5.0)
        self.server.stop()

    def join(self):
        if self._loop_thread:
            self._loop_thread.join()

    def _control_loop(self, duration_s: float | None):
        f_c = self.session.model.config.f_c
        dt = 1.0 / f_c
        decimate = max(1, int(round(f_c / self.cfg.service.telemetry_hz)))
        max_ticks = None if duration_s is None else int(round(duration_s * f_c))
        deadline = time.monotonic()
        while not self._stop.is_set():
            if max_ticks is not None and self.ticks_run >= max_ticks:
                break
            while True:
                try:
                    self.session.apply_command(self.mailbox.get_nowait())
                except queue.Empty:
                    break
            try:
                frame = self.session.step()
            except GaitspaceError as exc:
                self.fault = f"{type(exc).__name__}: {exc}"
                self._broadcast(encode_fault(self.fault))
                break
            self.ticks_run += 1
            if self.ticks_run % decimate == 0:
                self._broadcast(encode_telemetry(frame))
            deadline += dt
            now = time.monotonic()
            if deadline > now:
                time.sleep(deadline - now)
            else:
                # behind schedule: run the next tick immediately but do
                # not accumulate unbounded debt
                deadline = max(deadline, now - 0.25)


def serve(model: VaeModel, cfg: RunConfig, port: int | None = None,
          seed: int = 0, duration_s: float | None = None,
          threshold: float | None = None):
    """Blocking entry point used by the CLI."""
    service = Service(model, cfg, port=port, seed=seed, threshold=threshold)
    print(f"serving on {cfg.service.host}:{service.port} "
          f"(threshold {service.session.threshold:.3f})")
    service.start(duration_s=duration_s)
    try:
        service.join()
    finally:
        service.stop()
    if service.fault:
        raise GaitspaceError(service.fault)
