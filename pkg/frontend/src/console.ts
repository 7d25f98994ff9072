/**
 * Browser entry point: wires the WebSocket, sliders, and render loop
 * around the pure state/render modules. All logic that matters lives
 * in those modules; this file only connects them to the DOM.
 */

import { CommandRateLimiter } from "./debounce.js";
import {
  decodeServerMessage,
  encodeCommand,
  type OperatorCommand,
  ProtocolError,
} from "./protocol.js";
import { renderContactTimeline, renderElboStrip } from "./render.js";
import { ConsoleState } from "./state.js";

const RECONNECT_DELAY_MS = 1000;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (node === null) throw new Error(`missing element #${id}`);
  return node as T;
}

export function startConsole(url: string): void {
  const state = new ConsoleState();
  // one limiter per control so a twist drag cannot starve a gait slider
  const limiters = new Map<string, CommandRateLimiter>();
  let socket: WebSocket | null = null;

  const bannerEl = el<HTMLDivElement>("banner");
  const timelineEl = el<HTMLDivElement>("timeline");
  const stripEl = el<HTMLDivElement>("elbo-strip");
  const readoutEl = el<HTMLDivElement>("readout");

  function send(cmd: OperatorCommand): void {
    if (!state.canSend() || socket === null) return;
    socket.send(encodeCommand(cmd));
    state.pendingEcho = cmd;
  }

  function rateLimited(key: string, cmd: OperatorCommand): void {
    let limiter = limiters.get(key);
    if (limiter === undefined) {
      limiter = new CommandRateLimiter();
      limiters.set(key, limiter);
    }
    const now = performance.now();
    const ready = limiter.offer(cmd, now);
    if (ready !== null) send(ready);
  }

  function connect(): void {
    state.status = "connecting";
    socket = new WebSocket(url);
    socket.onopen = () => state.markConnected();
    socket.onmessage = (event) => {
      try {
        state.applyMessage(decodeServerMessage(String(event.data)),
                           performance.now());
      } catch (err) {
        if (err instanceof ProtocolError) {
          state.lastError = err.message;
        } else {
          throw err;
        }
      }
    };
    socket.onclose = () => {
      state.markDisconnected();
      for (const limiter of limiters.values()) limiter.cancel();
      socket = null;
      setTimeout(connect, RECONNECT_DELAY_MS);
    };
  }

  function bindSlider(id: string, make: (value: number) => OperatorCommand): void {
    const input = el<HTMLInputElement>(id);
    const label = el<HTMLSpanElement>(`${id}-value`);
    const update = () => {
      label.textContent = input.value;
      rateLimited(id, make(Number(input.value)));
    };
    input.addEventListener("input", update);
    label.textContent = input.value;
  }

  // sliders carry physical units: metres, seconds, m/s, rad/s
  bindSlider("step-height", (v) => ({ name: "set_amplitude", value: v }));
  bindSlider("swing-period", (v) => ({ name: "set_swing_period", value: v }));
  bindSlider("stance-duration",
             (v) => ({ name: "set_stance_duration", value: v }));
  const twist = () => ({
    name: "set_twist" as const,
    vx: Number(el<HTMLInputElement>("twist-vx").value),
    vy: Number(el<HTMLInputElement>("twist-vy").value),
    wz: Number(el<HTMLInputElement>("twist-wz").value),
  });
  for (const id of ["twist-vx", "twist-vy", "twist-wz"]) {
    bindSlider(id, twist);
  }

  el<HTMLButtonElement>("nudge").addEventListener("click", () => {
    send({ name: "inject_impulse", vector: [2.0, 0.0, 0.0] });
  });
  el<HTMLInputElement>("auto-response").addEventListener("change", (event) => {
    const checked = (event.target as HTMLInputElement).checked;
    send({ name: "set_auto_response", value: checked });
  });
  el<HTMLButtonElement>("reset").addEventListener("click", () => {
    send({ name: "reset" });
    state.elbo.clear();
    state.contacts.clear();
  });

  function frame(): void {
    const now = performance.now();
    for (const limiter of limiters.values()) {
      const cmd = limiter.due(now);
      if (cmd !== null) send(cmd);
    }

    const banner = state.banner(now);
    bannerEl.textContent = banner ?? "";
    bannerEl.hidden = banner === null;
    timelineEl.innerHTML = renderContactTimeline(state.contacts.values());
    stripEl.innerHTML = renderElboStrip(state.elbo.values());

    const f = state.latest;
    if (f !== null) {
      readoutEl.textContent =
        `t=${f.time_s.toFixed(2)} s  tick=${f.tick}  ` +
        `swing=${(1000 * f.drive.swing_period_s).toFixed(0)} ms  ` +
        `stance=${(1000 * f.drive.stance_duration_s).toFixed(0)} ms  ` +
        `elbo=${f.elbo.toFixed(3)}` +
        (f.response_active ? "  [response active]" : "");
    }
    requestAnimationFrame(frame);
  }

  connect();
  requestAnimationFrame(frame);
}
