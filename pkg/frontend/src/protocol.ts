/**
 * Wire protocol shared with the telemetry service.
 *
 * Messages are JSON text with a `type` tag and `v: 1`. The console
 * validates every inbound message; anything that does not conform
 * raises ProtocolError so transport bugs surface immediately instead
 * of rendering garbage.
 */

export const PROTOCOL_VERSION = 1;

export interface DriveTelemetry {
  amplitude: number;
  swing_period_s: number;
  stance_duration_s: number;
  phase: number;
}

export interface TelemetryFrame {
  type: "telemetry";
  v: typeof PROTOCOL_VERSION;
  tick: number;
  time_s: number;
  drive: DriveTelemetry;
  twist: [number, number, number];
  contact_probs: number[][];
  contacts: [boolean, boolean, boolean, boolean];
  elbo: number;
  threshold: number | null;
  response_active: boolean;
  base: [number, number, number];
  q: number[];
  foot_heights: number[];
}

export interface ErrorMessage {
  type: "error";
  v: typeof PROTOCOL_VERSION;
  message: string;
}

export interface FaultMessage {
  type: "fault";
  v: typeof PROTOCOL_VERSION;
  message: string;
}

export type ServerMessage = TelemetryFrame | ErrorMessage | FaultMessage;

export class ProtocolError extends Error {}

function isFiniteNumber(x: unknown): x is number {
  return typeof x === "number" && Number.isFinite(x);
}

function requireNumber(doc: Record<string, unknown>, key: string): number {
  const value = doc[key];
  if (!isFiniteNumber(value)) {
    throw new ProtocolError(`field '${key}' must be a finite number`);
  }
  return value;
}

function requireNumberArray(value: unknown, length: number, what: string): number[] {
  if (!Array.isArray(value) || value.length !== length ||
      !value.every(isFiniteNumber)) {
    throw new ProtocolError(`${what} must be ${length} finite numbers`);
  }
  return value as number[];
}

export function decodeServerMessage(text: string): ServerMessage {
  let doc: unknown;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new ProtocolError("not valid JSON");
  }
  if (typeof doc !== "object" || doc === null || Array.isArray(doc)) {
    throw new ProtocolError("message must be a JSON object");
  }
  const obj = doc as Record<string, unknown>;
  if (obj.v !== PROTOCOL_VERSION) {
    throw new ProtocolError(`unsupported protocol version ${String(obj.v)}`);
  }
  const type = obj.type;
  if (type === "error" || type === "fault") {
    if (typeof obj.message !== "string") {
      throw new ProtocolError(`${type} message must carry a string 'message'`);
    }
    return { type, v: PROTOCOL_VERSION, message: obj.message };
  }
  if (type !== "telemetry") {
    throw new ProtocolError(`unknown message type ${String(type)}`);
  }

  const drive = obj.drive;
  if (typeof drive !== "object" || drive === null) {
    throw new ProtocolError("telemetry must carry a 'drive' object");
  }
  const d = drive as Record<string, unknown>;
  const contacts = obj.contacts;
  if (!Array.isArray(contacts) || contacts.length !== 4 ||
      !contacts.every((c) => typeof c === "boolean")) {
    throw new ProtocolError("contacts must be 4 booleans");
  }
  const probs = obj.contact_probs;
  if (!Array.isArray(probs) ||
      !probs.every((row) => Array.isArray(row) && row.length === 4 &&
        row.every(isFiniteNumber))) {
    throw new ProtocolError("contact_probs must be rows of 4 numbers");
  }
  const threshold = obj.threshold;
  if (threshold !== null && !isFiniteNumber(threshold)) {
    throw new ProtocolError("threshold must be null or a finite number");
  }
  if (typeof obj.response_active !== "boolean") {
    throw new ProtocolError("response_active must be a boolean");
  }
  return {
    type: "telemetry",
    v: PROTOCOL_VERSION,
    tick: requireNumber(obj, "tick"),
    time_s: requireNumber(obj, "time_s"),
    drive: {
      amplitude: requireNumber(d, "amplitude"),
      swing_period_s: requireNumber(d, "swing_period_s"),
      stance_duration_s: requireNumber(d, "stance_duration_s"),
      phase: requireNumber(d, "phase"),
    },
    twist: requireNumberArray(obj.twist, 3, "twist") as [number, number, number],
    contact_probs: probs as number[][],
    contacts: contacts as [boolean, boolean, boolean, boolean],
    elbo: requireNumber(obj, "elbo"),
    threshold: threshold as number | null,
    response_active: obj.response_active,
    base: requireNumberArray(obj.base, 3, "base") as [number, number, number],
    q: requireNumberArray(obj.q, 12, "q"),
    foot_heights: requireNumberArray(obj.foot_heights, 4, "foot_heights"),
  };
}

export type OperatorCommand =
  | { name: "set_amplitude" | "set_swing_period" | "set_stance_duration";
      value: number }
  | { name: "set_twist"; vx: number; vy: number; wz: number }
  | { name: "inject_impulse"; vector: [number, number, number];
      decay_s?: number }
  | { name: "set_auto_response"; value: boolean }
  | { name: "reset" };

export function encodeCommand(cmd: OperatorCommand): string {
  return JSON.stringify({ type: "command", v: PROTOCOL_VERSION, ...cmd });
}
