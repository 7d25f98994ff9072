/**
 * Console state: derived only from received frames plus local control
 * positions. Rendering reads this object; nothing else mutates it.
 */

import type { OperatorCommand, ServerMessage, TelemetryFrame } from "./protocol.js";
import {
  CONTACT_WINDOW_S,
  ELBO_WINDOW_S,
  TimeWindowBuffer,
} from "./ringbuffer.js";

export type ConnectionStatus = "connecting" | "connected" | "disconnected";

export interface ElboSample {
  elbo: number;
  threshold: number | null;
  responseActive: boolean;
}

/** A frame gap longer than this shows the stale-data banner. */
export const STALE_AFTER_MS = 1000;

export class ConsoleState {
  status: ConnectionStatus = "connecting";
  latest: TelemetryFrame | null = null;
  lastFrameAtMs: number | null = null;
  fault: string | null = null;
  lastError: string | null = null;
  pendingEcho: OperatorCommand | null = null;
  readonly elbo = new TimeWindowBuffer<ElboSample>(ELBO_WINDOW_S);
  readonly contacts = new TimeWindowBuffer<boolean[]>(CONTACT_WINDOW_S);

  markConnected(): void {
    this.status = "connected";
    this.fault = null;
    this.lastError = null;
  }

  markDisconnected(): void {
    this.status = "disconnected";
    this.pendingEcho = null;
  }

  applyMessage(msg: ServerMessage, nowMs: number): void {
    if (msg.type === "error") {
      this.lastError = msg.message;
      this.pendingEcho = null;
      return;
    }
    if (msg.type === "fault") {
      this.fault = msg.message;
      return;
    }
    this.latest = msg;
    this.lastFrameAtMs = nowMs;
    this.elbo.push(msg.time_s, {
      elbo: msg.elbo,
      threshold: msg.threshold,
      responseActive: msg.response_active,
    });
    this.contacts.push(msg.time_s, [...msg.contacts]);
    this.pendingEcho = null;
  }

  /** No command may be emitted while disconnected or faulted. */
  canSend(): boolean {
    return this.status === "connected" && this.fault === null;
  }

  isStale(nowMs: number): boolean {
    return (
      this.lastFrameAtMs !== null &&
      nowMs - this.lastFrameAtMs > STALE_AFTER_MS
    );
  }

  /** Banner text, or null when the view is live. */
  banner(nowMs: number): string | null {
    if (this.fault !== null) {
      return `planner fault: ${this.fault}`;
    }
    if (this.status === "disconnected") {
      return "disconnected — data is stale";
    }
    if (this.status === "connecting") {
      return "connecting…";
    }
    if (this.isStale(nowMs)) {
      return "no telemetry — data is stale";
    }
    return null;
  }
}
