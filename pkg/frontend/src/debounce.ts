/**
 * Per-control command rate limiter.
 *
 * A slider drag fires dozens of input events per second; the wire
 * contract allows at most `maxPerSecond` commands. The limiter sends
 * immediately when the channel is idle and otherwise keeps only the
 * newest value, releasing it once the minimum interval has elapsed
 * (trailing edge), so the final slider position always reaches the
 * server. Polling with `due()` keeps the class free of timers and
 * deterministic under test.
 */

import type { OperatorCommand } from "./protocol.js";

export class CommandRateLimiter {
  private lastSentMs = Number.NEGATIVE_INFINITY;
  private pending: OperatorCommand | null = null;

  constructor(readonly maxPerSecond: number = 10) {
    if (!(maxPerSecond > 0)) {
      throw new Error("maxPerSecond must be positive");
    }
  }

  get minIntervalMs(): number {
    return 1000 / this.maxPerSecond;
  }

  /** Returns the command to send now, or null if it was queued. */
  offer(cmd: OperatorCommand, nowMs: number): OperatorCommand | null {
    if (nowMs - this.lastSentMs >= this.minIntervalMs) {
      this.lastSentMs = nowMs;
      this.pending = null;
      return cmd;
    }
    this.pending = cmd;
    return null;
  }

  /** Returns a queued command once the interval has elapsed. */
  due(nowMs: number): OperatorCommand | null {
    if (this.pending !== null && nowMs - this.lastSentMs >= this.minIntervalMs) {
      const cmd = this.pending;
      this.pending = null;
      this.lastSentMs = nowMs;
      return cmd;
    }
    return null;
  }

  /** Drops any queued command (used on disconnect). */
  cancel(): void {
    this.pending = null;
  }
}
