import { describe, expect, it } from "vitest";
import { CommandRateLimiter } from "../src/debounce.js";
import type { OperatorCommand } from "../src/protocol.js";

const cmd = (value: number): OperatorCommand => ({
  name: "set_amplitude",
  value,
});

describe("CommandRateLimiter", () => {
  it("sends immediately when idle", () => {
    const limiter = new CommandRateLimiter(10);
    expect(limiter.offer(cmd(1), 0)).toEqual(cmd(1));
  });

  it("never exceeds the rate during a fast drag", () => {
    const limiter = new CommandRateLimiter(10);
    const sent: number[] = [];
    // 60 Hz input events for one second, like a slider drag
    for (let i = 0; i < 60; i++) {
      const now = i * (1000 / 60);
      const ready = limiter.offer(cmd(i), now);
      if (ready !== null && ready.name === "set_amplitude") {
        sent.push(ready.value);
      }
      const due = limiter.due(now);
      if (due !== null && due.name === "set_amplitude") {
        sent.push(due.value);
      }
    }
    expect(sent.length).toBeLessThanOrEqual(10);
    expect(sent.length).toBeGreaterThanOrEqual(9);
  });

  it("releases the newest queued value on the trailing edge", () => {
    const limiter = new CommandRateLimiter(10);
    expect(limiter.offer(cmd(1), 0)).not.toBeNull();
    expect(limiter.offer(cmd(2), 10)).toBeNull();
    expect(limiter.offer(cmd(3), 20)).toBeNull();
    expect(limiter.due(50)).toBeNull();
    const released = limiter.due(100);
    expect(released).toEqual(cmd(3));
    expect(limiter.due(150)).toBeNull();
  });

  it("cancel drops the queued command", () => {
    const limiter = new CommandRateLimiter(10);
    limiter.offer(cmd(1), 0);
    limiter.offer(cmd(2), 10);
    limiter.cancel();
    expect(limiter.due(1000)).toBeNull();
  });

  it("rejects a non-positive rate", () => {
    expect(() => new CommandRateLimiter(0)).toThrow();
  });
});
