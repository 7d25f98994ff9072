import { describe, expect, it } from "vitest";
import { TimeWindowBuffer } from "../src/ringbuffer.js";

describe("TimeWindowBuffer", () => {
  it("keeps only samples inside the trailing window", () => {
    const buf = new TimeWindowBuffer<number>(5);
    for (let t = 0; t <= 12; t++) buf.push(t, t * 10);
    const times = buf.values().map((s) => s.timeS);
    expect(times).toEqual([7, 8, 9, 10, 11, 12]);
    expect(buf.latest()?.value).toBe(120);
  });

  it("keeps everything while the window is not yet full", () => {
    const buf = new TimeWindowBuffer<string>(10);
    buf.push(0.0, "a");
    buf.push(0.5, "b");
    expect(buf.length).toBe(2);
  });

  it("clears on time moving backwards (session reset)", () => {
    const buf = new TimeWindowBuffer<number>(5);
    buf.push(8, 1);
    buf.push(9, 2);
    buf.push(0.1, 3);
    expect(buf.values().map((s) => s.timeS)).toEqual([0.1]);
  });

  it("rejects a non-positive window", () => {
    expect(() => new TimeWindowBuffer(0)).toThrow();
  });

  it("clear empties the buffer", () => {
    const buf = new TimeWindowBuffer<number>(5);
    buf.push(1, 1);
    buf.clear();
    expect(buf.length).toBe(0);
    expect(buf.latest()).toBeUndefined();
  });
});
