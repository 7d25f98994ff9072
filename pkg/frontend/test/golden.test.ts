/**
 * Replays a session recorded from the live service (raw wire strings)
 * through the full decode -> state -> render path and snapshots the
 * resulting timeline and strip chart. Any change to the protocol,
 * buffers, or renderers that alters what an operator would see shows
 * up as a snapshot diff.
 */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";
import { describe, expect, it } from "vitest";
import { decodeServerMessage } from "../src/protocol.js";
import { renderContactTimeline, renderElboStrip } from "../src/render.js";
import { ConsoleState } from "../src/state.js";

const fixturePath = join(
  dirname(fileURLToPath(import.meta.url)),
  "fixtures",
  "golden-session.json",
);
const golden: { messages: string[] } = JSON.parse(
  readFileSync(fixturePath, "utf8"),
);

function replay(): ConsoleState {
  const state = new ConsoleState();
  state.markConnected();
  let nowMs = 0;
  for (const text of golden.messages) {
    nowMs += 50; // 20 Hz telemetry
    state.applyMessage(decodeServerMessage(text), nowMs);
  }
  return state;
}

describe("golden session replay", () => {
  it("every recorded message decodes", () => {
    expect(golden.messages.length).toBeGreaterThan(50);
    for (const text of golden.messages) {
      expect(() => decodeServerMessage(text)).not.toThrow();
    }
  });

  it("replay reaches the expected end state", () => {
    const state = replay();
    expect(state.latest).not.toBeNull();
    expect(state.latest?.time_s).toBeCloseTo(3.0, 6);
    // the recorded operator error surfaced without breaking the stream
    expect(state.lastError).toContain("unknown command");
    // the recorded impulse triggered the cadence response
    const sawResponse = state.elbo
      .values()
      .some((s) => s.value.responseActive);
    expect(sawResponse).toBe(true);
    expect(state.banner(state.lastFrameAtMs ?? 0)).toBeNull();
  });

  it("renders an identical contact timeline", () => {
    const state = replay();
    expect(renderContactTimeline(state.contacts.values())).toMatchSnapshot();
  });

  it("renders an identical strip chart", () => {
    const state = replay();
    expect(renderElboStrip(state.elbo.values())).toMatchSnapshot();
  });

  it("two replays render byte-identical markup", () => {
    const a = replay();
    const b = replay();
    expect(renderContactTimeline(a.contacts.values())).toBe(
      renderContactTimeline(b.contacts.values()),
    );
    expect(renderElboStrip(a.elbo.values())).toBe(
      renderElboStrip(b.elbo.values()),
    );
  });
});
