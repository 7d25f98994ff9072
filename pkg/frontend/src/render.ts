/**
 * Pure renderers: SVG strings computed only from the ring buffers.
 *
 * No DOM access and no randomness, so a replayed session produces
 * byte-identical markup (snapshot-testable).
 */

import type { TimedSample } from "./ringbuffer.js";
import type { ElboSample } from "./state.js";

export const LEG_NAMES = ["LF", "RF", "LH", "RH"] as const;

export interface TimelineOptions {
  widthPx?: number;
  heightPx?: number;
  windowS?: number;
}

export interface StripChartOptions {
  widthPx?: number;
  heightPx?: number;
  windowS?: number;
}

function fmt(x: number): string {
  // fixed precision keeps markup stable across floating-point noise
  return (Math.round(x * 100) / 100).toFixed(2);
}

interface Run {
  startS: number;
  endS: number;
}

/** Merges consecutive true samples into [start, end) time runs. */
export function contactRuns(
  samples: readonly TimedSample<boolean[]>[],
  leg: number,
): Run[];
export function contactRuns(
  samples: readonly TimedSample<boolean[]>[],
  leg: "all",
): Run[];
export function contactRuns(
  samples: readonly TimedSample<boolean[]>[],
  leg: number | "all",
): Run[] {
  const runs: Run[] = [];
  let start: number | null = null;
  for (let i = 0; i < samples.length; i++) {
    const v = samples[i].value;
    const on = leg === "all" ? v.every(Boolean) : v[leg];
    const t = samples[i].timeS;
    const next = i + 1 < samples.length
      ? samples[i + 1].timeS
      : t + (i > 0 ? t - samples[i - 1].timeS : 0);
    if (on && start === null) {
      start = t;
    }
    if (!on && start !== null) {
      runs.push({ startS: start, endS: t });
      start = null;
    }
    if (on && i === samples.length - 1 && start !== null) {
      runs.push({ startS: start, endS: next });
    }
  }
  return runs;
}

/**
 * Per-foot contact bands over the trailing window; full-stance spans
 * are shaded across all rows behind the per-leg bands.
 */
export function renderContactTimeline(
  samples: readonly TimedSample<boolean[]>[],
  opts: TimelineOptions = {},
): string {
  const width = opts.widthPx ?? 600;
  const height = opts.heightPx ?? 120;
  const windowS = opts.windowS ?? 5;
  const endS = samples.length > 0 ? samples[samples.length - 1].timeS : 0;
  const startS = endS - windowS;
  const xOf = (t: number) => ((t - startS) / windowS) * width;
  const rowH = height / 4;

  const parts: string[] = [
    `<svg class="timeline" viewBox="0 0 ${width} ${height}" ` +
      `xmlns="http://www.w3.org/2000/svg">`,
  ];
  for (const run of contactRuns(samples, "all")) {
    const x = Math.max(0, xOf(run.startS));
    const w = Math.min(width, xOf(run.endS)) - x;
    if (w <= 0) continue;
    parts.push(
      `<rect class="full-stance" x="${fmt(x)}" y="0" ` +
        `width="${fmt(w)}" height="${fmt(height)}"/>`,
    );
  }
  for (let leg = 0; leg < 4; leg++) {
    const y = leg * rowH + 2;
    parts.push(
      `<text class="leg-label" x="2" y="${fmt(y + rowH / 2)}">` +
        `${LEG_NAMES[leg]}</text>`,
    );
    for (const run of contactRuns(samples, leg)) {
      const x = Math.max(0, xOf(run.startS));
      const w = Math.min(width, xOf(run.endS)) - x;
      if (w <= 0) continue;
      parts.push(
        `<rect class="contact leg-${leg}" x="${fmt(x)}" y="${fmt(y)}" ` +
          `width="${fmt(w)}" height="${fmt(rowH - 4)}"/>`,
      );
    }
  }
  parts.push("</svg>");
  return parts.join("");
}

/**
 * ELBO trace with the calibrated threshold as a dashed line and
 * response-active spans shaded behind the curve.
 */
export function renderElboStrip(
  samples: readonly TimedSample<ElboSample>[],
  opts: StripChartOptions = {},
): string {
  const width = opts.widthPx ?? 600;
  const height = opts.heightPx ?? 100;
  const windowS = opts.windowS ?? 10;
  const endS = samples.length > 0 ? samples[samples.length - 1].timeS : 0;
  const startS = endS - windowS;
  const xOf = (t: number) => ((t - startS) / windowS) * width;

  let top = 1e-9;
  for (const s of samples) {
    top = Math.max(top, s.value.elbo);
    if (s.value.threshold !== null) {
      top = Math.max(top, 1.2 * s.value.threshold);
    }
  }
  const yOf = (v: number) => height - (v / top) * (height - 4) - 2;

  const parts: string[] = [
    `<svg class="elbo-strip" viewBox="0 0 ${width} ${height}" ` +
      `xmlns="http://www.w3.org/2000/svg">`,
  ];

  let respStart: number | null = null;
  for (let i = 0; i < samples.length; i++) {
    const active = samples[i].value.responseActive;
    const t = samples[i].timeS;
    if (active && respStart === null) respStart = t;
    const closes = respStart !== null &&
      (!active || i === samples.length - 1);
    if (closes && respStart !== null) {
      const endT = active ? t : samples[i].timeS;
      const x = Math.max(0, xOf(respStart));
      const w = Math.min(width, xOf(endT)) - x;
      if (w > 0) {
        parts.push(
          `<rect class="response-active" x="${fmt(x)}" y="0" ` +
            `width="${fmt(w)}" height="${fmt(height)}"/>`,
        );
      }
      respStart = null;
    }
  }

  const latestThreshold = samples.length > 0
    ? samples[samples.length - 1].value.threshold
    : null;
  if (latestThreshold !== null) {
    const y = fmt(yOf(latestThreshold));
    parts.push(
      `<line class="threshold" x1="0" y1="${y}" x2="${width}" y2="${y}" ` +
        `stroke-dasharray="4 3"/>`,
    );
  }

  if (samples.length > 0) {
    const points = samples
      .map((s) => `${fmt(xOf(s.timeS))},${fmt(yOf(s.value.elbo))}`)
      .join(" ");
    parts.push(`<polyline class="elbo" fill="none" points="${points}"/>`);
  }
  parts.push("</svg>");
  return parts.join("");
}
