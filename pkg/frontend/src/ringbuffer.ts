/** Time-windowed sample buffers backing the timeline and strip chart. */

export interface TimedSample<T> {
  timeS: number;
  value: T;
}

export const ELBO_WINDOW_S = 10;
export const CONTACT_WINDOW_S = 5;

/**
 * Append-only buffer that keeps samples within a trailing time window
 * of the newest sample. Out-of-order samples (a session reset moves
 * time backwards) clear the buffer so stale history never renders.
 */
export class TimeWindowBuffer<T> {
  private samples: TimedSample<T>[] = [];

  constructor(readonly windowS: number) {
    if (!(windowS > 0)) {
      throw new Error("window must be positive");
    }
  }

  push(timeS: number, value: T): void {
    const last = this.samples[this.samples.length - 1];
    if (last !== undefined && timeS < last.timeS) {
      this.samples = [];
    }
    this.samples.push({ timeS, value });
    const cutoff = timeS - this.windowS;
    let drop = 0;
    while (drop < this.samples.length && this.samples[drop].timeS < cutoff) {
      drop += 1;
    }
    if (drop > 0) {
      this.samples = this.samples.slice(drop);
    }
  }

  values(): readonly TimedSample<T>[] {
    return this.samples;
  }

  latest(): TimedSample<T> | undefined {
    return this.samples[this.samples.length - 1];
  }

  get length(): number {
    return this.samples.length;
  }

  clear(): void {
    this.samples = [];
  }
}
