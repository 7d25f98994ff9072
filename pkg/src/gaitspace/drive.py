"""Latent drive signal and latent-trajectory smoothing.

The oscillator produces A*sin^3(phi) with integer-tick phase bookkeeping:
phi is represented as (half_cycles, substep) so the "phi mod pi == 0"
full-support condition is an exact integer test. The Butterworth biquad
smooths the full latent vector at the control rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import IndexOutOfRange, InvalidCutoff


@dataclass(frozen=True)
class DriveSignalState:
    """Oscillator state: amplitude A, period T (ticks), stance extension
    epsilon (ticks), phase phi, stance counter k_eps.

    phi = half_cycles*pi + substep*(2*pi/period_ticks); substep == 0 is
    exactly a multiple of pi. One swing lobe spans ceil(T/2) ticks, so a
    swing of `s` seconds at f_c corresponds to period_ticks = 2*s*f_c.
    """

    amplitude: float = 1.0
    period_ticks: int = 100
    stance_ticks: int = 8
    half_cycles: int = 0
    substep: int = 0
    hold_count: int = 0

    def __post_init__(self):
        if self.period_ticks < 2:
            raise ValueError("period_ticks must be >= 2")
        if self.amplitude < 0 or self.stance_ticks < 0:
            raise ValueError("amplitude and stance_ticks must be >= 0")

    @property
    def phase(self) -> float:
        return self.half_cycles * math.pi + self.substep * (
            2.0 * math.pi / self.period_ticks
        )

    @property
    def at_pi_multiple(self) -> bool:
        return self.substep == 0

    @classmethod
    def from_durations(cls, swing_s: float, stance_s: float, f_c: float,
                       amplitude: float = 1.0) -> "DriveSignalState":
        period = max(2, int(round(2.0 * swing_s * f_c)))
        stance = max(0, int(round(stance_s * f_c)))
        return cls(amplitude=amplitude, period_ticks=period, stance_ticks=stance)


def drive_value(state: DriveSignalState) -> float:
    return state.amplitude * math.sin(state.phase) ** 3


def advance_phase(state: DriveSignalState) -> DriveSignalState:
    """One control tick of the phase/stance-counter dynamics.

    At a multiple of pi with the counter below epsilon the phase holds and
    the counter increments; otherwise the phase advances by 2*pi/T,
    snapping exactly onto the next multiple of pi when it would cross it,
    and the counter resets.
    """
    if state.at_pi_multiple and state.hold_count < state.stance_ticks:
        return replace(state, hold_count=state.hold_count + 1)
    nxt = state.substep + 1
    if 2 * nxt >= state.period_ticks:  # crossing/reaching the next multiple of pi
        return replace(state, half_cycles=state.half_cycles + 1, substep=0,
                       hold_count=0)
    return replace(state, substep=nxt, hold_count=0)


def apply_drive(z: np.ndarray, state: DriveSignalState, d_drive: int) -> np.ndarray:
    """Overwrites latent dimension d_drive with the drive value."""
    z = np.asarray(z, dtype=np.float64)
    if not 0 <= d_drive < z.shape[-1]:
        raise IndexOutOfRange(f"d_drive {d_drive} outside latent size {z.shape[-1]}")
    out = z.copy()
    out[d_drive] = drive_value(state)
    return out


# Diagonal pairs by leg index (LF, RF, LH, RH).
PAIR_A = (0, 3)
PAIR_B = (1, 2)


def scheduled_support(state: DriveSignalState,
                      positive_pair=PAIR_A) -> np.ndarray:
    """Four contact booleans the oscillator commands this tick.

    Timing semantics live in the phase automaton, not in the signal
    magnitude: hold ticks (phase pinned at a multiple of pi) command full
    support, and inside a lobe the diagonal pair matching the lobe sign
    is airborne. A zero-amplitude oscillator lifts nothing, so it
    commands standing.
    """
    support = np.ones(4, dtype=bool)
    if state.amplitude <= 0.0:
        return support
    half = state.half_cycles
    if state.substep == 0:
        if state.hold_count > 0:
            return support
        # crossing tick: touchdown completes the lobe that just ended,
        # so each swing spans exactly ceil(period/2) ticks
        half -= 1
    if half % 2 == 0:
        pair = positive_pair
    else:
        pair = PAIR_B if tuple(positive_pair) == PAIR_A else PAIR_A
    support[list(pair)] = False
    return support


# ---------------------------------------------------------------------------
# Second-order Butterworth low-pass (bilinear transform), per-channel state


class BiquadFilter:
    """Direct-form-II-transposed biquad over `channels` parallel channels."""

    def __init__(self, b: tuple[float, float, float],
                 a: tuple[float, float], channels: int):
        self.b0, self.b1, self.b2 = b
        self.a1, self.a2 = a
        self.channels = channels
        self.reset()

    def reset(self):
        self.s1 = np.zeros(self.channels)
        self.s2 = np.zeros(self.channels)

    def apply(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        y = self.b0 * x + self.s1
        self.s1 = self.b1 * x - self.a1 * y + self.s2
        self.s2 = self.b2 * x - self.a2 * y
        return y

    def magnitude_at(self, freq_hz: float, sample_hz: float) -> float:
        w = 2.0 * math.pi * freq_hz / sample_hz
        z = complex(math.cos(w), math.sin(w))
        num = self.b0 + self.b1 / z + self.b2 / z**2
        den = 1.0 + self.a1 / z + self.a2 / z**2
        return abs(num / den)

    def poles_stable(self) -> bool:
        roots = np.roots([1.0, self.a1, self.a2])
        return bool(np.all(np.abs(roots) < 1.0))


def design_butterworth(cutoff_hz: float, sample_hz: float,
                       channels: int = 1) -> BiquadFilter:
    """Low-pass biquad, Q = 1/sqrt(2), unity DC gain."""
    if not 0.0 < cutoff_hz < sample_hz / 2.0:
        raise InvalidCutoff(
            f"cutoff {cutoff_hz} Hz must lie in (0, {sample_hz / 2.0}) Hz"
        )
    w0 = 2.0 * math.pi * cutoff_hz / sample_hz
    q = 1.0 / math.sqrt(2.0)
    alpha = math.sin(w0) / (2.0 * q)
    cosw = math.cos(w0)
    a0 = 1.0 + alpha
    b = ((1.0 - cosw) / 2.0 / a0, (1.0 - cosw) / a0, (1.0 - cosw) / 2.0 / a0)
    a = (-2.0 * cosw / a0, (1.0 - alpha) / a0)
    return BiquadFilter(b, a, channels)
