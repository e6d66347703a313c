"""Seeded synthetic "speakers" for exercising the separation pipeline.

Two families:

* ``comb`` sources -- stationary harmonic combs on disjoint frequency grids,
  shaped by a per-source temporal envelope (syllable-like bursts for one,
  decaying plucks for the other).
* ``glide`` sources -- harmonic tones whose pitch sweeps upward (or
  downward) inside one shared pitch range. Single frames of the two
  glide families look alike; only their evolution over time tells them
  apart.
"""

import numpy as np

from .dsp import AudioSignal

SAMPLE_RATE = 16000


def _rng(seed):
    return np.random.default_rng(seed)


def _harmonic_tone(f0_track, sample_rate, n_harmonics, rolloff=1.0):
    """Sum of harmonics following an instantaneous pitch track (Hz per sample)."""
    phase = 2.0 * np.pi * np.cumsum(f0_track) / sample_rate
    out = np.zeros_like(f0_track)
    nyquist = sample_rate / 2.0
    for h in range(1, n_harmonics + 1):
        audible = (h * f0_track) < nyquist * 0.95
        out += audible * np.sin(h * phase) / h**rolloff
    return out


def comb_source(kind, duration=3.0, sample_rate=SAMPLE_RATE, seed=0):
    """Harmonic comb with a characteristic envelope.

    ``kind="a"``: 200 Hz multiples, raised-cosine bursts.
    ``kind="b"``: odd multiples of 100 Hz (never on the 200 Hz grid),
    exponentially decaying plucks.
    """
    rng = _rng(seed)
    n = int(round(duration * sample_rate))
    t = np.arange(n) / sample_rate
    if kind == "a":
        freqs = 200.0 * np.arange(1, 16)
    elif kind == "b":
        freqs = 100.0 * (2 * np.arange(15) + 3)
    else:
        raise ValueError(f"unknown comb kind {kind!r}")
    amps = 1.0 / np.arange(1, freqs.size + 1) * rng.uniform(0.7, 1.3, freqs.size)
    phases = rng.uniform(0, 2 * np.pi, freqs.size)
    carrier = np.sum(amps[:, None] * np.sin(2 * np.pi * freqs[:, None] * t[None, :] + phases[:, None]), axis=0)

    envelope = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.1) * sample_rate)
    while pos < n:
        if kind == "a":
            length = int(rng.uniform(0.12, 0.25) * sample_rate)
            seg = np.sin(np.pi * np.arange(length) / length) ** 2
            gap = int(rng.uniform(0.05, 0.15) * sample_rate)
        else:
            length = int(rng.uniform(0.2, 0.35) * sample_rate)
            seg = np.exp(-np.arange(length) / (0.06 * sample_rate))
            gap = int(rng.uniform(0.0, 0.08) * sample_rate)
        end = min(n, pos + length)
        envelope[pos:end] += seg[: end - pos]
        pos = end + gap
    x = carrier * envelope
    return AudioSignal(0.5 * x / np.max(np.abs(x)), sample_rate)


def glide_source(direction, duration=1.5, sample_rate=SAMPLE_RATE, seed=0, f_low=150.0, f_high=400.0):
    """Train of harmonic glides sweeping ``"up"`` or ``"down"`` through one pitch range."""
    if direction not in ("up", "down"):
        raise ValueError(f"direction must be 'up' or 'down', got {direction!r}")
    rng = _rng(seed)
    n = int(round(duration * sample_rate))
    f0 = np.full(n, f_low)
    env = np.zeros(n)
    pos = int(rng.uniform(0.0, 0.05) * sample_rate)
    while pos < n:
        length = int(rng.uniform(0.15, 0.3) * sample_rate)
        end = min(n, pos + length)
        ramp = np.linspace(0.0, 1.0, length)[: end - pos]
        if direction == "down":
            ramp = 1.0 - ramp
        f0[pos:end] = f_low * (f_high / f_low) ** ramp
        env[pos:end] = np.sin(np.pi * np.arange(end - pos) / length) ** 0.5
        pos = end + int(rng.uniform(0.02, 0.08) * sample_rate)
    x = _harmonic_tone(f0, sample_rate, n_harmonics=12) * env
    return AudioSignal(0.5 * x / np.max(np.abs(x)), sample_rate)


def speaker_utterances(family, speaker, count, duration, seed, sample_rate=SAMPLE_RATE):
    """``count`` utterances of one synthetic speaker.

    ``family`` is ``"comb"`` (speaker ``"a"``/``"b"``) or ``"glide"``
    (speaker ``"up"``/``"down"``).
    """
    seeds = np.random.SeedSequence(seed).spawn(count)
    if family == "comb":
        return [comb_source(speaker, duration, sample_rate, s) for s in seeds]
    if family == "glide":
        return [glide_source(speaker, duration, sample_rate, s) for s in seeds]
    raise ValueError(f"unknown family {family!r}")
