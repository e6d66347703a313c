"""Short-time Fourier analysis, resynthesis, and mask-based source recovery."""

from dataclasses import dataclass

import numpy as np

WINDOWS = ("hann", "rect")
# fraction of the peak summed squared window below which istft stops normalizing
NORM_FLOOR = 1e-3


@dataclass(frozen=True)
class AudioSignal:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("an audio signal needs a non-empty 1-D sample buffer")
        if not np.all(np.isfinite(samples)):
            raise ValueError("audio samples must be finite")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided STFT, bins x frames."""

    bins: np.ndarray
    frame_size: int
    hop: int
    window_id: str = "hann"
    sample_rate: int | None = None

    def __post_init__(self):
        bins = np.asarray(self.bins, dtype=np.complex128)
        _check_framing(bins.shape, self.frame_size, self.hop, self.window_id)
        if not np.all(np.isfinite(bins)):
            raise ValueError("spectrogram entries must be finite")
        object.__setattr__(self, "bins", bins)

    @property
    def shape(self):
        return self.bins.shape


@dataclass(frozen=True)
class MagnitudeSpectrogram:
    values: np.ndarray
    frame_size: int
    hop: int
    window_id: str = "hann"
    sample_rate: int | None = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        _check_framing(values.shape, self.frame_size, self.hop, self.window_id)
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValueError("magnitudes must be finite and non-negative")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape

    @classmethod
    def from_array(cls, values, hop=None):
        """Wrap a bare non-negative matrix (toy images, model outputs).

        The framing metadata is inferred from the row count as if it came
        from a one-sided transform.
        """
        values = np.asarray(values, dtype=np.float64)
        frame_size = 2 * (values.shape[0] - 1) if values.shape[0] > 1 else 2
        return cls(values, frame_size, hop or max(frame_size // 4, 1), "hann")

    def like(self, values):
        """Same framing, new values."""
        return MagnitudeSpectrogram(values, self.frame_size, self.hop, self.window_id, self.sample_rate)


@dataclass(frozen=True)
class PhaseMatrix:
    angles: np.ndarray


def _check_framing(shape, frame_size, hop, window_id):
    if len(shape) != 2:
        raise ValueError(f"spectrogram must be 2-D, got shape {shape}")
    if window_id not in WINDOWS:
        raise ValueError(f"unknown window {window_id!r}")
    if frame_size < 2 or frame_size % 2:
        raise ValueError(f"frame_size must be even and >= 2, got {frame_size}")
    if not 0 < hop <= frame_size:
        raise ValueError(f"hop must be in (0, frame_size], got {hop}")
    if shape[0] != frame_size // 2 + 1:
        raise ValueError(f"{shape[0]} bins inconsistent with frame_size {frame_size}")


def get_window(window_id, frame_size):
    """Periodic window of length ``frame_size``."""
    if window_id == "hann":
        n = np.arange(frame_size)
        return 0.5 - 0.5 * np.cos(2.0 * np.pi * n / frame_size)
    if window_id == "rect":
        return np.ones(frame_size)
    raise ValueError(f"unknown window {window_id!r}")


def num_frames(length, frame_size, hop):
    return 1 + (length - frame_size) // hop


def stft(signal, frame_size=1024, hop=256, window_id="hann"):
    """One-sided STFT with no padding; a trailing partial frame is dropped."""
    if frame_size < 2 or frame_size % 2:
        raise ValueError(f"frame_size must be even and >= 2, got {frame_size}")
    if not 0 < hop <= frame_size:
        raise ValueError(f"hop must be in (0, frame_size], got {hop}")
    x = signal.samples
    if x.size < frame_size:
        raise ValueError(f"signal too short: {x.size} samples < frame_size {frame_size}")
    n = num_frames(x.size, frame_size, hop)
    starts = np.arange(n) * hop
    frames = x[starts[:, None] + np.arange(frame_size)[None, :]]
    frames = frames * get_window(window_id, frame_size)
    bins = np.fft.rfft(frames, axis=1).T
    return ComplexSpectrogram(bins, frame_size, hop, window_id, signal.sample_rate)


def istft(spec, sample_rate=None):
    """Weighted overlap-add inverse of :func:`stft`.

    Each frame is windowed again and the sum is divided by the summed
    squared window, so unmodified spectrograms invert exactly wherever that
    sum exceeds ``NORM_FLOOR`` of its peak (everywhere but the first and
    last few dozen samples for a Hann window at 25% hop). Samples no frame
    covers come out as zero.
    """
    n_frames = spec.bins.shape[1]
    if n_frames == 0:
        raise ValueError("cannot invert a spectrogram with zero frames")
    frame_size, hop = spec.frame_size, spec.hop
    window = get_window(spec.window_id, frame_size)
    frames = np.fft.irfft(spec.bins.T, n=frame_size, axis=1) * window
    length = frame_size + (n_frames - 1) * hop
    out = np.zeros(length)
    norm = np.zeros(length)
    wsq = window * window
    for t in range(n_frames):
        start = t * hop
        out[start : start + frame_size] += frames[t]
        norm[start : start + frame_size] += wsq
    # near the ends the summed window is tiny; dividing by it would blow up
    # whatever a mask did to the edge frames
    out /= np.maximum(norm, NORM_FLOOR * norm.max())
    rate = sample_rate or spec.sample_rate or 1
    return AudioSignal(out, rate)


def split(spec):
    """Magnitude and phase of a complex spectrogram; zero bins get phase 0."""
    mag = np.abs(spec.bins)
    phase = np.where(mag > 0, np.angle(spec.bins), 0.0)
    magnitude = MagnitudeSpectrogram(mag, spec.frame_size, spec.hop, spec.window_id, spec.sample_rate)
    return magnitude, PhaseMatrix(phase)


def merge(magnitude, phase):
    if magnitude.shape != phase.angles.shape:
        raise ValueError(f"shape mismatch: {magnitude.shape} vs {phase.angles.shape}")
    bins = magnitude.values * np.exp(1j * phase.angles)
    return ComplexSpectrogram(bins, magnitude.frame_size, magnitude.hop, magnitude.window_id, magnitude.sample_rate)


def ratio_masks(source_mags):
    """Per-bin masks ``X_i / sum_j X_j`` that partition unity.

    Bins where every source is zero get ``1 / n``. The last mask is the
    complement of the others so that the masks add up to one.
    """
    arrays = [np.asarray(getattr(s, "values", s), dtype=np.float64) for s in source_mags]
    if len(arrays) < 2:
        raise ValueError("need at least two source magnitudes")
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("source magnitudes must share one shape")
    if any(np.any(a < 0) for a in arrays):
        raise ValueError("source magnitudes must be non-negative")
    total = np.sum(arrays, axis=0)
    silent = total <= 0
    safe_total = np.where(silent, 1.0, total)
    masks = [np.where(silent, 1.0 / len(arrays), a / safe_total) for a in arrays[:-1]]
    masks.append(1.0 - np.sum(masks, axis=0))
    return masks


def masked_resynthesis(source_mags, mixture):
    """Time signals from ratio masks applied to the complex mixture."""
    masks = ratio_masks(source_mags)
    if masks[0].shape != mixture.shape:
        raise ValueError(f"mask shape {masks[0].shape} does not match mixture {mixture.shape}")
    out = []
    for mask in masks:
        masked = ComplexSpectrogram(mask * mixture.bins, mixture.frame_size, mixture.hop, mixture.window_id,
                                    mixture.sample_rate)
        out.append(istft(masked))
    return out
