"""Projection-based BSS_eval scores and summary statistics.

This is the zero-lag variant: the target and interference components are
orthogonal projections of the estimate onto the true sources, with no
distortion filters allowed.
"""

import math
from dataclasses import dataclass

import numpy as np

# Error energies at or below this fraction of the estimate energy count as
# exactly zero (float64 rounding sits around 1e-32).
ZERO_ENERGY = 1e-24


@dataclass(frozen=True)
class BssMetrics:
    sdr: float
    sir: float
    sar: float
    source_index: int


@dataclass(frozen=True)
class Decomposition:
    target: np.ndarray
    interference: np.ndarray
    artifacts: np.ndarray


@dataclass(frozen=True)
class SummaryStats:
    median: float
    q1: float
    q3: float
    count: int


def _samples(x):
    return np.asarray(getattr(x, "samples", x), dtype=np.float64)


def decompose(estimate, targets, target_index):
    """Split ``estimate`` into target, interference and artifact parts."""
    est = _samples(estimate)
    refs = np.stack([_samples(t) for t in targets])
    if refs.shape[1] != est.size:
        raise ValueError(f"length mismatch: estimate {est.size}, targets {refs.shape[1]}")
    energies = np.sum(refs * refs, axis=1)
    if np.any(energies == 0):
        raise ValueError("targets must not be all-zero")
    ref = refs[target_index]
    s_target = (est @ ref) / energies[target_index] * ref
    gram = refs @ refs.T
    coeffs = np.linalg.lstsq(gram, refs @ est, rcond=None)[0]
    e_interf = coeffs @ refs - s_target
    e_artif = est - s_target - e_interf
    return Decomposition(s_target, e_interf, e_artif)


def _ratio_db(num, den, scale):
    if den <= ZERO_ENERGY * scale:
        return math.inf
    if num <= 0:
        return -math.inf
    return 10.0 * math.log10(num / den)


def bss_eval(estimate, targets, target_index):
    """SDR/SIR/SAR in dB of ``estimate`` against ``targets[target_index]``."""
    d = decompose(estimate, targets, target_index)
    est = _samples(estimate)
    scale = max(float(est @ est), np.finfo(float).tiny)

    def energy(v):
        return float(v @ v)

    target = energy(d.target)
    return BssMetrics(
        sdr=_ratio_db(target, energy(d.interference + d.artifacts), scale),
        sir=_ratio_db(target, energy(d.interference), scale),
        sar=_ratio_db(energy(d.target + d.interference), energy(d.artifacts), scale),
        source_index=target_index,
    )


def summarize(values):
    """Median and quartiles, linear interpolation between order statistics."""
    arr = np.asarray(list(values), dtype=np.float64)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty list")
    q1, median, q3 = np.percentile(arr, [25, 50, 75])
    return SummaryStats(median=float(median), q1=float(q1), q3=float(q3), count=int(arr.size))
