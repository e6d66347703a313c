import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from convae.dsp import AudioSignal
from convae.metrics import bss_eval, decompose, summarize


def orthogonal_pair(n=4000, seed=0):
    """Two equal-energy signals with an exactly zero inner product."""
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n)
    b = rng.standard_normal(n)
    b -= (a @ b) / (a @ a) * a
    b *= np.linalg.norm(a) / np.linalg.norm(b)
    return a, b


def cosine(u, v):
    return abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v))


def test_exact_estimate_is_perfect():
    a, b = orthogonal_pair()
    m = bss_eval(a, [a, b], 0)
    assert m.sdr == m.sir == m.sar == math.inf


def test_scaled_estimate_is_perfect():
    a, b = orthogonal_pair()
    assert bss_eval(0.3 * a, [a, b], 0).sdr == math.inf


def test_orthogonal_equal_energy_mixture():
    a, b = orthogonal_pair()
    m = bss_eval(a + b, [a, b], 0)
    # hand projections: s_target = a, e_interf = b, e_artif = 0
    d = decompose(a + b, [a, b], 0)
    np.testing.assert_allclose(d.target, a, atol=1e-12)
    np.testing.assert_allclose(d.interference, b, atol=1e-12)
    assert abs(m.sir) < 1e-9
    assert abs(m.sdr) < 1e-9
    assert m.sar == math.inf


def test_hand_computed_artifact_case():
    a, b = orthogonal_pair(seed=1)
    rng = np.random.default_rng(5)
    noise = rng.standard_normal(a.size)
    # remove the part of the noise inside span(a, b) so it is a pure artifact
    for s in (a, b):
        noise -= (noise @ s) / (s @ s) * s
    noise *= 0.5 * np.linalg.norm(a) / np.linalg.norm(noise)
    m = bss_eval(a + 0.5 * b + noise, [a, b], 0)
    assert m.sir == pytest.approx(10 * math.log10(1 / 0.25), abs=1e-9)
    assert m.sar == pytest.approx(10 * math.log10(1.25 / 0.25), abs=1e-9)
    assert m.sdr == pytest.approx(10 * math.log10(1 / 0.5), abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 1))
def test_decomposition_properties(seed, index):
    rng = np.random.default_rng(seed)
    s1, s2 = rng.standard_normal((2, 500))
    s2 += 0.4 * s1  # correlated targets
    est = rng.uniform(-1, 1) * s1 + rng.uniform(-1, 1) * s2 + 0.3 * rng.standard_normal(500)
    d = decompose(est, [s1, s2], index)
    assert np.max(np.abs(d.target + d.interference + d.artifacts - est)) <= 1e-12 * max(1.0, np.max(np.abs(est)))
    assert cosine(d.target, d.interference) <= 1e-8 or np.linalg.norm(d.interference) < 1e-12
    assert cosine(d.target + d.interference, d.artifacts) <= 1e-8


def test_sir_monotone_in_interference():
    rng = np.random.default_rng(2)
    s1, s2 = rng.standard_normal((2, 3000))
    artifact = 0.1 * rng.standard_normal(3000)
    sirs = [bss_eval(s1 + g * s2 + artifact, [s1, s2], 0).sir for g in np.linspace(0.01, 2.0, 25)]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(sirs, sirs[1:]))


def test_accepts_audio_signals():
    a, b = orthogonal_pair(800)
    m = bss_eval(AudioSignal(a + b, 16000), [AudioSignal(a, 16000), AudioSignal(b, 16000)], 1)
    assert m.source_index == 1 and abs(m.sir) < 1e-9


def test_bss_errors():
    a, b = orthogonal_pair(100)
    with pytest.raises(ValueError):
        bss_eval(a[:50], [a, b], 0)
    with pytest.raises(ValueError):
        bss_eval(a, [a, np.zeros(100)], 0)


def test_summary_examples():
    s = summarize([1, 2, 3, 4, 5])
    assert (s.median, s.q1, s.q3, s.count) == (3, 2, 4, 5)
    s = summarize([7.5])
    assert s.median == s.q1 == s.q3 == 7.5
    with pytest.raises(ValueError):
        summarize([])


def test_summary_monte_carlo():
    x = np.random.default_rng(11).standard_normal(10_000)
    s = summarize(x)
    assert abs(s.median - x.mean()) < 0.05 * (s.q3 - s.q1)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-300, 300), min_size=1, max_size=30), st.randoms())
def test_summary_order_and_permutation(values, rnd):
    s = summarize(values)
    assert s.q1 <= s.median <= s.q3
    shuffled = list(values)
    rnd.shuffle(shuffled)
    assert summarize(shuffled) == s
