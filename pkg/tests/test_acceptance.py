"""End-to-end acceptance criteria, each run at its stated tolerance and time budget.

Every test appends one ``PASS``/``FAIL`` line to the acceptance log that the
terminal summary prints (see ``conftest.py``).
"""

import json
import math
import time

import numpy as np
import pytest

from convae import cli, experiment, synthetic
from convae.diff import Tensor, causal_conv_time, causal_conv_time_transposed_accumulate, check_gradients
from convae.dsp import AudioSignal, istft, split, stft
from convae.io import write_wav
from convae.metrics import bss_eval, decompose
from convae.models import ModelConfig, ModelParams, forward_graph, loss_graph, param_shapes, train
from convae.separation import SeparationConfig, separate
from oracles import conv_oracle, deconv_oracle

pytestmark = pytest.mark.acceptance

SEPARATION_CHECKS = []


def record(log, number, title, passed, detail):
    log.append(f"[{'PASS' if passed else 'FAIL'}] criterion {number:>2}: {title} ({detail})")
    return passed


def check_partition_and_additivity(result, mixture):
    whole = istft(mixture).samples
    total = result.signals[0].samples + result.signals[1].samples
    exact = bool(np.all(result.masks[0] + result.masks[1] == 1.0))
    rel = float(np.linalg.norm(total - whole) / np.linalg.norm(whole))
    return exact, rel


@pytest.fixture
def separation_spy(monkeypatch):
    """Wraps every separation the experiment runner performs with the mask checks."""

    def spying(model1, model2, mixture, cfg=None):
        result = separate(model1, model2, mixture, cfg)
        SEPARATION_CHECKS.append(check_partition_and_additivity(result, mixture))
        return result

    monkeypatch.setattr(experiment, "separate", spying)


# -- 2: gradients ---------------------------------------------------------------------------

def test_gradient_suite(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    x = rng.uniform(0.05, 2.0, (8, 12))
    positions = np.concatenate([np.arange(7), np.arange(5)])
    variants = {
        "FF": ModelConfig(variant="FF", num_components=3, bins=8),
        "CCAE": ModelConfig(variant="CCAE", num_components=3, conv_depth=4, bins=8),
        "RCAE-vanilla": ModelConfig(variant="RCAE", num_components=3, conv_depth=4, bins=8, rnn_hidden=4,
                                    rnn_cell="vanilla"),
        "RCAE-LSTM": ModelConfig(variant="RCAE", num_components=3, conv_depth=4, bins=8, rnn_hidden=4),
    }
    worst = {}
    for name, cfg in variants.items():
        weights = {n: Tensor(0.4 * rng.standard_normal(s), requires_grad=True, name=n)
                   for n, s in param_shapes(cfg).items()}

        def fn(weights=weights, cfg=cfg):
            xhat, h = forward_graph(weights, cfg, Tensor(x), positions)
            return loss_graph(x, xhat, h, 0.01)[0]

        worst[name] = max(check_gradients(fn, list(weights.values())).values())
    elapsed = time.perf_counter() - start
    passed = max(worst.values()) < 1e-4 and elapsed < 30
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items()) + f"; {elapsed:.1f}s"
    assert record(acceptance_log, 2, "gradient suite, max rel err < 1e-4", passed, detail), worst


# -- 3: convolution oracles ------------------------------------------------------------------

def test_convolution_oracles(acceptance_log):
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        m, k, t, n = rng.integers(1, 9), rng.integers(1, 9), rng.integers(1, 6), rng.integers(1, 17)
        x, w = rng.standard_normal((m, n)), rng.standard_normal((k, m, t))
        h, wd = rng.standard_normal((k, n)), rng.standard_normal((k, t, m))
        worst = max(worst, np.max(np.abs(causal_conv_time(x, w).data - conv_oracle(x, w))),
                    np.max(np.abs(causal_conv_time_transposed_accumulate(h, wd).data - deconv_oracle(h, wd))))
    elapsed = time.perf_counter() - start
    passed = worst <= 1e-10 and elapsed < 5
    assert record(acceptance_log, 3, "conv ops vs nested-loop oracles, 100 instances", passed,
                  f"max abs err {worst:.1e}; {elapsed:.2f}s")


# -- 4: STFT roundtrip -------------------------------------------------------------------------

def test_stft_roundtrip(acceptance_log):
    x = np.random.default_rng(4).standard_normal(16000)
    start = time.perf_counter()
    y = istft(stft(AudioSignal(x, 16000), 1024, 256)).samples
    elapsed = time.perf_counter() - start
    xi, yi = x[1024 : y.size - 1024], y[1024:-1024]
    rel = np.linalg.norm(yi - xi) / np.linalg.norm(xi)
    passed = rel < 1e-6 and elapsed < 1
    assert record(acceptance_log, 4, "STFT roundtrip, interior rel L2 < 1e-6", passed,
                  f"rel err {rel:.1e}; {elapsed:.3f}s")


# -- 5: toy reproduction ------------------------------------------------------------------------

def test_toy_reproduction(acceptance_log, toy_run):
    report, h = toy_run["report"], toy_run["h"]
    cfg = toy_run["config"]
    assert (cfg.variant, cfg.bins, cfg.conv_depth, cfg.iterations) == ("CCAE", 40, 36, 5000)
    assert cfg.sparsity_weight > 0 and toy_run["pattern"].shape == (40, 350)
    ratio = report.final_kl / report.kl[0]
    peaks = h.max(axis=1) / h.mean(axis=1)
    passed = ratio <= 0.05 and bool(np.all(peaks > 5)) and toy_run["seconds"] < 120
    detail = f"KL ratio {ratio:.2e}, peak/mean {', '.join(f'{p:.1f}' for p in peaks)}; {toy_run['seconds']:.0f}s"
    assert record(acceptance_log, 5, "toy CCAE: KL <= 5% of start, activation peak/mean > 5", passed, detail)


# -- 6 and 8: synthetic separation ----------------------------------------------------------------

@pytest.fixture(scope="module")
def comb_separation():
    start = time.perf_counter()
    models = []
    for side, kind in enumerate("ab"):
        corpus = [split(stft(s, 1024, 256))[0] for s in synthetic.speaker_utterances("comb", kind, 4, 2.0, side + 1)]
        cfg = ModelConfig(variant="CCAE", num_components=20, conv_depth=8, bins=513, iterations=400, seed=side)
        params, _ = train(cfg, corpus)
        models.append((params, cfg))
    a = synthetic.comb_source("a", 3.0, seed=11)
    b = synthetic.comb_source("b", 3.0, seed=12)
    mixture, s1, s2 = experiment.mix_at_0db(a, b)
    spec = stft(mixture, 1024, 256)
    result = separate(models[0], models[1], spec, SeparationConfig())
    n = len(result.signals[0])
    refs = [s1.samples[:n], s2.samples[:n]]
    return {"result": result, "spec": spec, "refs": refs, "mixture": mixture.samples[:n],
            "seconds": time.perf_counter() - start}


def test_synthetic_separation(acceptance_log, comb_separation):
    run = comb_separation
    lines, passed = [], run["seconds"] < 300
    for i, sig in enumerate(run["result"].signals):
        m = bss_eval(sig.samples, run["refs"], i)
        base = bss_eval(run["mixture"], run["refs"], i)
        gain = m.sir - base.sir
        passed &= gain >= 6 and m.sdr > 0
        lines.append(f"src{i}: SIR {m.sir:.1f} vs baseline {base.sir:.1f} dB, SDR {m.sdr:.1f} dB")
    detail = "; ".join(lines) + f"; {run['seconds']:.0f}s"
    assert record(acceptance_log, 6, "comb separation: SIR gain >= 6 dB and SDR > 0", passed, detail)


def test_separation_loss_trailing_window(comb_separation):
    windows = np.asarray(comb_separation["result"].loss).reshape(-1, 50).mean(axis=1)
    assert np.all(np.diff(windows) <= 0)


# -- 7: directional claim ---------------------------------------------------------------------------

@pytest.mark.slow
def test_directional_claim(acceptance_log, tmp_path, separation_spy):
    for side, direction in enumerate(("up", "down")):
        d = tmp_path / f"speaker_{direction}"
        d.mkdir()
        for i, sig in enumerate(synthetic.speaker_utterances("glide", direction, 7, 1.5, seed=side + 1)):
            write_wav(d / f"utt{i:02d}.wav", sig)
    cfg = experiment.ExperimentConfig.from_dict({
        "corpus": {"group_a": [str(tmp_path / "speaker_up")], "group_b": [str(tmp_path / "speaker_down")]},
        "num_mixtures": 5,
        "seed": 7,
        "variants": ["FF", "CCAE"],
        "k_values": [80],
        "model": {"conv_depth": 8, "iterations": 400},
        "output_dir": str(tmp_path / "results"),
    })
    start = time.perf_counter()
    table = experiment.run_experiment(cfg)
    elapsed = time.perf_counter() - start
    experiment.emit_results(table, cfg.output_dir, cfg)
    ff, cc = table.summary[("FF", 80, "sdr")], table.summary[("CCAE", 80, "sdr")]
    passed = not table.failures and ff.count == cc.count == 10 and cc.median > ff.median and elapsed < 1800
    detail = f"median SDR CCAE {cc.median:.2f} dB vs FF {ff.median:.2f} dB over {cc.count} outputs; {elapsed:.0f}s"
    assert record(acceptance_log, 7, "CCAE beats FF on median SDR at K=80", passed, detail)


# -- 8: masks and additivity on every separation --------------------------------------------------------

def test_mask_partition_and_additivity(acceptance_log, comb_separation):
    """Runs after criterion 7 so the spied experiment separations are included."""
    checks = SEPARATION_CHECKS + [check_partition_and_additivity(comb_separation["result"], comb_separation["spec"])]
    rng = np.random.default_rng(8)
    for variant in ("FF", "CCAE", "RCAE"):
        cfgs = [ModelConfig(variant=variant, num_components=3, conv_depth=3, bins=33, rnn_hidden=2, seed=s)
                for s in (0, 1)]
        models = [(ModelParams({n: 0.5 * rng.standard_normal(sh) for n, sh in param_shapes(c).items()}), c)
                  for c in cfgs]
        spec = stft(AudioSignal(rng.standard_normal(2000), 16000), 64, 16)
        checks.append(check_partition_and_additivity(separate(*models, spec, SeparationConfig(iterations=20)), spec))
    exact = all(e for e, _ in checks)
    worst = max(r for _, r in checks)
    passed = exact and worst <= 1e-6
    assert record(acceptance_log, 8, "masks sum to 1 exactly, x1 + x2 = istft(mixture)", passed,
                  f"{len(checks)} runs, worst rel L2 {worst:.1e}")


# -- 9: determinism ---------------------------------------------------------------------------------------

def test_experiment_determinism(acceptance_log, tmp_path):
    assert cli.main(["synth-corpus", "--out-dir", str(tmp_path / "corpus"), "--family", "comb",
                     "--utterances", "3", "--duration", "0.5"]) == 0
    base = {
        "corpus": {"group_a": [str(tmp_path / "corpus" / "speaker_a")],
                   "group_b": [str(tmp_path / "corpus" / "speaker_b")]},
        "num_mixtures": 2,
        "seed": 9,
        "variants": ["FF", "CCAE", "RCAE"],
        "k_values": [3],
        "stft": {"frame_size": 256, "hop": 64},
        "model": {"conv_depth": 4, "iterations": 20, "rnn_hidden": 2},
        "separation": {"iterations": 20},
    }
    (tmp_path / "cfg.json").write_text(json.dumps(base))
    outputs = []
    for run in ("one", "two"):
        out = tmp_path / run
        assert cli.main(["experiment", "--config", str(tmp_path / "cfg.json"), "--out-dir", str(out)]) == 0
        outputs.append(((out / "results.csv").read_bytes(), (out / "summary.csv").read_bytes()))
    same = outputs[0] == outputs[1]
    rows = outputs[0][0].count(b"\n") - 1
    assert record(acceptance_log, 9, "two experiment runs give byte-identical CSVs", same and rows == 12,
                  f"{rows} rows compared")


# -- 10: BSS_eval self-checks --------------------------------------------------------------------------------

def test_bss_eval_self_checks(acceptance_log):
    rng = np.random.default_rng(10)
    completeness = orthogonality = 0.0
    for _ in range(50):
        s1, s2 = rng.standard_normal((2, 2000))
        s2 += rng.uniform(-0.5, 0.5) * s1
        est = rng.uniform(-1, 1) * s1 + rng.uniform(-1, 1) * s2 + rng.uniform(0, 1) * rng.standard_normal(2000)
        for index in (0, 1):
            d = decompose(est, [s1, s2], index)
            completeness = max(completeness, np.max(np.abs(d.target + d.interference + d.artifacts - est)))
            for u, v in ((d.target, d.interference), (d.target + d.interference, d.artifacts)):
                orthogonality = max(orthogonality, abs(u @ v) / (np.linalg.norm(u) * np.linalg.norm(v)))
    a = rng.standard_normal(4000)
    b = rng.standard_normal(4000)
    b -= (a @ b) / (a @ a) * a
    b *= np.linalg.norm(a) / np.linalg.norm(b)
    exact = bss_eval(a, [a, b], 0).sir
    scaled = bss_eval(0.3 * a, [a, b], 0).sir
    mixed = bss_eval(a + b, [a, b], 0).sir
    passed = (completeness <= 1e-12 and orthogonality <= 1e-8 and exact == math.inf and scaled == math.inf
              and abs(mixed) < 1e-9)
    detail = (f"completeness {completeness:.1e}, orthogonality {orthogonality:.1e}, "
              f"SIR exact/scaled/orthogonal {exact}/{scaled}/{mixed:.1e} dB")
    assert record(acceptance_log, 10, "BSS_eval decomposition self-checks", passed, detail)
