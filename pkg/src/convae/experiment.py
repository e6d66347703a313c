"""Train -> separate -> score experiments over seeded 0 dB mixtures."""

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .dsp import AudioSignal, istft, split, stft
from .io import load_wav
from .metrics import bss_eval, summarize
from .models import ModelConfig, TrainingError, train
from .separation import SeparationConfig, SeparationError, separate

log = logging.getLogger(__name__)

INF_CAP = 300.0
EXPECTED_RATE = 16000
ROW_HEADER = ["mixture_id", "variant", "K", "source", "sdr_db", "sir_db", "sar_db"]
SUMMARY_HEADER = ["variant", "K", "metric", "median", "q1", "q3", "count"]
METRICS = ("sdr", "sir", "sar")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass
class ExperimentConfig:
    group_a: list
    group_b: list
    num_mixtures: int = 20
    seed: int = 0
    variants: list = field(default_factory=lambda: ["FF", "CCAE", "RCAE"])
    k_values: list = field(default_factory=lambda: list(range(10, 101, 10)))
    frame_size: int = 1024
    hop: int = 256
    window: str = "hann"
    model: dict = field(default_factory=dict)
    separation: dict = field(default_factory=dict)
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        if not self.group_a or not self.group_b:
            raise ConfigError("corpus needs at least one speaker directory in each group")
        if not self.k_values:
            raise ConfigError("k_values must not be empty")
        if not self.variants:
            raise ConfigError("variants must not be empty")
        if self.num_mixtures < 1:
            raise ConfigError("num_mixtures must be >= 1")
        banned = {"variant", "num_components", "bins", "seed"} & set(self.model)
        if banned:
            raise ConfigError(f"model settings {sorted(banned)} are set per experiment unit")
        try:
            for v in self.variants:
                self.model_config(v, self.k_values[0], 0)
            self.separation_config(0)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        corpus = d.pop("corpus", None)
        if corpus is not None:
            d.setdefault("group_a", corpus.get("group_a"))
            d.setdefault("group_b", corpus.get("group_b"))
        stft_cfg = d.pop("stft", None)
        if stft_cfg is not None:
            d.setdefault("frame_size", stft_cfg.get("frame_size", 1024))
            d.setdefault("hop", stft_cfg.get("hop", 256))
            d.setdefault("window", stft_cfg.get("window", "hann"))
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown experiment settings: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self):
        return asdict(self)

    @property
    def bins(self):
        return self.frame_size // 2 + 1

    def model_config(self, variant, k, seed):
        return ModelConfig(variant=variant, num_components=k, bins=self.bins, seed=seed, **self.model)

    def separation_config(self, seed):
        return SeparationConfig(seed=seed, **self.separation)


@dataclass
class ResultRow:
    mixture_id: int
    variant: str
    K: int
    source: int
    sdr_db: float
    sir_db: float
    sar_db: float


@dataclass
class ResultsTable:
    rows: list
    summary: dict            # (variant, K, metric) -> SummaryStats
    failures: list = field(default_factory=list)
    seeds: dict = field(default_factory=dict)
    wall_times: dict = field(default_factory=dict)


def mix_at_0db(s1, s2):
    """Scale ``s2`` to the RMS of ``s1`` and add; returns (mixture, s1', s2')."""
    if s1.sample_rate != s2.sample_rate:
        raise ValueError(f"sample rates differ: {s1.sample_rate} vs {s2.sample_rate}")
    n = min(len(s1), len(s2))
    a, b = s1.samples[:n], s2.samples[:n]
    rms_a, rms_b = np.sqrt(np.mean(a * a)), np.sqrt(np.mean(b * b))
    if rms_a == 0 or rms_b == 0:
        raise ValueError("cannot mix a silent signal at 0 dB")
    b = b * (rms_a / rms_b)
    rate = s1.sample_rate
    return AudioSignal(a + b, rate), AudioSignal(a, rate), AudioSignal(b, rate)


def cap(value):
    if math.isinf(value):
        return INF_CAP if value > 0 else -INF_CAP
    return value


def _derive_seed(*parts):
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def _wavs(directory):
    files = sorted(Path(directory).glob("*.wav"))
    if len(files) < 2:
        raise ValueError(f"{directory}: need at least two WAV files (one held out, the rest for training)")
    return files


def _load(path):
    sig = load_wav(path)
    if sig.sample_rate != EXPECTED_RATE:
        log.warning("%s: sample rate %d Hz (expected %d); not resampling", path, sig.sample_rate, EXPECTED_RATE)
    return sig


def draw_mixture(cfg, mixture_id):
    """Seeded speaker pair and held-out utterances for one mixture."""
    rng = np.random.default_rng([cfg.seed, mixture_id])
    speakers = [cfg.group_a[rng.integers(len(cfg.group_a))], cfg.group_b[rng.integers(len(cfg.group_b))]]
    plan = []
    for speaker in speakers:
        files = _wavs(speaker)
        held = int(rng.integers(len(files)))
        plan.append({"speaker": str(speaker), "held_out": str(files[held]),
                     "train": [str(f) for i, f in enumerate(files) if i != held]})
    return plan


def _magnitudes(signals, cfg):
    return [split(stft(s, cfg.frame_size, cfg.hop, cfg.window))[0] for s in signals]


def run_unit(cfg, mixture_id, variant, k):
    """One (mixture, variant, K) cell: train both models, separate, score."""
    start = time.perf_counter()
    plan = draw_mixture(cfg, mixture_id)
    held = [_load(p["held_out"]) for p in plan]
    mixture, ref1, ref2 = mix_at_0db(held[0], held[1])
    seeds = {"holdout": [cfg.seed, mixture_id]}
    models = []
    for side, p in enumerate(plan):
        seed = _derive_seed(cfg.seed, mixture_id, k, side)
        seeds[f"model{side + 1}"] = seed
        corpus = _magnitudes([_load(f) for f in p["train"]], cfg)
        mcfg = cfg.model_config(variant, k, seed)
        params, _ = train(mcfg, corpus)
        models.append((params, mcfg))
    sep_seed = _derive_seed(cfg.seed, mixture_id, k, 2)
    seeds["separation"] = sep_seed
    spec = stft(mixture, cfg.frame_size, cfg.hop, cfg.window)
    result = separate(models[0], models[1], spec, cfg.separation_config(sep_seed))
    length = len(istft(spec))
    refs = [ref1.samples[:length], ref2.samples[:length]]
    rows = []
    for i, est in enumerate(result.signals):
        m = bss_eval(est, refs, i)
        rows.append(ResultRow(mixture_id, variant, k, i, cap(m.sdr), cap(m.sir), cap(m.sar)))
    return rows, seeds, time.perf_counter() - start


def _run_unit_safely(args):
    cfg, mixture_id, variant, k = args
    key = f"{mixture_id}/{variant}/{k}"
    try:
        rows, seeds, elapsed = run_unit(cfg, mixture_id, variant, k)
        return key, rows, seeds, elapsed, None
    except (TrainingError, SeparationError, FloatingPointError) as exc:
        return key, [], {}, 0.0, {"unit": key, "kind": "numerical", "error": str(exc)}
    except (OSError, ValueError) as exc:
        return key, [], {}, 0.0, {"unit": key, "kind": "data", "error": str(exc)}


def summarize_rows(rows):
    groups = {}
    for r in rows:
        for metric in METRICS:
            groups.setdefault((r.variant, r.K, metric), []).append(getattr(r, f"{metric}_db"))
    return {key: summarize(vals) for key, vals in sorted(groups.items())}


def run_experiment(cfg):
    """Every (mixture, variant, K) unit in a fixed order; failures are collected, not raised."""
    units = [(cfg, m, v, k) for m in range(cfg.num_mixtures) for v in cfg.variants for k in cfg.k_values]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            outcomes = list(pool.map(_run_unit_safely, units))
    else:
        outcomes = [_run_unit_safely(u) for u in units]
    rows, failures, seeds, times = [], [], {}, {}
    for key, unit_rows, unit_seeds, elapsed, failure in outcomes:
        rows.extend(unit_rows)
        if failure:
            log.error("unit %s failed: %s", key, failure["error"])
            failures.append(failure)
        else:
            seeds[key] = unit_seeds
            times[key] = elapsed
    summary = summarize_rows(rows) if rows else {}
    return ResultsTable(rows=rows, summary=summary, failures=failures, seeds=seeds, wall_times=times)


def emit_results(table, out_dir, config=None):
    """Write results.csv, summary.csv and manifest.json into ``out_dir``."""
    if not table.rows:
        raise ValueError("no result rows to write")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "results.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(ROW_HEADER)
            for r in table.rows:
                writer.writerow([r.mixture_id, r.variant, r.K, r.source,
                                 repr(cap(r.sdr_db)), repr(cap(r.sir_db)), repr(cap(r.sar_db))])
        with open(out / "summary.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(SUMMARY_HEADER)
            for (variant, k, metric), s in table.summary.items():
                writer.writerow([variant, k, metric, repr(s.median), repr(s.q1), repr(s.q3), s.count])
        manifest = {
            "code_version": __version__,
            "config": config.to_dict() if config is not None else None,
            "seeds": table.seeds,
            "experiment_seed": config.seed if config is not None else None,
            "wall_times_s": table.wall_times,
            "failures": table.failures,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    except OSError as exc:
        raise OSError(f"cannot write results to {out}: {exc}") from exc
    return out


def load_results(path):
    """Rows back from a results CSV."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [ResultRow(int(r["mixture_id"]), r["variant"], int(r["K"]), int(r["source"]),
                          float(r["sdr_db"]), float(r["sir_db"]), float(r["sar_db"])) for r in reader]
