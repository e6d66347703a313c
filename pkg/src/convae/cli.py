"""Command line entry point: ``convae {train,separate,evaluate,experiment,toy-demo,synth-corpus}``.

Exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__, synthetic
from .dsp import split, stft
from .experiment import ConfigError, ExperimentConfig, emit_results, run_experiment
from .io import ModelFileError, WavError, load_model, load_wav, save_model, write_wav
from .metrics import bss_eval
from .models import ModelConfig, TrainingError, forward, make_toy_pattern, train
from .separation import SeparationConfig, SeparationError, separate

log = logging.getLogger("convae")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
STFT_DEFAULTS = {"frame_size": 1024, "hop": 256, "window": "hann"}
TOY_DEFAULTS = {"variant": "CCAE", "num_components": 2, "conv_depth": 36, "bins": 40,
                "sparsity_weight": 1e-2, "iterations": 5000, "seed": 0}


# -- configuration helpers ------------------------------------------------------------

def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(config, overrides):
    """Apply ``key.sub=value`` strings; values are parsed as JSON when possible."""
    config = json.loads(json.dumps(config))
    for item in overrides or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {key!r} descends into a non-mapping")
        node[parts[-1]] = _parse_value(value)
    return config


def load_config(path, overrides=None):
    config = {}
    if path:
        try:
            config = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read config ({exc})") from exc
        if not isinstance(config, dict):
            raise ConfigError(f"{path}: top level must be an object")
    return apply_overrides(config, overrides)


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True))


def _stft_settings(config):
    settings = dict(STFT_DEFAULTS)
    settings.update(config.pop("stft", {}))
    return settings


def _build(cls, config):
    try:
        return cls(**config)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _wav_paths(args):
    paths = [Path(p) for p in args.wav or []]
    if args.wav_dir:
        if not Path(args.wav_dir).is_dir():
            raise FileNotFoundError(f"{args.wav_dir}: not a directory")
        paths += sorted(Path(args.wav_dir).glob("*.wav"))
    if not paths:
        raise ConfigError("no training audio given (use --wav or --wav-dir)")
    return paths


def _magnitude(signal, s):
    return split(stft(signal, s["frame_size"], s["hop"], s["window"]))[0]


def _matrix_csv(path, matrix):
    np.savetxt(path, np.atleast_2d(matrix), delimiter=",", fmt="%.10g")


# -- subcommands -------------------------------------------------------------------------

def cmd_train(args):
    config = load_config(args.config, args.set)
    s = _stft_settings(config)
    config.setdefault("bins", s["frame_size"] // 2 + 1)
    mcfg = _build(ModelConfig, config)
    corpus = [_magnitude(load_wav(p), s) for p in _wav_paths(args)]
    params, report = train(mcfg, corpus, log_every=args.log_every)
    save_model(params, mcfg, args.out)
    _write_json(str(args.out) + ".json", {"model": mcfg.to_dict(), "stft": s,
                                          "final_kl": report.final_kl, "wall_time_s": report.wall_time})
    print(f"trained {mcfg.variant} K={mcfg.num_components}: KL {report.kl[0] if report.kl else report.final_kl:.6g} "
          f"-> {report.final_kl:.6g}; saved {args.out}")
    return EXIT_OK


def cmd_separate(args):
    config = load_config(args.config, args.set)
    s = _stft_settings(config)
    scfg = _build(SeparationConfig, config)
    m1, m2 = load_model(args.model1), load_model(args.model2)
    mixture = load_wav(args.mixture)
    spec = stft(mixture, s["frame_size"], s["hop"], s["window"])
    result = separate(m1, m2, spec, scfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, sig in enumerate(result.signals):
        write_wav(out / f"source{i + 1}.wav", sig)
    _write_json(out / "separation.json", {"separation": scfg.to_dict(), "stft": s, "loss": result.loss})
    print(f"separated into {out}/source1.wav, {out}/source2.wav (KL {result.loss[0]:.6g} -> {result.loss[-1]:.6g})")
    return EXIT_OK


def cmd_evaluate(args):
    if len(args.estimates) != len(args.references):
        raise ConfigError("give one estimate per reference")
    refs = [load_wav(p).samples for p in args.references]
    ests = [load_wav(p).samples for p in args.estimates]
    n = min(min(r.size for r in refs), min(e.size for e in ests))
    refs = [r[:n] for r in refs]
    lines = [["source", "sdr_db", "sir_db", "sar_db"]]
    for i, est in enumerate(ests):
        m = bss_eval(est[:n], refs, i)
        lines.append([i, repr(m.sdr), repr(m.sir), repr(m.sar)])
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        csv.writer(fh, lineterminator="\n").writerows(lines)
    finally:
        if args.out:
            fh.close()
    return EXIT_OK


def cmd_experiment(args):
    config = load_config(args.config, args.set)
    if args.out_dir:
        config["output_dir"] = args.out_dir
    cfg = ExperimentConfig.from_dict(config)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "effective_config.json", cfg.to_dict())
    table = run_experiment(cfg)
    if not table.rows:
        kinds = {f["kind"] for f in table.failures}
        log.error("every experiment unit failed")
        return EXIT_NUMERIC if kinds == {"numerical"} else EXIT_DATA
    emit_results(table, out, cfg)
    for (variant, k, metric), st in table.summary.items():
        print(f"{variant:5s} K={k:<4d} {metric}: median {st.median:7.2f}  IQR [{st.q1:.2f}, {st.q3:.2f}]  n={st.count}")
    if table.failures:
        print(f"{len(table.failures)} unit(s) failed; see {out / 'manifest.json'}")
    return EXIT_OK


def cmd_toy_demo(args):
    config = dict(TOY_DEFAULTS)
    config.update(load_config(args.config, args.set))
    period = config.pop("stripe_period", 70)
    mcfg = _build(ModelConfig, config)
    pattern = make_toy_pattern(mcfg.bins, 350, period, seed=mcfg.seed)
    params, report = train(mcfg, [pattern], log_every=args.log_every)
    xhat, h = forward(params, mcfg, pattern)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _matrix_csv(out / "pattern.csv", pattern.values)
    _matrix_csv(out / "reconstruction.csv", xhat)
    _matrix_csv(out / "activations.csv", h)
    decoder = params["decoder"]
    for i in range(mcfg.num_components):
        # frequency x time, the way the basis appears in a spectrogram
        _matrix_csv(out / f"decoder_filter_{i}.csv", decoder[i].T)
    with open(out / "loss.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iteration", "kl", "sparsity"])
        w.writerows([i, repr(k), repr(s)] for i, (k, s) in enumerate(zip(report.kl, report.sparsity)))
    _write_json(out / "config.json", {"model": mcfg.to_dict(), "stripe_period": period})
    ratio = report.final_kl / report.kl[0] if report.kl else 1.0
    print(f"toy CCAE: KL {report.kl[0] if report.kl else report.final_kl:.6g} -> {report.final_kl:.6g} "
          f"({100 * ratio:.3g}% of start); CSVs in {out}")
    return EXIT_OK


def cmd_synth_corpus(args):
    speakers = {"comb": ("a", "b"), "glide": ("up", "down")}[args.family]
    out = Path(args.out_dir)
    for side, speaker in enumerate(speakers):
        d = out / f"speaker_{speaker}"
        d.mkdir(parents=True, exist_ok=True)
        utts = synthetic.speaker_utterances(args.family, speaker, args.utterances, args.duration,
                                            seed=args.seed * 2 + side)
        for i, sig in enumerate(utts):
            write_wav(d / f"utt{i:02d}.wav", sig)
    print(f"wrote {args.utterances} utterances for speakers {speakers} under {out}")
    return EXIT_OK


# -- parser ------------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="convae",
        description="Train non-negative autoencoders on clean speech and separate two-speaker mixtures.",
        epilog="exit codes: 0 success, 1 configuration error, 2 data error, 3 numerical failure",
    )
    parser.add_argument("--version", action="version", version=f"convae {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry (repeatable)")

    p = sub.add_parser("train", help="train one autoencoder on clean WAV files")
    with_config(p)
    p.add_argument("--wav", nargs="+")
    p.add_argument("--wav-dir")
    p.add_argument("--out", required=True, help="model file to write")
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("separate", help="separate a two-source mixture WAV")
    with_config(p)
    p.add_argument("--model1", required=True)
    p.add_argument("--model2", required=True)
    p.add_argument("--mixture", required=True)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_separate)

    p = sub.add_parser("evaluate", help="BSS_eval scores of estimates against references")
    p.add_argument("--estimates", nargs="+", required=True)
    p.add_argument("--references", nargs="+", required=True)
    p.add_argument("--out", help="CSV path (default: stdout)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="full train/separate/score protocol over seeded mixtures")
    with_config(p)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("toy-demo", help="train a CCAE on the diagonal-stripe toy image and dump CSVs")
    with_config(p)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--log-every", type=int, default=0)
    p.set_defaults(func=cmd_toy_demo)

    p = sub.add_parser("synth-corpus", help="write a two-speaker synthetic WAV corpus")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--family", choices=("comb", "glide"), default="glide")
    p.add_argument("--utterances", type=int, default=7)
    p.add_argument("--duration", type=float, default=1.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_corpus)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (TrainingError, SeparationError, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC
    except (WavError, ModelFileError, OSError, ValueError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
