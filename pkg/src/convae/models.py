"""Non-negative autoencoders of magnitude spectrograms.

Three encoder families share a softplus-squashed decoder:

* ``FF``   -- one matrix per layer, ``H = g(We X)``, ``Xhat = g(Wd H)``.
* ``CCAE`` -- causal time convolutions with M x T filters in both layers.
* ``RCAE`` -- K parallel recurrent nets (LSTM by default) whose hidden
  states are summed per net and squashed into one activation row each,
  followed by the convolutional decoder.

``g`` is softplus throughout, so codes and reconstructions are
non-negative for any weights.
"""

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diff
from .diff import Tensor, ops
from .dsp import MagnitudeSpectrogram

log = logging.getLogger(__name__)

VARIANTS = ("FF", "CCAE", "RCAE")
RNN_CELLS = ("lstm", "vanilla")
FORGET_BIAS = 1.0


class TrainingError(RuntimeError):
    """Training hit a non-finite loss or gradient."""


@dataclass
class ModelConfig:
    variant: str = "CCAE"
    num_components: int = 20
    conv_depth: int = 8
    bins: int = 513
    rnn_hidden: int = 8
    rnn_cell: str = "lstm"
    sparsity_weight: float = 1e-4
    iterations: int = 2000
    optimizer: diff.RMSPropConfig = field(default_factory=diff.RMSPropConfig)
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = diff.RMSPropConfig(**self.optimizer)
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.rnn_cell not in RNN_CELLS:
            raise ValueError(f"rnn_cell must be one of {RNN_CELLS}, got {self.rnn_cell!r}")
        if self.num_components < 1 or self.bins < 1:
            raise ValueError("num_components and bins must be >= 1")
        if self.variant == "FF":
            self.conv_depth = 1
        if self.conv_depth < 1:
            raise ValueError("conv_depth must be >= 1")
        if self.variant == "RCAE" and self.rnn_hidden < 1:
            raise ValueError("RCAE needs rnn_hidden >= 1")
        if self.sparsity_weight < 0:
            raise ValueError("sparsity_weight must be >= 0")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


@dataclass
class ModelParams:
    """Named weight arrays in a fixed order (see :func:`param_shapes`)."""

    tensors: dict

    def names(self):
        return list(self.tensors)

    def copy(self):
        return ModelParams({k: v.copy() for k, v in self.tensors.items()})

    def __getitem__(self, name):
        return self.tensors[name]


@dataclass
class ActivationCode:
    values: np.ndarray


@dataclass
class TrainReport:
    kl: list
    sparsity: list
    wall_time: float
    params: ModelParams
    final_kl: float
    final_sparsity: float

    @property
    def loss(self):
        return [k + s for k, s in zip(self.kl, self.sparsity)]


def param_shapes(config):
    """Ordered ``{name: shape}`` for a config."""
    k, m, t = config.num_components, config.bins, config.conv_depth
    if config.variant == "FF":
        return {"encoder": (k, m), "decoder": (m, k)}
    if config.variant == "CCAE":
        return {"encoder": (k, m, t), "decoder": (k, t, m)}
    hidden = config.rnn_hidden
    gates = 4 * hidden if config.rnn_cell == "lstm" else hidden
    shapes = {"rnn_input": (k, gates, m), "rnn_recurrent": (k, gates, hidden)}
    if config.rnn_cell == "lstm":
        shapes["rnn_bias"] = (k, gates)
    shapes["decoder"] = (k, t, m)
    return shapes


def _fans(name, config):
    k, m, t = config.num_components, config.bins, config.conv_depth
    gates = 4 * config.rnn_hidden if config.rnn_cell == "lstm" else config.rnn_hidden
    return {
        "encoder": (m * t, k * t),
        "decoder": (k * t, m * t),
        "rnn_input": (m, gates),
        "rnn_recurrent": (config.rnn_hidden, gates),
    }[name]


def init_params(config):
    """Xavier-uniform weights; every tensor draws from its own child seed."""
    shapes = param_shapes(config)
    children = np.random.SeedSequence(config.seed).spawn(len(shapes))
    tensors = {}
    for (name, shape), child in zip(shapes.items(), children):
        if name == "rnn_bias":
            bias = np.zeros(shape)
            h = config.rnn_hidden
            bias[:, h : 2 * h] = FORGET_BIAS
            tensors[name] = bias
        else:
            fan_in, fan_out = _fans(name, config)
            tensors[name] = diff.xavier_init(shape, fan_in, fan_out, child)
    return ModelParams(tensors)


def check_params(params, config):
    expected = param_shapes(config)
    if list(params.tensors) != list(expected):
        raise ValueError(f"parameter names {list(params.tensors)} do not match {list(expected)}")
    for name, shape in expected.items():
        if params.tensors[name].shape != tuple(shape):
            raise ValueError(f"{name}: shape {params.tensors[name].shape}, expected {tuple(shape)}")


# -- graph builders -------------------------------------------------------------------
# These take Tensors so the same code serves training (weights need grads)
# and separation (inputs need grads).

def encode_graph(weights, config, x, positions=None):
    if config.variant == "FF":
        return ops.softplus(ops.matmul(weights["encoder"], x))
    if config.variant == "CCAE":
        return ops.softplus(ops.causal_conv_time(x, weights["encoder"], positions))
    return ops.softplus(_recurrent_sums(weights, config, x, positions))


def _recurrent_sums(weights, config, x, positions):
    """Per-net hidden-state sums, K x N, before the squashing nonlinearity."""
    n_frames = x.shape[1]
    if positions is None:
        positions = np.arange(n_frames)
    k, hidden = config.num_components, config.rnn_hidden
    projected = ops.einsum("kgm,mn->kgn", weights["rnn_input"], x)
    zeros = Tensor(np.zeros((k, hidden)))
    state = cell = zeros
    sums = []
    for t in range(n_frames):
        if positions[t] == 0:
            state = cell = zeros
        step_input = projected[:, :, t]
        if config.rnn_cell == "lstm":
            state, cell = ops.lstm_gates_step(step_input, state, cell, weights["rnn_recurrent"], weights["rnn_bias"])
        else:
            state = ops.tanh(step_input + ops.einsum("kgh,kh->kg", weights["rnn_recurrent"], state))
        sums.append(ops.sum(state, axis=1))
    return ops.stack(sums, axis=1)


def decode_graph(weights, config, h, positions=None):
    if config.variant == "FF":
        return ops.softplus(ops.matmul(weights["decoder"], h))
    return ops.softplus(ops.causal_conv_time_transposed_accumulate(h, weights["decoder"], positions))


def forward_graph(weights, config, x, positions=None):
    h = encode_graph(weights, config, x, positions)
    return decode_graph(weights, config, h, positions), h


def loss_graph(x, xhat, h, sparsity_weight):
    """KL reconstruction term plus ``sparsity_weight * sum|H|``; returns (total, kl, penalty)."""
    kl = ops.kl_divergence(x, xhat)
    if sparsity_weight == 0:
        return kl, kl, None
    penalty = ops.l1(h) * sparsity_weight
    return kl + penalty, kl, penalty


def _as_tensors(params):
    return {name: Tensor(v) for name, v in params.tensors.items()}


def _values(x):
    return x.values if isinstance(x, MagnitudeSpectrogram) else np.asarray(x, dtype=np.float64)


def _check_input(x, config, rows):
    if x.ndim != 2 or x.shape[0] != rows:
        raise ValueError(f"expected {rows} rows, got array of shape {x.shape}")


# -- array-level API ----------------------------------------------------------------------

def encode(params, config, x, positions=None):
    x = _values(x)
    _check_input(x, config, config.bins)
    return ActivationCode(encode_graph(_as_tensors(params), config, Tensor(x), positions).data)


def decode(params, config, h, positions=None):
    h = h.values if isinstance(h, ActivationCode) else np.asarray(h, dtype=np.float64)
    _check_input(h, config, config.num_components)
    return decode_graph(_as_tensors(params), config, Tensor(h), positions).data


def forward(params, config, x, positions=None):
    """``(Xhat, H)`` as arrays."""
    x = _values(x)
    _check_input(x, config, config.bins)
    xhat, h = forward_graph(_as_tensors(params), config, Tensor(x), positions)
    return xhat.data, h.data


def loss(x, xhat, h, sparsity_weight):
    total, _, _ = loss_graph(_values(x), Tensor(xhat), Tensor(h), sparsity_weight)
    return total.item()


def concat_corpus(corpus):
    """Join spectrograms along time; returns (matrix, per-frame segment positions)."""
    arrays = [_values(c) for c in corpus]
    if not arrays:
        raise ValueError("training corpus is empty")
    rows = {a.shape[0] for a in arrays}
    if len(rows) != 1:
        raise ValueError(f"corpus spectrograms disagree on bin count: {sorted(rows)}")
    positions = np.concatenate([np.arange(a.shape[1]) for a in arrays])
    return np.concatenate(arrays, axis=1), positions


def train(config, corpus, log_every=0):
    """Full-batch RMSProp on the KL + L1 objective.

    The corpus spectrograms are concatenated along time with convolution
    (and recurrent) history reset at each boundary.
    """
    x, positions = concat_corpus(corpus)
    _check_input(x, config, config.bins)
    params = init_params(config)
    weights = {name: Tensor(v, requires_grad=True, name=name) for name, v in params.tensors.items()}
    order = list(weights.values())
    state = diff.OptimizerState.for_params(order, config.optimizer)
    kl_trace, sparsity_trace = [], []
    start = time.perf_counter()
    for it in range(config.iterations):
        try:
            xhat, h = forward_graph(weights, config, Tensor(x), positions)
            total, kl, penalty = loss_graph(x, xhat, h, config.sparsity_weight)
            grads = diff.backward(total, order)
            grads, _ = diff.clip_global_norm(grads, config.optimizer.clip_norm)
            diff.rmsprop_step(order, grads, state)
        except FloatingPointError as exc:
            raise TrainingError(f"non-finite value at training iteration {it}: {exc}") from exc
        kl_trace.append(kl.item())
        sparsity_trace.append(penalty.item() if penalty is not None else 0.0)
        if log_every and it % log_every == 0:
            log.info("iter %d kl %.6g sparsity %.6g", it, kl_trace[-1], sparsity_trace[-1])
    try:
        xhat, h = forward_graph(weights, config, Tensor(x), positions)
        _, kl, penalty = loss_graph(x, xhat, h, config.sparsity_weight)
    except FloatingPointError as exc:
        raise TrainingError(f"non-finite value after training iteration {config.iterations}: {exc}") from exc
    final = ModelParams({name: t.data.copy() for name, t in weights.items()})
    return final, TrainReport(
        kl=kl_trace,
        sparsity=sparsity_trace,
        wall_time=time.perf_counter() - start,
        params=final,
        final_kl=kl.item(),
        final_sparsity=penalty.item() if penalty is not None else 0.0,
    )


# -- persistence-neutral manifest ----------------------------------------------------------

def to_manifest(params, config):
    """``(manifest, arrays)``: a JSON-able description plus tensors in manifest order."""
    check_params(params, config)
    entries = [{"name": name, "shape": list(arr.shape)} for name, arr in params.tensors.items()]
    return {"config": config.to_dict(), "tensors": entries}, [params.tensors[e["name"]] for e in entries]


def from_manifest(manifest, arrays):
    config = ModelConfig.from_dict(dict(manifest["config"]))
    tensors = {}
    for entry, arr in zip(manifest["tensors"], arrays):
        if tuple(arr.shape) != tuple(entry["shape"]):
            raise ValueError(f"{entry['name']}: array shape {arr.shape} != manifest {entry['shape']}")
        tensors[entry["name"]] = np.asarray(arr, dtype=np.float64)
    params = ModelParams(tensors)
    check_params(params, config)
    return params, config


# -- toy data ---------------------------------------------------------------------------------

def make_toy_pattern(height=40, width=350, stripe_period=70, seed=0):
    """Spectrogram-like image of repeating rising and falling diagonals.

    Each period holds one rising stroke followed by one falling stroke, both
    spanning a little under half the period. ``seed`` picks the rows the
    strokes start from. Values lie in [0, 1] with peak 1.
    """
    if stripe_period < 2:
        raise ValueError("stripe_period must be >= 2")
    stroke = max(1, min(stripe_period // 2 - 1, height))
    rng = np.random.default_rng(seed)
    low, high = rng.integers(0, height - stroke + 1, size=2)
    motif = np.zeros((height, stripe_period))
    for j in range(stroke):
        motif[low + j, j] = 1.0
        if stripe_period // 2 + j < stripe_period:
            motif[high + stroke - 1 - j, stripe_period // 2 + j] = 1.0
    reps = -(-width // stripe_period)
    image = np.tile(motif, (1, reps))[:, :width]
    return MagnitudeSpectrogram.from_array(image)
