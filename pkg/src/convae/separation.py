"""Two-source separation by optimizing the inputs of frozen autoencoders.

With trained weights held fixed, latent inputs ``V_i`` are tuned so that
``Ae(X_1) + Ae(X_2)`` explains the mixture magnitude under the KL
divergence, where ``X_i = softplus(V_i)`` (or, in projected mode, ``X_i`` is
optimized directly and clipped at zero). The resulting spectra drive ratio
masks on the complex mixture.
"""

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from . import diff
from .diff import Tensor, ops
from .dsp import masked_resynthesis, ratio_masks, split
from .models import check_params, forward_graph

log = logging.getLogger(__name__)

INIT_STRATEGIES = ("half-mixture", "random-positive")
PARAMETERIZATIONS = ("softplus-reparam", "projected")
MASK_SOURCES = ("output", "input")
INIT_FLOOR = 1e-6


class SeparationError(RuntimeError):
    """The separation objective went non-finite."""


@dataclass
class SeparationConfig:
    iterations: int = 500
    optimizer: diff.RMSPropConfig = field(default_factory=diff.RMSPropConfig)
    parameterization: str = "softplus-reparam"
    init: str = "half-mixture"
    mask_source: str = "output"
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.optimizer, dict):
            self.optimizer = diff.RMSPropConfig(**self.optimizer)
        if self.iterations < 1:
            raise ValueError("separation needs iterations >= 1")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"parameterization must be one of {PARAMETERIZATIONS}")
        if self.init not in INIT_STRATEGIES:
            raise ValueError(f"init must be one of {INIT_STRATEGIES}")
        if self.mask_source not in MASK_SOURCES:
            raise ValueError(f"mask_source must be one of {MASK_SOURCES}")

    def to_dict(self):
        return asdict(self)


@dataclass
class SeparationResult:
    inputs: list       # optimized X_i, M x N each
    outputs: list      # Ae(X_i | theta_i)
    masks: list
    signals: list      # AudioSignal per source
    loss: list


def softplus_inverse(y):
    """Inverse of softplus for y > 0."""
    y = np.asarray(y, dtype=np.float64)
    return y + np.log(-np.expm1(-y))


def init_inputs(mixture_mag, num_sources=2, strategy="half-mixture", seed=0, parameterization="softplus-reparam"):
    """Starting free variables, one M x N array per source.

    ``half-mixture`` starts every source at ``max(mixture / n, 1e-6)``;
    ``random-positive`` draws Xavier-scaled uniform latents. In softplus
    mode the returned arrays are the latents ``V_i``; in projected mode they
    are the inputs themselves.
    """
    mag = getattr(mixture_mag, "values", mixture_mag)
    mag = np.asarray(mag, dtype=np.float64)
    if strategy == "half-mixture":
        start = np.maximum(mag / num_sources, INIT_FLOOR)
        free = softplus_inverse(start) if parameterization == "softplus-reparam" else start
        return [free.copy() for _ in range(num_sources)]
    if strategy == "random-positive":
        children = np.random.SeedSequence(seed).spawn(num_sources)
        rows, cols = mag.shape
        latents = [diff.xavier_init(mag.shape, rows, cols, child) for child in children]
        if parameterization == "softplus-reparam":
            return latents
        return [ops.softplus_np(v) for v in latents]
    raise ValueError(f"unknown init strategy {strategy!r}")


def _inputs_of(free, parameterization):
    if parameterization == "softplus-reparam":
        return ops.softplus(free)
    return free


def separate(model1, model2, mixture, cfg=None):
    """Separate a two-source mixture with two trained autoencoders.

    ``model1``/``model2`` are ``(ModelParams, ModelConfig)`` pairs and
    ``mixture`` a :class:`~convae.dsp.ComplexSpectrogram`. Model weights are
    never modified.
    """
    cfg = cfg or SeparationConfig()
    mag, _ = split(mixture)
    models = [model1, model2]
    for i, (params, config) in enumerate(models):
        check_params(params, config)
        if config.bins != mag.shape[0]:
            raise ValueError(f"model {i + 1} expects {config.bins} bins, mixture has {mag.shape[0]}")

    frozen = [({n: Tensor(v) for n, v in p.tensors.items()}, c) for p, c in models]
    free = [Tensor(v, requires_grad=True, name=f"source{i + 1}")
            for i, v in enumerate(init_inputs(mag, 2, cfg.init, cfg.seed, cfg.parameterization))]
    state = diff.OptimizerState.for_params(free, cfg.optimizer)
    target = mag.values
    trace = []
    for it in range(cfg.iterations):
        try:
            outs = [forward_graph(w, c, _inputs_of(v, cfg.parameterization))[0] for (w, c), v in zip(frozen, free)]
            kl = ops.kl_divergence(target, outs[0] + outs[1])
            grads = diff.backward(kl, free)
            grads, _ = diff.clip_global_norm(grads, cfg.optimizer.clip_norm)
            diff.rmsprop_step(free, grads, state)
        except FloatingPointError as exc:
            raise SeparationError(f"non-finite value at separation iteration {it}: {exc}") from exc
        if cfg.parameterization == "projected":
            for v in free:
                np.maximum(v.data, 0.0, out=v.data)
        trace.append(kl.item())

    inputs = [_inputs_of(Tensor(v.data), cfg.parameterization).data for v in free]
    outputs = [forward_graph(w, c, Tensor(x))[0].data for (w, c), x in zip(frozen, inputs)]
    basis = outputs if cfg.mask_source == "output" else inputs
    masks = ratio_masks(basis)
    signals = masked_resynthesis(basis, mixture)
    return SeparationResult(inputs=inputs, outputs=outputs, masks=masks, signals=signals, loss=trace)
