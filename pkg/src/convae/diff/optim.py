"""RMSProp with heavy-ball momentum, Xavier initialization, gradient clipping."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RMSPropConfig:
    learning_rate: float = 0.001
    momentum: float = 0.7
    decay: float = 0.9
    epsilon: float = 1e-8
    # global L2 norm cap; None disables clipping
    clip_norm: float | None = 100.0


@dataclass
class OptimizerState:
    """Running squared-gradient averages ``r`` and momentum buffers ``m``."""

    config: RMSPropConfig = field(default_factory=RMSPropConfig)
    r: list = field(default_factory=list)
    m: list = field(default_factory=list)
    steps: int = 0

    @classmethod
    def for_params(cls, params, config=None):
        config = config or RMSPropConfig()
        shapes = [p.shape for p in params]
        return cls(config, [np.zeros(s) for s in shapes], [np.zeros(s) for s in shapes])


def clip_global_norm(grads, max_norm):
    """Scale all gradients together so their joint L2 norm is at most ``max_norm``."""
    if max_norm is None:
        return grads, None
    norm = float(np.sqrt(np.sum([np.sum(g * g) for g in grads])))
    if norm > max_norm:
        scale = max_norm / norm
        grads = [g * scale for g in grads]
    return grads, norm


def rmsprop_step(params, grads, state):
    """Update ``params`` in place.

    r <- decay * r + (1 - decay) * g**2
    m <- momentum * m + g / sqrt(r + eps)
    theta <- theta - lr * m

    ``params`` are Tensors or ndarrays; arrays are modified in place.
    Clipping is the caller's business (see :func:`clip_global_norm`).
    """
    cfg = state.config
    if len(params) != len(grads) or len(params) != len(state.r):
        raise ValueError("params, grads and optimizer state must have the same length")
    for i, (p, g) in enumerate(zip(params, grads)):
        values = p if isinstance(p, np.ndarray) else p.data
        if values.shape != g.shape or state.r[i].shape != g.shape:
            raise ValueError(f"parameter {i}: shape {values.shape} vs gradient {g.shape}")
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient for parameter {i}")
        r = state.r[i]
        r *= cfg.decay
        r += (1.0 - cfg.decay) * g * g
        m = state.m[i]
        m *= cfg.momentum
        m += g / np.sqrt(r + cfg.epsilon)
        values -= cfg.learning_rate * m
    state.steps += 1
    return params, state


def xavier_init(shape, fan_in, fan_out, rng_seed):
    """Uniform samples on +/- sqrt(6 / (fan_in + fan_out)).

    ``rng_seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    if fan_in <= 0 or fan_out <= 0:
        raise ValueError("fan_in and fan_out must be positive")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(rng_seed)
    return rng.uniform(-bound, bound, size=shape)
