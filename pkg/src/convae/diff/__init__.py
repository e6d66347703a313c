"""Small reverse-mode differentiation engine over numpy arrays."""

from .gradcheck import check_gradients, numerical_gradient, relative_error
from .ops import (
    KL_FLOOR,
    causal_conv_time,
    causal_conv_time_transposed_accumulate,
    concat,
    einsum,
    kl_divergence,
    l1,
    lstm_cell_step,
    lstm_gates_step,
    matmul,
    sigmoid,
    softplus,
    softplus_np,
    stack,
    tanh,
)
from .optim import (
    OptimizerState,
    RMSPropConfig,
    clip_global_norm,
    rmsprop_step,
    xavier_init,
)
from .tensor import NonFiniteError, Tensor, backward

__all__ = [
    "KL_FLOOR",
    "NonFiniteError",
    "OptimizerState",
    "RMSPropConfig",
    "Tensor",
    "backward",
    "causal_conv_time",
    "causal_conv_time_transposed_accumulate",
    "check_gradients",
    "clip_global_norm",
    "concat",
    "einsum",
    "kl_divergence",
    "l1",
    "lstm_cell_step",
    "lstm_gates_step",
    "matmul",
    "numerical_gradient",
    "relative_error",
    "rmsprop_step",
    "sigmoid",
    "softplus",
    "softplus_np",
    "stack",
    "tanh",
    "xavier_init",
]
