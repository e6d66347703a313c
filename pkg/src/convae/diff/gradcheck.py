"""Central finite-difference gradient checking."""

import numpy as np

from .tensor import backward


def numerical_gradient(loss_fn, param, step=1e-5):
    """Central differences of ``loss_fn()`` with respect to ``param.data``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        plus = loss_fn().item()
        flat[i] = orig - step
        minus = loss_fn().item()
        flat[i] = orig
        out[i] = (plus - minus) / (2.0 * step)
    return grad


def relative_error(analytic, numeric, abs_floor=1e-8):
    """Elementwise relative error; tiny entries are compared absolutely."""
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    diff = np.abs(analytic - numeric)
    return np.where(scale < abs_floor, diff, diff / np.maximum(scale, abs_floor))


def check_gradients(loss_fn, params, step=1e-5, abs_floor=1e-8):
    """Max relative error between backprop and finite differences per parameter.

    ``loss_fn`` rebuilds the graph from the current parameter values and
    returns a scalar Tensor.
    """
    analytic = backward(loss_fn(), params)
    errors = {}
    for i, (p, a) in enumerate(zip(params, analytic)):
        numeric = numerical_gradient(loss_fn, p, step)
        errors[p.name or f"param{i}"] = float(np.max(relative_error(a, numeric, abs_floor)))
    return errors
