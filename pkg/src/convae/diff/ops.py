"""Differentiable operations on :class:`~convae.diff.tensor.Tensor`.

Only what the autoencoders need: elementwise arithmetic with simple
broadcasting, two-operand einsum, slicing/stacking, the smooth
nonlinearities, the two causal time convolutions and the losses.
"""

import numpy as np
from scipy.special import expit

from .tensor import Tensor, accumulate, as_tensor, make_node

KL_FLOOR = 1e-8


# -- elementwise ------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        accumulate(a, g)
        accumulate(b, g)

    return make_node(a.data + b.data, (a, b), _backward, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        accumulate(a, g)
        accumulate(b, -g)

    return make_node(a.data - b.data, (a, b), _backward, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def _backward(g):
        accumulate(a, g * b.data)
        accumulate(b, g * a.data)

    return make_node(a.data * b.data, (a, b), _backward, "mul")


def softplus_np(x):
    """log(1 + exp(x)) without overflow."""
    return np.logaddexp(0.0, x)


def softplus(x):
    x = as_tensor(x)

    def _backward(g):
        accumulate(x, g * expit(x.data))

    return make_node(softplus_np(x.data), (x,), _backward, "softplus")


def sigmoid(x):
    x = as_tensor(x)
    y = expit(x.data)

    def _backward(g):
        accumulate(x, g * y * (1.0 - y))

    return make_node(y, (x,), _backward, "sigmoid")


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)

    def _backward(g):
        accumulate(x, g * (1.0 - y * y))

    return make_node(y, (x,), _backward, "tanh")


# -- shape and contraction ----------------------------------------------------

def sum(x, axis=None):  # noqa: A001 - mirrors numpy naming
    x = as_tensor(x)

    def _backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        accumulate(x, np.broadcast_to(g, x.shape))

    return make_node(np.sum(x.data, axis=axis), (x,), _backward, "sum")


def einsum(subscripts, a, b):
    """Two-operand einsum, e.g. ``einsum("km,mn->kn", w, x)``.

    Every index of an operand must appear in the other operand or in the
    output, and no index may repeat inside one operand.
    """
    a, b = as_tensor(a), as_tensor(b)
    inputs, out = subscripts.replace(" ", "").split("->")
    sa, sb = inputs.split(",")

    def _backward(g):
        if a.requires_grad:
            accumulate(a, np.einsum(f"{out},{sb}->{sa}", g, b.data))
        if b.requires_grad:
            accumulate(b, np.einsum(f"{out},{sa}->{sb}", g, a.data))

    return make_node(np.einsum(subscripts, a.data, b.data), (a, b), _backward, "einsum")


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} @ {b.shape}")

    def _backward(g):
        if a.requires_grad:
            accumulate(a, g @ b.data.T)
        if b.requires_grad:
            accumulate(b, a.data.T @ g)

    return make_node(a.data @ b.data, (a, b), _backward, "matmul")


def getitem(x, index):
    x = as_tensor(x)

    def _backward(g):
        if not x.requires_grad:
            return
        # scatter straight into the parent; avoids a full-size temporary per slice
        if x.grad is None:
            x.grad = np.zeros_like(x.data)
        if basic:
            x.grad[index] += g
        else:
            np.add.at(x.grad, index, g)

    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(p, (int, np.integer, slice)) or p is Ellipsis for p in parts)

    return make_node(x.data[index], (x,), _backward, "getitem")


def stack(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]

    def _backward(g):
        for i, t in enumerate(tensors):
            accumulate(t, np.take(g, i, axis=axis))

    data = np.stack([t.data for t in tensors], axis=axis)
    return make_node(data, tensors, _backward, "stack")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def _backward(g):
        for t, piece in zip(tensors, np.split(g, bounds, axis=axis)):
            accumulate(t, piece)

    data = np.concatenate([t.data for t in tensors], axis=axis)
    return make_node(data, tensors, _backward, "concat")


# -- causal convolution along time ----------------------------------------------

def _validity(positions, n_frames, depth):
    """valid[k, t] is True when frame t may see frame t - k.

    ``positions[t]`` is the frame's index inside its own segment, so history
    never leaks across segment (utterance) boundaries.
    """
    if positions is None:
        positions = np.arange(n_frames)
    positions = np.asarray(positions)
    if positions.shape != (n_frames,):
        raise ValueError(f"positions must have length {n_frames}, got {positions.shape}")
    return positions[None, :] >= np.arange(depth)[:, None]


def causal_conv_time(x, filters, positions=None):
    """Encoder convolution: ``out[i, t] = sum_{j,k} filters[i, j, k] x[j, t - k]``.

    ``x`` is M x N, ``filters`` is K x M x T; frames before the start of the
    signal (or segment) count as zeros and the output keeps all N frames.
    """
    x, filters = as_tensor(x), as_tensor(filters)
    if x.ndim != 2 or filters.ndim != 3 or filters.shape[1] != x.shape[0]:
        raise ValueError(f"causal_conv_time shape mismatch: x {x.shape}, filters {filters.shape}")
    n_comp, _, depth = filters.shape
    n_frames = x.shape[1]
    valid = _validity(positions, n_frames, depth)
    xd = x.data
    # lag-major copy: strided K x M slices make matmul crawl
    wd = np.ascontiguousarray(np.moveaxis(filters.data, 2, 0))

    out = np.zeros((n_comp, n_frames))
    for k in range(min(depth, n_frames)):
        out[:, k:] += (wd[k] @ xd[:, : n_frames - k]) * valid[k, k:]

    def _backward(g):
        dx = np.zeros_like(xd) if x.requires_grad else None
        dw = np.zeros_like(wd) if filters.requires_grad else None
        for k in range(min(depth, n_frames)):
            gk = g[:, k:] * valid[k, k:]
            if dw is not None:
                dw[k] = gk @ xd[:, : n_frames - k].T
            if dx is not None:
                dx[:, : n_frames - k] += wd[k].T @ gk
        if dx is not None:
            accumulate(x, dx)
        if dw is not None:
            accumulate(filters, np.moveaxis(dw, 0, 2))

    return make_node(out, (x, filters), _backward, "causal_conv_time")


def causal_conv_time_transposed_accumulate(code, filters, positions=None):
    """Decoder convolution: ``out[f, t] = sum_{i,k} filters[i, k, f] code[i, t - k]``.

    ``code`` is K x N, ``filters`` is K x T x M; the K per-component
    contributions are summed into one M x N matrix.
    """
    code, filters = as_tensor(code), as_tensor(filters)
    if code.ndim != 2 or filters.ndim != 3 or filters.shape[0] != code.shape[0]:
        raise ValueError(
            f"causal_conv_time_transposed_accumulate shape mismatch: code {code.shape}, filters {filters.shape}"
        )
    _, depth, n_bins = filters.shape
    n_frames = code.shape[1]
    valid = _validity(positions, n_frames, depth)
    hd = code.data
    wd = np.ascontiguousarray(np.moveaxis(filters.data, 1, 0))

    out = np.zeros((n_bins, n_frames))
    for k in range(min(depth, n_frames)):
        out[:, k:] += (wd[k].T @ hd[:, : n_frames - k]) * valid[k, k:]

    def _backward(g):
        dh = np.zeros_like(hd) if code.requires_grad else None
        dw = np.zeros_like(wd) if filters.requires_grad else None
        for k in range(min(depth, n_frames)):
            gk = g[:, k:] * valid[k, k:]
            if dw is not None:
                dw[k] = hd[:, : n_frames - k] @ gk.T
            if dh is not None:
                dh[:, : n_frames - k] += wd[k] @ gk
        if dh is not None:
            accumulate(code, dh)
        if dw is not None:
            accumulate(filters, np.moveaxis(dw, 0, 1))

    return make_node(out, (code, filters), _backward, "causal_conv_time_transposed")


# -- losses -------------------------------------------------------------------------

def kl_divergence(x, xhat, floor=KL_FLOOR):
    """Generalized KL divergence ``sum(x log(x / xhat) - x + xhat)``.

    ``x`` is treated as data (no gradient). Entries with ``x == 0``
    contribute ``xhat`` only. ``xhat`` is floored at ``floor`` inside the log.
    """
    xd = x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float64)
    xhat = as_tensor(xhat)
    if xd.shape != xhat.shape:
        raise ValueError(f"kl_divergence shape mismatch: {xd.shape} vs {xhat.shape}")
    if np.any(xd < 0) or np.any(xhat.data < 0):
        raise ValueError("kl_divergence needs non-negative entries")
    xh = xhat.data
    clamped = np.maximum(xh, floor)
    positive = xd > 0
    log_term = np.zeros_like(xd)
    log_term[positive] = xd[positive] * np.log(xd[positive] / clamped[positive])
    value = np.sum(log_term - xd + xh)

    def _backward(g):
        ratio = np.where(xh > floor, xd / clamped, 0.0)
        accumulate(xhat, g * (1.0 - ratio))

    return make_node(np.array(value), (xhat,), _backward, "kl_divergence")


def l1(x):
    x = as_tensor(x)

    def _backward(g):
        accumulate(x, g * np.sign(x.data))

    return make_node(np.array(np.abs(x.data).sum()), (x,), _backward, "l1")


# -- recurrent cells ------------------------------------------------------------------

def lstm_gates_step(projected_input, h_prev, c_prev, recurrent, bias):
    """One LSTM step given the already-projected input ``U x_t``.

    Shapes carry a leading batch axis B (the K parallel encoders):
    ``projected_input`` B x 4H, ``h_prev``/``c_prev`` B x H,
    ``recurrent`` B x 4H x H, ``bias`` B x 4H. Gate blocks are ordered
    input, forget, output, candidate.
    """
    n_hidden = h_prev.shape[-1]
    pre = projected_input + einsum("bgh,bh->bg", recurrent, h_prev) + bias
    i = sigmoid(pre[:, :n_hidden])
    f = sigmoid(pre[:, n_hidden : 2 * n_hidden])
    o = sigmoid(pre[:, 2 * n_hidden : 3 * n_hidden])
    cand = tanh(pre[:, 3 * n_hidden :])
    c = f * c_prev + i * cand
    h = o * tanh(c)
    return h, c


def lstm_cell_step(x_t, h_prev, c_prev, weights):
    """Standard LSTM cell (forget gate, no peepholes).

    ``weights`` maps ``"input"`` (B x 4H x D), ``"recurrent"`` (B x 4H x H)
    and ``"bias"`` (B x 4H) to tensors; ``x_t`` is a D-vector shared by all
    B cells. Returns ``(h_t, c_t)``, each B x H.
    """
    x_t, h_prev, c_prev = as_tensor(x_t), as_tensor(h_prev), as_tensor(c_prev)
    u, w, b = (as_tensor(weights[key]) for key in ("input", "recurrent", "bias"))
    batch, gates, n_in = u.shape
    n_hidden = gates // 4
    if (
        gates != 4 * n_hidden
        or x_t.shape != (n_in,)
        or h_prev.shape != (batch, n_hidden)
        or c_prev.shape != (batch, n_hidden)
        or w.shape != (batch, gates, n_hidden)
        or b.shape != (batch, gates)
    ):
        raise ValueError(
            "lstm_cell_step shape mismatch: "
            f"x {x_t.shape}, h {h_prev.shape}, c {c_prev.shape}, U {u.shape}, W {w.shape}, b {b.shape}"
        )
    projected = einsum("bgd,d->bg", u, x_t)
    return lstm_gates_step(projected, h_prev, c_prev, w, b)
