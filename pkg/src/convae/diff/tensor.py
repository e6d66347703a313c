"""Dense tensors that record the operations applied to them.

Every op in :mod:`convae.diff.ops` produces a new :class:`Tensor` whose
``_backward`` closure knows how to push the output gradient back onto its
parents. :func:`backward` walks the recorded graph in reverse topological
order.
"""

import numpy as np


class NonFiniteError(FloatingPointError):
    """Raised when an op produces NaN/Inf in a value or gradient."""


class Tensor:
    """A float64 array plus the bookkeeping needed for reverse-mode gradients.

    Parameters
    ----------
    data : array_like
        Values; copied to a float64 ndarray.
    requires_grad : bool
        Leaf tensors with ``requires_grad=True`` are the parameters a
        backward pass populates.
    name : str, optional
        Shows up in error messages.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad=False, name=None, _parents=(), _op="leaf"):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad = None
        self.requires_grad = requires_grad
        self.name = name
        self.op = _op
        self._parents = _parents
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(op={self.op}, shape={self.shape})"

    # Operator sugar; the implementations live in ops.
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.mul(self, -1.0)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None):
        from . import ops
        return ops.sum(self, axis)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr, what, node):
    if not np.all(np.isfinite(arr)):
        label = node.name or node.op
        raise NonFiniteError(f"non-finite {what} at node '{label}' (shape {arr.shape})")


def make_node(data, parents, backward, op):
    """Wrap an op result; record the graph edge only if a parent needs it."""
    parents = tuple(parents)
    needs = any(p.requires_grad for p in parents)
    out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), _op=op)
    _check_finite(out.data, "value", out)
    if needs:
        out._backward = backward
    return out


def topological_order(root):
    """Nodes reachable from ``root`` that take part in differentiation."""
    order = []
    visited = set()
    # iterative DFS; LSTM unrolls are far deeper than the recursion limit
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if parent.requires_grad and id(parent) not in visited:
                stack.append((parent, False))
    return order


def backward(loss, params=None):
    """Populate ``.grad`` on every node that leads to the scalar ``loss``.

    Returns the gradients for ``params`` (in order) when given; parameters
    the loss does not depend on get zeros.
    """
    if loss.data.size != 1:
        raise ValueError(f"backward needs a scalar loss, got shape {loss.shape}")
    order = topological_order(loss)
    for node in order:
        node.grad = None
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node.grad is None:
            continue
        _check_finite(node.grad, "gradient", node)
        if node._backward is not None:
            node._backward(node.grad)
    if params is None:
        return None
    return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in params]


def accumulate(tensor, grad):
    """Add ``grad`` into ``tensor.grad`` (reduced to the tensor's shape)."""
    if not tensor.requires_grad:
        return
    grad = unbroadcast(grad, tensor.shape)
    if tensor.grad is None:
        tensor.grad = np.array(grad, dtype=np.float64, copy=True)
    else:
        tensor.grad += grad


def unbroadcast(grad, shape):
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad
