"""Dense double-precision tensors with tape-based reverse-mode gradients."""
from __future__ import annotations

import threading
from contextlib import contextmanager

import numpy as np

from gpa.errors import NonScalarLoss

_local = threading.local()


class Tape:
    """Append-only record of operations, in execution (topological) order.

    Usable as a context manager to give a computation its own tape; the
    default tape is per-thread.
    """

    def __init__(self):
        self.nodes = []

    def record(self, out, inputs, backward_fn):
        out._node = len(self.nodes)
        self.nodes.append((out, inputs, backward_fn))

    def clear(self):
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def __enter__(self):
        _stack().append(self)
        return self

    def __exit__(self, *exc):
        _stack().pop()
        self.clear()


def _stack():
    st = getattr(_local, "stack", None)
    if st is None:
        st = _local.stack = [Tape()]
        _local.enabled = True
    return st


def current_tape() -> Tape:
    return _stack()[-1]


def grad_enabled() -> bool:
    _stack()
    return _local.enabled


@contextmanager
def no_grad():
    _stack()
    prev = _local.enabled
    _local.enabled = False
    try:
        yield
    finally:
        _local.enabled = prev


class Tensor:
    __slots__ = ("data", "requires_grad", "_node")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def T(self):
        from gpa.autodiff import ops
        return ops.transpose(self)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor({self.data!r}{flag})"

    def __add__(self, other):
        from gpa.autodiff import ops
        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from gpa.autodiff import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from gpa.autodiff import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from gpa.autodiff import ops
        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, c):
        from gpa.autodiff import ops
        return ops.scale(self, 1.0 / c)

    def __neg__(self):
        from gpa.autodiff import ops
        return ops.scale(self, -1.0)

    def __matmul__(self, other):
        from gpa.autodiff import ops
        return ops.matmul(self, other)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_result(data, inputs, backward_fn) -> Tensor:
    """Wrap ``data`` and, if any input needs a gradient, record it on the tape."""
    out = Tensor(data)
    if grad_enabled() and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        current_tape().record(out, inputs, backward_fn)
    return out


def backward(loss: Tensor, params=None, tape: Tape | None = None):
    """Reverse sweep from scalar ``loss``.

    ``params`` may be a ParamSet, a mapping of name to Tensor, or a sequence
    of Tensors; the result mirrors it (dict or list of arrays). Parameters
    the loss does not depend on get zero gradients. The tape is cleared.
    """
    tape = tape or current_tape()
    if loss.data.size != 1:
        tape.clear()
        raise NonScalarLoss(f"loss has shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    for out, inputs, fn in reversed(tape.nodes):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            k = id(inp)
            if k in grads:
                grads[k] = grads[k] + gi
            else:
                grads[k] = gi
    tape.clear()
    if params is None:
        return grads
    if hasattr(params, "items"):
        return {name: _grad_for(grads, t) for name, t in params.items()}
    return [_grad_for(grads, t) for t in params]


def _grad_for(grads, t):
    g = grads.get(id(t))
    if g is None:
        return np.zeros_like(t.data)
    return np.asarray(g, dtype=np.float64).reshape(t.data.shape)
