from __future__ import annotations

import numpy as np

from gpa.autodiff.params import ParamSet
from gpa.errors import NonFiniteGradient, ShapeError


def _check(params, grads):
    for k, t in params.items():
        g = grads[k]
        if np.shape(g) != t.shape:
            raise ShapeError(f"gradient for {k}: {np.shape(g)} vs {t.shape}")
        if not np.isfinite(g).all():
            raise NonFiniteGradient(f"non-finite gradient for {k}")


def sgd_step(params: ParamSet, grads: dict, lr: float) -> ParamSet:
    """Plain gradient descent ``w - lr * g``; returns a new ParamSet."""
    _check(params, grads)
    return params.axpy(-lr, grads)


class Adam:
    """Adam with bias correction; state is kept per parameter name."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m, self.v, self.t = {}, {}, 0

    def step(self, params: ParamSet, grads: dict) -> ParamSet:
        _check(params, grads)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        out = {}
        for k, p in params.items():
            g = np.asarray(grads[k], dtype=np.float64)
            m = self.m.get(k, 0.0) * b1 + (1 - b1) * g
            v = self.v.get(k, 0.0) * b2 + (1 - b2) * g * g
            self.m[k], self.v[k] = m, v
            mhat = m / (1 - b1 ** self.t)
            vhat = v / (1 - b2 ** self.t)
            out[k] = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)
        return ParamSet(out)

    def state_dict(self):
        return {"lr": self.lr, "t": self.t}


def adam_step(params, grads, state: Adam):
    return state.step(params, grads)
