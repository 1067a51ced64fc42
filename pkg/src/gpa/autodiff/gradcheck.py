from __future__ import annotations

import numpy as np

from gpa.autodiff.tensor import Tape, Tensor, backward, no_grad


def numeric_grad(fn, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn`` (Tensor -> Tensor) at ``x``."""
    x = np.array(x, dtype=np.float64)
    out = np.zeros_like(x)
    flat = x.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            fp = fn(Tensor(x)).item()
            flat[i] = old - h
            fm = fn(Tensor(x)).item()
            flat[i] = old
            out.reshape(-1)[i] = (fp - fm) / (2 * h)
    return out


def analytic_grad(fn, x: np.ndarray) -> np.ndarray:
    with Tape():
        t = Tensor(np.array(x, dtype=np.float64), requires_grad=True)
        (g,) = backward(fn(t), [t])
    return g


def grad_check(fn, x, h: float = 1e-5, exclude=None) -> float:
    """Largest ``|a - b| / max(1, |a|, |b|)`` between backward and central
    differences. ``exclude`` masks coordinates (e.g. relu kinks) out of the
    comparison."""
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    a = analytic_grad(fn, x)
    b = numeric_grad(fn, x, h)
    err = np.abs(a - b) / np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    if exclude is not None:
        err = np.where(np.asarray(exclude, dtype=bool), 0.0, err)
    return float(err.max()) if err.size else 0.0


def grad_check_params(loss_fn, params, h: float = 1e-5, max_coords: int | None = None,
                      seed: int = 0) -> float:
    """:func:`grad_check` over every value of a ParamSet.

    ``loss_fn(params)`` must build a scalar Tensor. With ``max_coords`` a
    seeded random subset of coordinates is compared.
    """
    with Tape():
        a = backward(loss_fn(params), params)
    analytic = np.concatenate([np.ravel(a[k]) for k in params.names()])
    flat = params.flat()
    coords = np.arange(flat.size)
    if max_coords is not None and max_coords < flat.size:
        coords = np.sort(np.random.default_rng(seed).choice(flat.size, max_coords, replace=False))
    worst = 0.0
    with no_grad():
        for i in coords:
            up, down = flat.copy(), flat.copy()
            up[i] += h
            down[i] -= h
            num = (loss_fn(params.with_flat(up)).item()
                   - loss_fn(params.with_flat(down)).item()) / (2 * h)
            worst = max(worst, abs(analytic[i] - num) / max(1.0, abs(analytic[i]), abs(num)))
    return worst
