"""Central finite-difference gradient checks for :mod:`labelcode.tensornet`."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensornet import Tensor


def numeric_grad(loss_fn: Callable[[], float], param: Tensor, h: float = 1e-4) -> np.ndarray:
    """``(f(p + h e_k) - f(p - h e_k)) / 2h`` for every entry of ``param``."""
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    g = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        f_plus = loss_fn()
        flat[k] = orig - h
        f_minus = loss_fn()
        flat[k] = orig
        g[k] = (f_plus - f_minus) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """``||a - n|| / max(||a||, ||n||)``; 0 when both vanish."""
    scale = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if scale == 0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / scale)


def check_gradients(build_loss: Callable[[], Tensor], params: list[Tensor], h: float = 1e-4) -> dict[str, float]:
    """Relative error between backprop and finite differences, per parameter.

    ``build_loss`` must rebuild the graph from the current parameter values.
    """
    for p in params:
        p.grad = None
    build_loss().backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

    def value():
        return float(build_loss().data)

    out = {}
    for idx, (p, a) in enumerate(zip(params, analytic)):
        out[f"{idx}:{p.name or 'param'}"] = relative_error(a, numeric_grad(value, p, h))
    return out
