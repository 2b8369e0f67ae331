"""Central finite differences, the independent oracle for ``backward``."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tensor, backward, zero_grads


def finite_diff(scalar_fn: Callable[[Tensor], "float | Tensor"], at: Tensor, eps: float = 1e-5) -> np.ndarray:
    """Estimate d scalar_fn / d at by central differences.

    ``at`` is perturbed in place one entry at a time and restored afterwards, so
    ``scalar_fn`` may close over other tensors that share it.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    flat = at.data.reshape(-1)
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = _as_float(scalar_fn(at))
        flat[i] = orig - eps
        f_minus = _as_float(scalar_fn(at))
        flat[i] = orig
        grad[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad.reshape(at.shape)


def _as_float(v) -> float:
    return v.item() if isinstance(v, Tensor) else float(v)


def rel_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-12) -> float:
    """Max abs difference normalised by the larger of the two gradients' max magnitude."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def check_gradients(loss_fn: Callable[[], Tensor], params: Iterable[tuple[str, Tensor]],
                    eps: float = 1e-5) -> dict[str, float]:
    """Compare backward() with finite_diff for every named parameter.

    Returns the relative error per parameter. Parameter ``.grad`` slots are
    cleared before and after.
    """
    params = list(params)
    tensors = [p for _, p in params]
    zero_grads(tensors)
    backward(loss_fn())
    analytic = {name: (p.grad.copy() if p.grad is not None else np.zeros_like(p.data)) for name, p in params}
    zero_grads(tensors)
    errors = {}
    for name, p in params:
        numeric = finite_diff(lambda _: loss_fn(), p, eps)
        errors[name] = rel_error(analytic[name], numeric)
    return errors
