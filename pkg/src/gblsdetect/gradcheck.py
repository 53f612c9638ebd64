"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor


class NonDeterministicError(RuntimeError):
    """The checked function returned different values for identical inputs."""


def _relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    if analytic.size == 0:
        return 0.0
    return float(np.max(np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))))


def grad_check(f: Callable[[Tensor], Tensor], x, eps: float = 1e-5) -> float:
    """Max over coordinates of ``|analytic - central| / max(1, |central|)`` for scalar ``f``."""
    x0 = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    t = Tensor(x0, requires_grad=True)
    return grad_check_params(lambda: f(t), {"x": t}, eps=eps)


def grad_check_params(
    f: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    eps: float = 1e-5,
    max_coords: int | None = None,
    rng: np.random.Generator | None = None,
    per_tensor: dict[str, float] | None = None,
) -> float:
    """Gradient check of a closure over a set of parameter tensors.

    Each tensor's ``.data`` is perturbed in place (and restored).  With
    ``max_coords`` only a random subset of coordinates per tensor is probed.
    ``per_tensor``, when given, is filled with the error of each tensor.
    """
    for p in params.values():
        p.grad = None
    out = f()
    if out.data.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    base = float(out.data.reshape(()))
    if float(f().data.reshape(())) != base:
        raise NonDeterministicError("function is not deterministic at the check point")
    if out.requires_grad:
        out.backward()
    rng = rng or np.random.default_rng(0)
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(coords.size)
        for k, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + eps
            up = float(f().data.reshape(()))
            flat[c] = orig - eps
            down = float(f().data.reshape(()))
            flat[c] = orig
            numeric[k] = (up - down) / (2.0 * eps)
        err = _relative_error(analytic.reshape(-1)[coords], numeric)
        if per_tensor is not None:
            per_tensor[name] = err
        worst = max(worst, err)
    return worst
