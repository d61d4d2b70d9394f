"""Plain SGD and bias-corrected Adam over named parameter dictionaries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError


def _check_aligned(params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
    if set(params) != set(grads):
        raise ShapeError("parameter and gradient keys differ")
    for name, p in params.items():
        if grads[name].shape != p.shape:
            raise ShapeError(f"gradient shape mismatch for {name}")


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], lr: float = 0.001) -> dict[str, np.ndarray]:
    """In-place update theta <- theta - lr * g; returns the same dict."""
    _check_aligned(params, grads)
    for name in params:
        params[name] -= lr * grads[name]
    return params


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0


def adam_init(params: dict[str, np.ndarray]) -> AdamState:
    return AdamState(
        m={k: np.zeros_like(p) for k, p in params.items()},
        v={k: np.zeros_like(p) for k, p in params.items()},
    )


def adam_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float = 0.001,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[dict[str, np.ndarray], AdamState]:
    """Standard bias-corrected Adam; updates params and state in place."""
    _check_aligned(params, grads)
    state.t += 1
    bc1 = 1.0 - beta1**state.t
    bc2 = 1.0 - beta2**state.t
    for name, g in grads.items():
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * g
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * g * g
        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        params[name] -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state
