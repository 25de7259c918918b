"""Gradient descent with classical momentum."""

from __future__ import annotations

import numpy as np

from .network import NetworkParameters


def sgd_step(
    params: NetworkParameters,
    grads: dict[str, np.ndarray],
    lr: float,
    momentum: float,
    velocity: dict[str, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """In-place update: velocity = momentum * velocity + grads; params -= lr * velocity.

    Returns the velocity dict so callers can thread it through steps.
    """
    if lr <= 0:
        raise ValueError("lr must be positive")
    if velocity is None:
        velocity = params.zeros_like()
    for name, p in params.params.items():
        v = momentum * velocity[name] + grads[name]
        velocity[name] = v
        p -= lr * v
    return velocity


class SgdMomentum:
    """Stateful wrapper keeping the velocity between steps."""

    def __init__(self, momentum: float = 0.9):
        self.momentum = momentum
        self.velocity: dict[str, np.ndarray] | None = None

    def step(self, params: NetworkParameters, grads: dict[str, np.ndarray], lr: float) -> None:
        self.velocity = sgd_step(params, grads, lr, self.momentum, self.velocity)
