"""SGD with momentum and Adam. Both update parameter arrays in place."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .linalg import Matrix, ShapeError


def _check_shapes(params: Sequence[Matrix], grads: Sequence[Matrix]) -> None:
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} parameters but {len(grads)} gradients")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ShapeError(f"parameter shape {p.shape} vs gradient shape {g.shape}")


class SGDMomentum:
    """v <- mu * v - lr * g;  theta <- theta + v."""

    def __init__(self, learning_rate: float, momentum: float = 0.9):
        self.learning_rate = learning_rate
        self.momentum = momentum
        self.velocity: list[Matrix] | None = None

    def step(self, params: Sequence[Matrix], grads: Sequence[Matrix]) -> None:
        _check_shapes(params, grads)
        if self.velocity is None:
            self.velocity = [np.zeros_like(p) for p in params]
        for p, g, v in zip(params, grads, self.velocity):
            v *= self.momentum
            v -= self.learning_rate * g
            p += v


class Adam:
    def __init__(
        self,
        learning_rate: float,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ):
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: list[Matrix] | None = None
        self.v: list[Matrix] | None = None

    def step(self, params: Sequence[Matrix], grads: Sequence[Matrix]) -> None:
        _check_shapes(params, grads)
        if self.m is None:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            # lr * (m / c1) / (sqrt(v / c2) + eps), with fewer temporaries
            denom = v / c2
            np.sqrt(denom, out=denom)
            denom += self.eps
            step = m / c1
            step *= self.learning_rate
            step /= denom
            p -= step


def make(name: str, learning_rate: float) -> SGDMomentum | Adam:
    name = name.lower()
    if name in ("sgd", "sgd-momentum", "momentum"):
        return SGDMomentum(learning_rate)
    if name == "adam":
        return Adam(learning_rate)
    raise ValueError(f"unknown optimizer {name!r} (expected sgd or adam)")
