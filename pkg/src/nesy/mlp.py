"""Fully connected feature extractor and affine heads on the autodiff tape."""
from __future__ import annotations

import logging
from typing import Sequence

import numpy as np

from src.nesy.tape import Tensor

logger = logging.getLogger(__name__)


class Linear:
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, zero: bool = False) -> None:
        if zero:
            w = np.zeros((n_in, n_out))
        else:
            # He initialization for rectifier inputs
            w = rng.standard_normal((n_in, n_out)) * np.sqrt(2.0 / max(n_in, 1))
        self.weight = Tensor(w)
        self.bias = Tensor(np.zeros(n_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias

    def parameters(self) -> list[Tensor]:
        return [self.weight, self.bias]


class Mlp:
    """Rectified hidden layers; the output is the last hidden activation (the features z)."""

    def __init__(self, n_in: int, hidden: Sequence[int], rng: np.random.Generator) -> None:
        self.sizes = [n_in, *hidden]
        self.layers = [Linear(a, b, rng) for a, b in zip(self.sizes, self.sizes[1:])]

    @property
    def n_features(self) -> int:
        return self.sizes[-1]

    def __call__(self, x: np.ndarray | Tensor) -> Tensor:
        h = x if isinstance(x, Tensor) else Tensor(x)
        for layer in self.layers:
            h = layer(h).relu()
        return h

    def parameters(self) -> list[Tensor]:
        return [p for layer in self.layers for p in layer.parameters()]


class Adam:
    def __init__(self, params: Sequence[Tensor], lr: float = 0.001, betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8) -> None:
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.zero_grad()

    def step(self) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, m, v in zip(self.params, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * p.grad
            v *= self.b2
            v += (1.0 - self.b2) * p.grad**2
            p.value -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def flatten_parameters(params: Sequence[Tensor]) -> np.ndarray:
    if not params:
        return np.zeros(0)
    return np.concatenate([p.value.ravel() for p in params])


def load_parameters(params: Sequence[Tensor], flat: np.ndarray) -> None:
    expected = sum(p.value.size for p in params)
    if flat.size != expected:
        raise ValueError(f"parameter block holds {flat.size} values, model needs {expected}")
    offset = 0
    for p in params:
        n = p.value.size
        p.value = flat[offset : offset + n].reshape(p.value.shape).astype(np.float64)
        p.zero_grad()
        offset += n
