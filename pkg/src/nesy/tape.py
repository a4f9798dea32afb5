"""
Reverse-mode autodiff over numpy arrays. Each Tensor records its parents and a
closure that pushes its gradient back; backward() replays them in reverse
topological order. Only the operations the classifiers need are provided, plus a
circuit node that runs the log-space upward pass and its exact reverse sweep.
"""
from __future__ import annotations

import logging
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy.special import expit

from src.infer import log_values, log_values_backward
from src.sdd import EvalPlan

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int]


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad down to `shape` after numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A float64 array with an accumulated gradient of the same shape."""

    def __init__(self, value: ArrayLike, _children: Sequence[Tensor] = (), _op: str = "") -> None:
        self.value = np.asarray(value, dtype=np.float64)
        self.grad = np.zeros_like(self.value)
        self._backward: Callable[[], None] = lambda: None
        self._prev = tuple(_children)
        self._op = _op

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.value)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op or 'leaf'})"

    # ---- arithmetic ----

    def __add__(self, other: Union[Tensor, ArrayLike]) -> Tensor:
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.value + other.value, (self, other), "+")

        def _backward() -> None:
            self.grad += _unbroadcast(out.grad, self.shape)
            other.grad += _unbroadcast(out.grad, other.shape)

        out._backward = _backward
        return out

    def __radd__(self, other: ArrayLike) -> Tensor:
        return self + other

    def __neg__(self) -> Tensor:
        return self * -1.0

    def __sub__(self, other: Union[Tensor, ArrayLike]) -> Tensor:
        return self + (-other if isinstance(other, Tensor) else -np.asarray(other, dtype=np.float64))

    def __rsub__(self, other: ArrayLike) -> Tensor:
        return (-self) + other

    def __mul__(self, other: Union[Tensor, ArrayLike]) -> Tensor:
        other = other if isinstance(other, Tensor) else Tensor(other)
        out = Tensor(self.value * other.value, (self, other), "*")

        def _backward() -> None:
            self.grad += _unbroadcast(other.value * out.grad, self.shape)
            other.grad += _unbroadcast(self.value * out.grad, other.shape)

        out._backward = _backward
        return out

    def __rmul__(self, other: ArrayLike) -> Tensor:
        return self * other

    def __matmul__(self, other: Tensor) -> Tensor:
        out = Tensor(self.value @ other.value, (self, other), "@")

        def _backward() -> None:
            self.grad += out.grad @ other.value.T
            other.grad += self.value.T @ out.grad

        out._backward = _backward
        return out

    # ---- reductions ----

    def sum(self, axis: Optional[int] = None) -> Tensor:
        out = Tensor(self.value.sum(axis=axis), (self,), "sum")

        def _backward() -> None:
            g = out.grad if axis is None else np.expand_dims(out.grad, axis)
            self.grad += np.broadcast_to(g, self.shape)

        out._backward = _backward
        return out

    def mean(self) -> Tensor:
        return self.sum() * (1.0 / max(self.value.size, 1))

    # ---- elementwise ----

    def relu(self) -> Tensor:
        out = Tensor(np.maximum(self.value, 0.0), (self,), "relu")

        def _backward() -> None:
            self.grad += (self.value > 0) * out.grad

        out._backward = _backward
        return out

    def sigmoid(self) -> Tensor:
        s = expit(self.value)
        out = Tensor(s, (self,), "sigmoid")

        def _backward() -> None:
            self.grad += s * (1.0 - s) * out.grad

        out._backward = _backward
        return out

    def log_sigmoid(self) -> Tensor:
        """log σ(x), stable for large |x|."""
        out = Tensor(-np.logaddexp(0.0, -self.value), (self,), "log_sigmoid")

        def _backward() -> None:
            self.grad += expit(-self.value) * out.grad

        out._backward = _backward
        return out

    def clamp_min(self, floor: float) -> Tensor:
        out = Tensor(np.maximum(self.value, floor), (self,), "clamp_min")

        def _backward() -> None:
            self.grad += (self.value >= floor) * out.grad

        out._backward = _backward
        return out

    def columns(self, idx: Sequence[int]) -> Tensor:
        idx = np.asarray(idx, dtype=np.int64)
        out = Tensor(self.value[:, idx], (self,), "columns")

        def _backward() -> None:
            np.add.at(self.grad, (slice(None), idx), out.grad)

        out._backward = _backward
        return out

    # ---- graph ----

    def backward(self, grad: Optional[np.ndarray] = None) -> None:
        topo: list[Tensor] = []
        visited: set[int] = set()

        def build(v: Tensor) -> None:
            if id(v) not in visited:
                visited.add(id(v))
                for child in v._prev:
                    build(child)
                topo.append(v)

        build(self)
        self.grad = np.ones_like(self.value) if grad is None else np.asarray(grad, dtype=np.float64)
        for v in reversed(topo):
            v._backward()


def scatter_columns(base: np.ndarray, idx: Sequence[int], src: Tensor) -> Tensor:
    """`base` with columns idx replaced by src; only src receives gradient."""
    idx = np.asarray(idx, dtype=np.int64)
    v = np.array(base, dtype=np.float64, copy=True)
    v[:, idx] = src.value
    out = Tensor(v, (src,), "scatter")

    def _backward() -> None:
        src.grad += out.grad[:, idx]

    out._backward = _backward
    return out


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Binary cross-entropy summed over bits, averaged over rows."""
    z, y = logits.value, np.asarray(targets, dtype=np.float64)
    per_row = (np.logaddexp(0.0, z) - y * z).sum(axis=1)
    out = Tensor(per_row.mean(), (logits,), "bce")

    def _backward() -> None:
        logits.grad += (expit(z) - y) * (out.grad / len(z))

    out._backward = _backward
    return out


def log_softmax_groups(logits: Tensor, starts: np.ndarray) -> Tensor:
    """Row-wise log-softmax over contiguous column groups beginning at `starts`."""
    z = logits.value
    counts = np.diff(np.append(starts, z.shape[1]))
    m = np.repeat(np.maximum.reduceat(z, starts, axis=1), counts, axis=1)
    e = np.exp(z - m)
    lse = np.repeat(np.log(np.add.reduceat(e, starts, axis=1)), counts, axis=1) + m
    out_v = z - lse
    out = Tensor(out_v, (logits,), "log_softmax")

    def _backward() -> None:
        g = out.grad
        gsum = np.repeat(np.add.reduceat(g, starts, axis=1), counts, axis=1)
        logits.grad += g - np.exp(out_v) * gsum

    out._backward = _backward
    return out


def cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    """Mean multiclass cross-entropy for integer labels."""
    logp = log_softmax_groups(logits, np.array([0]))
    rows = np.arange(len(labels))
    picked = Tensor(np.zeros(logp.shape))
    picked.value[rows, labels] = -1.0 / len(labels)
    return (logp * picked).sum()


def circuit_log_mass(
    plan: EvalPlan,
    pos_log: Union[Tensor, np.ndarray],
    neg_log: Union[Tensor, np.ndarray],
    log_w: Union[Tensor, np.ndarray, None] = None,
) -> Tensor:
    """
    Root log-value of the circuit per row: log Σ_models W(x) Π θ_v(x_v).
    pos_log / neg_log are (B, n_vars) log input factors, log_w is (B, E) or (E,) log sum weights.
    Plain arrays are constants.
    """
    parents = [t for t in (pos_log, neg_log, log_w) if isinstance(t, Tensor)]
    pv = pos_log.value if isinstance(pos_log, Tensor) else np.asarray(pos_log, dtype=np.float64)
    nv = neg_log.value if isinstance(neg_log, Tensor) else np.asarray(neg_log, dtype=np.float64)
    if log_w is None:
        wv = np.zeros(plan.n_elements)
    else:
        wv = log_w.value if isinstance(log_w, Tensor) else np.asarray(log_w, dtype=np.float64)
    vals = log_values(plan, pv, nv, wv)
    out = Tensor(vals[plan.root], parents, "circuit")

    def _backward() -> None:
        g_pos, g_neg, g_w = log_values_backward(plan, vals, pv, nv, wv, out.grad)
        if isinstance(pos_log, Tensor):
            pos_log.grad += _unbroadcast(g_pos, pos_log.shape)
        if isinstance(neg_log, Tensor):
            neg_log.grad += _unbroadcast(g_neg, neg_log.shape)
        if isinstance(log_w, Tensor):
            log_w.grad += _unbroadcast(g_w, log_w.shape)

    out._backward = _backward
    return out
