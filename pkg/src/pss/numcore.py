"""Dense float64 kernels with hand-derived gradients, Adam, and a
finite-difference gradient checker.

There is no autodiff tape. The model architecture is static, so each model
composes these kernels in a fixed order and implements its own reverse pass;
the checker below is the safety net that keeps every analytic gradient honest.
All arrays are numpy float64. Parameters, including biases, are kept 2-D so
checkpoints carry uniform [rows, cols] shapes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericsError
from .rng import Rng

KL_CLAMP = 1e-12


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product with an explicit shape check."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def matmul_backward(g: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Gradients of sum(g * (a @ b)) with respect to a and b."""
    return g @ b.T, a.T @ g


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(g: np.ndarray, pre: np.ndarray) -> np.ndarray:
    # subgradient at 0 is taken as 0
    return g * (pre > 0.0)


def softmax_rows(z: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    """Row-wise softmax of z / temperature, max-subtracted for stability."""
    if not temperature > 0:
        raise ValueError(f"temperature must be > 0, got {temperature}")
    t = np.asarray(z, dtype=np.float64) / temperature
    t = t - t.max(axis=1, keepdims=True)
    e = np.exp(t)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax_rows(z: np.ndarray) -> np.ndarray:
    shift = z - z.max(axis=1, keepdims=True)
    return shift - np.log(np.exp(shift).sum(axis=1, keepdims=True))


def kl_rows(p: np.ndarray, q: np.ndarray) -> float:
    """Mean over rows of KL(p_row || q_row).

    Zero p entries contribute zero; q is clamped at 1e-12 before the division.
    Rows of both arguments must already be probability distributions.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"kl_rows shape mismatch: {p.shape} vs {q.shape}")
    for name, m in (("p", p), ("q", q)):
        if np.any(m < -1e-12) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError(f"kl_rows: rows of {name} are not distributions")
    qc = np.maximum(q, KL_CLAMP)
    terms = np.where(p > 0.0, p * (np.log(np.maximum(p, 1e-300)) - np.log(qc)), 0.0)
    return float(terms.sum(axis=1).mean())


def cross_entropy(logits: np.ndarray, labels, mask) -> float:
    loss, _ = cross_entropy_grad(logits, labels, mask)
    return loss


def cross_entropy_grad(logits: np.ndarray, labels, mask):
    """Mean NLL over the masked rows plus its gradient w.r.t. the logits.

    Gradient rows outside the mask are zero; masked rows get
    (softmax - onehot) / |mask|.
    """
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    mask = np.asarray(mask, dtype=np.int64)
    if mask.size == 0:
        raise ValueError("cross_entropy: empty mask")
    picked_labels = labels[mask]
    if np.any(picked_labels < 0) or np.any(picked_labels >= logits.shape[1]):
        raise ValueError(f"label outside class count {logits.shape[1]}")
    logp = log_softmax_rows(logits[mask])
    rows = np.arange(mask.size)
    loss = float(-logp[rows, picked_labels].mean())
    grad_rows = np.exp(logp)
    grad_rows[rows, picked_labels] -= 1.0
    grad_rows /= mask.size
    grad = np.zeros_like(logits)
    grad[mask] = grad_rows
    return loss, grad


@dataclass
class Param:
    """Named trainable matrix paired with its gradient buffer."""

    name: str
    value: np.ndarray
    grad: np.ndarray

    @classmethod
    def zeros(cls, name: str, rows: int, cols: int) -> "Param":
        v = np.zeros((rows, cols))
        return cls(name, v, np.zeros_like(v))

    @classmethod
    def glorot(cls, name: str, rows: int, cols: int, rng: Rng) -> "Param":
        # uniform on +-sqrt(6 / (fan_in + fan_out)); row-major fill order is
        # part of the determinism contract
        bound = math.sqrt(6.0 / (rows + cols))
        v = np.array(
            [[rng.uniform(-bound, bound) for _ in range(cols)] for _ in range(rows)]
        )
        return cls(name, v, np.zeros_like(v))


def zero_grads(params) -> None:
    for p in params:
        p.grad[:] = 0.0


def snapshot(params) -> dict:
    return {p.name: p.value.copy() for p in params}


def restore(params, snap: dict) -> None:
    for p in params:
        p.value[...] = snap[p.name]


class Adam:
    """Bias-corrected Adam. step() applies the update in place and zeroes grads."""

    def __init__(self, params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError("duplicate parameter names")
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {p.name: np.zeros_like(p.value) for p in self.params}
        self.v = {p.name: np.zeros_like(p.value) for p in self.params}

    def step(self) -> None:
        self.t += 1
        for p in self.params:
            g = p.grad
            if not np.all(np.isfinite(g)):
                raise NumericsError(f"non-finite gradient in parameter '{p.name}'")
            m = self.m[p.name]
            v = self.v[p.name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            m_hat = m / (1.0 - self.beta1**self.t)
            v_hat = v / (1.0 - self.beta2**self.t)
            p.value -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)
            p.grad[:] = 0.0


def grad_check(loss_and_grad, params, h: float = 1e-5, loss_only=None,
               min_resolved: float = 0.0) -> float:
    """Max relative error between analytic and central-difference gradients.

    loss_and_grad() must zero the grads it owns, run forward + backward, and
    return the scalar loss, leaving d(loss)/d(param) in each param's grad
    buffer. loss_only() (defaults to loss_and_grad) is used for the two
    perturbed evaluations per coordinate. Relative error per coordinate is
    |a - n| / max(1e-8, |a| + |n|), maximized over sampled coordinates.

    Central differences resolve the loss only to about ulp(loss) / 2h, so
    callers checking composite losses pass min_resolved (typically 1e-7):
    coordinates where analytic and numeric magnitudes both fall below it are
    not sampled, the same way kink-adjacent points are excluded. Both sides
    agreeing the gradient is ~0 at instrument resolution carries no signal;
    a genuinely wrong gradient shows a large side and is always sampled.
    """
    if loss_only is None:
        loss_only = loss_and_grad
    params = list(params)
    loss_and_grad()
    analytic = {p.name: p.grad.copy() for p in params}
    worst = 0.0
    for p in params:
        flat = p.value.reshape(-1)
        aflat = analytic[p.name].reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + h
            up = loss_only()
            flat[i] = keep - h
            down = loss_only()
            flat[i] = keep
            numeric = (up - down) / (2.0 * h)
            a = aflat[i]
            if max(abs(a), abs(numeric)) < min_resolved:
                continue
            err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
            if err > worst:
                worst = err
    zero_grads(params)
    return worst
