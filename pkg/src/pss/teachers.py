"""The two teacher networks and their supervised training loop.

The content teacher is an MLP over the root content vectors. The propagation
teacher is a two-layer GCN over the refined global graph fed with learnable
positional encodings; the retention MLP and the encoder train through the
same cross-entropy objective, so the graph operator is recomputed from the
current refiner parameters on every forward pass.

Both networks apply a final ReLU to the logits by default (final_relu=False
switches the heads to plain affine outputs).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Split
from .errors import NumericsError
from .graph import EdgeRefiner, PositionalEncoder, gcn_normalize, gcn_normalize_backward, refine
from .metrics import accuracy, macro_f1, predict_labels
from .numcore import Adam, Param, cross_entropy_grad, relu, relu_backward, restore, snapshot, zero_grads
from .rng import Rng


@dataclass
class TeacherOutput:
    hidden: np.ndarray  # N x h
    logits: np.ndarray  # N x 2
    cache: dict = field(repr=False, default_factory=dict)


class ContentTeacher:
    """MLP over root content: hidden = relu(x W1 + b1), logits = relu(hidden W2 + b2)."""

    kind = "content"

    def __init__(self, feature_dim: int, hidden_dim: int, rng: Rng, final_relu: bool = True):
        self.final_relu = final_relu
        self.w1 = Param.glorot("ct.w1", feature_dim, hidden_dim, rng)
        self.b1 = Param.zeros("ct.b1", 1, hidden_dim)
        self.w2 = Param.glorot("ct.w2", hidden_dim, 2, rng)
        self.b2 = Param.zeros("ct.b2", 1, 2)

    def params(self) -> list[Param]:
        return [self.w1, self.b1, self.w2, self.b2]

    def forward(self, x_news: np.ndarray) -> TeacherOutput:
        if x_news.shape[1] != self.w1.value.shape[0]:
            raise ValueError(f"feature dim mismatch: {x_news.shape} vs {self.w1.value.shape}")
        pre1 = x_news @ self.w1.value + self.b1.value
        hidden = relu(pre1)
        pre2 = hidden @ self.w2.value + self.b2.value
        logits = relu(pre2) if self.final_relu else pre2
        cache = {"x": x_news, "pre1": pre1, "hidden": hidden, "pre2": pre2}
        return TeacherOutput(hidden, logits, cache)

    def backward(self, cache: dict, d_logits: np.ndarray, d_hidden: np.ndarray | None = None) -> None:
        d_pre2 = relu_backward(d_logits, cache["pre2"]) if self.final_relu else d_logits
        self.w2.grad += cache["hidden"].T @ d_pre2
        self.b2.grad += d_pre2.sum(axis=0, keepdims=True)
        d_hid = d_pre2 @ self.w2.value.T
        if d_hidden is not None:
            d_hid = d_hid + d_hidden
        d_pre1 = relu_backward(d_hid, cache["pre1"])
        self.w1.grad += cache["x"].T @ d_pre1
        self.b1.grad += d_pre1.sum(axis=0, keepdims=True)


class PropagationTeacher:
    """Two-layer GCN over the refined global graph with learnable inputs."""

    kind = "propagation"

    def __init__(self, n_news: int, pe_dim: int, hidden_dim: int, refiner_hidden: int,
                 rng: Rng, final_relu: bool = True):
        self.final_relu = final_relu
        self.encoder = PositionalEncoder(n_news, pe_dim, rng, prefix="pt.pe")
        self.refiner = EdgeRefiner(refiner_hidden, rng, prefix="pt.refiner")
        self.w1 = Param.glorot("pt.gcn1.w", pe_dim, hidden_dim, rng)
        self.b1 = Param.zeros("pt.gcn1.b", 1, hidden_dim)
        self.w2 = Param.glorot("pt.gcn2.w", hidden_dim, 2, rng)
        self.b2 = Param.zeros("pt.gcn2.b", 1, 2)

    def params(self) -> list[Param]:
        return self.encoder.params() + self.refiner.params() + [self.w1, self.b1, self.w2, self.b2]

    def forward(self, a_news: np.ndarray, degrees: np.ndarray) -> TeacherOutput:
        n = a_news.shape[0]
        if self.encoder.n != n:
            raise ValueError(f"encoder sized {self.encoder.n}, graph has {n} news")
        indices = np.arange(n)
        x_pe = self.encoder.forward(indices)
        m, ret_cache = self.refiner.retention(a_news, degrees)
        a_hat = refine(a_news, m)
        s, norm_cache = gcn_normalize(a_hat)
        v = s @ x_pe
        pre1 = v @ self.w1.value + self.b1.value
        hidden = relu(pre1)
        u = s @ hidden
        pre2 = u @ self.w2.value + self.b2.value
        logits = relu(pre2) if self.final_relu else pre2
        cache = {
            "indices": indices, "a_news": a_news, "x_pe": x_pe, "ret": ret_cache,
            "norm": norm_cache, "s": s, "v": v, "pre1": pre1, "hidden": hidden,
            "u": u, "pre2": pre2,
        }
        return TeacherOutput(hidden, logits, cache)

    def backward(self, cache: dict, d_logits: np.ndarray, d_hidden: np.ndarray | None = None) -> None:
        s = cache["s"]
        d_pre2 = relu_backward(d_logits, cache["pre2"]) if self.final_relu else d_logits
        self.w2.grad += cache["u"].T @ d_pre2
        self.b2.grad += d_pre2.sum(axis=0, keepdims=True)
        d_u = d_pre2 @ self.w2.value.T
        d_s = d_u @ cache["hidden"].T
        d_hid = s.T @ d_u
        if d_hidden is not None:
            d_hid = d_hid + d_hidden
        d_pre1 = relu_backward(d_hid, cache["pre1"])
        self.w1.grad += cache["v"].T @ d_pre1
        self.b1.grad += d_pre1.sum(axis=0, keepdims=True)
        d_v = d_pre1 @ self.w1.value.T
        d_s += d_v @ cache["x_pe"].T
        d_x_pe = s.T @ d_v
        self.encoder.backward(cache["indices"], d_x_pe)
        d_a_hat = gcn_normalize_backward(cache["norm"], d_s)
        d_m = d_a_hat * cache["a_news"]
        self.refiner.retention_backward(cache["ret"], d_m)


@dataclass
class TeacherEpoch:
    epoch: int
    train_loss: float
    val_acc: float
    val_macro_f1: float


def train_teacher(model, forward_args: tuple, labels: np.ndarray, split: Split,
                  lr: float, max_epochs: int = 200, patience: int = 10) -> list[TeacherEpoch]:
    """Full-batch Adam on train-index cross-entropy, early stopped on val
    macro-F1. The model is left holding the best-validation parameters."""
    params = model.params()
    adam = Adam(params, lr)
    train_idx = np.asarray(split.train, dtype=np.int64)
    val_idx = np.asarray(split.val, dtype=np.int64)
    best_snap = snapshot(params)
    best_f1 = -1.0
    patience_left = patience
    history: list[TeacherEpoch] = []
    for epoch in range(1, max_epochs + 1):
        out = model.forward(*forward_args)
        loss, d_logits = cross_entropy_grad(out.logits, labels, train_idx)
        if not np.isfinite(loss):
            raise NumericsError(f"{model.kind} teacher loss diverged at epoch {epoch}")
        zero_grads(params)
        model.backward(out.cache, d_logits)
        adam.step()
        val_out = model.forward(*forward_args)
        preds = predict_labels(val_out.logits[val_idx])
        acc = accuracy(preds, labels[val_idx])
        f1 = macro_f1(preds, labels[val_idx])
        history.append(TeacherEpoch(epoch, loss, acc, f1))
        if f1 > best_f1:
            best_f1 = f1
            best_snap = snapshot(params)
            patience_left = patience
        else:
            patience_left -= 1
            if patience_left == 0:
                break
    restore(params, best_snap)
    return history
