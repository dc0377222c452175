"""Student network: per-tree local GCN, pooling, the local-global interaction
layer, and the classification head.

The local pass runs one GCN layer per propagation tree over the undirected
edges plus self-loops (so edge-noised, disconnected forests still have a
well-defined operator), pools node embeddings to one row per news, then the
interaction layer spreads the pooled rows over the row-normalized raw global
graph. Tree operators are data, not parameters, so they are precomputed once
and shared across epochs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, NewsSample
from .numcore import Param, relu, relu_backward
from .rng import Rng


def local_operator(sample: NewsSample) -> np.ndarray:
    """Symmetric-normalized (A + I) for one propagation tree."""
    n = sample.n_nodes
    if n == 0:
        raise ValueError(f"{sample.id}: empty node list")
    a = np.eye(n)
    for p, c in sample.edges:
        a[p, c] = 1.0
        a[c, p] = 1.0
    u = 1.0 / np.sqrt(a.sum(axis=1))
    return a * np.outer(u, u)


@dataclass
class LocalContext:
    """Stacked per-tree inputs: rows of (operator @ node_features) for every
    sample, plus segment offsets so pooling can run vectorized."""

    p_all: np.ndarray      # (total nodes) x d
    offsets: np.ndarray    # start row of each sample's segment
    counts: np.ndarray     # nodes per sample

    @classmethod
    def build(cls, ds: Dataset) -> "LocalContext":
        blocks = [local_operator(s) @ s.node_features for s in ds.samples]
        counts = np.array([b.shape[0] for b in blocks], dtype=np.int64)
        offsets = np.concatenate([[0], np.cumsum(counts)[:-1]]).astype(np.int64)
        return cls(np.vstack(blocks), offsets, counts)


def pool_mean(h_all: np.ndarray, offsets: np.ndarray, counts: np.ndarray) -> np.ndarray:
    # left-to-right segment sums in stored node order
    return np.add.reduceat(h_all, offsets, axis=0) / counts[:, None]


def pool_local(embeddings: np.ndarray) -> np.ndarray:
    """Mean of one tree's node embeddings, summed in stored node order."""
    if embeddings.shape[0] == 0:
        raise ValueError("cannot pool an empty embedding matrix")
    return pool_mean(embeddings, np.array([0]), np.array([embeddings.shape[0]]))[0]


@dataclass
class StudentOutput:
    h_loc: np.ndarray   # N x h pooled local representations
    h_s: np.ndarray     # N x h after the interaction layer
    logits: np.ndarray  # N x 2
    cache: dict = field(repr=False, default_factory=dict)


class StudentModel:
    kind = "student"

    def __init__(self, feature_dim: int, hidden_dim: int, rng: Rng,
                 final_relu: bool = True, pooling: str = "mean", use_lgpi: bool = True):
        if pooling not in ("mean", "root"):
            raise ValueError(f"unknown pooling {pooling!r}")
        self.final_relu = final_relu
        self.pooling = pooling
        self.use_lgpi = use_lgpi
        self.w_loc = Param.glorot("st.loc.w", feature_dim, hidden_dim, rng)
        self.b_loc = Param.zeros("st.loc.b", 1, hidden_dim)
        self.w1 = Param.glorot("st.w1", hidden_dim, hidden_dim, rng)
        self.b1 = Param.zeros("st.b1", 1, hidden_dim)
        self.w2 = Param.glorot("st.w2", hidden_dim, 2, rng)
        self.b2 = Param.zeros("st.b2", 1, 2)

    def params(self) -> list[Param]:
        return [self.w_loc, self.b_loc, self.w1, self.b1, self.w2, self.b2]

    def local_embeddings(self, sample: NewsSample) -> np.ndarray:
        """Per-node embeddings of one tree: relu(operator @ X @ W + b)."""
        return relu(local_operator(sample) @ sample.node_features @ self.w_loc.value + self.b_loc.value)

    def forward(self, ctx: LocalContext, a_rownorm: np.ndarray) -> StudentOutput:
        pre_all = ctx.p_all @ self.w_loc.value + self.b_loc.value
        h_all = relu(pre_all)
        if self.pooling == "mean":
            h_loc = pool_mean(h_all, ctx.offsets, ctx.counts)
        else:
            h_loc = h_all[ctx.offsets]  # root row of each tree
        z = a_rownorm @ h_loc if self.use_lgpi else h_loc
        h_s = z @ self.w1.value + self.b1.value
        pre_head = h_s @ self.w2.value + self.b2.value
        logits = relu(pre_head) if self.final_relu else pre_head
        cache = {"ctx": ctx, "a_rownorm": a_rownorm, "pre_all": pre_all,
                 "h_loc": h_loc, "z": z, "h_s": h_s, "pre_head": pre_head}
        return StudentOutput(h_loc, h_s, logits, cache)

    def backward(self, cache: dict, d_logits: np.ndarray,
                 d_h_s: np.ndarray | None = None) -> None:
        ctx: LocalContext = cache["ctx"]
        d_pre_head = relu_backward(d_logits, cache["pre_head"]) if self.final_relu else d_logits
        self.w2.grad += cache["h_s"].T @ d_pre_head
        self.b2.grad += d_pre_head.sum(axis=0, keepdims=True)
        d_hs = d_pre_head @ self.w2.value.T
        if d_h_s is not None:
            d_hs = d_hs + d_h_s
        self.w1.grad += cache["z"].T @ d_hs
        self.b1.grad += d_hs.sum(axis=0, keepdims=True)
        d_z = d_hs @ self.w1.value.T
        d_h_loc = cache["a_rownorm"].T @ d_z if self.use_lgpi else d_z
        d_h_all = np.zeros((ctx.p_all.shape[0], d_h_loc.shape[1]))
        if self.pooling == "mean":
            d_h_all[:] = np.repeat(d_h_loc / ctx.counts[:, None], ctx.counts, axis=0)
        else:
            d_h_all[ctx.offsets] = d_h_loc
        d_pre_all = relu_backward(d_h_all, cache["pre_all"])
        self.w_loc.grad += ctx.p_all.T @ d_pre_all
        self.b_loc.grad += d_pre_all.sum(axis=0, keepdims=True)
