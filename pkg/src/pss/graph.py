"""Global news-news graph: construction from shared user engagements,
learnable edge retention, refinement, and the GCN normalization.

The retention weights come from a small MLP over (edge weight, endpoint
degrees) read as a 2-logit keep/drop classifier; m_ij is the keep
probability. A scalar softmax would be constantly 1, so the 2-logit reading
is the only one that yields a usable [0,1] weight. The raw output is
symmetrized by averaging because the (d_i, d_j) input is order-sensitive
while the refined graph must stay symmetric.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset
from .numcore import Param, relu, relu_backward
from .rng import Rng

KEEP_CLASS = 1  # logit column whose probability is the retention weight


def build_engagement_matrix(ds: Dataset) -> np.ndarray:
    """News x user count matrix; column order follows ds.user_index."""
    e = np.zeros((len(ds.samples), len(ds.user_index)))
    for i, s in enumerate(ds.samples):
        for uid, count in s.engagements:
            if uid not in ds.user_index:
                raise RuntimeError(f"user id {uid!r} missing from user_index")
            e[i, ds.user_index[uid]] = count
    return e


def build_global_graph(e: np.ndarray) -> np.ndarray:
    """Shared-engagement graph: entry (i, j) counts co-engagements, E E^T."""
    e = np.asarray(e, dtype=np.float64)
    return e @ e.T


def node_degrees(a: np.ndarray) -> np.ndarray:
    """Weighted degrees: row sums with the diagonal excluded."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected square matrix, got {a.shape}")
    if np.max(np.abs(a - a.T), initial=0.0) > 1e-9:
        raise ValueError("adjacency is not symmetric")
    return a.sum(axis=1) - np.diag(a)


def row_normalize(a: np.ndarray) -> np.ndarray:
    """Rows scaled to sum 1; all-zero rows fall back to the identity row."""
    a = np.asarray(a, dtype=np.float64)
    r = a.sum(axis=1)
    out = np.zeros_like(a)
    nz = r > 0
    out[nz] = a[nz] / r[nz, None]
    for i in np.nonzero(~nz)[0]:
        out[i, i] = 1.0
    return out


class PositionalEncoder:
    """Learnable per-news vectors selected by one-hot index: row i is w[i] + b."""

    def __init__(self, n: int, dim: int, rng: Rng, prefix: str = "pe"):
        self.n = n
        self.w = Param.glorot(f"{prefix}.w", n, dim, rng)
        self.b = Param.zeros(f"{prefix}.b", 1, dim)

    def params(self) -> list[Param]:
        return [self.w, self.b]

    def forward(self, indices) -> np.ndarray:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size and (indices.min() < 0 or indices.max() >= self.n):
            raise ValueError(f"index out of range for {self.n} rows")
        return self.w.value[indices] + self.b.value

    def backward(self, indices, g: np.ndarray) -> None:
        indices = np.asarray(indices, dtype=np.int64)
        np.add.at(self.w.grad, indices, g)
        self.b.grad += g.sum(axis=0, keepdims=True)


class EdgeRefiner:
    """2-layer MLP scoring each nonzero off-diagonal edge of the raw graph.

    Inputs per ordered pair are log1p-compressed (a_ij, d_i, d_j); the output
    retention matrix is the symmetrized keep probability, zero exactly where
    the raw graph is zero, zero diagonal.
    """

    def __init__(self, hidden: int, rng: Rng, prefix: str = "refiner"):
        self.w1 = Param.glorot(f"{prefix}.w1", 3, hidden, rng)
        self.b1 = Param.zeros(f"{prefix}.b1", 1, hidden)
        self.w2 = Param.glorot(f"{prefix}.w2", hidden, 2, rng)
        self.b2 = Param.zeros(f"{prefix}.b2", 1, 2)

    def params(self) -> list[Param]:
        return [self.w1, self.b1, self.w2, self.b2]

    def retention(self, a: np.ndarray, degrees: np.ndarray):
        """Returns (M, cache) for the backward pass."""
        n = a.shape[0]
        ii, jj = np.nonzero(a)
        off = ii != jj
        ii, jj = ii[off], jj[off]
        m = np.zeros((n, n))
        if ii.size == 0:
            return m, {"ii": ii, "jj": jj}
        feats = np.stack(
            [np.log1p(a[ii, jj]), np.log1p(degrees[ii]), np.log1p(degrees[jj])], axis=1
        )
        pre1 = feats @ self.w1.value + self.b1.value
        hid = relu(pre1)
        logits = hid @ self.w2.value + self.b2.value
        shift = logits - logits.max(axis=1, keepdims=True)
        ex = np.exp(shift)
        prob = ex / ex.sum(axis=1, keepdims=True)
        keep = prob[:, KEEP_CLASS]
        raw = np.zeros((n, n))
        raw[ii, jj] = keep
        m[:] = 0.5 * (raw + raw.T)
        cache = {"ii": ii, "jj": jj, "feats": feats, "pre1": pre1, "hid": hid, "keep": keep}
        return m, cache

    def retention_backward(self, cache: dict, d_m: np.ndarray) -> None:
        ii, jj = cache["ii"], cache["jj"]
        if ii.size == 0:
            return
        d_raw = 0.5 * (d_m + d_m.T)
        d_keep = d_raw[ii, jj]
        # 2-way softmax: d(keep)/d(logit_keep) = keep (1 - keep)
        s = d_keep * cache["keep"] * (1.0 - cache["keep"])
        d_logits = np.zeros((ii.size, 2))
        d_logits[:, KEEP_CLASS] = s
        d_logits[:, 1 - KEEP_CLASS] = -s
        self.w2.grad += cache["hid"].T @ d_logits
        self.b2.grad += d_logits.sum(axis=0, keepdims=True)
        d_hid = d_logits @ self.w2.value.T
        d_pre1 = relu_backward(d_hid, cache["pre1"])
        self.w1.grad += cache["feats"].T @ d_pre1
        self.b1.grad += d_pre1.sum(axis=0, keepdims=True)


def refine(a: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Entrywise reweighting plus self-loops: A * M + I."""
    if a.shape != m.shape:
        raise ValueError(f"refine shape mismatch: {a.shape} vs {m.shape}")
    return a * m + np.eye(a.shape[0])


def gcn_normalize(a_hat: np.ndarray):
    """Symmetric normalization D^-1/2 A_hat D^-1/2 with D = diag(row sums).

    Returns (normalized, cache); the diagonal of a_hat is >= 1 by
    construction so row sums are strictly positive.
    """
    r = a_hat.sum(axis=1)
    assert np.all(r > 0), "zero row sum despite unit diagonal"
    u = 1.0 / np.sqrt(r)
    s = a_hat * np.outer(u, u)
    return s, {"a_hat": a_hat, "r": r, "u": u}


def gcn_normalize_backward(cache: dict, d_s: np.ndarray) -> np.ndarray:
    """Gradient through the normalization, including the row-sum dependence."""
    a_hat, r, u = cache["a_hat"], cache["r"], cache["u"]
    ga = d_s * a_hat
    t1 = ga @ u
    t2 = ga.T @ u
    d_a = d_s * np.outer(u, u)
    d_a -= (0.5 * r**-1.5 * (t1 + t2))[:, None]
    return d_a
