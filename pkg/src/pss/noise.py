"""Noise injectors for the robustness protocol.

Semantic noise zeroes the content vectors of exactly floor(ratio * n_nodes)
nodes per sample; structural noise removes exactly floor(ratio * n_edges)
edges. Selections are drawn from a stream keyed by (seed, sample id, kind),
so they do not depend on sample order or on which scope subset is perturbed.
Engagements are never touched: the noise models corrupted content and broken
interaction records inside the propagation trees, not the engagement logs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .data import Dataset, NewsSample
from .rng import Rng

KINDS = ("semantic", "structural", "mixed")
SCOPES = ("all", "test")


@dataclass
class NoiseSpec:
    kind: str              # semantic | structural | mixed
    ratio: float
    scope: str = "all"     # all | test
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise ValueError(f"noise ratio must be in [0,1], got {self.ratio}")
        if self.scope not in SCOPES:
            raise ValueError(f"unknown noise scope {self.scope!r}")


def masked_count(ratio: float, n: int) -> int:
    """floor(ratio * n); the tiny epsilon compensates for the binary
    representation of decimal ratios (0.7 * 10 must count as 7)."""
    return min(n, int(math.floor(ratio * n + 1e-9)))


def _mask_features(sample: NewsSample, ratio: float, seed: int) -> NewsSample:
    k = masked_count(ratio, sample.n_nodes)
    if k == 0:
        return sample
    rng = Rng(seed).derive(f"semantic:{sample.id}")
    selected = rng.choose(sample.n_nodes, k)
    nodes = sample.node_features.copy()
    nodes[selected] = 0.0
    news = nodes[0].copy()  # root zeroed iff node 0 was selected
    return NewsSample(sample.id, sample.label, news, nodes,
                      list(sample.edges), list(sample.engagements))


def _drop_edges(sample: NewsSample, ratio: float, seed: int) -> NewsSample:
    k = masked_count(ratio, sample.n_edges)
    if k == 0:
        return sample
    rng = Rng(seed).derive(f"structural:{sample.id}")
    removed = set(rng.choose(sample.n_edges, k))
    edges = [e for i, e in enumerate(sample.edges) if i not in removed]
    return NewsSample(sample.id, sample.label, sample.news_feature.copy(),
                      sample.node_features.copy(), edges, list(sample.engagements))


def _apply(ds: Dataset, indices, transform) -> Dataset:
    chosen = set(range(len(ds.samples))) if indices is None else set(int(i) for i in indices)
    samples = [transform(s) if i in chosen else s for i, s in enumerate(ds.samples)]
    return Dataset(ds.feature_dim, samples, dict(ds.user_index))


def inject_semantic(ds: Dataset, spec: NoiseSpec, indices=None) -> Dataset:
    spec.validate()
    return _apply(ds, indices, lambda s: _mask_features(s, spec.ratio, spec.seed))


def inject_structural(ds: Dataset, spec: NoiseSpec, indices=None) -> Dataset:
    spec.validate()
    return _apply(ds, indices, lambda s: _drop_edges(s, spec.ratio, spec.seed))


def apply_noise(ds: Dataset, spec: NoiseSpec | None, test_indices=None) -> Dataset:
    """Dispatch on kind and scope; ratio 0 or no spec returns ds unchanged."""
    if spec is None or spec.ratio == 0.0:
        return ds
    spec.validate()
    indices = None if spec.scope == "all" else test_indices
    if spec.kind in ("semantic", "mixed"):
        ds = inject_semantic(ds, spec, indices)
    if spec.kind in ("structural", "mixed"):
        ds = inject_structural(ds, spec, indices)
    return ds
