"""Synthetic benchmark generator.

Users are split into two communities aligned with the two news classes;
community membership drives who engages which news, so shared-user counts
between same-class news exceed cross-class counts whenever q_in > q_out.
Content features are noisy class prototypes, trees are random recursive
trees. Everything is a pure function of SynthParams, including the seed, so
the saved dataset is byte-identical across runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .data import Dataset, NewsSample
from .rng import Rng

ENGAGEMENT_CAP = 5


@dataclass
class SynthParams:
    n_news: int
    n_users: int
    q_in: float
    q_out: float
    tree_size_min: int = 3
    tree_size_max: int = 10
    feature_dim: int = 16
    feature_noise_std: float = 1.0
    seed: int = 1

    def validate(self) -> None:
        if not (0.0 <= self.q_out <= self.q_in <= 1.0):
            raise ValueError(f"need 0 <= q_out <= q_in <= 1, got q_in={self.q_in}, q_out={self.q_out}")
        if self.tree_size_min < 1 or self.tree_size_max < self.tree_size_min:
            raise ValueError(f"bad tree size range [{self.tree_size_min}, {self.tree_size_max}]")
        if self.feature_noise_std < 0:
            raise ValueError(f"feature_noise_std must be >= 0, got {self.feature_noise_std}")
        if self.n_news < 1 or self.n_users < 1 or self.feature_dim < 1:
            raise ValueError("n_news, n_users, feature_dim must all be >= 1")


def _engagement_count(rng: Rng) -> int:
    # 1 + geometric(0.5) via coin flips, capped
    count = 1
    while count < ENGAGEMENT_CAP and rng.uniform() < 0.5:
        count += 1
    return count


def generate_synthetic(p: SynthParams) -> Dataset:
    p.validate()
    rng = Rng(p.seed)
    d = p.feature_dim
    n_class0 = (p.n_news + 1) // 2
    # community 0 backs class 0; first ceil(U/2) users belong to it
    community = [0 if u < (p.n_users + 1) // 2 else 1 for u in range(p.n_users)]
    mu = 1.0 / math.sqrt(d)

    samples = []
    for i in range(p.n_news):
        label = 0 if i < n_class0 else 1
        engagements = []
        for u in range(p.n_users):
            q = p.q_in if community[u] == label else p.q_out
            if rng.uniform() < q:
                engagements.append((f"u{u:05d}", _engagement_count(rng)))
        size = p.tree_size_min + rng.randint(p.tree_size_max - p.tree_size_min + 1)
        edges = [(rng.randint(j), j) for j in range(1, size)]
        sign = 1.0 if label == 0 else -1.0
        root = np.array([sign * mu + p.feature_noise_std * rng.normal() for _ in range(d)])
        nodes = [root]
        for _ in range(1, size):
            noise = np.array([p.feature_noise_std * rng.normal() for _ in range(d)])
            nodes.append(0.5 * root + 0.5 * noise)
        samples.append(
            NewsSample(
                id=f"n{i:04d}",
                label=label,
                news_feature=root.copy(),
                node_features=np.vstack(nodes),
                edges=edges,
                engagements=engagements,
            )
        )
    return Dataset.from_samples(d, samples)
