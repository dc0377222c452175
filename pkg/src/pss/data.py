"""Dataset schema, pssd-v1 JSONL persistence, validation, and the 7:1:2 split.

On disk a dataset is one header line {"format":"pssd-v1","feature_dim":D}
followed by one JSON object per news sample with keys
id, label, news_feature, node_features, edges, engagements. Floats are
written at 17 significant digits so save/load round-trips are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import jsonio
from .errors import DataValidationError
from .rng import Rng

FORMAT_NAME = "pssd-v1"
_SAMPLE_KEYS = ("id", "label", "news_feature", "node_features", "edges", "engagements")


@dataclass
class NewsSample:
    """One news item: root content vector, propagation tree, user engagements.

    Node 0 is always the news root and carries news_feature. Edges are
    (parent, child) index pairs; engagements are (user id, count) with
    count >= 1.
    """

    id: str
    label: int
    news_feature: np.ndarray
    node_features: np.ndarray
    edges: list[tuple[int, int]]
    engagements: list[tuple[str, int]]

    @property
    def n_nodes(self) -> int:
        return self.node_features.shape[0]

    @property
    def n_edges(self) -> int:
        return len(self.edges)


@dataclass
class Dataset:
    feature_dim: int
    samples: list[NewsSample]
    user_index: dict[str, int] = field(default_factory=dict)

    @classmethod
    def from_samples(cls, feature_dim: int, samples) -> "Dataset":
        users = sorted({uid for s in samples for uid, _ in s.engagements})
        return cls(feature_dim, list(samples), {u: k for k, u in enumerate(users)})

    def __len__(self) -> int:
        return len(self.samples)

    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)


@dataclass
class Split:
    train: list[int]
    val: list[int]
    test: list[int]


def samples_equal(a: NewsSample, b: NewsSample) -> bool:
    return (
        a.id == b.id
        and a.label == b.label
        and np.array_equal(a.news_feature, b.news_feature)
        and np.array_equal(a.node_features, b.node_features)
        and list(map(tuple, a.edges)) == list(map(tuple, b.edges))
        and list(map(tuple, a.engagements)) == list(map(tuple, b.engagements))
    )


def datasets_equal(a: Dataset, b: Dataset) -> bool:
    return (
        a.feature_dim == b.feature_dim
        and len(a.samples) == len(b.samples)
        and a.user_index == b.user_index
        and all(samples_equal(x, y) for x, y in zip(a.samples, b.samples))
    )


def _forest_violation(sample: NewsSample) -> str | None:
    n = sample.n_nodes
    parent = [-1] * n
    for p, c in sample.edges:
        if not (0 <= p < n and 0 <= c < n):
            return f"edge ({p},{c}) references invalid node index"
        if p == c:
            return f"self-loop edge at node {p}"
        if c == 0:
            return "root node 0 has a parent"
        if parent[c] != -1:
            return f"node {c} has two parents"
        parent[c] = p
    # with unique parents a cycle shows up as a parent walk that never
    # reaches a parentless node within n steps
    for start in range(n):
        v, steps = start, 0
        while parent[v] != -1:
            v = parent[v]
            steps += 1
            if steps > n:
                return "cycle in edge list"
    return None


def validate_dataset(ds: Dataset) -> list[str]:
    """List of rule violations, empty when the dataset is well-formed."""
    report: list[str] = []
    d = ds.feature_dim
    engaged_users = set()
    for s in ds.samples:
        if s.label not in (0, 1):
            report.append(f"{s.id}: label domain violated ({s.label})")
        if s.news_feature.shape != (d,):
            report.append(f"{s.id}: news_feature dimension {s.news_feature.shape} != ({d},)")
        if s.node_features.ndim != 2 or s.node_features.shape[1] != d:
            report.append(f"{s.id}: node_features dimension {s.node_features.shape} != (*, {d})")
        elif s.n_nodes == 0:
            report.append(f"{s.id}: empty node list")
        elif not np.array_equal(s.node_features[0], s.news_feature):
            report.append(f"{s.id}: node_features[0] != news_feature")
        if not np.all(np.isfinite(s.news_feature)) or not np.all(np.isfinite(s.node_features)):
            report.append(f"{s.id}: non-finite feature values")
        forest = _forest_violation(s)
        if forest is not None:
            report.append(f"{s.id}: forest violated ({forest})")
        seen = set()
        for uid, count in s.engagements:
            if not isinstance(count, int) or count < 1:
                report.append(f"{s.id}: count >= 1 violated for user {uid}")
            if uid in seen:
                report.append(f"{s.id}: duplicate engagement user {uid}")
            seen.add(uid)
            engaged_users.add(uid)
    if set(ds.user_index) != engaged_users:
        report.append("user_index does not cover exactly the engaged users")
    return report


def split_dataset(ds: Dataset, seed: int) -> Split:
    """Seeded 7:1:2 split: floor(0.7N) train, floor(0.1N) val, rest test."""
    n = len(ds.samples)
    if n < 10:
        raise ValueError(f"split needs at least 10 samples, got {n}")
    idx = list(range(n))
    Rng(seed).shuffle(idx)
    n_train = (7 * n) // 10
    n_val = n // 10
    return Split(idx[:n_train], idx[n_train : n_train + n_val], idx[n_train + n_val :])


def save_dataset(ds: Dataset, path) -> None:
    lines = [jsonio.dumps({"format": FORMAT_NAME, "feature_dim": ds.feature_dim})]
    for s in ds.samples:
        lines.append(
            jsonio.dumps(
                {
                    "id": s.id,
                    "label": s.label,
                    "news_feature": [float(x) for x in s.news_feature],
                    "node_features": [[float(x) for x in row] for row in s.node_features],
                    "edges": [[int(p), int(c)] for p, c in s.edges],
                    "engagements": [[uid, int(count)] for uid, count in s.engagements],
                }
            )
        )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_sample(obj: dict, lineno: int, path) -> NewsSample:
    if set(obj) != set(_SAMPLE_KEYS):
        missing = set(_SAMPLE_KEYS) - set(obj)
        extra = set(obj) - set(_SAMPLE_KEYS)
        raise DataValidationError(
            f"{path}:{lineno}: bad sample keys (missing {sorted(missing)}, extra {sorted(extra)})"
        )
    rows = obj["node_features"]
    if rows and len({len(r) for r in rows}) > 1:
        raise DataValidationError(f"{path}:{lineno}: ragged node_features")
    return NewsSample(
        id=str(obj["id"]),
        label=int(obj["label"]),
        news_feature=np.asarray(obj["news_feature"], dtype=np.float64),
        node_features=np.asarray(rows, dtype=np.float64).reshape(len(rows), -1),
        edges=[(int(p), int(c)) for p, c in obj["edges"]],
        engagements=[(str(u), int(c)) for u, c in obj["engagements"]],
    )


def load_dataset(path) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise DataValidationError(f"{path}:1: empty file, expected pssd-v1 header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise DataValidationError(f"{path}:1: parse error: {e}") from e
    if not isinstance(header, dict) or header.get("format") != FORMAT_NAME:
        raise DataValidationError(f"{path}:1: not a {FORMAT_NAME} header")
    feature_dim = int(header["feature_dim"])
    samples = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataValidationError(f"{path}:{lineno}: parse error: {e}") from e
        samples.append(_parse_sample(obj, lineno, path))
    ds = Dataset.from_samples(feature_dim, samples)
    report = validate_dataset(ds)
    if report:
        raise DataValidationError(f"{path}: invalid dataset: " + "; ".join(report[:5]))
    return ds
