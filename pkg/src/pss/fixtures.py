"""Bundled fixture dataset: 6 news, 3 users, trees of at most 4 nodes.

Small enough for exhaustive finite-difference checks, with nonzero global
graph off-diagonals so the refiner path is exercised.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path

from .data import Dataset, load_dataset


def fixture_path() -> Path:
    return Path(str(resources.files("pss").joinpath("fixtures/fixture6.jsonl")))


def load_fixture() -> Dataset:
    return load_dataset(fixture_path())
