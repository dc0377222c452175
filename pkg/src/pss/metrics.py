"""Binary classification metrics with pinned tie and zero-division rules."""

from __future__ import annotations

import numpy as np


def predict_labels(logits: np.ndarray) -> np.ndarray:
    # argmax with ties broken toward class 0
    return np.argmax(logits, axis=1)


def _check(preds, labels):
    preds = np.asarray(preds, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if preds.shape != labels.shape or preds.ndim != 1 or preds.size == 0:
        raise ValueError(f"preds/labels length mismatch: {preds.shape} vs {labels.shape}")
    return preds, labels


def accuracy(preds, labels) -> float:
    preds, labels = _check(preds, labels)
    return float(np.mean(preds == labels))


def macro_f1(preds, labels) -> float:
    """Unweighted mean of per-class F1 over classes {0, 1}.

    A class with zero precision+recall (including one absent from both preds
    and labels) contributes F1 = 0.
    """
    preds, labels = _check(preds, labels)
    scores = []
    for c in (0, 1):
        tp = int(np.sum((preds == c) & (labels == c)))
        fp = int(np.sum((preds == c) & (labels != c)))
        fn = int(np.sum((preds != c) & (labels == c)))
        precision = tp / (tp + fp) if tp + fp > 0 else 0.0
        recall = tp / (tp + fn) if tp + fn > 0 else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
        scores.append(f1)
    return float(sum(scores) / len(scores))
