"""Confidence scoring of pooled teacher samples and threshold-based weighting.

Each pooled teacher vector is pushed through the frozen teacher classifier;
the maximum softmax probability serves as that sample's confidence. Two
thresholds split the batch: below alpha a sample is dropped, between alpha
and beta it is low-confidence, at or above beta high-confidence. Sample
weights cross the group frequencies so both groups contribute equally.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySelectionError
from .numerics import softmax
from .pooling import PooledSet

DEFAULT_ALPHA = 0.05
DEFAULT_BETA = 0.6


@dataclass(frozen=True)
class ClassifierHead:
    """Frozen K-way linear classifier: logits = weights @ x + bias."""

    weights: np.ndarray            # K x C
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2 or w.shape[0] < 2:
            raise ValueError(f"head weights must be K x C with K >= 2, got {w.shape}")
        if not np.all(np.isfinite(w)):
            raise ValueError("head weights hold non-finite values")
        object.__setattr__(self, "weights", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64)
            if b.shape != (w.shape[0],):
                raise ValueError(f"head bias shape {b.shape} does not match K={w.shape[0]}")
            if not np.all(np.isfinite(b)):
                raise ValueError("head bias holds non-finite values")
            object.__setattr__(self, "bias", b)

    @property
    def classes(self) -> int:
        return self.weights.shape[0]

    @property
    def channels(self) -> int:
        return self.weights.shape[1]

    def logits(self, rows: np.ndarray) -> np.ndarray:
        rows = np.asarray(rows, dtype=np.float64)
        if rows.shape[-1] != self.channels:
            raise ValueError(f"rows have {rows.shape[-1]} channels, "
                             f"head expects {self.channels}")
        out = rows @ self.weights.T
        if self.bias is not None:
            out = out + self.bias
        return out


@dataclass(frozen=True)
class Thresholds:
    """Filtering threshold alpha and confidence split beta, 0 <= a <= b <= 1."""

    alpha: float = DEFAULT_ALPHA
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        a, b = float(self.alpha), float(self.beta)
        if not (0.0 <= a <= b <= 1.0):
            raise ValueError(f"need 0 <= alpha <= beta <= 1, got alpha={a}, beta={b}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "beta", b)


@dataclass(frozen=True)
class ConfidenceTable:
    """Per-sample confidence (max softmax probability) and predicted class."""

    probs: np.ndarray      # N, in (0, 1]
    classes: np.ndarray    # N, int64


@dataclass(frozen=True)
class SelectionWeights:
    """Sample weights, binary feature mask, and the two group counts."""

    w_sample: np.ndarray
    w_feature: np.ndarray
    n_high: int
    n_low: int

    @property
    def n_selected(self) -> int:
        return self.n_high + self.n_low


def confidence(pooled: PooledSet | np.ndarray, head: ClassifierHead) -> ConfidenceTable:
    """Score each pooled row with the classifier's maximum softmax probability.

    Rows are used raw: no normalization is applied before the classifier.
    """
    rows = pooled.samples if isinstance(pooled, PooledSet) else np.asarray(pooled)
    logits = head.logits(rows)
    probs = softmax(logits, axis=-1)
    return ConfidenceTable(probs=probs.max(axis=-1),
                           classes=np.argmax(logits, axis=-1).astype(np.int64))


def sample_weights(table: ConfidenceTable, th: Thresholds) -> SelectionWeights:
    """Threshold confidences into the cross-frequency weighting scheme.

    Samples below alpha get weight 0. Otherwise low-confidence samples
    (alpha <= P < beta) weigh 1/(2*N_high) and high-confidence samples
    (P >= beta) weigh 1/(2*N_low), so each group sums to half. When exactly
    one group is empty, survivors fall back to uniform 1/N_selected.

    Raises EmptySelectionError when every sample falls below alpha.
    """
    probs = np.asarray(table.probs, dtype=np.float64)
    selected = probs >= th.alpha
    if not selected.any():
        raise EmptySelectionError(
            f"no sample reaches the filtering threshold alpha={th.alpha}")
    high = selected & (probs >= th.beta)
    low = selected & ~high
    n_high = int(high.sum())
    n_low = int(low.sum())
    weights = np.zeros(probs.shape, dtype=np.float64)
    if n_high > 0 and n_low > 0:
        weights[low] = 0.5 / n_high
        weights[high] = 0.5 / n_low
    else:
        weights[selected] = 1.0 / (n_high + n_low)
    return SelectionWeights(w_sample=weights,
                            w_feature=selected.astype(np.float64),
                            n_high=n_high, n_low=n_low)


def feature_mask(table: ConfidenceTable, alpha: float) -> np.ndarray:
    """Binary mask keeping samples with confidence at or above alpha."""
    if not (0.0 <= alpha <= 1.0):
        raise ValueError(f"alpha must lie in [0, 1], got {alpha}")
    return (np.asarray(table.probs, dtype=np.float64) >= alpha).astype(np.float64)


def confidence_histogram(table: ConfidenceTable, bins: int) -> np.ndarray:
    """Counts of confidences over `bins` equal-width bins of [0, 1]."""
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    counts, _ = np.histogram(np.asarray(table.probs), bins=bins, range=(0.0, 1.0))
    return counts.astype(np.int64)
