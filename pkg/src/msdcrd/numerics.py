"""Shared numeric primitives: normalization, softmax, cosine similarity."""

from __future__ import annotations

import numpy as np

EPS = 1e-12


def l2_normalize(rows: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Scale each trailing-axis vector to unit length.

    Vectors with Euclidean norm below `eps` are divided by `eps` instead,
    so the result stays finite and zero vectors map to zero.
    """
    rows = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(rows, axis=-1, keepdims=True)
    return rows / np.maximum(norms, eps)


def softmax(logits: np.ndarray, axis: int = -1) -> np.ndarray:
    """Numerically stable softmax along `axis`."""
    logits = np.asarray(logits, dtype=np.float64)
    if logits.shape[axis] == 0:
        raise ValueError("softmax of an empty vector")
    shifted = logits - np.max(logits, axis=axis, keepdims=True)
    expd = np.exp(shifted)
    return expd / np.sum(expd, axis=axis, keepdims=True)


def cosine_similarity(a: np.ndarray, b: np.ndarray, eps: float = EPS) -> np.ndarray:
    """Cosine of the angle between paired trailing-axis vectors.

    Pairs where either vector has norm below `eps` get similarity 0.
    Results are clamped to [-1, 1] against rounding overshoot.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape[-1] != b.shape[-1]:
        raise ValueError(f"length mismatch: {a.shape[-1]} vs {b.shape[-1]}")
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    dot = np.sum(a * b, axis=-1)
    ok = (na >= eps) & (nb >= eps)
    sim = np.where(ok, dot / np.where(ok, na * nb, 1.0), 0.0)
    return np.clip(sim, -1.0, 1.0)


def cosine_matrix(a: np.ndarray, b: np.ndarray, eps: float = EPS) -> np.ndarray:
    """All-pairs cosine similarity between rows of `a` and rows of `b`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.clip(l2_normalize(a, eps) @ l2_normalize(b, eps).T, -1.0, 1.0)
