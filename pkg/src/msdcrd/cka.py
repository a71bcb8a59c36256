"""Linear-kernel representation similarity: Gram matrices, empirical HSIC,
CKA, and cross-block heatmaps.

Activation blocks are n x d matrices sharing the sample count n. Rank-3 and
rank-4 activation dumps are flattened to n x d at ingest. Constant features
center to zero and make CKA undefined; single calls raise, heatmaps record
the cell as NaN instead.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DegenerateRepresentationError, ManifestError
from .npyio import load_f64

HSIC_EPS = 1e-12


def _as_block(x: np.ndarray) -> np.ndarray:
    """Coerce an activation dump to an n x d float64 matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        raise ValueError("activation block needs a feature dimension")
    if x.ndim > 2:
        x = x.reshape(x.shape[0], -1)
    if x.shape[0] < 2:
        raise ValueError(f"need at least 2 samples, got {x.shape[0]}")
    if not np.all(np.isfinite(x)):
        raise ValueError("activation block holds non-finite values")
    return x


def gram(x: np.ndarray) -> np.ndarray:
    """Linear-kernel Gram matrix X X^T of an n x d block."""
    x = _as_block(x)
    return x @ x.T


def hsic(k_mat: np.ndarray, l_mat: np.ndarray) -> float:
    """Empirical dependence tr(K H L H) / (n-1)^2 with the centering H."""
    k_mat = np.asarray(k_mat, dtype=np.float64)
    l_mat = np.asarray(l_mat, dtype=np.float64)
    if k_mat.ndim != 2 or k_mat.shape[0] != k_mat.shape[1]:
        raise ValueError(f"K must be square, got {k_mat.shape}")
    if l_mat.shape != k_mat.shape:
        raise ValueError(f"size mismatch: {k_mat.shape} vs {l_mat.shape}")
    n = k_mat.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    h = np.eye(n) - 1.0 / n
    return float(np.trace(k_mat @ h @ l_mat @ h) / (n - 1) ** 2)


def cka(x: np.ndarray, y: np.ndarray, eps: float = HSIC_EPS) -> float:
    """Centered kernel alignment between two blocks with equal sample counts.

    Raises DegenerateRepresentationError when either block's self-HSIC is
    at or below eps (constant features carry no alignment signal).
    """
    x = _as_block(x)
    y = _as_block(y)
    if x.shape[0] != y.shape[0]:
        raise ValueError(f"sample counts differ: {x.shape[0]} vs {y.shape[0]}")
    k_mat = gram(x)
    l_mat = gram(y)
    kk = hsic(k_mat, k_mat)
    ll = hsic(l_mat, l_mat)
    if kk <= eps or ll <= eps:
        raise DegenerateRepresentationError(
            f"self-HSIC too small to normalize ({kk:.3e}, {ll:.3e})")
    return hsic(k_mat, l_mat) / math.sqrt(kk * ll)


@dataclass(frozen=True)
class ActivationSet:
    """Ordered per-block activation matrices sharing one sample axis."""

    blocks: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not self.blocks:
            raise ValueError("activation set needs at least one block")
        coerced = tuple(_as_block(b) for b in self.blocks)
        n = coerced[0].shape[0]
        for i, b in enumerate(coerced):
            if b.shape[0] != n:
                raise ValueError(f"block {i} has {b.shape[0]} samples, expected {n}")
        object.__setattr__(self, "blocks", coerced)

    @property
    def sample_count(self) -> int:
        return self.blocks[0].shape[0]


@dataclass(frozen=True)
class CKAHeatmap:
    """CKA matrix over block pairs; NaN marks degenerate pairs."""

    values: np.ndarray


def heatmap(a: ActivationSet, b: ActivationSet) -> CKAHeatmap:
    """CKA of every block pair; degenerate cells become NaN, not errors."""
    if a.sample_count != b.sample_count:
        raise ValueError(f"sample counts differ: {a.sample_count} "
                         f"vs {b.sample_count}")
    values = np.empty((len(a.blocks), len(b.blocks)), dtype=np.float64)
    for p, xb in enumerate(a.blocks):
        for q, yb in enumerate(b.blocks):
            try:
                values[p, q] = cka(xb, yb)
            except DegenerateRepresentationError:
                values[p, q] = np.nan
    return CKAHeatmap(values=values)


def load_activation_set(manifest_path: str | Path) -> ActivationSet:
    """Read an activation set from a JSON manifest listing block files.

    The manifest is {"blocks": [path, ...]}; paths resolve relative to the
    manifest's directory.
    """
    manifest_path = Path(manifest_path)
    doc = json.loads(manifest_path.read_text())
    if not isinstance(doc, dict) or "blocks" not in doc:
        raise ManifestError(f"{manifest_path}: expected an object with a "
                            f"'blocks' list")
    paths = doc["blocks"]
    if not isinstance(paths, list) or not paths \
            or not all(isinstance(p, str) for p in paths):
        raise ManifestError(f"{manifest_path}: 'blocks' must be a nonempty "
                            f"list of file paths")
    base = manifest_path.parent
    return ActivationSet(blocks=tuple(load_f64(base / p) for p in paths))
