"""Multi-scale average pooling of feature batches into per-window sample rows.

The default output-grid mode pools each image adaptively to an s x s grid per
scale, so scale 1 reproduces global average pooling. Kernel-stride mode slides
an s x s window with a configurable stride instead; an optional trailing GAP
window is tagged with scale 0 in the metadata.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

OUTPUT_GRID = "output-grid"
KERNEL_STRIDE = "kernel-stride"
GAP_SCALE = 0


@dataclass(frozen=True)
class ScaleSpec:
    """Pooling configuration: mode, scales, and kernel-stride extras."""

    scales: tuple[int, ...]
    mode: str = OUTPUT_GRID
    strides: tuple[int, ...] | None = None
    include_gap: bool = False

    def __post_init__(self):
        object.__setattr__(self, "scales", tuple(int(s) for s in self.scales))
        if self.mode not in (OUTPUT_GRID, KERNEL_STRIDE):
            raise ValueError(f"unknown pooling mode {self.mode!r}")
        if not self.scales:
            raise ValueError("scales must be nonempty")
        if any(s < 1 for s in self.scales):
            raise ValueError(f"scales must be >= 1, got {self.scales}")
        if list(self.scales) != sorted(set(self.scales)):
            raise ValueError(f"scales must be ascending and distinct, got {self.scales}")
        if self.mode == OUTPUT_GRID:
            if self.strides is not None:
                raise ValueError("strides only apply in kernel-stride mode")
            if self.include_gap:
                raise ValueError("include_gap only applies in kernel-stride mode")
        elif self.strides is not None:
            object.__setattr__(self, "strides", tuple(int(t) for t in self.strides))
            if len(self.strides) != len(self.scales):
                raise ValueError("need one stride per scale")
            if any(t < 1 for t in self.strides):
                raise ValueError(f"strides must be >= 1, got {self.strides}")

    def effective_strides(self) -> tuple[int, ...]:
        """Per-scale strides, defaulting to the kernel size."""
        if self.strides is not None:
            return self.strides
        return self.scales

    def validate_extent(self, height: int, width: int) -> None:
        """Check every scale fits inside an H x W map."""
        limit = min(height, width)
        for s in self.scales:
            if s > limit:
                raise ValueError(
                    f"scale {s} exceeds spatial extent {height}x{width}")


@dataclass(frozen=True)
class Window:
    """One pooling rectangle; scale 0 marks the appended GAP window."""

    scale: int
    top: int
    left: int
    height: int
    width: int


@dataclass
class PooledSet:
    """Pooled sample rows plus per-row provenance.

    Row order is image-major: row i*M + m holds window m of image i. The
    meta arrays run parallel to the rows of `samples`.
    """

    samples: np.ndarray                 # N x C
    windows: tuple[Window, ...]         # the M windows shared by every image
    batch_size: int
    spatial: tuple[int, int]
    image_index: np.ndarray = field(init=False)
    window_index: np.ndarray = field(init=False)

    def __post_init__(self):
        b, m = self.batch_size, len(self.windows)
        self.image_index = np.repeat(np.arange(b, dtype=np.int64), m)
        self.window_index = np.tile(np.arange(m, dtype=np.int64), b)

    @property
    def window_count(self) -> int:
        return len(self.windows)

    @property
    def channels(self) -> int:
        return self.samples.shape[1]

    def meta_rows(self):
        """(image, window, scale, top, left, height, width) per sample row."""
        for n in range(self.samples.shape[0]):
            w = self.windows[self.window_index[n]]
            yield (int(self.image_index[n]), int(self.window_index[n]),
                   w.scale, w.top, w.left, w.height, w.width)


def window_layout(spec: ScaleSpec, height: int, width: int) -> list[Window]:
    """Ordered pooling rectangles for an H x W map.

    Scales ascending, positions row-major within each scale. Output-grid
    windows tile the map with floor boundaries; kernel-stride windows start
    at multiples of the stride and must fit entirely inside the map.
    """
    if height < 1 or width < 1:
        raise ValueError(f"spatial extent must be positive, got {height}x{width}")
    spec.validate_extent(height, width)
    out: list[Window] = []
    if spec.mode == OUTPUT_GRID:
        for s in spec.scales:
            for r in range(s):
                top = (r * height) // s
                bottom = ((r + 1) * height) // s
                for c in range(s):
                    left = (c * width) // s
                    right = ((c + 1) * width) // s
                    out.append(Window(s, top, left, bottom - top, right - left))
    else:
        for k, stride in zip(spec.scales, spec.effective_strides()):
            for top in range(0, height - k + 1, stride):
                for left in range(0, width - k + 1, stride):
                    out.append(Window(k, top, left, k, k))
        if spec.include_gap:
            out.append(Window(GAP_SCALE, 0, 0, height, width))
    return out


def multi_scale_pool(features: np.ndarray, spec: ScaleSpec) -> PooledSet:
    """Pool a B x C x H x W batch into its multi-scale sample rows.

    Each row is the per-channel mean over one window of one image.
    """
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 4:
        raise ValueError(f"expected a rank-4 feature batch, got rank {feats.ndim}")
    if not np.all(np.isfinite(feats)):
        raise ValueError("feature batch holds non-finite values")
    b, c, height, width = feats.shape
    windows = window_layout(spec, height, width)
    m = len(windows)
    samples = np.empty((b * m, c), dtype=np.float64)
    view = samples.reshape(b, m, c)
    for j, w in enumerate(windows):
        block = feats[:, :, w.top:w.top + w.height, w.left:w.left + w.width]
        view[:, j, :] = block.mean(axis=(2, 3))
    return PooledSet(samples=samples, windows=tuple(windows),
                     batch_size=b, spatial=(height, width))


def pool_backward(grad_rows: np.ndarray, pooled: PooledSet) -> np.ndarray:
    """Scatter per-row gradients back onto the B x C x H x W feature grid.

    Adjoint of multi_scale_pool: each window mean spreads its row gradient
    uniformly over the window's cells.
    """
    grad_rows = np.asarray(grad_rows, dtype=np.float64)
    b, m = pooled.batch_size, pooled.window_count
    c = pooled.channels
    if grad_rows.shape != (b * m, c):
        raise ValueError(f"gradient shape {grad_rows.shape} does not match "
                         f"pooled set ({b * m}, {c})")
    height, width = pooled.spatial
    grad = np.zeros((b, c, height, width), dtype=np.float64)
    per_window = grad_rows.reshape(b, m, c)
    for j, w in enumerate(pooled.windows):
        share = per_window[:, j, :] / (w.height * w.width)
        grad[:, :, w.top:w.top + w.height, w.left:w.left + w.width] += \
            share[:, :, None, None]
    return grad
