"""Contrastive distillation objective: projector, the two contrastive losses,
optional task cross-entropy, and exact analytic gradients.

Both contrastive terms share one pipeline: drop filtered rows, L2-normalize
the survivors, optionally subtract the survivor mean, then score every
student/teacher pair by cosine similarity inside a softmax over the teacher
side. The sample-wise term contrasts pooled samples directly; the
feature-wise term transposes the surviving rows and contrasts channels.
Teacher values, selection weights, and thresholds are constants to the
backward pass; gradients flow only to the student features and the
projector parameters.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import EmptySelectionError
from .numerics import EPS, softmax
from .pooling import KERNEL_STRIDE, PooledSet, ScaleSpec, multi_scale_pool, pool_backward
from .selection import ClassifierHead, SelectionWeights, Thresholds, confidence, sample_weights


@dataclass(frozen=True)
class Projector:
    """1x1 linear map from student channels to teacher channels."""

    weights: np.ndarray            # C_out x C_in
    bias: np.ndarray | None = None

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.ndim != 2:
            raise ValueError(f"projector weights must be rank 2, got rank {w.ndim}")
        if not np.all(np.isfinite(w)):
            raise ValueError("projector weights hold non-finite values")
        object.__setattr__(self, "weights", w)
        if self.bias is not None:
            b = np.asarray(self.bias, dtype=np.float64)
            if b.shape != (w.shape[0],):
                raise ValueError(f"projector bias shape {b.shape} does not match "
                                 f"output channels {w.shape[0]}")
            if not np.all(np.isfinite(b)):
                raise ValueError("projector bias holds non-finite values")
            object.__setattr__(self, "bias", b)

    @classmethod
    def identity(cls, channels: int) -> "Projector":
        return cls(weights=np.eye(channels))

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]


@dataclass(frozen=True)
class LossConfig:
    """Trade-off weights and numeric knobs shared by both contrastive terms.

    temperature divides every similarity before exponentiation; the default 1
    leaves the objective in its plain form.
    """

    lambda1: float = 1.0
    lambda2: float = 1.0
    centering: bool = True
    eps: float = EPS
    temperature: float = 1.0

    def __post_init__(self):
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be nonnegative")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


@dataclass
class LossResult:
    loss_sample: float
    loss_feature: float
    loss_task: float | None
    loss_total: float
    grad_student: np.ndarray
    grad_projector_weights: np.ndarray
    grad_projector_bias: np.ndarray | None
    n_high: int
    n_low: int
    n_filtered: int


def project(features: np.ndarray, proj: Projector) -> np.ndarray:
    """Apply the 1x1 linear map at every spatial location."""
    feats = np.asarray(features, dtype=np.float64)
    if feats.ndim != 4:
        raise ValueError(f"expected a rank-4 feature batch, got rank {feats.ndim}")
    if feats.shape[1] != proj.in_channels:
        raise ValueError(f"feature batch has {feats.shape[1]} channels, "
                         f"projector expects {proj.in_channels}")
    out = np.einsum("oc,bchw->bohw", proj.weights, feats)
    if proj.bias is not None:
        out = out + proj.bias[None, :, None, None]
    return out


def _normalize_rows(rows: np.ndarray, eps: float):
    """Rows scaled by 1/max(norm, eps); returns the scaled rows and norms."""
    norms = np.linalg.norm(rows, axis=1)
    return rows / np.maximum(norms, eps)[:, None], norms


def _guarded_cosine(a: np.ndarray, b: np.ndarray, eps: float):
    """All-pairs cosine with zero for sub-eps rows; keeps backward factors."""
    an = np.linalg.norm(a, axis=1)
    bn = np.linalg.norm(b, axis=1)
    a_hat = np.where(an[:, None] >= eps, a / np.maximum(an, eps)[:, None], 0.0)
    b_hat = np.where(bn[:, None] >= eps, b / np.maximum(bn, eps)[:, None], 0.0)
    sim = np.clip(a_hat @ b_hat.T, -1.0, 1.0)
    return sim, an, b_hat


def _normalize_backward(grad_unit: np.ndarray, unit_rows: np.ndarray,
                        norms: np.ndarray, eps: float) -> np.ndarray:
    """Adjoint of rows -> rows / max(norm, eps)."""
    out = np.empty_like(grad_unit)
    big = norms >= eps
    if big.any():
        u = unit_rows[big]
        g = grad_unit[big]
        radial = (u * g).sum(axis=1, keepdims=True)
        out[big] = (g - radial * u) / norms[big][:, None]
    if (~big).any():
        out[~big] = grad_unit[~big] / eps
    return out


def _log_softmax_diag(sim: np.ndarray, temperature: float):
    """Per-row log(exp(z_ii)/sum_j exp(z_ij)) with z = sim/temperature."""
    z = sim / temperature
    zmax = z.max(axis=1, keepdims=True)
    lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=1))
    log_pos = np.diagonal(z) - lse
    probs = np.exp(z - lse[:, None])
    return log_pos, probs


@dataclass
class _ContrastCache:
    """Everything one contrastive term's backward needs, in forward order."""

    selected: np.ndarray       # indices of surviving rows
    total_rows: int
    unit_rows: np.ndarray      # survivors after L2 normalization
    row_norms: np.ndarray      # pre-normalization norms
    centered: np.ndarray       # contrasted student-side vectors
    centered_norms: np.ndarray
    teacher_hat: np.ndarray    # unit teacher-side vectors (zero when degenerate)
    sim: np.ndarray
    probs: np.ndarray
    outer_scale: np.ndarray    # per-row weight divided by the prefactor count
    transposed: bool           # feature-wise term works on channels
    centering: bool
    eps: float
    temperature: float


def _check_aligned(s_pool: PooledSet, t_pool: PooledSet) -> None:
    if s_pool.batch_size != t_pool.batch_size:
        raise ValueError(f"batch sizes differ: {s_pool.batch_size} vs {t_pool.batch_size}")
    if s_pool.window_count != t_pool.window_count:
        raise ValueError(f"window counts differ: {s_pool.window_count} "
                         f"vs {t_pool.window_count}")
    s_scales = tuple(w.scale for w in s_pool.windows)
    t_scales = tuple(w.scale for w in t_pool.windows)
    if s_scales != t_scales:
        raise ValueError("pooled sets come from different window layouts")


def _contrast_forward(s_rows: np.ndarray, t_rows: np.ndarray, keep: np.ndarray,
                      outer_scale: np.ndarray, transposed: bool,
                      cfg: LossConfig) -> tuple[float, _ContrastCache]:
    selected = np.flatnonzero(keep > 0)
    if selected.size == 0:
        raise EmptySelectionError("no sample survives the filtering threshold")
    s_sel = s_rows[selected]
    t_sel = t_rows[selected]
    unit_s, row_norms = _normalize_rows(s_sel, cfg.eps)
    unit_t, _ = _normalize_rows(t_sel, cfg.eps)
    if transposed:
        contrast_s, contrast_t = unit_s.T, unit_t.T
    else:
        contrast_s, contrast_t = unit_s, unit_t
    if cfg.centering:
        contrast_s = contrast_s - contrast_s.mean(axis=0)
        contrast_t = contrast_t - contrast_t.mean(axis=0)
    sim, centered_norms, teacher_hat = _guarded_cosine(contrast_s, contrast_t, cfg.eps)
    log_pos, probs = _log_softmax_diag(sim, cfg.temperature)
    loss = -float(outer_scale @ log_pos)
    cache = _ContrastCache(
        selected=selected, total_rows=s_rows.shape[0], unit_rows=unit_s,
        row_norms=row_norms, centered=contrast_s, centered_norms=centered_norms,
        teacher_hat=teacher_hat, sim=sim, probs=probs, outer_scale=outer_scale,
        transposed=transposed, centering=cfg.centering, eps=cfg.eps,
        temperature=cfg.temperature)
    return loss, cache


def _contrast_backward(cache: _ContrastCache, channels: int) -> np.ndarray:
    """Gradient of one contrastive term w.r.t. the full pooled student rows."""
    k = cache.sim.shape[0]
    grad_sim = (cache.outer_scale[:, None] / cache.temperature) * \
        (cache.probs - np.eye(k))
    safe = np.maximum(cache.centered_norms, cache.eps)
    radial = (grad_sim * cache.sim).sum(axis=1)
    grad_centered = grad_sim @ cache.teacher_hat / safe[:, None] \
        - radial[:, None] * cache.centered / (safe ** 2)[:, None]
    grad_centered[cache.centered_norms < cache.eps] = 0.0
    if cache.centering:
        grad_centered = grad_centered - grad_centered.mean(axis=0)
    grad_unit = grad_centered.T if cache.transposed else grad_centered
    grad_sel = _normalize_backward(grad_unit, cache.unit_rows,
                                   cache.row_norms, cache.eps)
    grad_rows = np.zeros((cache.total_rows, channels), dtype=np.float64)
    grad_rows[cache.selected] = grad_sel
    return grad_rows


def sample_wise_loss(s_pool: PooledSet, t_pool: PooledSet,
                     weights: SelectionWeights,
                     cfg: LossConfig) -> tuple[float, _ContrastCache]:
    """Contrast each selected pooled sample against every selected teacher row.

    Per row the positive is its own teacher counterpart; the softmax
    denominator runs over all selected teacher rows including the positive.
    Row weights enter the outer sum; the total is scaled by 1/N_selected.
    Returns the loss and the cache the total-loss backward consumes.
    """
    _check_aligned(s_pool, t_pool)
    if weights.w_sample.shape[0] != s_pool.samples.shape[0]:
        raise ValueError(f"{weights.w_sample.shape[0]} weights for "
                         f"{s_pool.samples.shape[0]} pooled rows")
    selected = np.flatnonzero(weights.w_sample > 0)
    if selected.size == 0:
        raise EmptySelectionError("no sample carries positive weight")
    if selected.size == 1 and cfg.centering:
        warnings.warn("a single selected sample centers to the zero vector; "
                      "its similarities all degrade to 0")
    outer = weights.w_sample[selected] / weights.n_selected
    return _contrast_forward(s_pool.samples, t_pool.samples, weights.w_sample,
                             outer, transposed=False, cfg=cfg)


def feature_wise_loss(s_pool: PooledSet, t_pool: PooledSet, mask: np.ndarray,
                      cfg: LossConfig) -> tuple[float, _ContrastCache]:
    """Contrast channels across the surviving rows of both pooled sets.

    After filtering and row normalization the matrices are transposed, so
    each contrasted unit is one channel's profile over the selected samples.
    Every channel weighs equally: the loss averages over channels.
    """
    _check_aligned(s_pool, t_pool)
    mask = np.asarray(mask, dtype=np.float64)
    if mask.shape != (s_pool.samples.shape[0],):
        raise ValueError(f"mask shape {mask.shape} does not match "
                         f"{s_pool.samples.shape[0]} pooled rows")
    channels = s_pool.channels
    outer = np.full(channels, 1.0 / channels)
    return _contrast_forward(s_pool.samples, t_pool.samples, mask,
                             outer, transposed=True, cfg=cfg)


def task_loss(logits: np.ndarray, labels: np.ndarray) -> float:
    """Mean cross-entropy of logits against integer class labels."""
    logits = np.asarray(logits, dtype=np.float64)
    labels = np.asarray(labels)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ValueError(f"expected B x K logits and B labels, got "
                         f"{logits.shape} and {labels.shape}")
    labels = labels.astype(np.int64)
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ValueError(f"labels must lie in [0, {logits.shape[1]}), "
                         f"got range [{labels.min()}, {labels.max()}]")
    zmax = logits.max(axis=1)
    lse = zmax + np.log(np.exp(logits - zmax[:, None]).sum(axis=1))
    picked = logits[np.arange(len(labels)), labels]
    return float((lse - picked).mean())


def _task_backward(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    grad = softmax(logits, axis=1)
    grad[np.arange(len(labels)), labels] -= 1.0
    return grad / len(labels)


@dataclass
class TotalLossCache:
    """Forward intermediates owned by one evaluation; consumed by backward()."""

    student: np.ndarray
    projector: Projector
    s_pool: PooledSet
    sample_cache: _ContrastCache
    feature_cache: _ContrastCache
    cfg: LossConfig
    logits: np.ndarray | None
    labels: np.ndarray | None
    head: ClassifierHead
    consumed: bool = field(default=False)


def total_loss_forward(student_feat: np.ndarray, teacher_feat: np.ndarray,
                       head: ClassifierHead, proj: Projector | None,
                       spec: ScaleSpec, th: Thresholds, cfg: LossConfig,
                       labels: np.ndarray | None = None,
                       ) -> tuple[LossResult, TotalLossCache]:
    """Run the full objective once; gradients in the result are placeholders
    until backward() fills them via total_loss().

    Pipeline: project the student map, pool both maps with the same spec,
    score the pooled teacher rows, weight/filter, evaluate both contrastive
    terms, optionally the task term, and combine:
    total = task + lambda1 * sample + lambda2 * feature.
    """
    student = np.asarray(student_feat, dtype=np.float64)
    teacher = np.asarray(teacher_feat, dtype=np.float64)
    if student.ndim != 4 or teacher.ndim != 4:
        raise ValueError("student and teacher features must be rank 4")
    if student.shape[0] != teacher.shape[0]:
        raise ValueError(f"batch sizes differ: {student.shape[0]} vs {teacher.shape[0]}")
    if proj is None:
        if student.shape[1] != teacher.shape[1]:
            raise ValueError("a projector is required when student and teacher "
                             "channel counts differ")
        proj = Projector.identity(teacher.shape[1])
    if proj.in_channels != student.shape[1]:
        raise ValueError(f"projector expects {proj.in_channels} input channels, "
                         f"student has {student.shape[1]}")
    if proj.out_channels != teacher.shape[1]:
        raise ValueError(f"projector emits {proj.out_channels} channels, "
                         f"teacher has {teacher.shape[1]}")
    if head.channels != teacher.shape[1]:
        raise ValueError(f"classifier head expects {head.channels} channels, "
                         f"teacher has {teacher.shape[1]}")
    if spec.mode == KERNEL_STRIDE and student.shape[2:] != teacher.shape[2:]:
        raise ValueError("kernel-stride pooling requires equal student and "
                         "teacher spatial sizes")

    projected = project(student, proj)
    s_pool = multi_scale_pool(projected, spec)
    t_pool = multi_scale_pool(teacher, spec)
    table = confidence(t_pool, head)
    weights = sample_weights(table, th)

    loss_s, sample_cache = sample_wise_loss(s_pool, t_pool, weights, cfg)
    loss_f, feature_cache = feature_wise_loss(s_pool, t_pool, weights.w_feature, cfg)

    logits = None
    loss_t: float | None = None
    if labels is not None:
        labels = np.asarray(labels)
        if labels.dtype.kind == "f" and not np.all(labels == np.round(labels)):
            raise ValueError("labels must be integral")
        labels = labels.astype(np.int64)
        logits = head.logits(projected.mean(axis=(2, 3)))
        loss_t = task_loss(logits, labels)

    total = (loss_t or 0.0) + cfg.lambda1 * loss_s + cfg.lambda2 * loss_f
    result = LossResult(
        loss_sample=loss_s, loss_feature=loss_f, loss_task=loss_t,
        loss_total=total, grad_student=np.zeros_like(student),
        grad_projector_weights=np.zeros_like(proj.weights),
        grad_projector_bias=(np.zeros_like(proj.bias)
                             if proj.bias is not None else None),
        n_high=weights.n_high, n_low=weights.n_low,
        n_filtered=int(weights.w_sample.size - weights.n_selected))
    cache = TotalLossCache(student=student, projector=proj, s_pool=s_pool,
                           sample_cache=sample_cache, feature_cache=feature_cache,
                           cfg=cfg, logits=logits, labels=labels, head=head)
    return result, cache


def backward(cache: TotalLossCache):
    """Exact gradients of the combined loss w.r.t. student features and
    projector parameters. Consumes the cache; a second call errors.
    """
    if cache.consumed:
        raise ValueError("stale cache: backward was already run for this forward pass")
    cache.consumed = True
    cfg = cache.cfg
    channels = cache.s_pool.channels
    grad_rows = cfg.lambda1 * _contrast_backward(cache.sample_cache, channels) \
        + cfg.lambda2 * _contrast_backward(cache.feature_cache, channels)
    grad_projected = pool_backward(grad_rows, cache.s_pool)
    if cache.logits is not None:
        grad_logits = _task_backward(cache.logits, cache.labels)
        grad_gap = grad_logits @ cache.head.weights
        height, width = cache.s_pool.spatial
        grad_projected += grad_gap[:, :, None, None] / (height * width)
    proj = cache.projector
    grad_student = np.einsum("oc,bohw->bchw", proj.weights, grad_projected)
    grad_weights = np.einsum("bohw,bchw->oc", grad_projected, cache.student)
    grad_bias = grad_projected.sum(axis=(0, 2, 3)) if proj.bias is not None else None
    return grad_student, grad_weights, grad_bias


def total_loss(student_feat: np.ndarray, teacher_feat: np.ndarray,
               head: ClassifierHead, proj: Projector | None,
               spec: ScaleSpec, th: Thresholds, cfg: LossConfig,
               labels: np.ndarray | None = None) -> LossResult:
    """Forward plus backward in one call; see total_loss_forward()."""
    result, cache = total_loss_forward(student_feat, teacher_feat, head, proj,
                                       spec, th, cfg, labels)
    grad_student, grad_weights, grad_bias = backward(cache)
    result.grad_student = grad_student
    result.grad_projector_weights = grad_weights
    result.grad_projector_bias = grad_bias
    return result
