"""Built-in verification suite: seeded cross-checks of every numeric kernel
against the slow reference implementations, a finite-difference audit of the
analytic gradients, and the similarity-toolkit invariants.

Run via the command line (`msdcrd selftest`) or call run() directly.
"""

from __future__ import annotations

import sys

import numpy as np

from . import reference
from .cka import cka, gram, hsic
from .errors import EmptySelectionError
from .losses import (LossConfig, Projector, backward, feature_wise_loss,
                     sample_wise_loss, total_loss_forward)
from .pooling import ScaleSpec, multi_scale_pool
from .selection import (ClassifierHead, ConfidenceTable, Thresholds,
                        confidence, sample_weights)

GRAD_STEP = 1e-5
GRAD_TOL = 1e-4
REL_FLOOR = 1e-4


def max_relative_error(a: np.ndarray, b: np.ndarray,
                       floor: float = REL_FLOOR) -> float:
    """Elementwise |a-b| over max(|a|, |b|, floor), reduced to the worst case."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom)) if a.size else 0.0


def _random_instance(seed: int, b=2, c_s=4, c_t=4, hw=4, k=5,
                     scales=(1, 2), with_labels=None, with_bias=None):
    """One seeded problem: features, head, projector, thresholds, config."""
    rng = np.random.default_rng(seed)
    if with_labels is None:
        with_labels = seed % 2 == 1
    if with_bias is None:
        with_bias = seed % 2 == 0
    student = rng.standard_normal((b, c_s, hw, hw))
    teacher = rng.standard_normal((b, c_t, hw, hw))
    head = ClassifierHead(
        weights=rng.standard_normal((k, c_t)),
        bias=rng.standard_normal(k) if with_bias else None)
    proj = Projector(
        weights=rng.standard_normal((c_t, c_s)) / np.sqrt(c_s),
        bias=rng.standard_normal(c_t) * 0.1 if with_bias else None)
    labels = rng.integers(0, k, size=b) if with_labels else None
    spec = ScaleSpec(scales=scales)
    th = Thresholds(alpha=0.22, beta=0.4)
    cfg = LossConfig(lambda1=0.8, lambda2=1.3)
    return student, teacher, head, proj, spec, th, cfg, labels


def fd_total_loss_grads(student, teacher, head, proj, spec, th, cfg,
                        labels=None, step: float = GRAD_STEP):
    """Central finite differences of the total loss w.r.t. the student
    features and projector parameters."""

    def value(s, w, b):
        p = Projector(weights=w, bias=b)
        result, _ = total_loss_forward(s, teacher, head, p, spec, th, cfg, labels)
        return result.loss_total

    def fd_over(base_args, which):
        arrays = [np.array(a, dtype=np.float64) if a is not None else None
                  for a in base_args]
        target = arrays[which]
        grad = np.zeros_like(target)
        flat = target.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            hi = value(*arrays)
            flat[i] = keep - step
            lo = value(*arrays)
            flat[i] = keep
            gflat[i] = (hi - lo) / (2 * step)
        return grad

    base = [np.array(student, dtype=np.float64),
            np.array(proj.weights), None if proj.bias is None else np.array(proj.bias)]
    g_student = fd_over(base, 0)
    g_weights = fd_over(base, 1)
    g_bias = fd_over(base, 2) if proj.bias is not None else None
    return g_student, g_weights, g_bias


def check_pooling(seeds=range(20)) -> tuple[bool, str]:
    worst = 0.0
    for seed in seeds:
        rng = np.random.default_rng(1000 + seed)
        hw = int(rng.choice([4, 7, 8]))
        feats = rng.standard_normal((int(rng.integers(1, 4)),
                                     int(rng.integers(1, 6)), hw, hw))
        scales = (1, 2) if hw < 8 else (1, 2, 4)
        pooled = multi_scale_pool(feats, ScaleSpec(scales=scales))
        rects = reference.grid_rects(scales, hw, hw)
        expected = np.array(reference.pool_rows(feats.tolist(), rects))
        worst = max(worst, float(np.max(np.abs(pooled.samples - expected))))
    ok = worst < 1e-12
    return ok, f"max abs deviation {worst:.3e} (limit 1e-12)"


def _loss_fixture(seed: int):
    rng = np.random.default_rng(2000 + seed)
    b, c, hw = 2, int(rng.integers(3, 6)), 4
    spec = ScaleSpec(scales=(1, 2))
    s_pool = multi_scale_pool(rng.standard_normal((b, c, hw, hw)), spec)
    t_pool = multi_scale_pool(rng.standard_normal((b, c, hw, hw)), spec)
    head = ClassifierHead(weights=rng.standard_normal((5, c)))
    table = confidence(t_pool, head)
    th = Thresholds(alpha=0.22, beta=0.4)
    weights = sample_weights(table, th)
    cfg = LossConfig(centering=seed % 2 == 0)
    return s_pool, t_pool, weights, cfg


def check_sample_loss(seeds=range(10)) -> tuple[bool, str]:
    worst = 0.0
    for seed in seeds:
        s_pool, t_pool, weights, cfg = _loss_fixture(seed)
        got, _ = sample_wise_loss(s_pool, t_pool, weights, cfg)
        want = reference.sample_loss(
            s_pool.samples.tolist(), t_pool.samples.tolist(),
            weights.w_sample.tolist(), weights.n_high, weights.n_low,
            cfg.centering, cfg.eps, cfg.temperature)
        worst = max(worst, abs(got - want))
    ok = worst < 1e-9
    return ok, f"max abs deviation {worst:.3e} (limit 1e-9)"


def check_feature_loss(seeds=range(10)) -> tuple[bool, str]:
    worst = 0.0
    for seed in seeds:
        s_pool, t_pool, weights, cfg = _loss_fixture(seed)
        got, _ = feature_wise_loss(s_pool, t_pool, weights.w_feature, cfg)
        want = reference.feature_loss(
            s_pool.samples.tolist(), t_pool.samples.tolist(),
            weights.w_feature.tolist(), cfg.centering, cfg.eps, cfg.temperature)
        worst = max(worst, abs(got - want))
    ok = worst < 1e-9
    return ok, f"max abs deviation {worst:.3e} (limit 1e-9)"


def check_gradients(seeds=(0, 1)) -> tuple[bool, str]:
    worst = 0.0
    for seed in seeds:
        student, teacher, head, proj, spec, th, cfg, labels = _random_instance(seed)
        result, cache = total_loss_forward(student, teacher, head, proj,
                                           spec, th, cfg, labels)
        g_student, g_weights, g_bias = backward(cache)
        f_student, f_weights, f_bias = fd_total_loss_grads(
            student, teacher, head, proj, spec, th, cfg, labels)
        worst = max(worst, max_relative_error(g_student, f_student))
        worst = max(worst, max_relative_error(g_weights, f_weights))
        if g_bias is not None:
            worst = max(worst, max_relative_error(g_bias, f_bias))
    ok = worst < GRAD_TOL
    return ok, f"max relative error {worst:.3e} (limit {GRAD_TOL})"


def check_cka(seeds=range(5)) -> tuple[bool, str]:
    for seed in seeds:
        rng = np.random.default_rng(3000 + seed)
        x = rng.standard_normal((8, 5))
        y = rng.standard_normal((8, 6))
        base = cka(x, y)
        if abs(cka(x, x) - 1.0) > 1e-10:
            return False, "self-similarity misses 1"
        for c in (0.5, 3.0):
            if abs(cka(c * x, y) - base) > 1e-10:
                return False, f"scaling by {c} shifts the value"
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        if abs(cka(x @ q, y) - base) > 1e-9:
            return False, "orthogonal transform shifts the value"
        const = np.ones((8, 4)) * 2.5
        g = gram(const)
        if abs(hsic(g, g)) > 1e-12:
            return False, "constant features have nonzero self-HSIC"
    return True, "identity, scaling, rotation, degenerate cases all hold"


def _table(probs) -> ConfidenceTable:
    probs = np.asarray(probs, dtype=np.float64)
    return ConfidenceTable(probs=probs,
                           classes=np.zeros(probs.shape[0], dtype=np.int64))


def check_weighting() -> tuple[bool, str]:
    cases = [
        ([0.1, 0.5, 0.9], 0.3, 0.7, [0.0, 0.5, 0.5], 1, 1),
        ([0.5, 0.6], 0.3, 0.7, [0.5, 0.5], 0, 2),
        ([0.8, 0.9], 0.3, 0.7, [0.5, 0.5], 2, 0),
    ]
    for probs, alpha, beta, want, n_high, n_low in cases:
        table = _table(probs)
        got = sample_weights(table, Thresholds(alpha=alpha, beta=beta))
        if not np.array_equal(got.w_sample, np.array(want)):
            return False, f"weights {got.w_sample} != {want} for P={probs}"
        if (got.n_high, got.n_low) != (n_high, n_low):
            return False, f"counts ({got.n_high},{got.n_low}) wrong for P={probs}"
    try:
        sample_weights(_table([0.1, 0.2]), Thresholds(alpha=0.3, beta=0.7))
        return False, "all-filtered batch did not raise"
    except EmptySelectionError:
        pass
    return True, "threshold fixtures and empty-selection path hold"


CHECKS = [
    ("pooling-oracle", check_pooling),
    ("sample-loss-oracle", check_sample_loss),
    ("feature-loss-oracle", check_feature_loss),
    ("gradient-fd", check_gradients),
    ("cka-invariants", check_cka),
    ("selection-weighting", check_weighting),
]


def run(stream=None) -> bool:
    stream = stream or sys.stdout
    all_ok = True
    for name, fn in CHECKS:
        ok, detail = fn()
        all_ok &= ok
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}", file=stream)
    return all_ok
