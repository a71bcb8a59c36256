"""End-to-end acceptance gate.

Each test covers one release criterion at its stated size, tolerance, and
runtime budget, and prints a single PASS/FAIL line on the real stdout so
the run reads as a checklist even under pytest's capture.
"""

import subprocess
import sys
import time

import numpy as np

from msdcrd import (ClassifierHead, ConfidenceTable, EmptySelectionError,
                    LossConfig, Projector, ScaleSpec, Thresholds, cka,
                    confidence, feature_mask, feature_wise_loss, gram, hsic,
                    multi_scale_pool, sample_weights, sample_wise_loss,
                    total_loss)
from msdcrd import reference
from msdcrd.selftest import fd_total_loss_grads, max_relative_error

from fixtures import make_batch_manifest


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [acceptance] {name}: {detail}"
    print(line, file=sys.__stdout__, flush=True)
    assert ok, line


def _tbl(probs):
    probs = np.asarray(probs, dtype=np.float64)
    return ConfidenceTable(probs=probs, classes=np.zeros(probs.size, dtype=np.int64))


def _rows_pool(rows):
    n, c = rows.shape
    return multi_scale_pool(rows.reshape(n, c, 1, 1), ScaleSpec(scales=(1,)))


def test_acceptance_pooling_oracle():
    start = time.perf_counter()
    scale_sets = [(1,), (1, 2), (1, 2, 4)]
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(2000 + seed)
        b = int(rng.integers(1, 5))
        c = int(rng.integers(1, 9))
        hw = int(rng.choice([4, 7, 8]))
        scales = scale_sets[seed % len(scale_sets)]
        feats = rng.standard_normal((b, c, hw, hw))
        pooled = multi_scale_pool(feats, ScaleSpec(scales=scales))
        rects = reference.grid_rects(list(scales), hw, hw)
        oracle = np.array(reference.pool_rows(feats.tolist(), rects))
        worst = max(worst, float(np.max(np.abs(pooled.samples - oracle))))
    per_image = multi_scale_pool(np.zeros((2, 3, 8, 8)),
                                 ScaleSpec(scales=(1, 2, 4))).window_count
    elapsed = time.perf_counter() - start
    ok = worst < 1e-12 and per_image == 21 and elapsed < 5.0
    report("pooling-oracle", ok,
           f"max |diff| {worst:.3e} over 100 tensors (tol 1e-12), "
           f"{per_image} windows/image for scales (1,2,4) on 8x8 "
           f"(want 21), {elapsed:.2f}s (limit 5s)")


def _loss_instance(seed):
    rng = np.random.default_rng(3000 + seed)
    b = int(rng.integers(2, 4))
    c = int(rng.integers(3, 7))
    hw = int(rng.choice([4, 7, 8]))
    spec = ScaleSpec(scales=(1, 2))
    s_pool = multi_scale_pool(rng.standard_normal((b, c, hw, hw)), spec)
    t_pool = multi_scale_pool(rng.standard_normal((b, c, hw, hw)), spec)
    head = ClassifierHead(weights=rng.standard_normal((4, c)))
    alpha = 0.26 if seed % 5 == 0 else 0.15
    th = Thresholds(alpha=alpha, beta=0.45)
    table = confidence(t_pool, head)
    cfg = LossConfig(centering=bool(seed % 2),
                     temperature=1.0 if seed % 3 else 0.8)
    return s_pool, t_pool, table, th, cfg


def test_acceptance_loss_oracles():
    start = time.perf_counter()
    worst_sample = 0.0
    worst_feature = 0.0
    for seed in range(50):
        s_pool, t_pool, table, th, cfg = _loss_instance(seed)
        weights = sample_weights(table, th)
        mask = feature_mask(table, th.alpha)
        got_s = sample_wise_loss(s_pool, t_pool, weights, cfg)[0]
        got_f = feature_wise_loss(s_pool, t_pool, mask, cfg)[0]
        s_rows = s_pool.samples.tolist()
        t_rows = t_pool.samples.tolist()
        want_s = reference.sample_loss(s_rows, t_rows, weights.w_sample.tolist(),
                                       weights.n_high, weights.n_low,
                                       cfg.centering, cfg.eps, cfg.temperature)
        want_f = reference.feature_loss(s_rows, t_rows, mask.tolist(),
                                        cfg.centering, cfg.eps, cfg.temperature)
        worst_sample = max(worst_sample, abs(got_s - want_s))
        worst_feature = max(worst_feature, abs(got_f - want_f))
    elapsed = time.perf_counter() - start
    ok = worst_sample < 1e-9 and worst_feature < 1e-9 and elapsed < 10.0
    report("loss-oracles", ok,
           f"50 instances each, max |diff| sample {worst_sample:.3e}, "
           f"feature {worst_feature:.3e} (tol 1e-9), {elapsed:.2f}s (limit 10s)")


def test_acceptance_gradient_check():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(10):
        rng = np.random.default_rng(4000 + seed)
        b = 2 + seed % 2
        c_s = int(rng.integers(3, 7))
        c_t = int(rng.integers(3, 7))
        hw = int(rng.integers(4, 8))
        k = 4
        student = rng.standard_normal((b, c_s, hw, hw))
        teacher = rng.standard_normal((b, c_t, hw, hw))
        head_bias = rng.standard_normal(k) * 0.1 if seed % 3 == 0 else None
        head = ClassifierHead(weights=rng.standard_normal((k, c_t)),
                              bias=head_bias)
        proj_bias = rng.standard_normal(c_t) * 0.1 if seed % 2 else None
        proj = Projector(weights=rng.standard_normal((c_t, c_s)) / np.sqrt(c_s),
                         bias=proj_bias)
        spec = ScaleSpec(scales=(1, 2))
        th = Thresholds(alpha=0.2, beta=0.45)
        cfg = LossConfig(lambda1=0.9, lambda2=1.2, centering=seed % 4 != 3,
                         temperature=0.8 if seed % 5 == 0 else 1.0)
        labels = rng.integers(0, k, size=b) if seed % 2 == 0 else None
        result = total_loss(student, teacher, head, proj, spec, th, cfg, labels)
        fd_s, fd_w, fd_b = fd_total_loss_grads(student, teacher, head, proj,
                                               spec, th, cfg, labels)
        err = max(max_relative_error(result.grad_student, fd_s),
                  max_relative_error(result.grad_projector_weights, fd_w))
        if proj.bias is not None:
            err = max(err, max_relative_error(result.grad_projector_bias, fd_b))
        worst = max(worst, err)
    elapsed = time.perf_counter() - start
    ok = worst < 1e-4 and elapsed < 60.0
    report("gradient-check", ok,
           f"10 instances, max relative error {worst:.3e} (tol 1e-4), "
           f"{elapsed:.2f}s (limit 60s)")


def test_acceptance_cka_suite():
    start = time.perf_counter()
    worst_self = worst_scale = worst_orth = worst_const = 0.0
    for seed in range(20):
        rng = np.random.default_rng(5000 + seed)
        x = rng.standard_normal((8, 5))
        y = rng.standard_normal((8, 6))
        base = cka(x, y)
        worst_self = max(worst_self, abs(cka(x, x) - 1.0))
        for c in (0.5, 3.0):
            worst_scale = max(worst_scale, abs(cka(c * x, y) - base))
        q, _ = np.linalg.qr(rng.standard_normal((5, 5)))
        worst_orth = max(worst_orth, abs(cka(x @ q, y) - base))
        const = gram(np.full((8, 3), float(rng.uniform(0.5, 2.0))))
        worst_const = max(worst_const, abs(hsic(const, const)),
                          abs(hsic(const, gram(y))))
    elapsed = time.perf_counter() - start
    ok = (worst_self < 1e-10 and worst_scale < 1e-10 and worst_orth < 1e-9
          and worst_const < 1e-12 and elapsed < 5.0)
    report("cka-suite", ok,
           f"20 seeds, self {worst_self:.2e} (tol 1e-10), scaling "
           f"{worst_scale:.2e} (tol 1e-10), orthogonal {worst_orth:.2e} "
           f"(tol 1e-9), constant-HSIC {worst_const:.2e} (tol 1e-12), "
           f"{elapsed:.2f}s (limit 5s)")


def test_acceptance_confidence_weighting():
    cases = [
        # probs, alpha, beta, weights, n_high, n_low
        ([0.1, 0.5, 0.9], 0.3, 0.7, [0.0, 0.5, 0.5], 1, 1),
        ([0.4, 0.5, 0.6, 0.9], 0.3, 0.65, [0.5, 0.5, 0.5, 1 / 6], 1, 3),
        ([0.8, 0.95], 0.2, 0.6, [0.5, 0.5], 2, 0),
        ([0.3, 0.4, 0.5], 0.2, 0.6, [1 / 3, 1 / 3, 1 / 3], 0, 3),
        ([0.3, 0.6], 0.3, 0.6, [0.5, 0.5], 1, 1),
    ]
    failures = []
    for probs, alpha, beta, want, n_high, n_low in cases:
        got = sample_weights(_tbl(probs), Thresholds(alpha=alpha, beta=beta))
        mask = feature_mask(_tbl(probs), alpha)
        want_mask = [1.0 if p >= alpha else 0.0 for p in probs]
        if not (got.w_sample.tolist() == want
                and (got.n_high, got.n_low) == (n_high, n_low)
                and mask.tolist() == want_mask):
            failures.append(f"P={probs} a={alpha} b={beta} -> "
                            f"{got.w_sample.tolist()} ({got.n_high},{got.n_low})")
    raised = False
    try:
        sample_weights(_tbl([0.1, 0.15]), Thresholds(alpha=0.2, beta=0.6))
    except EmptySelectionError:
        raised = True
    ok = not failures and raised
    detail = (f"{len(cases)} fixtures exact, both degenerate fallbacks "
              f"uniform, empty selection raises")
    if failures:
        detail = "; ".join(failures)
    elif not raised:
        detail = "empty selection did not raise"
    report("confidence-weighting", ok, detail)


def test_acceptance_alignment_preference():
    wins = 0
    margins = []
    for seed in range(20):
        rng = np.random.default_rng(6000 + seed)
        n = int(rng.integers(4, 9))
        c = int(rng.integers(3, 7))
        rows = rng.standard_normal((n, c))
        weights = sample_weights(_tbl([0.5] * n), Thresholds(alpha=0.2, beta=0.6))
        cfg = LossConfig()
        aligned = sample_wise_loss(_rows_pool(rows), _rows_pool(rows),
                                   weights, cfg)[0]
        perm = np.roll(np.arange(n), 1)
        permuted = sample_wise_loss(_rows_pool(rows[perm]), _rows_pool(rows),
                                    weights, cfg)[0]
        if aligned < permuted:
            wins += 1
        margins.append(permuted - aligned)
    ok = wins == 20
    report("alignment-preference", ok,
           f"{wins}/20 seeds aligned strictly below permuted, "
           f"min margin {min(margins):.3e}")


def test_acceptance_cli_determinism(tmp_path):
    manifest = make_batch_manifest(tmp_path / "in", 7000, batch=2, c_s=3,
                                   c_t=5, with_labels=True, with_bias=True)
    loss_outs, grad_blobs = [], []
    for rep in range(3):
        grad_path = tmp_path / f"grad_{rep}.npy"
        proc = subprocess.run(
            [sys.executable, "-m", "msdcrd.cli", "loss", str(manifest),
             "--alpha", "0.1", "--beta", "0.5", "--grad-out", str(grad_path)],
            capture_output=True)
        assert proc.returncode == 0, proc.stderr
        loss_outs.append(proc.stdout)
        grad_blobs.append(grad_path.read_bytes())
    pool_blobs = []
    names = ("student_pooled.npy", "teacher_pooled.npy",
             "student_windows.csv", "teacher_windows.csv")
    for rep in range(3):
        out_dir = tmp_path / f"pool_{rep}"
        proc = subprocess.run(
            [sys.executable, "-m", "msdcrd.cli", "pool", str(manifest),
             str(out_dir)], capture_output=True)
        assert proc.returncode == 0, proc.stderr
        pool_blobs.append(b"".join((out_dir / n).read_bytes() for n in names))
    selftest = subprocess.run([sys.executable, "-m", "msdcrd.cli", "selftest"],
                              capture_output=True)
    loss_same = loss_outs[0] == loss_outs[1] == loss_outs[2]
    grad_same = grad_blobs[0] == grad_blobs[1] == grad_blobs[2]
    pool_same = pool_blobs[0] == pool_blobs[1] == pool_blobs[2]
    ok = loss_same and grad_same and pool_same and selftest.returncode == 0
    report("cli-determinism", ok,
           f"loss stdout identical x3: {loss_same}, gradient file identical "
           f"x3: {grad_same}, pool outputs identical x3: {pool_same}, "
           f"selftest exit {selftest.returncode}")


def test_acceptance_filtering_invariance():
    worst = 0.0
    counts_ok = True
    for seed in range(5):
        rng = np.random.default_rng(8000 + seed)
        b, c_s, c_t, hw, k = 2, 3, 5, 4, 5
        student = rng.standard_normal((b, c_s, hw, hw))
        teacher = rng.standard_normal((b, c_t, hw, hw))
        head = ClassifierHead(weights=rng.standard_normal((k, c_t)))
        proj = Projector(weights=rng.standard_normal((c_t, c_s)) / np.sqrt(c_s))
        spec = ScaleSpec(scales=(1, 2))
        th = Thresholds(alpha=0.25, beta=0.5)
        cfg = LossConfig()
        base = total_loss(student, teacher, head, proj, spec, th, cfg)
        extra = 2
        # Near-zero teacher maps give near-uniform softmax, so every
        # appended window lands below alpha = 0.25 > 1/K.
        junk_student = rng.standard_normal((extra, c_s, hw, hw))
        junk_teacher = rng.standard_normal((extra, c_t, hw, hw)) * 1e-9
        ext = total_loss(np.concatenate([student, junk_student]),
                         np.concatenate([teacher, junk_teacher]),
                         head, proj, spec, th, cfg)
        windows = multi_scale_pool(junk_teacher, spec).window_count
        counts_ok &= ext.n_filtered == base.n_filtered + extra * windows
        counts_ok &= (ext.n_high, ext.n_low) == (base.n_high, base.n_low)
        worst = max(worst, abs(ext.loss_sample - base.loss_sample),
                    abs(ext.loss_feature - base.loss_feature))
    ok = worst <= 1e-12 and counts_ok
    report("filtering-invariance", ok,
           f"5 seeds, max |delta| {worst:.3e} (tol 1e-12) with appended "
           f"below-alpha samples, counts consistent: {counts_ok}")
