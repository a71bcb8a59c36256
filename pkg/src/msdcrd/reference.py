"""Slow, loop-based reference implementations used for verification.

Everything in this module works element by element on plain Python floats,
deliberately avoiding the vectorized kernels in the rest of the package, so
that the optimized paths and these references form two independent routes to
the same numbers. Used by the self-test command and by the test suite; not
meant for production-sized inputs.
"""

from __future__ import annotations

import math


def grid_rects(scales, height, width):
    """Floor-boundary tiling rectangles for output-grid pooling.

    For scale s, window (r, c) spans rows [floor(r*H/s), floor((r+1)*H/s))
    and the analogous column range. Scales ascending, row-major per scale.
    """
    rects = []
    for s in scales:
        for r in range(s):
            top = (r * height) // s
            bottom = ((r + 1) * height) // s
            for c in range(s):
                left = (c * width) // s
                right = ((c + 1) * width) // s
                rects.append((s, top, left, bottom - top, right - left))
    return rects


def stride_rects(kernels, strides, include_gap, height, width):
    """Sliding-window rectangles for kernel-stride pooling."""
    rects = []
    for k, st in zip(kernels, strides):
        for top in range(0, height - k + 1, st):
            for left in range(0, width - k + 1, st):
                rects.append((k, top, left, k, k))
    if include_gap:
        rects.append((0, 0, 0, height, width))
    return rects


def window_mean(image, top, left, h, w):
    """Per-channel mean over a rectangle of one C x H x W image."""
    channels = len(image)
    out = []
    for c in range(channels):
        acc = 0.0
        for r in range(top, top + h):
            for q in range(left, left + w):
                acc += float(image[c][r][q])
        out.append(acc / (h * w))
    return out


def pool_rows(batch, rects):
    """All pooled rows of a B x C x H x W batch, image-major then window."""
    rows = []
    for image in batch:
        for (_, top, left, h, w) in rects:
            rows.append(window_mean(image, top, left, h, w))
    return rows


def unit(vec, eps):
    n = math.sqrt(sum(float(x) * float(x) for x in vec))
    d = n if n >= eps else eps
    return [float(x) / d for x in vec]


def cos(a, b, eps):
    na = math.sqrt(sum(float(x) * float(x) for x in a))
    nb = math.sqrt(sum(float(x) * float(x) for x in b))
    if na < eps or nb < eps:
        return 0.0
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    return max(-1.0, min(1.0, dot / (na * nb)))


def max_softmax(rows, weights, bias):
    """Maximum softmax probability and argmax class per row, by direct loops."""
    probs, classes = [], []
    for row in rows:
        logits = []
        for k in range(len(weights)):
            z = float(bias[k]) if bias is not None else 0.0
            for c in range(len(row)):
                z += float(weights[k][c]) * float(row[c])
            logits.append(z)
        m = max(logits)
        exps = [math.exp(z - m) for z in logits]
        total = sum(exps)
        probs.append(max(exps) / total)
        classes.append(logits.index(m))
    return probs, classes


def threshold_weights(probs, alpha, beta):
    """Confidence weighting: 0 below alpha, inverse-frequency cross weights above.

    Returns (weights, n_high, n_low). Raises ValueError when nothing survives
    the alpha filter. When exactly one confidence group is empty, survivors
    get uniform weight 1 / n_selected.
    """
    selected = [p >= alpha for p in probs]
    if not any(selected):
        raise ValueError("empty selection")
    high = [p >= beta for p in probs]
    n_high = sum(1 for s, h in zip(selected, high) if s and h)
    n_low = sum(1 for s, h in zip(selected, high) if s and not h)
    weights = []
    for p, s, h in zip(probs, selected, high):
        if not s:
            weights.append(0.0)
        elif n_high > 0 and n_low > 0:
            weights.append(0.5 / n_high if not h else 0.5 / n_low)
        else:
            weights.append(1.0 / (n_high + n_low))
    return weights, n_high, n_low


def sample_loss(student_rows, teacher_rows, weights, n_high, n_low,
                centering=True, eps=1e-12, temperature=1.0):
    """Sample-level contrastive loss, double loop over selected rows."""
    idx = [n for n, w in enumerate(weights) if w > 0]
    if not idx:
        raise ValueError("empty selection")
    su = [unit(student_rows[n], eps) for n in idx]
    tu = [unit(teacher_rows[n], eps) for n in idx]
    dim = len(su[0])
    if centering:
        sm = [sum(v[c] for v in su) / len(su) for c in range(dim)]
        tm = [sum(v[c] for v in tu) / len(tu) for c in range(dim)]
        su = [[v[c] - sm[c] for c in range(dim)] for v in su]
        tu = [[v[c] - tm[c] for c in range(dim)] for v in tu]
    total = 0.0
    for a, n in enumerate(idx):
        pos = math.exp(cos(su[a], tu[a], eps) / temperature)
        denom = 0.0
        for b in range(len(idx)):
            denom += math.exp(cos(su[a], tu[b], eps) / temperature)
        total += weights[n] * math.log(pos / denom)
    return -total / (n_high + n_low)


def feature_loss(student_rows, teacher_rows, mask,
                 centering=True, eps=1e-12, temperature=1.0):
    """Channel-level contrastive loss, double loop over channels."""
    idx = [n for n, m in enumerate(mask) if m > 0]
    if not idx:
        raise ValueError("empty selection")
    su = [unit(student_rows[n], eps) for n in idx]
    tu = [unit(teacher_rows[n], eps) for n in idx]
    channels = len(su[0])
    s_ch = [[v[c] for v in su] for c in range(channels)]
    t_ch = [[v[c] for v in tu] for c in range(channels)]
    if centering:
        length = len(idx)
        sm = [sum(col[i] for col in s_ch) / channels for i in range(length)]
        tm = [sum(col[i] for col in t_ch) / channels for i in range(length)]
        s_ch = [[col[i] - sm[i] for i in range(length)] for col in s_ch]
        t_ch = [[col[i] - tm[i] for i in range(length)] for col in t_ch]
    total = 0.0
    for c in range(channels):
        pos = math.exp(cos(s_ch[c], t_ch[c], eps) / temperature)
        denom = 0.0
        for d in range(channels):
            denom += math.exp(cos(s_ch[c], t_ch[d], eps) / temperature)
        total += math.log(pos / denom)
    return -total / channels


def cross_entropy(logits, labels):
    """Mean negative log softmax probability of the labelled class."""
    total = 0.0
    for row, y in zip(logits, labels):
        m = max(float(z) for z in row)
        lse = m + math.log(sum(math.exp(float(z) - m) for z in row))
        total += lse - float(row[int(y)])
    return total / len(labels)


def project_pixels(batch, weights, bias):
    """Per-pixel linear map of a B x C_in x H x W batch to C_out channels."""
    out = []
    c_out, c_in = len(weights), len(weights[0])
    for image in batch:
        height = len(image[0])
        width = len(image[0][0])
        mapped = [[[0.0] * width for _ in range(height)] for _ in range(c_out)]
        for o in range(c_out):
            for r in range(height):
                for q in range(width):
                    z = float(bias[o]) if bias is not None else 0.0
                    for c in range(c_in):
                        z += float(weights[o][c]) * float(image[c][r][q])
                    mapped[o][r][q] = z
        out.append(mapped)
    return out


def gap_rows(batch):
    """Global average pooling of each image to one row."""
    rows = []
    for image in batch:
        height = len(image[0])
        width = len(image[0][0])
        rows.append(window_mean(image, 0, 0, height, width))
    return rows


def total_loss(student, teacher, head_w, head_b, proj_w, proj_b, rects,
               alpha, beta, lambda1, lambda2,
               centering=True, eps=1e-12, temperature=1.0, labels=None):
    """Stage-by-stage composition of the reference pieces above.

    Returns a dict with the individual components and the combined value.
    """
    projected = project_pixels(student, proj_w, proj_b)
    s_rows = pool_rows(projected, rects)
    t_rows = pool_rows(teacher, rects)
    probs, _ = max_softmax(t_rows, head_w, head_b)
    weights, n_high, n_low = threshold_weights(probs, alpha, beta)
    mask = [1.0 if p >= alpha else 0.0 for p in probs]
    ls = sample_loss(s_rows, t_rows, weights, n_high, n_low,
                     centering, eps, temperature)
    lf = feature_loss(s_rows, t_rows, mask, centering, eps, temperature)
    lt = 0.0
    if labels is not None:
        gap = gap_rows(projected)
        logits = []
        for row in gap:
            logits.append([
                (float(head_b[k]) if head_b is not None else 0.0)
                + sum(float(head_w[k][c]) * row[c] for c in range(len(row)))
                for k in range(len(head_w))
            ])
        lt = cross_entropy(logits, labels)
    return {
        "loss_sample": ls,
        "loss_feature": lf,
        "loss_task": lt,
        "loss_total": lt + lambda1 * ls + lambda2 * lf,
        "n_high": n_high,
        "n_low": n_low,
    }


def gram(matrix):
    """X X^T by explicit triple loop."""
    n = len(matrix)
    out = [[0.0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            acc = 0.0
            for k in range(len(matrix[0])):
                acc += float(matrix[i][k]) * float(matrix[j][k])
            out[i][j] = acc
    return out


def hsic(k_mat, l_mat):
    """tr(K H L H) / (n-1)^2 via explicitly centered copies."""
    n = len(k_mat)

    def center(m):
        row = [sum(m[i][j] for j in range(n)) / n for i in range(n)]
        col = [sum(m[i][j] for i in range(n)) / n for j in range(n)]
        tot = sum(row) / n
        return [[m[i][j] - row[i] - col[j] + tot for j in range(n)]
                for i in range(n)]

    kc = center(k_mat)
    lc = center(l_mat)
    trace = 0.0
    for i in range(n):
        for j in range(n):
            trace += kc[i][j] * lc[j][i]
    return trace / ((n - 1) ** 2)
