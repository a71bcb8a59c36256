"""Seeded synthetic fixture generators shared by the test modules.

Every generator takes an explicit seed and writes self-contained file trees,
so tests stay deterministic and independent of each other.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from msdcrd import write_tensor


def make_batch_manifest(directory, seed, *, batch=2, c_s=4, c_t=4, k=5,
                        hw_s=4, hw_t=None, scales=(1, 2), with_labels=False,
                        with_projector=None, with_bias=False, student=None,
                        teacher=None, projector_weights=None, extra=None):
    """Write a full batch manifest plus its tensor files; returns the path.

    `extra` merges additional manifest keys (alpha, beta, lambdas, ...).
    Pass explicit arrays to pin any tensor; everything else is drawn from
    the seeded generator.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    hw_t = hw_s if hw_t is None else hw_t
    if with_projector is None:
        with_projector = c_s != c_t or projector_weights is not None

    if student is None:
        student = rng.standard_normal((batch, c_s, hw_s, hw_s))
    if teacher is None:
        teacher = rng.standard_normal((batch, c_t, hw_t, hw_t))
    head_w = rng.standard_normal((k, c_t))

    write_tensor(directory / "student.npy", np.asarray(student, dtype=np.float64))
    write_tensor(directory / "teacher.npy", np.asarray(teacher, dtype=np.float64))
    write_tensor(directory / "head_w.npy", head_w)
    doc = {
        "student": "student.npy",
        "teacher": "teacher.npy",
        "head_weights": "head_w.npy",
        "scales": list(scales),
    }
    if with_bias:
        head_b = rng.standard_normal(k)
        write_tensor(directory / "head_b.npy", head_b)
        doc["head_bias"] = "head_b.npy"
    if with_projector:
        if projector_weights is None:
            projector_weights = rng.standard_normal((c_t, c_s)) / np.sqrt(c_s)
        write_tensor(directory / "proj_w.npy",
                     np.asarray(projector_weights, dtype=np.float64))
        doc["projector_weights"] = "proj_w.npy"
        if with_bias:
            proj_b = rng.standard_normal(c_t) * 0.1
            write_tensor(directory / "proj_b.npy", proj_b)
            doc["projector_bias"] = "proj_b.npy"
    if with_labels:
        labels = rng.integers(0, k, size=batch)
        write_tensor(directory / "labels.npy", labels.astype(np.float64))
        doc["labels"] = "labels.npy"
    if extra:
        doc.update(extra)
    path = directory / "manifest.json"
    path.write_text(json.dumps(doc, indent=1))
    return path


def make_cka_manifest(directory, seed, *, shapes=((6, 4), (6, 5)), blocks=None):
    """Write an activation-set manifest with one tensor file per block."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    if blocks is None:
        blocks = [rng.standard_normal(shape) for shape in shapes]
    names = []
    for i, block in enumerate(blocks):
        name = f"block_{i}.npy"
        write_tensor(directory / name, np.asarray(block, dtype=np.float64))
        names.append(name)
    path = directory / "cka_manifest.json"
    path.write_text(json.dumps({"blocks": names}))
    return path
