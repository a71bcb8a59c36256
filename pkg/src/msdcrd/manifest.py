"""Batch manifest: one JSON document naming every tensor file and config
value a loss/pooling run needs. File paths resolve relative to the manifest.

Schema (docs/manifest.md): required keys "student", "teacher",
"head_weights", "scales"; optional "head_bias", "projector_weights",
"projector_bias", "labels", "scale_mode", "strides", "include_gap",
"alpha", "beta", "lambda1", "lambda2", "centering", "temperature", "eps".
Absent projector means identity (student and teacher channels must match).
Labels are stored as a float tensor holding integral values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ManifestError
from .losses import Projector
from .npyio import load_f64
from .pooling import ScaleSpec
from .selection import ClassifierHead

_KNOWN_KEYS = {
    "student", "teacher", "head_weights", "head_bias", "projector_weights",
    "projector_bias", "labels", "scales", "scale_mode", "strides",
    "include_gap", "alpha", "beta", "lambda1", "lambda2", "centering",
    "temperature", "eps",
}


@dataclass
class BatchManifest:
    """Loaded arrays plus raw config fields (None where the key was absent)."""

    student: np.ndarray
    teacher: np.ndarray
    head: ClassifierHead
    projector: Projector | None
    labels: np.ndarray | None
    scales: list[int]
    scale_mode: str | None
    strides: list[int] | None
    include_gap: bool
    alpha: float | None
    beta: float | None
    lambda1: float | None
    lambda2: float | None
    centering: bool | None
    temperature: float | None
    eps: float | None


def _require(doc: dict, key: str):
    if key not in doc:
        raise ManifestError(f"manifest is missing required key {key!r}")
    return doc[key]


def _optional_number(doc: dict, key: str) -> float | None:
    if key not in doc:
        return None
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ManifestError(f"manifest key {key!r} must be a number")
    return float(value)


def load_batch_manifest(path: str | Path) -> BatchManifest:
    """Parse a manifest and load every referenced tensor.

    Raises ManifestError on schema violations or mutually inconsistent
    shapes; file-level problems (missing file, bad container) propagate
    as OSError / tensor I/O errors.
    """
    path = Path(path)
    doc = json.loads(path.read_text())
    if not isinstance(doc, dict):
        raise ManifestError(f"{path}: manifest must be a JSON object")
    unknown = set(doc) - _KNOWN_KEYS
    if unknown:
        raise ManifestError(f"{path}: unknown manifest keys {sorted(unknown)}")
    base = path.parent

    def tensor(key: str) -> np.ndarray:
        rel = _require(doc, key)
        if not isinstance(rel, str):
            raise ManifestError(f"manifest key {key!r} must be a file path")
        return load_f64(base / rel)

    student = tensor("student")
    teacher = tensor("teacher")
    if student.ndim != 4 or teacher.ndim != 4:
        raise ManifestError("student and teacher tensors must be rank 4")
    if student.shape[0] != teacher.shape[0]:
        raise ManifestError(f"batch sizes differ: student {student.shape[0]}, "
                            f"teacher {teacher.shape[0]}")

    head_w = tensor("head_weights")
    head_b = None
    if "head_bias" in doc:
        head_b = tensor("head_bias")
        if head_b.ndim != 1:
            raise ManifestError("head bias must be rank 1")
    try:
        head = ClassifierHead(weights=head_w, bias=head_b)
    except ValueError as exc:
        raise ManifestError(f"bad classifier head: {exc}") from exc
    if head.channels != teacher.shape[1]:
        raise ManifestError(f"head expects {head.channels} channels, teacher "
                            f"has {teacher.shape[1]}")

    projector = None
    if "projector_weights" in doc:
        proj_w = tensor("projector_weights")
        proj_b = None
        if "projector_bias" in doc:
            proj_b = tensor("projector_bias")
        try:
            projector = Projector(weights=proj_w, bias=proj_b)
        except ValueError as exc:
            raise ManifestError(f"bad projector: {exc}") from exc
        if projector.in_channels != student.shape[1] \
                or projector.out_channels != teacher.shape[1]:
            raise ManifestError(
                f"projector maps {projector.in_channels} -> "
                f"{projector.out_channels} channels; student has "
                f"{student.shape[1]}, teacher {teacher.shape[1]}")
    elif "projector_bias" in doc:
        raise ManifestError("projector_bias given without projector_weights")
    elif student.shape[1] != teacher.shape[1]:
        raise ManifestError("channel counts differ and no projector is given")

    labels = None
    if "labels" in doc:
        raw = tensor("labels")
        if raw.ndim != 1 or raw.shape[0] != student.shape[0]:
            raise ManifestError(f"labels must be rank 1 with {student.shape[0]} "
                                f"entries, got shape {raw.shape}")
        if not np.all(raw == np.round(raw)):
            raise ManifestError("labels must hold integral values")
        labels = raw.astype(np.int64)
        if labels.min() < 0 or labels.max() >= head.classes:
            raise ManifestError(f"labels must lie in [0, {head.classes})")

    scales = _require(doc, "scales")
    if not isinstance(scales, list) or not scales \
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in scales):
        raise ManifestError("scales must be a nonempty list of integers")
    scale_mode = doc.get("scale_mode")
    if scale_mode is not None and not isinstance(scale_mode, str):
        raise ManifestError("scale_mode must be a string")
    strides = doc.get("strides")
    if strides is not None and (
            not isinstance(strides, list)
            or not all(isinstance(s, int) and not isinstance(s, bool) for s in strides)):
        raise ManifestError("strides must be a list of integers")
    include_gap = doc.get("include_gap", False)
    if not isinstance(include_gap, bool):
        raise ManifestError("include_gap must be a boolean")
    centering = doc.get("centering")
    if centering is not None and not isinstance(centering, bool):
        raise ManifestError("centering must be a boolean")

    return BatchManifest(
        student=student, teacher=teacher, head=head, projector=projector,
        labels=labels, scales=scales, scale_mode=scale_mode, strides=strides,
        include_gap=include_gap,
        alpha=_optional_number(doc, "alpha"), beta=_optional_number(doc, "beta"),
        lambda1=_optional_number(doc, "lambda1"),
        lambda2=_optional_number(doc, "lambda2"),
        centering=centering,
        temperature=_optional_number(doc, "temperature"),
        eps=_optional_number(doc, "eps"))


def build_scale_spec(manifest: BatchManifest, scales=None, mode=None,
                     strides=None, include_gap=None) -> ScaleSpec:
    """ScaleSpec from a manifest with optional command-line overrides."""
    final_scales = scales if scales is not None else manifest.scales
    if final_scales is None:
        raise ManifestError("no pooling scales: pass --scales or set "
                            "'scales' in the manifest")
    final_mode = mode if mode is not None else (manifest.scale_mode or "output-grid")
    final_strides = strides if strides is not None else manifest.strides
    final_gap = include_gap if include_gap is not None else manifest.include_gap
    try:
        return ScaleSpec(scales=tuple(final_scales), mode=final_mode,
                         strides=None if final_strides is None else tuple(final_strides),
                         include_gap=final_gap)
    except ValueError as exc:
        raise ManifestError(f"bad pooling configuration: {exc}") from exc
