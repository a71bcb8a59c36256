"""Flat-buffer boundary for the distillation loss.

The call layout mirrors a C ABI so any host language can bind it: every
tensor crosses as a contiguous 1-D buffer plus an explicit shape, scalar
configuration crosses as plain fields, results land in caller-provided
output buffers, and the return value is a status code. No allocation
ownership crosses the boundary and there is no global state; concurrent
calls on disjoint buffers are safe.

Exported symbols:

- ``ABI_VERSION`` / ``abi_version()``: integer layout version, currently 1.
- ``STATUS_OK`` (0), ``STATUS_INVALID`` (2), ``STATUS_EMPTY_SELECTION``
  (4): return codes, matching the host CLI's exit taxonomy. Code 3 (file
  I/O) cannot occur at this boundary and is never returned.
- ``FlatCall``: the call record described below.
- ``ffi_total_loss(call)``: run the forward and backward pass.

Buffer layout of ``FlatCall``:

- ``student`` / ``teacher``: float buffers of length prod(shape), with
  ``student_shape`` / ``teacher_shape`` of rank 4 (B, C, H, W).
- ``head_weights`` with rank-2 ``head_shape`` (K, C_T); optional
  ``head_bias`` of length K.
- Optional ``projector_weights`` with rank-2 ``projector_shape``
  (C_T, C_S) and optional ``projector_bias`` of length C_T.
- Optional ``labels``: int64 buffer of length B; enables the task term.
- ``dtype``: "float32" or "float64"; every float buffer, input and
  output, must carry exactly this element type.
- ``out_losses``: float buffer of length 4 receiving
  ``[lambda1 * sample, lambda2 * feature, task, total]``. The slots hold
  the weighted terms of the objective so they sum to the total; the task
  slot is 0 when no labels are given.
- ``out_grad_student``: float buffer of length prod(student_shape)
  receiving d(total)/d(student), C-order.

``ffi_total_loss`` validates the whole record before computing and
returns STATUS_INVALID without touching the output buffers on any shape,
length, dtype, or configuration violation. STATUS_EMPTY_SELECTION also
leaves the outputs untouched. Outputs are written only on STATUS_OK.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from msdcrd import (ClassifierHead, EmptySelectionError, LossConfig,
                    ManifestError, Projector, ScaleSpec, Thresholds,
                    total_loss)

ABI_VERSION = 1

STATUS_OK = 0
STATUS_INVALID = 2
STATUS_EMPTY_SELECTION = 4

_DTYPES = {"float32": np.float32, "float64": np.float64}

__all__ = [
    "ABI_VERSION", "STATUS_OK", "STATUS_INVALID", "STATUS_EMPTY_SELECTION",
    "FlatCall", "abi_version", "ffi_total_loss",
]


def abi_version() -> int:
    """Version of the FlatCall layout and status taxonomy."""
    return ABI_VERSION


@dataclass
class FlatCall:
    """One boundary call: flat caller-owned buffers plus scalar config."""

    student: np.ndarray
    student_shape: tuple
    teacher: np.ndarray
    teacher_shape: tuple
    head_weights: np.ndarray
    head_shape: tuple
    out_losses: np.ndarray
    out_grad_student: np.ndarray
    head_bias: np.ndarray | None = None
    projector_weights: np.ndarray | None = None
    projector_shape: tuple | None = None
    projector_bias: np.ndarray | None = None
    labels: np.ndarray | None = None
    scales: tuple = (1,)
    scale_mode: str = "output-grid"
    strides: tuple | None = None
    include_gap: bool = False
    alpha: float = 0.05
    beta: float = 0.6
    lambda1: float = 1.0
    lambda2: float = 1.0
    centering: bool = True
    temperature: float = 1.0
    eps: float = 1e-12
    dtype: str = "float32"


def _is_flat(buf, dtype, writable=False) -> bool:
    return (isinstance(buf, np.ndarray) and buf.ndim == 1
            and buf.dtype == dtype and buf.flags["C_CONTIGUOUS"]
            and (buf.flags["WRITEABLE"] or not writable))


def _shape_ok(shape, rank) -> bool:
    return (isinstance(shape, (tuple, list)) and len(shape) == rank
            and all(isinstance(d, int) and not isinstance(d, bool) and d > 0
                    for d in shape))


def _size(shape) -> int:
    out = 1
    for d in shape:
        out *= d
    return out


def _validate(call: FlatCall, dtype) -> bool:
    pairs = [(call.student, call.student_shape, 4),
             (call.teacher, call.teacher_shape, 4),
             (call.head_weights, call.head_shape, 2)]
    if call.projector_weights is not None or call.projector_shape is not None:
        if call.projector_weights is None or call.projector_shape is None:
            return False
        pairs.append((call.projector_weights, call.projector_shape, 2))
    elif call.projector_bias is not None:
        return False
    for buf, shape, rank in pairs:
        if not _shape_ok(shape, rank) or not _is_flat(buf, dtype) \
                or buf.size != _size(shape):
            return False
    if call.head_bias is not None:
        if not _is_flat(call.head_bias, dtype) \
                or call.head_bias.size != call.head_shape[0]:
            return False
    if call.projector_bias is not None:
        if not _is_flat(call.projector_bias, dtype) \
                or call.projector_bias.size != call.projector_shape[0]:
            return False
    if call.labels is not None:
        if not _is_flat(call.labels, np.int64) \
                or call.labels.size != call.student_shape[0]:
            return False
    if not _is_flat(call.out_losses, dtype, writable=True) \
            or call.out_losses.size != 4:
        return False
    if not _is_flat(call.out_grad_student, dtype, writable=True) \
            or call.out_grad_student.size != _size(call.student_shape):
        return False
    return True


def ffi_total_loss(call: FlatCall) -> int:
    """Forward and backward pass over a FlatCall record.

    Returns STATUS_OK with both output buffers filled, or a nonzero
    status with the output buffers untouched.
    """
    dtype = _DTYPES.get(call.dtype)
    if dtype is None or not _validate(call, dtype):
        return STATUS_INVALID

    student = call.student.reshape(call.student_shape).astype(np.float64)
    teacher = call.teacher.reshape(call.teacher_shape).astype(np.float64)
    head_w = call.head_weights.reshape(call.head_shape).astype(np.float64)
    try:
        head = ClassifierHead(
            weights=head_w,
            bias=None if call.head_bias is None
            else call.head_bias.astype(np.float64))
        proj = None
        if call.projector_weights is not None:
            proj = Projector(
                weights=call.projector_weights.reshape(
                    call.projector_shape).astype(np.float64),
                bias=None if call.projector_bias is None
                else call.projector_bias.astype(np.float64))
        spec = ScaleSpec(scales=tuple(call.scales), mode=call.scale_mode,
                         strides=None if call.strides is None
                         else tuple(call.strides),
                         include_gap=call.include_gap)
        th = Thresholds(alpha=call.alpha, beta=call.beta)
        cfg = LossConfig(lambda1=call.lambda1, lambda2=call.lambda2,
                         centering=call.centering, eps=call.eps,
                         temperature=call.temperature)
        result = total_loss(student, teacher, head, proj, spec, th, cfg,
                            call.labels)
    except EmptySelectionError:
        return STATUS_EMPTY_SELECTION
    except (ManifestError, ValueError, TypeError):
        return STATUS_INVALID

    task = 0.0 if result.loss_task is None else result.loss_task
    call.out_losses[:] = np.array(
        [call.lambda1 * result.loss_sample, call.lambda2 * result.loss_feature,
         task, result.loss_total], dtype=dtype)
    call.out_grad_student[:] = result.grad_student.reshape(-1).astype(dtype)
    return STATUS_OK
