"""Train against the flat-buffer loss through a torch autograd node.

A learnable student feature tensor is pulled toward a frozen teacher: the
forward pass ships buffers through ffi_total_loss, the backward pass
replays the gradient buffer exactly as the boundary produced it. Run
directly for a short synthetic demonstration.
"""

import numpy as np
import torch

from msdcrd_ffi import STATUS_OK, FlatCall, ffi_total_loss


def make_problem(seed=0, batch=4, c_s=3, c_t=5, hw=8, classes=6):
    """Frozen teacher-side tensors plus a student starting point."""
    rng = np.random.default_rng(seed)
    return {
        "teacher": rng.standard_normal((batch, c_t, hw, hw)),
        "head_weights": rng.standard_normal((classes, c_t)),
        "projector_weights": rng.standard_normal((c_t, c_s)) / np.sqrt(c_s),
        "labels": rng.integers(0, classes, size=batch),
        "student_init": rng.standard_normal((batch, c_s, hw, hw)) * 0.5,
    }


def build_call(student_flat, problem, *, dtype="float64",
               lambda1=1.0, lambda2=1.0, use_labels=True):
    """FlatCall around the problem's frozen side with fresh output buffers."""
    np_dtype = np.float64 if dtype == "float64" else np.float32
    teacher = problem["teacher"]
    head = problem["head_weights"]
    proj = problem["projector_weights"]
    shape = problem["student_init"].shape
    return FlatCall(
        student=np.ascontiguousarray(student_flat, dtype=np_dtype),
        student_shape=shape,
        teacher=np.ascontiguousarray(teacher.reshape(-1), dtype=np_dtype),
        teacher_shape=teacher.shape,
        head_weights=np.ascontiguousarray(head.reshape(-1), dtype=np_dtype),
        head_shape=head.shape,
        projector_weights=np.ascontiguousarray(proj.reshape(-1),
                                               dtype=np_dtype),
        projector_shape=proj.shape,
        labels=(np.ascontiguousarray(problem["labels"], dtype=np.int64)
                if use_labels else None),
        scales=(1, 2),
        alpha=0.05, beta=0.6,
        lambda1=lambda1, lambda2=lambda2,
        dtype=dtype,
        out_losses=np.zeros(4, dtype=np_dtype),
        out_grad_student=np.zeros(int(np.prod(shape)), dtype=np_dtype))


class FlatLoss(torch.autograd.Function):
    """Boundary kernel as a leaf op; backward is a pure pass-through."""

    @staticmethod
    def forward(ctx, student, problem, dtype, lambda1, lambda2, use_labels):
        flat = student.detach().cpu().numpy().reshape(-1)
        call = build_call(flat, problem, dtype=dtype, lambda1=lambda1,
                          lambda2=lambda2, use_labels=use_labels)
        status = ffi_total_loss(call)
        if status != STATUS_OK:
            raise RuntimeError(f"boundary returned status {status}")
        grad = torch.from_numpy(
            call.out_grad_student.copy().reshape(student.shape))
        ctx.save_for_backward(grad)
        return torch.tensor(float(call.out_losses[3]), dtype=student.dtype)

    @staticmethod
    def backward(ctx, grad_output):
        (grad,) = ctx.saved_tensors
        return grad_output * grad, None, None, None, None, None


def run_training(steps=5, lr=0.25, seed=0, dtype="float64"):
    """SGD on the student features; returns steps+1 loss values."""
    problem = make_problem(seed)
    torch_dtype = torch.float64 if dtype == "float64" else torch.float32
    student = torch.nn.Parameter(
        torch.as_tensor(problem["student_init"], dtype=torch_dtype))
    opt = torch.optim.SGD([student], lr=lr)
    values = []
    for _ in range(steps):
        opt.zero_grad()
        loss = FlatLoss.apply(student, problem, dtype, 1.0, 1.0, True)
        loss.backward()
        opt.step()
        values.append(float(loss.detach()))
    with torch.no_grad():
        final = FlatLoss.apply(student.detach(), problem, dtype, 1.0, 1.0, True)
    values.append(float(final))
    return values


def zero_lambda_loss_equals_task(seed=0):
    """With both lambdas zero the reported total is the task term alone."""
    problem = make_problem(seed)
    call = build_call(problem["student_init"].reshape(-1), problem,
                      lambda1=0.0, lambda2=0.0)
    status = ffi_total_loss(call)
    return status == STATUS_OK and call.out_losses[3] == call.out_losses[2]


def wrapper_gradient_is_passthrough(seed=0):
    """The autograd gradient must equal the raw boundary buffer bitwise."""
    problem = make_problem(seed)
    student = torch.nn.Parameter(
        torch.as_tensor(problem["student_init"], dtype=torch.float64))
    FlatLoss.apply(student, problem, "float64", 1.0, 1.0, True).backward()
    call = build_call(problem["student_init"].reshape(-1), problem)
    if ffi_total_loss(call) != STATUS_OK:
        return False
    raw = torch.from_numpy(call.out_grad_student.reshape(student.shape).copy())
    return torch.equal(student.grad, raw)


if __name__ == "__main__":
    values = run_training()
    for step, value in enumerate(values):
        print(f"step {step}: loss {value:.6f}")
    drops = sum(b < a for a, b in zip(values, values[1:]))
    assert values[-1] < values[0], "loss did not decrease"
    assert drops >= len(values) - 2, "more than one non-decreasing step"
    assert zero_lambda_loss_equals_task(), "zero-lambda total != task"
    assert wrapper_gradient_is_passthrough(), "wrapper gradient diverged"
    print("ok")
