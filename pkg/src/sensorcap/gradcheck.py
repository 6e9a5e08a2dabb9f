"""Finite-difference verification of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    """Outcome of one gradient check."""

    max_rel_error: float
    passed: bool
    tol: float
    per_input: list[float] = field(default_factory=list)

    def __str__(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return f"grad_check {status}: max rel err {self.max_rel_error:.3e} (tol {self.tol:.1e})"


def _rel_err(a: float, b: float) -> float:
    return abs(a - b) / max(abs(a) + abs(b), 1e-6)


def grad_check(f, inputs: list[Tensor], step: float = 1e-5, tol: float = 1e-4) -> GradCheckReport:
    """Compare reverse-mode gradients of scalar `f` against central differences.

    `f` is called as `f(inputs)` and must return a scalar Tensor,
    deterministically.  Every coordinate of every input with
    `requires_grad` is perturbed by +-`step`.  The report carries the
    maximum relative error over all coordinates, where the relative error
    of (g, g_fd) is |g - g_fd| / max(|g| + |g_fd|, 1e-6).
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")

    with Tape() as tape:
        out = f(inputs)
        tape.backward(out)
    base = out.item()

    # Two tape-free evaluations must agree or f is not deterministic.
    again = f(inputs).item()
    if again != base:
        raise ContractError(
            f"f is not deterministic: forward passes gave {base} and {again}"
        )

    checked = [t for t in inputs if t.requires_grad]
    per_input: list[float] = []
    for t in checked:
        analytic = np.zeros(t.data.shape) if t.grad is None else t.grad
        worst = 0.0
        flat = t.data.reshape(-1)
        aflat = analytic.reshape(-1)
        for i in range(flat.size):
            keep = flat[i]
            flat[i] = keep + step
            plus = f(inputs).item()
            flat[i] = keep - step
            minus = f(inputs).item()
            flat[i] = keep
            fd = (plus - minus) / (2.0 * step)
            worst = max(worst, _rel_err(aflat[i], fd))
        per_input.append(worst)

    worst_overall = max(per_input, default=0.0)
    return GradCheckReport(
        max_rel_error=worst_overall,
        passed=worst_overall < tol,
        tol=tol,
        per_input=per_input,
    )
