"""Central finite-difference checks of analytic gradients."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from selfstereo.autodiff.tensor import Tape, Tensor, backward, no_grad, using_tape
from selfstereo.errors import ShapeError

# Denominator floor for the relative error; keeps near-zero gradients from
# turning round-off into large relative errors.
REL_ERROR_FLOOR = 1e-4


@dataclass
class GradCheckReport:
    op_name: str
    max_abs_error: float
    max_rel_error: float
    probe_count: int

    def passed(self, tol: float = 1e-5) -> bool:
        return math.isfinite(self.max_rel_error) and self.max_rel_error < tol


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor | np.ndarray,
    eps: float = 1e-6,
    probes: int = 16,
    seed: int = 0,
    op_name: Optional[str] = None,
) -> GradCheckReport:
    """Compare ``backward`` against central differences at random coordinates.

    ``fn`` must map one tensor to a scalar tensor. The check runs on a private
    tape, so it never disturbs the caller's tape. A non-finite function value
    or gradient produces an infinite error rather than an exception.
    """
    if eps <= 0:
        raise ValueError(f"grad_check: eps must be positive, got {eps}")
    if probes < 1:
        raise ValueError(f"grad_check: probes must be >= 1, got {probes}")
    name = op_name or getattr(fn, "__name__", "fn")
    base = np.array(point.values if isinstance(point, Tensor) else point)
    x = Tensor.wrap(base.copy())
    x.requires_grad = True

    with using_tape(Tape()):
        out = fn(x)
        if out.size != 1:
            raise ShapeError(f"grad_check: {name} must return a scalar, got shape {out.shape}")
        if not np.isfinite(out.values).all():
            return GradCheckReport(name, math.inf, math.inf, 1)
        if out.requires_grad:
            backward(out, [x])
    analytic = x.grad if x.grad is not None else np.zeros_like(base)

    rng = np.random.default_rng(seed)
    count = min(probes, base.size)
    chosen = rng.choice(base.size, size=count, replace=False)

    max_abs = 0.0
    max_rel = 0.0
    with no_grad():
        for flat in chosen:
            idx = np.unravel_index(int(flat), base.shape)
            plus = base.copy()
            plus[idx] += eps
            minus = base.copy()
            minus[idx] -= eps
            f_plus = float(fn(Tensor.wrap(plus)).values.reshape(-1)[0])
            f_minus = float(fn(Tensor.wrap(minus)).values.reshape(-1)[0])
            numeric = (f_plus - f_minus) / (2.0 * eps)
            a = float(analytic[idx])
            if not (math.isfinite(numeric) and math.isfinite(a)):
                return GradCheckReport(name, math.inf, math.inf, count)
            err = abs(a - numeric)
            max_abs = max(max_abs, err)
            max_rel = max(max_rel, err / max(abs(a), abs(numeric), REL_ERROR_FLOOR))
    return GradCheckReport(name, max_abs, max_rel, count)
