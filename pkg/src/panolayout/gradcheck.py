"""Finite-difference certification of hand-written backward passes.

grad_check probes an op's vjp against central differences of the scalar
probe loss sum(out * r) for a seeded random cotangent r. The analytic
gradient is computed in full; the finite-difference side is evaluated at a
seeded random subset of coordinates per input (caps runtime on the larger
attention-block inputs without weakening the certificate materially).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError


@dataclass(frozen=True)
class GradCheckReport:
    op_name: str
    max_rel_err: float
    worst_input: int       # which op input held the worst coordinate
    worst_index: int       # flat index of that coordinate
    eps: float
    checked: int           # coordinates probed by finite differences

    def ok(self, tol: float = 1e-3) -> bool:
        return bool(np.isfinite(self.max_rel_err) and self.max_rel_err <= tol)


def grad_check(op, inputs, eps: float = 1e-4, seed: int = 0,
               max_checks: int = 256, name: str = "op",
               wrt=None) -> GradCheckReport:
    """Compare an op's analytic vjp with central finite differences.

    op: callable(*inputs) -> (out, vjp); vjp(cotangent) returns one gradient
    per input, in order. wrt optionally restricts which inputs are probed
    (iterable of indices); all gradients are still produced analytically.
    Relative error per coordinate is |a - n| / max(1, |a|, |n|).
    """
    if eps <= 0:
        raise ValidationError("grad_check: eps must be positive")
    inputs = [np.asarray(x, dtype=np.float64) for x in inputs]
    probe = list(range(len(inputs))) if wrt is None else sorted(set(wrt))
    for i in probe:
        if not 0 <= i < len(inputs):
            raise ValidationError(f"grad_check: wrt index {i} out of range")

    out, vjp = op(*inputs)
    rng = np.random.default_rng(seed)
    cot = rng.standard_normal(np.shape(out))
    if np.ndim(out) == 0:
        cot = np.float64(cot)
    grads = vjp(cot)
    if not isinstance(grads, tuple):
        grads = (grads,)
    if len(grads) != len(inputs):
        raise ValidationError(
            f"grad_check: vjp returned {len(grads)} gradients for "
            f"{len(inputs)} inputs")

    def probe_loss(args) -> float:
        val = op(*args)[0]
        return float(np.sum(np.asarray(val) * cot))

    worst = 0.0
    worst_input = -1
    worst_index = -1
    checked = 0
    for i in probe:
        x = inputs[i]
        grad = np.asarray(grads[i], dtype=np.float64)
        if grad.shape != x.shape:
            raise ValidationError(
                f"grad_check: gradient {i} shape {grad.shape} != input "
                f"shape {x.shape}")
        n = x.size
        if n == 0:
            continue
        if n <= max_checks:
            idx = np.arange(n)
        else:
            idx = rng.choice(n, size=max_checks, replace=False)
        flat = x.reshape(-1)
        for j in idx:
            orig = flat[j]
            flat[j] = orig + eps
            lp = probe_loss(inputs)
            flat[j] = orig - eps
            lm = probe_loss(inputs)
            flat[j] = orig
            num = (lp - lm) / (2.0 * eps)
            ana = grad.reshape(-1)[j]
            if not np.isfinite(num) or not np.isfinite(ana):
                raise NumericalError(f"grad_check({name}): non-finite probe")
            rel = abs(ana - num) / max(1.0, abs(ana), abs(num))
            checked += 1
            if rel > worst:
                worst = rel
                worst_input = i
                worst_index = int(j)

    return GradCheckReport(op_name=name, max_rel_err=float(worst),
                           worst_input=worst_input, worst_index=worst_index,
                           eps=eps, checked=checked)
