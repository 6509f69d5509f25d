"""Finite-difference verification of analytic gradients.

Central differences in float64 against whatever ``backward()`` produced.
The comparison is a relative error with an absolute floor, so gradients
near zero are judged on absolute terms instead of exploding the ratio:

    rel_err = |analytic - numeric| / max(|analytic|, |numeric|, floor)

The floor of 1e-3 keeps finite-difference noise from failing healthy
small gradients while still catching a gradient that is scaled, dropped
or sign-flipped.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import default_dtype

REL_FLOOR = 1e-3


@dataclass
class TensorCheck:
    name: str
    coords: int
    max_rel_err: float
    worst_analytic: float
    worst_numeric: float
    tol: float

    @property
    def ok(self):
        return self.max_rel_err <= self.tol


@dataclass
class GradCheckReport:
    entries: list = field(default_factory=list)

    @property
    def ok(self):
        return all(e.ok for e in self.entries)

    @property
    def max_rel_err(self):
        return max((e.max_rel_err for e in self.entries), default=0.0)

    def lines(self):
        out = []
        for e in self.entries:
            status = "ok" if e.ok else "FAIL"
            out.append(
                f"{status:4s} {e.name:40s} coords={e.coords:3d} "
                f"max_rel_err={e.max_rel_err:.3e} "
                f"(analytic={e.worst_analytic:+.6e} numeric={e.worst_numeric:+.6e})"
            )
        return out

    def __str__(self):
        return "\n".join(self.lines())


def grad_check(fn, named_params, h=1e-5, tol=1e-4, max_coords=64, seed=0, corrupt=None):
    """Compare analytic gradients of ``fn`` against central differences.

    ``fn`` is a zero-argument callable returning a scalar loss tensor; it
    must be deterministic across calls (fix any sampling beforehand).
    ``named_params`` is an iterable of (name, tensor) pairs; every tensor
    must hold float64 data, since float32 finite differences are too
    noisy at h=1e-5 to say anything.

    Up to ``max_coords`` coordinates per tensor are probed, chosen by a
    seeded generator so reruns touch the same entries.

    ``corrupt`` names a tensor whose analytic gradient gets doubled
    before comparison; a self-test hook proving the checker catches a
    wrong gradient and reports the offending tensor.
    """
    named_params = list(named_params)
    for name, p in named_params:
        if p.data.dtype != np.float64:
            raise ValueError(
                f"grad_check needs float64 parameters, but {name!r} is {p.data.dtype}; "
                "build the model under default_dtype(np.float64)"
            )

    # evaluate under a forced float64 regime so intermediate ops cannot
    # silently downcast even when the caller holds no dtype context
    with default_dtype(np.float64):
        return _run_check(fn, named_params, h, tol, max_coords, seed, corrupt)


def _run_check(fn, named_params, h, tol, max_coords, seed, corrupt):
    for _, p in named_params:
        p.grad = None
    loss = fn()
    loss.backward()
    analytic = {}
    for name, p in named_params:
        if p.grad is None:
            raise RuntimeError(f"parameter {name!r} received no gradient from backward()")
        analytic[name] = p.grad.copy()
    if corrupt is not None:
        if corrupt not in analytic:
            raise ValueError(
                f"cannot corrupt unknown tensor {corrupt!r}; have {sorted(analytic)}"
            )
        analytic[corrupt] = analytic[corrupt] * 2.0

    rng = np.random.default_rng(seed)
    report = GradCheckReport()
    for name, p in named_params:
        n = p.data.size
        k = min(max_coords, n)
        idxs = rng.choice(n, size=k, replace=False) if k < n else np.arange(n)
        flat = p.data.reshape(-1)
        a_flat = analytic[name].reshape(-1)
        worst = (0.0, 0.0, 0.0)
        for idx in idxs:
            x0 = flat[idx]
            flat[idx] = x0 + h
            lp = fn().item()
            flat[idx] = x0 - h
            lm = fn().item()
            flat[idx] = x0
            num = (lp - lm) / (2.0 * h)
            ana = a_flat[idx]
            rel = abs(ana - num) / max(abs(ana), abs(num), REL_FLOOR)
            if rel > worst[0]:
                worst = (rel, ana, num)
        report.entries.append(
            TensorCheck(
                name=name,
                coords=int(k),
                max_rel_err=float(worst[0]),
                worst_analytic=float(worst[1]),
                worst_numeric=float(worst[2]),
                tol=tol,
            )
        )
    return report
