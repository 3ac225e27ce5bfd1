"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from nilmkit.engine.tensor import Tensor, backward, no_grad


@dataclass
class CheckReport:
    max_rel_error: float
    tolerance: float
    checked: int
    excluded: list = field(default_factory=list)
    worst_index: int | None = None

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance


def grad_check(
    fn: Callable[[Tensor], Tensor],
    point: Tensor,
    tolerance: float = 1e-4,
    h: float = 1e-6,
    kink_tol: float = 1e-3,
) -> CheckReport:
    """Compare ``backward`` against central differences at ``point``.

    Relative error per coordinate is ``|analytic - fd| / max(1, |fd|)``.
    Coordinates whose one-sided differences disagree by more than
    ``kink_tol`` (a kink such as relu at 0) are reported as excluded.
    """
    base = np.array(point.data, dtype=np.float64)
    x = Tensor(base, requires_grad=True)
    out = fn(x)
    backward(out)
    analytic = x.grad.reshape(-1) if x.grad is not None else np.zeros(base.size)

    def f(arr):
        with no_grad():
            return float(fn(Tensor(arr)).data.reshape(-1)[0])

    f0 = float(out.data.reshape(-1)[0])
    flat = base.reshape(-1)
    worst, worst_i = 0.0, None
    excluded = []
    for i in range(flat.size):
        xp = flat.copy()
        xp[i] += h
        xm = flat.copy()
        xm[i] -= h
        fp = f(xp.reshape(base.shape))
        fm = f(xm.reshape(base.shape))
        fd = (fp - fm) / (2 * h)
        scale = max(1.0, abs(fd))
        if abs((fp - f0) / h - (f0 - fm) / h) > kink_tol * scale:
            excluded.append(i)
            continue
        err = abs(analytic[i] - fd) / scale
        if err > worst:
            worst, worst_i = err, i
    return CheckReport(worst, tolerance, flat.size - len(excluded), excluded, worst_i)
