"""Metric tensors written with :mod:`loopcs.ops` (they accept jets)."""

from __future__ import annotations

from dataclasses import dataclass

from . import ops
from .ambient import radii


def _diag(entries, ref):
    n = len(entries)
    zero = ops.zeros_like(ref)
    rows = []
    for i in range(n):
        rows.append(ops.stack([entries[i] if j == i else zero for j in range(n)], axis=-1))
    return ops.stack(rows, axis=-2)


@dataclass(frozen=True)
class FlatMetric:
    dim: int

    def __call__(self, x):
        ref = x[..., 0]
        return _diag([ops.ones_like(ref)] * self.dim, ref)


@dataclass(frozen=True)
class SphereMetric:
    """Round metric of S^3 / S^5 in the toric chart, with the Hopf fibre scaled by ``t``.

    ``g_t = g_round + (t^2 - 1) eta (x) eta`` where ``eta`` is the round-metric
    dual of the fibre field ``sum_j d/dphi_j``; ``t = 1`` is the round sphere.
    """

    dim: int
    t: float = 1.0

    def __call__(self, x):
        r = radii(x, self.dim)
        rsq = [ri * ri for ri in r]
        if self.dim == 5:
            sa = ops.sin(x[..., 0])
            entries = [ops.ones_like(sa), sa * sa] + rsq
        else:
            entries = [ops.ones_like(rsq[0])] + rsq
        g = _diag(entries, rsq[0])
        if self.t != 1.0:
            zero = ops.zeros_like(rsq[0])
            eta = ops.stack([zero] * (self.dim - len(rsq)) + rsq, axis=-1)
            g = g + (self.t**2 - 1.0) * ops.einsum("...i,...j->...ij", eta, eta)
        return g
