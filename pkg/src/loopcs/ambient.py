"""Sphere charts and ambient-space transformations of S^{2m-1} in C^m = R^{2m}.

Toric chart of S^5: ``(alpha, beta, phi1, phi2, phi3)`` with radii
``|z1| = sin a cos b``, ``|z2| = sin a sin b``, ``|z3| = cos a``; S^3 uses
``(alpha, phi1, phi2)`` with ``|z1| = cos a``, ``|z2| = sin a``.  The chart
misses the measure-zero set where some ``z_j`` vanishes.  Ambient vectors are
ordered ``(Re z1, Im z1, Re z2, Im z2, ...)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import ops
from .geometry import Chart
from .jets import Jet

TWO_PI = 2 * math.pi


def sphere_chart(dim: int) -> Chart:
    if dim == 5:
        return Chart(
            5,
            ("alpha", "beta", "phi1", "phi2", "phi3"),
            (None, None, TWO_PI, TWO_PI, TWO_PI),
            ((0.0, math.pi / 2), (0.0, math.pi / 2), (0.0, TWO_PI), (0.0, TWO_PI), (0.0, TWO_PI)),
            "S5-toric",
        )
    if dim == 3:
        return Chart(
            3,
            ("alpha", "phi1", "phi2"),
            (None, TWO_PI, TWO_PI),
            ((0.0, math.pi / 2), (0.0, TWO_PI), (0.0, TWO_PI)),
            "S3-toric",
        )
    raise ValueError(f"sphere chart only for dim 3 or 5, got {dim}")


def radii(x, dim: int) -> list:
    if dim == 5:
        a, b = x[..., 0], x[..., 1]
        sa = ops.sin(a)
        return [sa * ops.cos(b), sa * ops.sin(b), ops.cos(a)]
    a = x[..., 0]
    return [ops.cos(a), ops.sin(a)]


def angles(x, dim: int) -> list:
    m = (dim + 1) // 2
    return [x[..., dim - m + j] for j in range(m)]


def embed(x, dim: int):
    cols = []
    for r, phi in zip(radii(x, dim), angles(x, dim)):
        cols += [r * ops.cos(phi), r * ops.sin(phi)]
    return ops.stack(cols, axis=-1)


def _wrap_angle(phi):
    v = ops.value_of(phi)
    return phi + np.where(v < 0, TWO_PI, 0.0)


def chart_coords(z, dim: int):
    """Inverse of :func:`embed` on the chart domain."""
    m = (dim + 1) // 2
    re = [z[..., 2 * j] for j in range(m)]
    im = [z[..., 2 * j + 1] for j in range(m)]
    rsq = [u * u + v * v for u, v in zip(re, im)]
    phis = [_wrap_angle(ops.arctan2(v, u)) for u, v in zip(re, im)]
    if dim == 5:
        r1, r2, r3 = (ops.sqrt(s) for s in rsq)
        alpha = ops.arctan2(ops.sqrt(rsq[0] + rsq[1]), r3)
        beta = ops.arctan2(r2, r1)
        return ops.stack([alpha, beta] + phis, axis=-1)
    r1, r2 = (ops.sqrt(s) for s in rsq)
    return ops.stack([ops.arctan2(r2, r1)] + phis, axis=-1)


def min_radius(x, dim: int) -> np.ndarray:
    """Distance proxy to the chart's excluded set (smallest ``|z_j|``)."""
    x = np.asarray(x, dtype=float)
    return np.min(np.stack([np.abs(r) for r in radii(x, dim)], axis=-1), axis=-1)


def realify(u: np.ndarray) -> np.ndarray:
    """Real 2m x 2m matrix of a complex m x m matrix in the interleaved basis."""
    u = np.asarray(u, dtype=complex)
    m = u.shape[0]
    out = np.zeros((2 * m, 2 * m))
    out[0::2, 0::2] = u.real
    out[0::2, 1::2] = -u.imag
    out[1::2, 0::2] = u.imag
    out[1::2, 1::2] = u.real
    return out


def _plane_rotation(angle_list: Sequence, size: int):
    """Block-diagonal rotation matrix (batch, size, size) from per-plane angles."""
    ref = next((a for a in angle_list if isinstance(a, Jet)), angle_list[0])
    zero = ops.zeros_like(ref)
    one = ops.ones_like(ref)
    rows = [[zero] * size for _ in range(size)]
    for j, ang in enumerate(angle_list):
        c, s = ops.cos(ang), ops.sin(ang)
        rows[2 * j][2 * j], rows[2 * j][2 * j + 1] = c, -s
        rows[2 * j + 1][2 * j], rows[2 * j + 1][2 * j + 1] = s, c
    for i in range(2 * len(angle_list), size):
        rows[i][i] = one
    return ops.stack([ops.stack(r, axis=-1) for r in rows], axis=-2)


@dataclass(frozen=True)
class Rotor:
    """``V diag(rot(f_j t)) V^T`` -- a one-parameter rotation group.

    With integer ``freqs`` the group closes up at ``t = 2 pi``.
    """

    basis: np.ndarray
    freqs: tuple[float, ...]

    def matrix(self, t):
        size = self.basis.shape[0]
        m = _plane_rotation([f * t for f in self.freqs], size)
        v = self.basis
        if isinstance(m, Jet):
            return ops.einsum("...ij,kj->...ik", ops.einsum("ki,...ij->...kj", v, m), v)
        return v @ m @ v.T

    def inverse(self) -> "Rotor":
        return Rotor(self.basis, tuple(-f for f in self.freqs))

    def apply(self, z, t):
        return ops.einsum("...ij,...j->...i", self.matrix(t), z)


@dataclass(frozen=True)
class Boost:
    """Conformal (Moebius) dilation of the unit sphere along ``axis`` with rapidity ``rate * t``."""

    axis: np.ndarray
    rate: float

    def inverse(self) -> "Boost":
        return Boost(self.axis, -self.rate)

    def apply(self, z, t):
        tau = self.rate * t
        ep, em = ops.exp(tau), ops.exp(-tau)
        ch, sh = 0.5 * (ep + em), 0.5 * (ep - em)
        u = ops.einsum("...i,i->...", z, self.axis)
        den = ch + u * sh
        u_new = (u * ch + sh) / den
        perp = z - ops.einsum("...,i->...i", u, self.axis)
        inv_den = 1.0 / den
        return ops.einsum("...i,...->...i", perp, inv_den) + ops.einsum("...,i->...i", u_new, self.axis)


@dataclass(frozen=True)
class Step:
    """One ambient transformation whose parameter is ``s``, ``theta`` or a constant."""

    op: object
    var: str  # "s", "theta" or "const"
    value: float = 1.0

    def inverse(self) -> "Step":
        return Step(self.op.inverse(), self.var, self.value)

    def apply(self, z, s, theta):
        if self.var == "s":
            t = s
        elif self.var == "theta":
            t = theta
        else:
            t = self.value
        return self.op.apply(z, t)


@dataclass(frozen=True)
class AmbientFlow:
    """Composition of steps, applied left to right."""

    steps: tuple[Step, ...]

    def apply(self, z, s=0.0, theta=0.0):
        for st in self.steps:
            z = st.apply(z, s, theta)
        return z

    def inverse(self) -> "AmbientFlow":
        return AmbientFlow(tuple(st.inverse() for st in reversed(self.steps)))

    def conjugate(self, inner: "AmbientFlow") -> "AmbientFlow":
        """``self o inner o self^-1`` (apply ``self^-1`` first)."""
        return AmbientFlow(self.inverse().steps + inner.steps + self.steps)


@dataclass(frozen=True)
class SphereMapFn:
    """Chart-level map ``x -> chart(flow(embed(x)))`` for actions, homotopies and fixed maps.

    ``kind`` decides how the leading inputs are read: ``"action"`` expects
    ``(theta, x)``, ``"homotopy"`` ``(s, theta, x)``, ``"fixed"`` just ``x``.
    """

    flow: AmbientFlow
    dim: int
    kind: str
    s: float = 0.0
    theta: float = 0.0

    def __call__(self, X):
        if self.kind == "action":
            s, theta, x = self.s, X[..., 0], X[..., 1:]
        elif self.kind == "homotopy":
            s, theta, x = X[..., 0], X[..., 1], X[..., 2:]
        else:
            s, theta, x = self.s, self.theta, X
        z = self.flow.apply(embed(x, self.dim), s, theta)
        return chart_coords(z, self.dim)


def random_unitary(m: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.normal(size=(m, m)) + 1j * rng.normal(size=(m, m))
    q, r = np.linalg.qr(a)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_orthogonal(size: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.normal(size=(size, size)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q
