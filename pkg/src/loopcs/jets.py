"""Truncated Taylor jets for forward-mode derivatives up to third order.

A :class:`Jet` carries the value of a (tensor-valued) function together with
all of its partial derivatives up to ``order`` with respect to ``nvars`` seed
variables.  Part ``m`` has shape ``vshape + (nvars,) * m``; value axes come
first, derivative axes trail.  Products follow the Leibniz rule and scalar
functions follow Faa di Bruno, so polynomial inputs are differentiated exactly
up to rounding.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

MAX_ORDER = 3

_A_LETTERS = "PQR"
_B_LETTERS = "STU"


def _perm_last3(a: np.ndarray, axes: tuple[int, int, int]) -> np.ndarray:
    lead = tuple(range(a.ndim - 3))
    return np.transpose(a, lead + tuple(a.ndim - 3 + i for i in axes))


def _swap_last2(a: np.ndarray) -> np.ndarray:
    return np.swapaxes(a, -1, -2)


class Jet:
    """Value plus symmetric derivative tensors of orders ``1..order``."""

    __array_priority__ = 1000
    __slots__ = ("parts", "nvars")

    def __init__(self, parts: Sequence[np.ndarray], nvars: int):
        if not 1 <= len(parts) <= MAX_ORDER + 1:
            raise ValueError(f"a jet needs 1..{MAX_ORDER + 1} parts, got {len(parts)}")
        self.parts = tuple(np.asarray(p, dtype=float) for p in parts)
        self.nvars = int(nvars)

    # -- construction -------------------------------------------------------
    @classmethod
    def seed(cls, x, order: int) -> "Jet":
        """Independent variables: ``x[..., i]`` is the i-th seed coordinate."""
        x = np.asarray(x, dtype=float)
        if not 0 <= order <= MAX_ORDER:
            raise ValueError(f"order must be in 0..{MAX_ORDER}")
        d = x.shape[-1]
        parts = [x]
        if order >= 1:
            parts.append(np.broadcast_to(np.eye(d), x.shape + (d,)).copy())
        for m in range(2, order + 1):
            parts.append(np.zeros(x.shape + (d,) * m))
        return cls(parts, d)

    @classmethod
    def constant(cls, c, nvars: int, order: int) -> "Jet":
        c = np.asarray(c, dtype=float)
        parts = [c] + [np.zeros(c.shape + (nvars,) * m) for m in range(1, order + 1)]
        return cls(parts, nvars)

    # -- basic properties ---------------------------------------------------
    @property
    def order(self) -> int:
        return len(self.parts) - 1

    @property
    def value(self) -> np.ndarray:
        return self.parts[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.parts[0].shape

    @property
    def ndim(self) -> int:
        return self.parts[0].ndim

    def __repr__(self) -> str:
        return f"Jet(shape={self.shape}, order={self.order}, nvars={self.nvars})"

    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise ValueError(f"cannot raise jet order {self.order} to {order}")
        return Jet(self.parts[: order + 1], self.nvars)

    def gradient(self) -> "Jet":
        """Jet of the partials: new trailing value axis ``i`` holds d/dx_i."""
        if self.order < 1:
            raise ValueError("gradient of an order-0 jet is not available")
        return Jet(self.parts[1:], self.nvars)

    def diff(self, i: int) -> "Jet":
        return self.gradient()[(Ellipsis, i)]

    # -- linear structure ---------------------------------------------------
    def _map(self, fn: Callable[[np.ndarray, int], np.ndarray]) -> "Jet":
        return Jet([fn(p, m) for m, p in enumerate(self.parts)], self.nvars)

    def _norm_key(self, key) -> tuple:
        if not isinstance(key, tuple):
            key = (key,)
        if any(k is Ellipsis for k in key):
            used = sum(1 for k in key if k is not Ellipsis and k is not None)
            i = next(j for j, k in enumerate(key) if k is Ellipsis)
            key = key[:i] + (slice(None),) * (self.ndim - used) + key[i + 1 :]
        return key

    def __getitem__(self, key) -> "Jet":
        key = self._norm_key(key)
        return self._map(lambda p, m: p[key])

    def transpose(self, *axes: int) -> "Jet":
        nd = self.ndim
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return self._map(lambda p, m: np.transpose(p, tuple(axes) + tuple(range(nd, nd + m))))

    def swapaxes(self, a: int, b: int) -> "Jet":
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return self.transpose(*axes)

    def reshape(self, *shape: int) -> "Jet":
        d = self.nvars
        return self._map(lambda p, m: p.reshape(tuple(shape) + (d,) * m))

    def expand_dims(self, axis: int) -> "Jet":
        pos = axis if axis >= 0 else self.ndim + 1 + axis
        return self._map(lambda p, m: np.expand_dims(p, pos))

    def sum(self, axis: int) -> "Jet":
        pos = axis if axis >= 0 else self.ndim + axis
        return self._map(lambda p, m: p.sum(axis=pos))

    def broadcast_to(self, shape: tuple[int, ...]) -> "Jet":
        d = self.nvars
        return self._map(lambda p, m: np.broadcast_to(p, tuple(shape) + (d,) * m))

    def __neg__(self) -> "Jet":
        return self._map(lambda p, m: -p)

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            a, b = _common_order(self, other)
            return _align_add(a, b, 1.0)
        other = np.asarray(other, dtype=float)
        parts = list(self.parts)
        shape = np.broadcast_shapes(parts[0].shape, other.shape)
        parts[0] = parts[0] + other
        for m in range(1, len(parts)):
            parts[m] = np.broadcast_to(parts[m], shape + (self.nvars,) * m)
        return Jet(parts, self.nvars)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        return self + (-other)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        return einsum("...,...->...", self, other)

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * reciprocal(other)
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> "Jet":
        return reciprocal(self) * other

    def __pow__(self, n: int) -> "Jet":
        if not isinstance(n, (int, np.integer)) or n < 0:
            raise ValueError("only non-negative integer powers are supported")
        out = None
        for _ in range(n):
            out = self if out is None else out * self
        return Jet.constant(np.ones(self.shape), self.nvars, self.order) if out is None else out

    def __matmul__(self, other) -> "Jet":
        return einsum("...ij,...jk->...ik", self, other)


def _common_order(a: Jet, b: Jet) -> tuple[Jet, Jet]:
    if a.nvars != b.nvars and min(a.order, b.order) > 0:
        raise ValueError(f"jets over different seeds ({a.nvars} vs {b.nvars} variables)")
    n = min(a.order, b.order)
    return a.truncate(n), b.truncate(n)


def _align_add(a: Jet, b: Jet, sign: float) -> Jet:
    shape = np.broadcast_shapes(a.shape, b.shape)
    parts = []
    for m, (pa, pb) in enumerate(zip(a.parts, b.parts)):
        tail = (a.nvars,) * m
        parts.append(np.broadcast_to(pa, shape + tail) + sign * np.broadcast_to(pb, shape + tail))
    return Jet(parts, a.nvars)


def _split_spec(spec: str) -> tuple[str, str, str]:
    lhs, out = spec.replace(" ", "").split("->")
    sa, sb = lhs.split(",")
    return sa, sb, out


def einsum(spec: str, a, b) -> "Jet | np.ndarray":
    """Bilinear ``np.einsum`` over value axes with the Leibniz rule.

    ``spec`` names value axes only (lower-case letters, ``...`` allowed).
    Either operand may be a plain array, which is treated as constant.
    """
    sa, sb, so = _split_spec(spec)
    ja, jb = isinstance(a, Jet), isinstance(b, Jet)
    if not ja and not jb:
        return np.einsum(spec, a, b)
    if not jb:
        b = np.asarray(b, dtype=float)
        return Jet(
            [np.einsum(f"{sa}{_A_LETTERS[:m]},{sb}->{so}{_A_LETTERS[:m]}", p, b) for m, p in enumerate(a.parts)],
            a.nvars,
        )
    if not ja:
        a = np.asarray(a, dtype=float)
        return Jet(
            [np.einsum(f"{sa},{sb}{_B_LETTERS[:m]}->{so}{_B_LETTERS[:m]}", a, p) for m, p in enumerate(b.parts)],
            b.nvars,
        )
    a, b = _common_order(a, b)

    def c(i: int, j: int) -> np.ndarray:
        la, lb = _A_LETTERS[:i], _B_LETTERS[:j]
        return np.einsum(f"{sa}{la},{sb}{lb}->{so}{la}{lb}", a.parts[i], b.parts[j])

    n = a.order
    parts = [c(0, 0)]
    if n >= 1:
        parts.append(c(1, 0) + c(0, 1))
    if n >= 2:
        c11 = c(1, 1)
        parts.append(c(2, 0) + c(0, 2) + c11 + _swap_last2(c11))
    if n >= 3:
        c21 = c(2, 1)
        c12 = c(1, 2)
        parts.append(
            c(3, 0)
            + c(0, 3)
            + c21
            + _perm_last3(c21, (0, 2, 1))
            + _perm_last3(c21, (2, 0, 1))
            + c12
            + _perm_last3(c12, (1, 0, 2))
            + _perm_last3(c12, (1, 2, 0))
        )
    return Jet(parts, a.nvars)


def compose_scalar(f: Jet, derivs: Sequence[np.ndarray]) -> Jet:
    """Apply a scalar function elementwise given its derivatives at ``f.value``.

    ``derivs[j]`` is the j-th derivative of the outer function evaluated at
    the value of ``f``; ``derivs[0]`` is the function value itself.
    """
    n = f.order
    parts = [np.asarray(derivs[0], dtype=float)]
    if n >= 1:
        f1 = f.parts[1]
        d1 = derivs[1][..., None]
        parts.append(d1 * f1)
    if n >= 2:
        f2 = f.parts[2]
        outer = f1[..., :, None] * f1[..., None, :]
        parts.append(derivs[2][..., None, None] * outer + d1[..., None] * f2)
    if n >= 3:
        f3 = f.parts[3]
        t = f2[..., :, :, None] * f1[..., None, None, :]
        sym = t + _perm_last3(t, (0, 2, 1)) + _perm_last3(t, (2, 0, 1))
        triple = outer[..., None] * f1[..., None, None, :]
        parts.append(
            derivs[3][..., None, None, None] * triple
            + derivs[2][..., None, None, None] * sym
            + d1[..., None, None] * f3
        )
    return Jet(parts, f.nvars)


def from_gradient(value: np.ndarray, grad: Jet) -> Jet:
    """Rebuild a jet from its value and a jet of its gradient (one order lower)."""
    return Jet([np.asarray(value, dtype=float)] + list(grad.parts), grad.nvars)


def reciprocal(f: Jet) -> Jet:
    u = f.value
    return compose_scalar(f, [1.0 / u, -1.0 / u**2, 2.0 / u**3, -6.0 / u**4])


def inv(a: Jet) -> Jet:
    """Matrix inverse over the last two value axes, order by order."""
    a0inv = np.linalg.inv(a.value)
    out = Jet([a0inv], a.nvars)
    for m in range(1, a.order + 1):
        trial = Jet(list(out.parts) + [np.zeros(a0inv.shape + (a.nvars,) * m)], a.nvars)
        prod = einsum("...ij,...jk->...ik", a.truncate(m), trial)
        top = -np.einsum("...ij,...jk" + _A_LETTERS[:m] + "->...ik" + _A_LETTERS[:m], a0inv, prod.parts[m])
        out = Jet(list(out.parts) + [top], a.nvars)
    return out


def stack(items: Sequence, axis: int = -1):
    """Stack jets (or arrays) along a new value axis."""
    jets = [x for x in items if isinstance(x, Jet)]
    if not jets:
        return np.stack([np.asarray(x, dtype=float) for x in items], axis=axis)
    order = min(j.order for j in jets)
    nvars = jets[0].nvars
    shape = np.broadcast_shapes(*[np.shape(x.value if isinstance(x, Jet) else x) for x in items])
    norm = []
    for x in items:
        if not isinstance(x, Jet):
            x = Jet.constant(np.broadcast_to(np.asarray(x, dtype=float), shape), nvars, order)
        norm.append(x.truncate(order).broadcast_to(shape))
    vnd = len(shape)
    pos = axis if axis >= 0 else vnd + 1 + axis
    parts = [np.stack([j.parts[m] for j in norm], axis=pos) for m in range(order + 1)]
    return Jet(parts, nvars)


def value_of(x) -> np.ndarray:
    return x.value if isinstance(x, Jet) else np.asarray(x, dtype=float)
