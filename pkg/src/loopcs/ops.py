"""Elementary functions that accept plain arrays or :class:`~loopcs.jets.Jet`.

Metric, action and homotopy definitions are written against this module so
the same code evaluates values, series derivatives, or finite-difference
stencils.
"""

from __future__ import annotations

import numpy as np

from .jets import Jet, compose_scalar, einsum, from_gradient, stack, value_of

__all__ = [
    "sin", "cos", "exp", "log", "sqrt", "arctan2", "square",
    "stack", "einsum", "value_of", "zeros_like", "ones_like", "constant_like",
]


def sin(x):
    if not isinstance(x, Jet):
        return np.sin(x)
    s, c = np.sin(x.value), np.cos(x.value)
    return compose_scalar(x, [s, c, -s, -c])


def cos(x):
    if not isinstance(x, Jet):
        return np.cos(x)
    s, c = np.sin(x.value), np.cos(x.value)
    return compose_scalar(x, [c, -s, -c, s])


def exp(x):
    if not isinstance(x, Jet):
        return np.exp(x)
    e = np.exp(x.value)
    return compose_scalar(x, [e, e, e, e])


def log(x):
    if not isinstance(x, Jet):
        return np.log(x)
    u = x.value
    return compose_scalar(x, [np.log(u), 1.0 / u, -1.0 / u**2, 2.0 / u**3])


def sqrt(x):
    if not isinstance(x, Jet):
        return np.sqrt(x)
    r = np.sqrt(x.value)
    return compose_scalar(x, [r, 0.5 / r, -0.25 / r**3, 0.375 / r**5])


def square(x):
    return x * x


def arctan2(y, x):
    """Branch-free atan2: the gradient ``(x dy - y dx) / (x^2 + y^2)`` is smooth."""
    if not isinstance(x, Jet) and not isinstance(y, Jet):
        return np.arctan2(y, x)
    ref = x if isinstance(x, Jet) else y
    value = np.arctan2(value_of(y), value_of(x))
    if ref.order == 0:
        return Jet([value], ref.nvars)
    if not isinstance(x, Jet):
        x = Jet.constant(np.broadcast_to(x, value.shape), ref.nvars, ref.order)
    if not isinstance(y, Jet):
        y = Jet.constant(np.broadcast_to(y, value.shape), ref.nvars, ref.order)
    lo = ref.order - 1
    xl, yl = x.truncate(lo).expand_dims(-1), y.truncate(lo).expand_dims(-1)
    grad = (xl * y.gradient() - yl * x.gradient()) / (xl * xl + yl * yl)
    return from_gradient(value, grad)


def zeros_like(x):
    """Zero of the same kind and value shape as ``x``."""
    if isinstance(x, Jet):
        return Jet.constant(np.zeros(x.shape), x.nvars, x.order)
    return np.zeros(np.shape(x))


def ones_like(x):
    return zeros_like(x) + 1.0


def constant_like(x, c):
    """Constant ``c`` broadcast over the batch shape of ``x`` (value axes kept)."""
    c = np.asarray(c, dtype=float)
    batch = np.shape(value_of(x))
    arr = np.broadcast_to(c, batch + c.shape).copy()
    if isinstance(x, Jet):
        return Jet.constant(arr, x.nvars, x.order)
    return arr
