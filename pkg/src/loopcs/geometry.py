"""Charts, points, smooth maps and the derivative engine."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ChartMismatchError, DomainError, OrderExceededError
from .jets import MAX_ORDER, Jet

SERIES = "series"
FINITE_DIFFERENCE = "fd"


@dataclass(frozen=True)
class Chart:
    """A single almost-global coordinate chart with optional periodic axes."""

    dim: int
    coordinate_names: tuple[str, ...]
    periods: tuple[Optional[float], ...]
    domain_box: tuple[tuple[float, float], ...]
    name: str = "chart"

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("chart dimension must be >= 1")
        if not (len(self.coordinate_names) == len(self.periods) == len(self.domain_box) == self.dim):
            raise ValueError("coordinate_names, periods and domain_box must all have length dim")
        for p in self.periods:
            if p is not None and not p > 0:
                raise ValueError(f"period must be positive, got {p}")
        for lo, hi in self.domain_box:
            if not lo <= hi:
                raise ValueError(f"empty domain interval [{lo}, {hi}]")

    def wrap(self, coords) -> np.ndarray:
        """Reduce periodic coordinates into their domain interval."""
        c = np.array(coords, dtype=float, copy=True)
        for i, p in enumerate(self.periods):
            if p is not None:
                lo = self.domain_box[i][0]
                c[..., i] = lo + np.mod(c[..., i] - lo, p)
        return c

    def contains(self, coords, atol: float = 1e-12) -> np.ndarray:
        c = self.wrap(coords)
        ok = np.ones(c.shape[:-1], dtype=bool)
        for i, (lo, hi) in enumerate(self.domain_box):
            if self.periods[i] is None:
                ok &= (c[..., i] >= lo - atol) & (c[..., i] <= hi + atol)
        return ok


def periodic_chart(dim: int, period: float = 2 * math.pi, name: str = "torus") -> Chart:
    return Chart(
        dim,
        tuple(f"x{i + 1}" for i in range(dim)),
        (period,) * dim,
        ((0.0, period),) * dim,
        name,
    )


def circle_chart() -> Chart:
    return Chart(1, ("theta",), (2 * math.pi,), ((0.0, 2 * math.pi),), "S1")


def interval_chart(lo: float = 0.0, hi: float = 1.0) -> Chart:
    return Chart(1, ("x0",), (None,), ((lo, hi),), "interval")


def product_chart(*charts: Chart) -> Chart:
    return Chart(
        sum(c.dim for c in charts),
        tuple(n for c in charts for n in c.coordinate_names),
        tuple(p for c in charts for p in c.periods),
        tuple(b for c in charts for b in c.domain_box),
        "x".join(c.name for c in charts),
    )


@dataclass(frozen=True)
class PointInChart:
    chart: Chart
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float)
        if c.shape != (self.chart.dim,):
            raise DomainError(f"expected {self.chart.dim} coordinates, got shape {c.shape}")
        if not bool(self.chart.contains(c)):
            raise DomainError(f"point {c} outside the domain of chart {self.chart.name!r}")
        object.__setattr__(self, "coords", c)


@dataclass
class SmoothMap:
    """A map between charts, written with :mod:`loopcs.ops` so it accepts jets.

    ``fn`` takes an array (or jet) of shape ``(..., domain.dim)`` and returns
    shape ``(..., out)``.
    """

    domain_chart: Chart
    codomain_chart: Chart
    fn: Callable
    derivative_order_supported: int = MAX_ORDER
    name: str = "map"

    def __call__(self, x):
        return self.fn(x)

    def eval(self, coords) -> np.ndarray:
        return np.asarray(self.fn(np.asarray(coords, dtype=float)))


def compose_maps(f: SmoothMap, g: SmoothMap) -> SmoothMap:
    """``f o g``; supports the smaller of the two derivative orders."""
    if g.codomain_chart != f.domain_chart:
        raise ChartMismatchError(
            f"cannot compose: {g.name} lands in {g.codomain_chart.name!r}, "
            f"{f.name} expects {f.domain_chart.name!r}"
        )
    return SmoothMap(
        g.domain_chart,
        f.codomain_chart,
        _Composed(f.fn, g.fn),
        min(f.derivative_order_supported, g.derivative_order_supported),
        f"{f.name}o{g.name}",
    )


@dataclass(frozen=True)
class _Composed:
    outer: Callable
    inner: Callable

    def __call__(self, x):
        return self.outer(self.inner(x))


@dataclass(frozen=True)
class DerivativeEngine:
    """Produces jets of a function either by series propagation or stencils.

    Finite-difference mode uses the step ``fd_step ** (1 / m)`` for order-``m``
    derivatives and Richardson-combines steps ``h`` and ``2h`` of the nested
    central stencil, so its truncation error is O(h^4) for every order.
    """

    mode: str = SERIES
    fd_step: float = 1e-4
    max_order: int = MAX_ORDER

    def __post_init__(self):
        if self.mode not in (SERIES, FINITE_DIFFERENCE):
            raise ValueError(f"unknown derivative mode {self.mode!r}")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be positive")
        if self.max_order not in (1, 2, 3):
            raise ValueError("max_order must be 1, 2 or 3")

    def step(self, order: int) -> float:
        return self.fd_step ** (1.0 / order)

    def jet(self, fn: Callable, x, order: int) -> Jet:
        if order > self.max_order:
            raise OrderExceededError(f"order {order} exceeds engine max_order {self.max_order}")
        x = np.asarray(x, dtype=float)
        if self.mode == SERIES:
            out = fn(Jet.seed(x, order))
            if not isinstance(out, Jet):
                out = Jet.constant(np.broadcast_to(out, np.shape(out)), x.shape[-1], order)
            return out
        return self._fd_jet(fn, x, order)

    def _fd_jet(self, fn: Callable, x: np.ndarray, order: int) -> Jet:
        d = x.shape[-1]
        f0 = np.asarray(fn(x), dtype=float)
        parts = [f0]
        for m in range(1, order + 1):
            h = self.step(m)
            part = np.zeros(f0.shape + (d,) * m)
            for combo in itertools.combinations_with_replacement(range(d), m):
                dh = self._stencil(fn, x, combo, h)
                d2h = self._stencil(fn, x, combo, 2 * h)
                val = (4.0 * dh - d2h) / 3.0
                for perm in set(itertools.permutations(combo)):
                    part[(Ellipsis,) + perm] = val
            parts.append(part)
        return Jet(parts, d)

    @staticmethod
    def _stencil(fn: Callable, x: np.ndarray, combo: Sequence[int], h: float) -> np.ndarray:
        m = len(combo)
        acc = None
        for signs in itertools.product((1.0, -1.0), repeat=m):
            xs = x.copy()
            for s, i in zip(signs, combo):
                xs[..., i] += s * h
            term = math.prod(signs) * np.asarray(fn(xs), dtype=float)
            acc = term if acc is None else acc + term
        return acc / (2.0 * h) ** m


DEFAULT_ENGINE = DerivativeEngine()


def partial_derivative(
    smooth_map: SmoothMap,
    point,
    multi_index: Sequence[int],
    engine: DerivativeEngine = DEFAULT_ENGINE,
) -> np.ndarray:
    """Componentwise partial derivative of ``smooth_map`` at ``point``.

    ``multi_index`` lists coordinate indices, e.g. ``[1, 2]`` for the mixed
    second partial in the 2nd and 3rd coordinates.  An empty list returns the
    value.
    """
    m = len(multi_index)
    if m > smooth_map.derivative_order_supported:
        raise OrderExceededError(
            f"{smooth_map.name} supports derivatives up to order {smooth_map.derivative_order_supported}"
        )
    if m > engine.max_order:
        raise OrderExceededError(f"engine max_order is {engine.max_order}")
    if isinstance(point, PointInChart):
        if point.chart != smooth_map.domain_chart:
            raise ChartMismatchError("point chart differs from the map's domain chart")
        coords = point.coords
    else:
        coords = np.asarray(point, dtype=float)
        if not bool(np.all(smooth_map.domain_chart.contains(coords))):
            raise DomainError(f"point {coords} outside the domain of {smooth_map.name}")
    jet = engine.jet(smooth_map.fn, coords, m)
    return jet.parts[m][(Ellipsis,) + tuple(multi_index)]
