"""Loops, circle actions and the pulled-back Wodzicki-Chern-Simons form.

Along a loop ``gamma`` with tangent fields ``X_1..X_n`` the form evaluates to

    CS(X_1..X_n) = int_0^{2pi} K_{nu l_1..l_n}(gamma) gdot^nu X_1^{l_1} .. X_n^{l_n} dtheta
                 = int_0^{2pi} k_nu(gamma) gdot^nu det[X_1 .. X_n] dtheta

using the compressed storage ``K[nu, l] = eps(l) k[nu]``.  For a circle action
``a`` the pullback to ``M`` takes ``gamma = a(., m)`` and ``X_i = da/dx^i``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .curvature import MetricField
from .errors import DenominatorBelowThresholdError, GridTooCoarseError
from .geometry import DEFAULT_ENGINE, Chart, DerivativeEngine, SmoothMap, circle_chart, product_chart
from .ktensor import ContractionSchedule, k_field
from .report import CheckReport

TWO_PI = 2 * math.pi


def theta_nodes(count: int, offset: float = 0.0) -> tuple[np.ndarray, float]:
    """Periodic trapezoid nodes on ``[0, 2pi)`` and their common weight."""
    if count < 1:
        raise ValueError("need at least one theta node")
    return offset + TWO_PI * np.arange(count) / count, TWO_PI / count


def periodic_difference(chart: Chart, a, b) -> np.ndarray:
    """``a - b`` with periodic coordinates reduced to ``(-period/2, period/2]``."""
    d = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    for i, p in enumerate(chart.periods):
        if p is not None:
            d[..., i] -= p * np.round(d[..., i] / p)
    return d


@dataclass
class Loop:
    gamma: SmoothMap

    def __post_init__(self):
        if self.gamma.domain_chart.dim != 1:
            raise ValueError("a loop is parameterised by the circle")

    def __call__(self, theta) -> np.ndarray:
        return self.gamma.eval(np.asarray(theta, dtype=float)[..., None])

    def closure_defect(self) -> float:
        a, b = self(np.array([0.0])), self(np.array([TWO_PI]))
        return float(np.abs(periodic_difference(self.gamma.codomain_chart, a, b)).max())


@dataclass
class LoopTangentFrame:
    """``fields(theta) -> (T, n_fields, dim)`` with row ``i`` the vector ``X_i`` at ``gamma(theta)``."""

    fields: Callable

    def __call__(self, theta) -> np.ndarray:
        return np.asarray(self.fields(np.asarray(theta, dtype=float)), dtype=float)


@dataclass
class CircleAction:
    """``a(theta, m)``; the map's input is ``(theta, x_1..x_n)``."""

    a: SmoothMap
    label: str

    @property
    def chart(self) -> Chart:
        return self.a.codomain_chart

    @property
    def dim(self) -> int:
        return self.chart.dim

    def __call__(self, theta, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        th = np.broadcast_to(np.asarray(theta, dtype=float), x.shape[:-1])
        return self.a.eval(np.concatenate([th[..., None], x], axis=-1))

    def loop_at(self, x) -> Loop:
        return Loop(SmoothMap(circle_chart(), self.chart, _Orbit(self.a.fn, np.asarray(x, dtype=float)), name=f"{self.label}-orbit"))

    def check(self, points, tolerance: float = 1e-12) -> CheckReport:
        """``a(0, .) = id`` and ``a(2pi, .) = a(0, .)``."""
        x = np.atleast_2d(np.asarray(points, dtype=float))
        ident = np.abs(periodic_difference(self.chart, self(0.0, x), x)).max()
        period = np.abs(periodic_difference(self.chart, self(TWO_PI, x), self(0.0, x))).max()
        worst = float(max(ident, period))
        return CheckReport(
            f"action_invariants[{self.label}]",
            len(x),
            worst,
            tolerance,
            worst < tolerance,
            details={"identity_at_zero": float(ident), "periodicity": float(period)},
        )


@dataclass(frozen=True)
class _Orbit:
    fn: Callable
    x: np.ndarray

    def __call__(self, theta):
        from . import ops

        cols = [theta[..., 0]] + [ops.constant_like(theta[..., 0], c) for c in self.x]
        return self.fn(ops.stack(cols, axis=-1))


@dataclass(frozen=True)
class _Iterated:
    fn: Callable
    n: int

    def __call__(self, X):
        from . import ops

        cols = [self.n * X[..., 0]] + [X[..., i] for i in range(1, X.shape[-1])]
        return self.fn(ops.stack(cols, axis=-1))


def iterate_action(action: CircleAction, n: int) -> CircleAction:
    """``a_n(theta, m) = a(n theta, m)``."""
    if int(n) != n or n < 1:
        raise ValueError(f"iterate count must be a positive integer, got {n}")
    n = int(n)
    if n == 1:
        return action
    m = action.a
    return CircleAction(
        SmoothMap(m.domain_chart, m.codomain_chart, _Iterated(m.fn, n), m.derivative_order_supported, f"{m.name}^{n}"),
        f"{action.label}^{n}",
    )


def trivial_action(chart: Chart) -> CircleAction:
    return CircleAction(SmoothMap(product_chart(circle_chart(), chart), chart, _Drop(), name="trivial"), "trivial")


@dataclass(frozen=True)
class _Drop:
    def __call__(self, X):
        return X[..., 1:]


def _frame_factor(J: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """From ``J[..., i, c]`` (c = 0 the loop velocity) build ``gdot^nu det[X]`` and a bound on it."""
    xi = J[..., 0]
    X = J[..., 1:]
    det = np.linalg.det(X)
    hadamard = np.prod(np.linalg.norm(X, axis=-2), axis=-1)
    return xi * det[..., None], np.abs(xi) * hadamard[..., None]


def action_factors(action: CircleAction, x, thetas, engine: DerivativeEngine = DEFAULT_ENGINE):
    """Image points ``a(theta, x)`` and frame factors ``gdot^nu det[da/dx]`` on a ``(B, T)`` grid."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B, n = x.shape
    T = len(thetas)
    inp = np.empty((B, T, n + 1))
    inp[..., 0] = np.asarray(thetas)[None, :]
    inp[..., 1:] = x[:, None, :]
    jet = engine.jet(action.a.fn, inp, 1)
    fac, bound = _frame_factor(jet.parts[1])
    return jet.value, fac, bound


def pullback_integrand(
    metric: MetricField,
    action: CircleAction,
    x,
    thetas,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Integrand values and per-term scales on the ``(B, T)`` grid."""
    y, fac, bound = action_factors(action, x, thetas, engine)
    n = y.shape[-1]
    k, kabs = k_field(metric, y.reshape(-1, n), schedule, engine, with_scale=True)
    k = k.reshape(fac.shape)
    kabs = kabs.reshape(fac.shape)
    return np.einsum("...v,...v->...", k, fac), np.einsum("...v,...v->...", kabs, bound)


def csw_eval(
    metric: MetricField,
    loop: Loop,
    frame: LoopTangentFrame,
    theta_count: int = 256,
    offset: float = 0.0,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
    rtol: Optional[float] = None,
) -> float:
    """The form on one loop with the given tangent fields, periodic trapezoid in theta.

    With ``rtol`` set, the half-resolution rule must agree to ``rtol`` relative
    to the integrand scale, otherwise :class:`GridTooCoarseError` is raised.
    """

    def quad(count: int):
        th, w = theta_nodes(count, offset)
        jet = engine.jet(loop.gamma.fn, th[:, None], 1)
        y = jet.value
        gdot = jet.parts[1][..., 0]
        X = frame(th)
        det = np.linalg.det(np.swapaxes(X, -1, -2))
        k, kabs = k_field(metric, y, schedule, engine, with_scale=True)
        vals = np.einsum("tv,tv->t", k, gdot) * det
        scale = np.einsum("tv,tv->t", kabs, np.abs(gdot)) * np.prod(np.linalg.norm(X, axis=-1), axis=-1)
        return w * vals.sum(), w * scale.sum()

    value, scale = quad(theta_count)
    if rtol is not None:
        coarse, _ = quad(max(theta_count // 2, 1))
        if abs(value - coarse) > rtol * max(scale, np.finfo(float).tiny):
            raise GridTooCoarseError(
                f"theta grid of {theta_count} nodes not converged: |Q - Q_half| = {abs(value - coarse):.3e}"
            )
    return float(value)


def pullback_form_at(
    metric: MetricField,
    action: CircleAction,
    m,
    theta_count: int = 256,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
    with_scale: bool = False,
):
    """Coefficient of the pulled-back (2k-1)-form at chart point(s) ``m``.

    Accepts one point ``(n,)`` or a batch ``(B, n)``.
    """
    pts = np.asarray(m, dtype=float)
    single = pts.ndim == 1
    th, w = theta_nodes(theta_count)
    vals, scale = pullback_integrand(metric, action, np.atleast_2d(pts), th, engine, schedule)
    v, s = w * vals.sum(axis=-1), w * scale.sum(axis=-1)
    if single:
        v, s = float(v[0]), float(s[0])
    return (v, s) if with_scale else v


@dataclass
class InvariantResult:
    value: float
    error_estimate: float
    scale: float
    coarse_value: float
    nodes: int
    theta_nodes: int
    wall_time: float
    details: dict = field(default_factory=dict)

    @property
    def nonzero(self) -> bool:
        return abs(self.value) > 10 * self.error_estimate

    def row(self) -> dict:
        return {
            "value": self.value,
            "error_estimate": self.error_estimate,
            "scale": self.scale,
            "nodes": self.nodes,
            "theta_nodes": self.theta_nodes,
            "wall_time": self.wall_time,
            **self.details,
        }


@dataclass(frozen=True)
class PullbackField:
    """Grid field: theta-integrated integrand and scale at manifold nodes.

    ``mode="k"`` returns the raw K values at the image points instead
    (shape ``(B, T, n)``), which is what the grid cache stores.
    """

    metric: MetricField
    action: CircleAction
    thetas: np.ndarray
    weight: float
    engine: DerivativeEngine = DEFAULT_ENGINE
    schedule: Optional[ContractionSchedule] = None
    mode: str = "integrand"

    def __call__(self, nodes):
        y, fac, bound = action_factors(self.action, nodes, self.thetas, self.engine)
        n = y.shape[-1]
        k, kabs = k_field(self.metric, y.reshape(-1, n), self.schedule, self.engine, with_scale=True)
        k = k.reshape(fac.shape)
        if self.mode == "k":
            return k
        kabs = kabs.reshape(fac.shape)
        vals = np.einsum("btv,btv->b", k, fac) * self.weight
        scale = np.einsum("btv,btv->b", kabs, bound) * self.weight
        return np.stack([vals, scale], axis=-1)


@dataclass(frozen=True)
class FactorField:
    action: CircleAction
    thetas: np.ndarray
    engine: DerivativeEngine = DEFAULT_ENGINE

    def __call__(self, nodes):
        _, fac, bound = action_factors(self.action, nodes, self.thetas, self.engine)
        return np.stack([fac, bound], axis=-1)


def invariant_I(
    metric: MetricField,
    action: CircleAction,
    grid,
    theta_count: int = 8,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
    workers: int = 1,
    cache_dir=None,
    rtol: Optional[float] = None,
) -> InvariantResult:
    """``I(a) = int_M a^* CS`` on ``grid`` with a two-resolution error estimate.

    The coarse estimate halves every manifold axis and the theta count.  With
    ``rtol`` set, an error estimate above ``rtol * scale`` raises
    :class:`GridTooCoarseError`.
    """
    from .quadrature import parallel_map

    t0 = time.perf_counter()

    def run(g, tcount):
        th, w = theta_nodes(tcount)
        nodes, weights = g.nodes(), g.weights()
        if cache_dir is not None:
            k = _cached_k_grid(metric, action, g, th, engine, schedule, workers, cache_dir)
            fb = parallel_map(FactorField(action, th, engine), nodes, workers)
            fac, bound = fb[..., 0], fb[..., 1]
            vals = np.einsum("btv,btv->b", k, fac) * w
            # per-term K magnitudes are not cached, so |K| stands in for them
            scale = np.einsum("btv,btv->b", np.abs(k), bound) * w
            return float(np.dot(weights, vals)), float(np.dot(weights, scale))
        out = parallel_map(PullbackField(metric, action, th, w, engine, schedule), nodes, workers)
        return float(np.dot(weights, out[:, 0])), float(np.dot(weights, np.abs(out[:, 1])))

    value, scale = run(grid, theta_count)
    coarse, _ = run(grid.half(), max(theta_count // 2, 1))
    err = abs(value - coarse)
    if rtol is not None and err > rtol * max(scale, np.finfo(float).tiny):
        raise GridTooCoarseError(f"invariant not converged: estimate {err:.3e} vs scale {scale:.3e}")
    return InvariantResult(
        value,
        err,
        scale,
        coarse,
        grid.total,
        theta_count,
        time.perf_counter() - t0,
        {"metric": metric.name, "action": action.label},
    )


def _cached_k_grid(metric, action, grid, thetas, engine, schedule, workers, cache_dir):
    from .quadrature import GridCache, cache_path, cache_read, cache_write, parallel_map

    label = f"k@{action.label}:theta={len(thetas)}"
    counts = tuple(grid.node_counts) + (len(thetas),)
    path = cache_path(cache_dir, metric, label, counts)
    if path.exists():
        c = cache_read(path, expected_metric=metric, expected_label=label)
        return c.data.reshape(grid.total, len(thetas), -1)
    k = parallel_map(PullbackField(metric, action, thetas, 1.0, engine, schedule, mode="k"), grid.nodes(), workers)
    cache_write(path, GridCache.build(metric, label, counts, k, rank=1))
    return k


def scaling_check(
    metric: MetricField,
    action: CircleAction,
    n: int,
    points,
    theta_count: int = 64,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    tolerance: float = 1e-10,
    threshold: float = 1e-8,
    grid=None,
    integral_tolerance: float = 1e-8,
    workers: int = 1,
) -> CheckReport:
    """Pointwise ``pullback(a_n) / pullback(a) - n`` and, with a grid, ``I(a_n) / (n I(a)) - 1``.

    The iterate uses ``n * theta_count`` nodes so both integrands are sampled
    at the same image points.  Samples whose base value is below
    ``threshold * scale`` are checked by difference instead; if every sample
    is below, :class:`DenominatorBelowThresholdError` is raised unless the
    difference check itself passes.
    """
    an = iterate_action(action, n)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    base, scale = pullback_form_at(metric, action, pts, theta_count, engine, with_scale=True)
    itv = pullback_form_at(metric, an, pts, theta_count * n, engine)
    big = np.abs(base) > threshold * np.maximum(scale, np.finfo(float).tiny)
    ratio_dev = np.abs(itv[big] / base[big] - n) / n if big.any() else np.zeros(0)
    diff_dev = np.abs(itv - n * base) / np.maximum(n * scale, np.finfo(float).tiny)
    details = {
        "n": n,
        "ratio_samples": int(big.sum()),
        "max_ratio_deviation": float(ratio_dev.max()) if big.any() else None,
        "max_difference_deviation": float(diff_dev.max()),
    }
    worst = float(ratio_dev.max()) if big.any() else float(diff_dev.max())
    if not big.any() and worst >= tolerance:
        raise DenominatorBelowThresholdError(
            f"all {len(pts)} base values below threshold and difference check fails ({worst:.3e})"
        )
    passed = worst < tolerance
    if grid is not None:
        I1 = invariant_I(metric, action, grid, engine=engine, workers=workers)
        In = invariant_I(metric, an, grid, theta_count=8 * n, engine=engine, workers=workers)
        details["I"] = I1.value
        details["I_error"] = I1.error_estimate
        details["I_n"] = In.value
        if I1.nonzero:
            idev = abs(In.value / (n * I1.value) - 1)
            details["integral_ratio_deviation"] = idev
            passed = passed and idev < integral_tolerance
        else:
            idev = abs(In.value - n * I1.value) / max(n * I1.scale, np.finfo(float).tiny)
            details["integral_difference_deviation"] = idev
            passed = passed and idev < integral_tolerance
    return CheckReport(f"iterate_scaling[n={n}]", len(pts), worst, tolerance, passed, details=details)
