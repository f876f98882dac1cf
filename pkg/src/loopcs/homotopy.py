"""Homotopies of circle actions and the exterior derivative of the pulled-back form.

Variables of a homotopy ``F(s, theta, x)`` are ordered ``(s, theta, x_1..x_n)``.
Write ``J_b`` for ``dF/dx^b`` with ``b = 0`` meaning ``s``, ``xi = dF/dtheta``
and ``S_a = d^2 F / dx^a dtheta``.  The pulled-back form on ``[0,1] x M`` has
coefficients ``omega_a = int k(F) xi det[J_b, b != a] dtheta``; its exterior
derivative is evaluated three ways:

* ``d_pullback_formula``: ``sum_a (-1)^a int k(F) S_a det[J_b, b != a]``
* ``d_pullback_reduced``: ``int k(F) (J_x dalpha/dtheta) det J_x`` with
  ``J_0 = J_x alpha``
* ``cartan_fd_oracle``: central differences of the coefficients ``omega_a``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .curvature import MetricField
from .errors import JacobianSingularError, NotAnIsometryError, StepTooSmallError
from .geometry import DEFAULT_ENGINE, DerivativeEngine, SmoothMap
from .ktensor import ContractionSchedule, assembler_for, k_field, k_gradient_field, tilde_k
from .loops import CircleAction, invariant_I, periodic_difference, theta_nodes
from .report import CheckReport

CLAIMS = ("none", "diffeomorphism", "isometry")
COND_LIMIT = 1e12


@dataclass
class Homotopy:
    F: SmoothMap
    endpoint_actions: tuple[CircleAction, CircleAction]
    regularity_claim: str = "none"
    label: str = "homotopy"

    def __post_init__(self):
        if self.regularity_claim not in CLAIMS:
            raise ValueError(f"regularity_claim must be one of {CLAIMS}")

    @property
    def chart(self):
        return self.F.codomain_chart

    @property
    def dim(self) -> int:
        return self.chart.dim

    def __call__(self, s, theta, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        lead = x.shape[:-1]
        s = np.broadcast_to(np.asarray(s, dtype=float), lead)
        th = np.broadcast_to(np.asarray(theta, dtype=float), lead)
        return self.F.eval(np.concatenate([s[..., None], th[..., None], x], axis=-1))

    def endpoint_defect(self, points, thetas) -> float:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        worst = 0.0
        for s, act in ((0.0, self.endpoint_actions[0]), (1.0, self.endpoint_actions[1])):
            for th in thetas:
                d = periodic_difference(self.chart, self(s, th, x), act(th, x))
                worst = max(worst, float(np.abs(d).max()))
        return worst


def homotopy_jet(h: Homotopy, s, x, thetas, order: int, engine: DerivativeEngine = DEFAULT_ENGINE):
    """Jet of ``F`` on the ``(B, T)`` grid of ``(s_b, theta_t, x_b)``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    B, n = x.shape
    T = len(thetas)
    inp = np.empty((B, T, n + 2))
    inp[..., 0] = np.broadcast_to(np.asarray(s, dtype=float), (B,))[:, None]
    inp[..., 1] = np.asarray(thetas)[None, :]
    inp[..., 2:] = x[:, None, :]
    return engine.jet(h.F.fn, inp, order)


def spatial_columns(n: int) -> list[int]:
    """Jet variable index of ``x^0 = s, x^1..x^n``."""
    return [0] + list(range(2, n + 2))


def metric_defect(metric: MetricField, h: Homotopy, s, thetas, x, engine: DerivativeEngine = DEFAULT_ENGINE) -> np.ndarray:
    """``max|g(x) - F_(s,theta)^* g(x)| / max|g(x)|`` on the grid."""
    jet = homotopy_jet(h, s, x, thetas, 1, engine)
    J = jet.parts[1][..., 2:]
    gx = metric.matrix(np.atleast_2d(x))[:, None]
    gy = metric.matrix(jet.value)
    pulled = np.einsum("...ai,...ab,...bj->...ij", J, gy, J)
    return np.abs(gx - pulled).max(axis=(-1, -2)) / np.abs(gx).max(axis=(-1, -2))


def verify_isometry_claim(
    metric: MetricField,
    h: Homotopy,
    points,
    rng: np.random.Generator,
    samples: int = 200,
    tolerance: float = 1e-8,
    engine: DerivativeEngine = DEFAULT_ENGINE,
) -> float:
    """Check ``F(s, theta, .)`` preserves ``g`` at random ``(s, theta, x)``; raise if not."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    idx = rng.integers(0, len(pts), samples)
    s = rng.uniform(0, 1, samples)
    th = rng.uniform(0, 2 * math.pi, samples)
    worst = 0.0
    for i in range(samples):
        worst = max(worst, float(metric_defect(metric, h, s[i], [th[i]], pts[idx[i]][None], engine).max()))
    if worst >= tolerance:
        raise NotAnIsometryError(f"{h.label}: metric defect {worst:.3e} >= {tolerance:.0e}")
    return worst


@dataclass
class AlphaCoefficients:
    alpha: np.ndarray
    residual: np.ndarray
    condition: np.ndarray = field(default=None)


def _solve_alpha(J: np.ndarray, n: int) -> AlphaCoefficients:
    Jx = J[..., 2:]
    J0 = J[..., 0]
    cond = np.linalg.cond(Jx)
    if not np.all(np.isfinite(cond)) or np.max(cond) > COND_LIMIT:
        raise JacobianSingularError(f"spatial Jacobian condition number {np.max(cond):.2e} above {COND_LIMIT:.0e}")
    alpha = np.linalg.solve(Jx, J0[..., None])[..., 0]
    resid = np.linalg.norm(J0 - np.einsum("...ij,...j->...i", Jx, alpha), axis=-1)
    return AlphaCoefficients(alpha, resid, cond)


def solve_alpha(h: Homotopy, point, engine: DerivativeEngine = DEFAULT_ENGINE) -> AlphaCoefficients:
    """``F_*(d/ds) = alpha^i F_*(d/dx^i)`` at ``point = (s, theta, x_1..x_n)`` (or a batch)."""
    p = np.asarray(point, dtype=float)
    jet = engine.jet(h.F.fn, p, 1)
    return _solve_alpha(jet.parts[1], h.dim)


def theta_derivative(values: np.ndarray, step: float, axis: int = -2) -> np.ndarray:
    """Richardson-refined central difference along a periodic grid axis."""
    d1 = (np.roll(values, -1, axis) - np.roll(values, 1, axis)) / (2 * step)
    d2 = (np.roll(values, -2, axis) - np.roll(values, 2, axis)) / (4 * step)
    return (4 * d1 - d2) / 3


def _k_on(metric, y, schedule, engine):
    n = y.shape[-1]
    k, kabs = k_field(metric, y.reshape(-1, n), schedule, engine, with_scale=True)
    return k.reshape(y.shape), kabs.reshape(y.shape)


def _minors(Jsp: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """``(-1)^a det[J_b, b != a]`` and Hadamard bounds, stacked over ``a``."""
    m = Jsp.shape[-1]
    dets, bounds = [], []
    norms = np.linalg.norm(Jsp, axis=-2)
    for a in range(m):
        cols = [b for b in range(m) if b != a]
        dets.append((-1) ** a * np.linalg.det(Jsp[..., cols]))
        bounds.append(np.prod(norms[..., cols], axis=-1))
    return np.stack(dets, axis=-1), np.stack(bounds, axis=-1)


@dataclass
class FormulaValue:
    value: np.ndarray
    scale: np.ndarray


def _split(point, n):
    p = np.atleast_2d(np.asarray(point, dtype=float))
    if p.shape[-1] != n + 1:
        raise ValueError(f"points on [0,1] x M need {n + 1} coordinates, got {p.shape[-1]}")
    return p[:, 0], p[:, 1:]


def d_pullback_formula(
    metric: MetricField,
    h: Homotopy,
    point,
    theta_count: int = 256,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
) -> FormulaValue:
    """Coefficient of ``d(F^* CS)`` on ``[0,1] x M`` via second mixed derivatives.

    ``point`` holds ``(s, x_1..x_n)`` (or a batch of them).
    """
    n = h.dim
    s, x = _split(point, n)
    th, w = theta_nodes(theta_count)
    jet = homotopy_jet(h, s, x, th, 2, engine)
    cols = spatial_columns(n)
    Jsp = jet.parts[1][..., cols]
    S = jet.parts[2][..., cols, 1]  # [B, T, nu, a]
    k, kabs = _k_on(metric, jet.value, schedule, engine)
    minors, bounds = _minors(Jsp)
    vals = np.einsum("btv,btva,bta->bt", k, S, minors)
    scale = np.einsum("btv,btva,bta->bt", kabs, np.abs(S), bounds)
    return FormulaValue(w * vals.sum(axis=1), w * scale.sum(axis=1))


def alpha_on_grid(h: Homotopy, s, x, thetas, engine: DerivativeEngine = DEFAULT_ENGINE, order: int = 1):
    jet = homotopy_jet(h, s, x, thetas, order, engine)
    return jet, _solve_alpha(jet.parts[1], h.dim)


def d_pullback_reduced(
    metric: MetricField,
    h: Homotopy,
    point,
    theta_count: int = 256,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
    alpha_mode: str = "fd",
    with_alpha: bool = False,
):
    """``int k(F) (J_x dalpha/dtheta) det J_x dtheta`` at ``(s, x)`` points.

    ``alpha_mode="fd"`` differentiates the pointwise solves along the theta
    grid (step ``2pi / theta_count``, Richardson-refined); ``"implicit"``
    differentiates ``J_x alpha = J_0`` using second derivatives of ``F``.
    """
    if h.regularity_claim == "none":
        raise ValueError(f"{h.label}: reduced formula needs a diffeomorphism homotopy")
    n = h.dim
    s, x = _split(point, n)
    th, w = theta_nodes(theta_count)
    jet, al = alpha_on_grid(h, s, x, th, engine, order=2 if alpha_mode == "implicit" else 1)
    J = jet.parts[1]
    Jx = J[..., 2:]
    if alpha_mode == "fd":
        dalpha = theta_derivative(al.alpha, 2 * math.pi / theta_count, axis=1)
    elif alpha_mode == "implicit":
        H = jet.parts[2]
        rhs = H[..., 0, 1] - np.einsum("...ij,...j->...i", H[..., 2:, 1], al.alpha)
        dalpha = np.linalg.solve(Jx, rhs[..., None])[..., 0]
    else:
        raise ValueError(f"unknown alpha_mode {alpha_mode!r}")
    k, kabs = _k_on(metric, jet.value, schedule, engine)
    v = np.einsum("btij,btj->bti", Jx, dalpha)
    det = np.linalg.det(Jx)
    had = np.prod(np.linalg.norm(Jx, axis=-2), axis=-1)
    vals = np.einsum("btv,btv->bt", k, v) * det
    scale = np.einsum("btv,btv->bt", kabs, np.abs(v)) * had
    out = FormulaValue(w * vals.sum(axis=1), w * scale.sum(axis=1))
    if with_alpha:
        return out, al, dalpha
    return out


def exterior_derivative_fd(coefficients: Callable, point, step: float = 5e-3) -> tuple[float, float, float]:
    """``sum_a (-1)^a d_a omega_a`` for a top-minus-one form by central differences.

    ``coefficients(points) -> (B, D)`` returns ``omega_a`` (the coefficient
    with slot ``a`` omitted).  Steps ``h`` and ``2h`` are Richardson-combined.
    Returns ``(value, estimated rounding error, max |omega|)``.
    """
    p = np.asarray(point, dtype=float)
    D = p.shape[-1]
    offs = []
    for a in range(D):
        for c in (step, -step, 2 * step, -2 * step):
            q = p.copy()
            q[a] += c
            offs.append(q)
    vals = np.asarray(coefficients(np.array(offs)), dtype=float).reshape(D, 4, D)
    total = 0.0
    for a in range(D):
        f = vals[a, :, a]
        d1 = (f[0] - f[1]) / (2 * step)
        d2 = (f[2] - f[3]) / (4 * step)
        total += (-1) ** a * (4 * d1 - d2) / 3
    size = float(np.abs(vals).max())
    return float(total), np.finfo(float).eps * size * D / step, size


@dataclass(frozen=True)
class PulledBackCoefficients:
    """``omega_a(s, x)`` of ``F^* CS`` as a function of points of ``[0,1] x M``."""

    metric: MetricField
    h: Homotopy
    theta_count: int
    engine: DerivativeEngine = DEFAULT_ENGINE
    schedule: Optional[ContractionSchedule] = None

    def __call__(self, points):
        n = self.h.dim
        s, x = points[:, 0], points[:, 1:]
        th, w = theta_nodes(self.theta_count)
        jet = homotopy_jet(self.h, s, x, th, 1, self.engine)
        J = jet.parts[1]
        k, _ = _k_on(self.metric, jet.value, self.schedule, self.engine)
        xi = J[..., 1]
        minors, _ = _minors(J[..., spatial_columns(n)])
        signs = np.array([(-1) ** a for a in range(n + 1)], dtype=float)
        vals = np.einsum("btv,btv,bta->ba", k, xi, minors * signs)
        return w * vals


def cartan_fd_oracle(
    metric: MetricField,
    h: Homotopy,
    point,
    fd_step: float = 5e-3,
    theta_count: int = 256,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
    rounding_rtol: float = 1e-6,
) -> float:
    """Exterior derivative of ``F^* CS`` at ``(s, x)`` by differencing its coefficients.

    The stencil is repeated at half the step; if the rounding error of the
    halved stencil exceeds ``rounding_rtol`` of the coefficient size,
    :class:`StepTooSmallError` is raised.
    """
    coeff = PulledBackCoefficients(metric, h, theta_count, engine, schedule)
    p = np.asarray(point, dtype=float)
    v1, r1, size = exterior_derivative_fd(coeff, p, fd_step)
    v2, r2, _ = exterior_derivative_fd(coeff, p, fd_step / 2)
    if r2 > rounding_rtol * max(size, np.finfo(float).tiny):
        raise StepTooSmallError(
            f"step {fd_step:.1e}: halving changed the result by {abs(v2 - v1):.3e} "
            f"with rounding estimate {r2:.3e}"
        )
    return v1


def _report(name, devs, tolerance, expected_fail=False, **details):
    devs = np.asarray(devs, dtype=float)
    worst = float(devs.max()) if devs.size else 0.0
    ok = worst < tolerance
    passed = (not ok) if expected_fail else ok
    return CheckReport(name, int(devs.size), worst, tolerance, passed, expected_fail, details)


def relative(dev, scale) -> np.ndarray:
    """``|dev| / scale`` with a zero-scale guard (falls back to ``|dev|``)."""
    dev = np.abs(np.asarray(dev, dtype=float))
    scale = np.asarray(scale, dtype=float)
    return np.where(scale > 0, dev / np.where(scale > 0, scale, 1.0), dev)


def isometry_vanishing_check(
    metric: MetricField,
    h: Homotopy,
    points,
    rng: Optional[np.random.Generator] = None,
    theta_count: int = 256,
    tolerance: float = 1e-6,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    expected_fail: bool = False,
    verify: bool = True,
) -> CheckReport:
    """``|d_pullback_reduced| / scale`` at points of ``[0,1] x M``.

    The isometry claim is verified first (never trusted) unless this is a
    negative control.  The report also records the periodicity mechanism
    ``max |int dalpha/dtheta dtheta|``.
    """
    rng = rng or np.random.default_rng(0)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    details = {"homotopy": h.label, "metric": metric.name}
    if verify:
        if h.regularity_claim != "isometry":
            raise NotAnIsometryError(f"{h.label} does not claim to be an isometry homotopy")
        details["metric_defect"] = verify_isometry_claim(metric, h, pts[:, 1:], rng, engine=engine)
    else:
        details["metric_defect"] = float(metric_defect(metric, h, pts[:, 0], [0.7], pts[:, 1:], engine).max())
    red, al, dalpha = d_pullback_reduced(metric, h, pts, theta_count, engine, with_alpha=True)
    devs = relative(red.value, red.scale)
    mech = np.abs(dalpha.sum(axis=1) * (2 * math.pi / theta_count)).max()
    details["alpha_period_integral"] = float(mech)
    details["max_alpha_residual"] = float(al.residual.max())
    name = "isometry_vanishing" + ("[negative control]" if expected_fail else "")
    return _report(f"{name}[{h.label}]", devs, tolerance, expected_fail, **details)


def stokes_check(
    metric: MetricField,
    h: Homotopy,
    grid,
    theta_count: int = 8,
    workers: int = 1,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    rng: Optional[np.random.Generator] = None,
    verify_points=None,
) -> CheckReport:
    """``|I(a_0) - I(a_1)|`` against the sum of both error estimates."""
    if h.regularity_claim != "isometry":
        raise NotAnIsometryError(f"{h.label} does not claim to be an isometry homotopy")
    details = {"homotopy": h.label, "metric": metric.name}
    if verify_points is not None:
        details["metric_defect"] = verify_isometry_claim(metric, h, verify_points, rng or np.random.default_rng(0), engine=engine)
    a0, a1 = h.endpoint_actions
    I0 = invariant_I(metric, a0, grid, theta_count, engine, workers=workers)
    I1 = invariant_I(metric, a1, grid, theta_count, engine, workers=workers)
    diff = abs(I0.value - I1.value)
    combined = I0.error_estimate + I1.error_estimate
    details.update(I0=I0.value, I1=I1.value, I0_error=I0.error_estimate, I1_error=I1.error_estimate)
    return CheckReport(f"stokes[{h.label}]", 2, diff, combined, diff <= combined, details=details)


def tilde_k_values(
    metric: MetricField,
    h: Homotopy,
    samples,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    schedule: Optional[ContractionSchedule] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """The alternating ``dK`` sum with ``xi = dF/dtheta`` and ``X_a = dF/dx^a`` at ``(s, theta, x)`` samples."""
    p = np.atleast_2d(np.asarray(samples, dtype=float))
    n = h.dim
    jet = engine.jet(h.F.fn, p, 1)
    J = jet.parts[1]
    asm = assembler_for(n, schedule)
    _, dk = k_gradient_field(metric, jet.value, schedule, engine)
    vals, scales = [], []
    for b in range(len(p)):
        dK = asm.expand(dk[b].T)
        frames = J[b][:, spatial_columns(n)].T
        v, sc = tilde_k(dK, J[b][:, 1], frames)
        vals.append(v)
        scales.append(sc)
    return np.array(vals), np.array(scales)


def tilde_k_vanishing_check(
    metric: MetricField,
    h: Homotopy,
    samples,
    tolerance: float = 1e-6,
    engine: DerivativeEngine = DEFAULT_ENGINE,
) -> CheckReport:
    vals, scales = tilde_k_values(metric, h, samples, engine)
    return _report(
        f"tilde_k_vanishing[{metric.name}/{h.label}]",
        relative(vals, scales),
        tolerance,
        metric=metric.name,
        max_abs=float(np.abs(vals).max()),
        max_term=float(scales.max()),
    )
