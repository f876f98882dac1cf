"""Christoffel symbols and Riemann curvature from a metric field.

Sign convention (used everywhere in the package)::

    R(d_i, d_j) d_k = nabla_i nabla_j d_k - nabla_j nabla_i d_k = R_ijk^l d_l
    R_ijk^l = d_i G^l_jk - d_j G^l_ik + G^m_jk G^l_im - G^m_ik G^l_jm
    R_ijkl  = R_ijk^m g_ml

With this choice the unit sphere has ``R_ijkl = g_jk g_il - g_ik g_jl``.
Array layout: ``christoffel[..., i, j, k] = G^i_jk`` and
``riemann[..., i, j, k, l] = R_ijk^l``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import NotAnIsometryError, NotPositiveDefiniteError, SingularMetricError
from .geometry import DEFAULT_ENGINE, Chart, DerivativeEngine, PointInChart, SmoothMap
from .jets import Jet, einsum, inv
from .report import CheckReport


@dataclass
class MetricField:
    chart: Chart
    g: Callable
    name: str
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        return self.g(x)

    def param_hash(self) -> str:
        blob = json.dumps({"name": self.name, "params": self.params}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()

    def matrix(self, x) -> np.ndarray:
        return np.asarray(self.g(np.asarray(x, dtype=float)))


@dataclass
class CurvatureSample:
    point: PointInChart
    christoffel: np.ndarray
    riemann_mixed: np.ndarray
    riemann_lowered: np.ndarray


@dataclass
class CurvatureBatch:
    """Curvature data at a batch of points (leading axis)."""

    points: np.ndarray
    g: np.ndarray
    ginv: np.ndarray
    christoffel: np.ndarray
    riemann: np.ndarray
    riemann_lowered: np.ndarray
    d_riemann: Optional[np.ndarray] = None  # [..., i, j, k, l, mu] = d_mu R_ijk^l


def check_positive_definite(g: np.ndarray, points=None) -> None:
    try:
        np.linalg.cholesky(g)
    except np.linalg.LinAlgError as exc:
        eig = np.linalg.eigvalsh(g)
        bad = np.nonzero(eig.min(axis=-1) <= 0)[0] if eig.ndim > 1 else []
        where = points[bad[:3]] if points is not None and len(bad) else "?"
        raise NotPositiveDefiniteError(
            f"metric not positive definite (min eigenvalue {eig.min():.3e}) at {where}"
        ) from exc


def _christoffel_jet(G: Jet) -> Jet:
    """Christoffel jet one order below the metric jet ``G``."""
    lo = G.order - 1
    dG = G.gradient()  # [..., i, j, l] = d_l g_ij
    t = dG.transpose(_with_batch(G, (0, 2, 1))) + dG.transpose(_with_batch(G, (1, 0, 2))) - dG.transpose(
        _with_batch(G, (2, 0, 1))
    )
    ginv = inv(G.truncate(lo))
    return 0.5 * einsum("...il,...ljk->...ijk", ginv, t)


def _with_batch(j: Jet, tail: tuple[int, ...]) -> tuple[int, ...]:
    nb = j.ndim - 2
    return tuple(range(nb)) + tuple(nb + t for t in tail)


def _riemann_from_christoffel(gam: Jet) -> Jet:
    lo = gam.order - 1
    dgam = gam.gradient()  # [..., l, j, k, i] = d_i G^l_jk
    nb = gam.ndim - 3
    b = tuple(range(nb))
    t1 = dgam.transpose(b + tuple(nb + t for t in (3, 1, 2, 0)))
    g = gam.truncate(lo)
    t3 = einsum("...mjk,...lim->...ijkl", g, g)
    return t1 - t1.swapaxes(nb, nb + 1) + t3 - t3.swapaxes(nb, nb + 1)


def curvature_batch(
    metric: MetricField,
    points,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    with_derivative: bool = False,
    check_pd: bool = True,
) -> CurvatureBatch:
    """Metric, Christoffel and Riemann data at ``points`` of shape ``(B, n)``."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    r = 1 if with_derivative else 0
    G = engine.jet(metric.g, x, r + 2)
    g0 = G.value
    if check_pd:
        check_positive_definite(g0, x)
    cond = np.linalg.cond(g0)
    if not np.all(np.isfinite(cond)) or np.max(cond) > 1e14:
        raise SingularMetricError(f"metric nearly singular (condition number {np.max(cond):.2e})")
    gam = _christoffel_jet(G)
    R = _riemann_from_christoffel(gam)
    Rlow = np.einsum("...ijkm,...ml->...ijkl", R.value, g0)
    return CurvatureBatch(
        points=x,
        g=g0,
        ginv=np.linalg.inv(g0),
        christoffel=gam.value,
        riemann=R.value,
        riemann_lowered=Rlow,
        d_riemann=R.parts[1] if with_derivative else None,
    )


def _as_coords(metric: MetricField, point) -> tuple[PointInChart, np.ndarray]:
    if isinstance(point, PointInChart):
        return point, point.coords
    p = PointInChart(metric.chart, np.asarray(point, dtype=float))
    return p, p.coords


def christoffel(metric: MetricField, point, engine: DerivativeEngine = DEFAULT_ENGINE) -> np.ndarray:
    _, x = _as_coords(metric, point)
    G = engine.jet(metric.g, x[None], 1)
    check_positive_definite(G.value)
    return _christoffel_jet(G).value[0]


def riemann(metric: MetricField, point, engine: DerivativeEngine = DEFAULT_ENGINE) -> CurvatureSample:
    p, x = _as_coords(metric, point)
    cb = curvature_batch(metric, x[None], engine)
    return CurvatureSample(p, cb.christoffel[0], cb.riemann[0], cb.riemann_lowered[0])


def isometry_defect(metric: MetricField, isometry: SmoothMap, points, engine: DerivativeEngine = DEFAULT_ENGINE) -> np.ndarray:
    """Per-point ``max|g(x) - (F^* g)(x)| / max|g(x)|``."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    Fj = engine.jet(isometry.fn, x, 1)
    J = Fj.parts[1]
    gx = metric.matrix(x)
    gy = metric.matrix(Fj.value)
    pulled = np.einsum("...ai,...ab,...bj->...ij", J, gy, J)
    return np.abs(gx - pulled).max(axis=(-1, -2)) / np.abs(gx).max(axis=(-1, -2))


def verify_curvature_pullback(
    metric: MetricField,
    isometry: SmoothMap,
    points,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    tolerance: float = 1e-8,
    isometry_tolerance: float = 1e-8,
) -> CheckReport:
    """Compare ``R_ijkl(x)`` with the pullback of ``R`` at ``F(x)`` by the Jacobian of ``F``."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    defect = isometry_defect(metric, isometry, x, engine)
    if defect.max() >= isometry_tolerance:
        raise NotAnIsometryError(
            f"{isometry.name} is not an isometry of {metric.name}: metric defect {defect.max():.3e}"
        )
    Fj = engine.jet(isometry.fn, x, 1)
    J = Fj.parts[1]
    here = curvature_batch(metric, x, engine).riemann_lowered
    there = curvature_batch(metric, Fj.value, engine).riemann_lowered
    pulled = np.einsum("...abcd,...ai,...bj,...ck,...dl->...ijkl", there, J, J, J, J)
    dev = np.abs(here - pulled).max(axis=(1, 2, 3, 4))
    norm = np.abs(here).max(axis=(1, 2, 3, 4))
    rel = np.where(norm > 0, dev / np.where(norm > 0, norm, 1.0), dev)
    worst = float(rel.max())
    return CheckReport(
        "curvature_pullback",
        len(x),
        worst,
        tolerance,
        worst < tolerance,
        details={"metric": metric.name, "map": isometry.name, "max_metric_defect": float(defect.max())},
    )


def curvature_invariants_check(metric: MetricField, points, engine: DerivativeEngine = DEFAULT_ENGINE, tolerance: float = 1e-8) -> CheckReport:
    """Christoffel symmetry, Riemann antisymmetries and first Bianchi identity."""
    cb = curvature_batch(metric, points, engine)
    R = cb.riemann_lowered
    G = cb.christoffel
    scale = np.maximum(np.abs(R).max(axis=(1, 2, 3, 4)), 1.0)
    gscale = np.maximum(np.abs(G).max(axis=(1, 2, 3)), 1.0)
    devs = {
        "christoffel_symmetry": np.abs(G - np.swapaxes(G, -1, -2)).max(axis=(1, 2, 3)) / gscale,
        "antisym_ij": np.abs(R + np.swapaxes(R, 1, 2)).max(axis=(1, 2, 3, 4)) / scale,
        "antisym_kl": np.abs(R + np.swapaxes(R, 3, 4)).max(axis=(1, 2, 3, 4)) / scale,
        "bianchi": np.abs(R + np.transpose(R, (0, 2, 3, 1, 4)) + np.transpose(R, (0, 3, 1, 2, 4))).max(axis=(1, 2, 3, 4))
        / scale,
    }
    worst = max(float(v.max()) for v in devs.values())
    return CheckReport(
        "curvature_invariants",
        len(cb.points),
        worst,
        tolerance,
        worst < tolerance,
        details={"metric": metric.name, **{k: float(v.max()) for k, v in devs.items()}},
    )
