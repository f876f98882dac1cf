import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopcs import ops
from loopcs.curvature import (
    MetricField,
    christoffel,
    curvature_batch,
    curvature_invariants_check,
    riemann,
    verify_curvature_pullback,
)
from loopcs.errors import NotAnIsometryError, NotPositiveDefiniteError
from loopcs.geometry import Chart, DerivativeEngine
from loopcs.metrics import SphereMetric
from loopcs.zoo import make_berger_s5, make_round_sphere

S2_CHART = Chart(2, ("theta", "phi"), (None, 2 * math.pi), ((0.0, math.pi), (0.0, 2 * math.pi)), "S2")


def s2_metric(x):
    s = ops.sin(x[..., 0])
    one = ops.ones_like(s)
    zero = ops.zeros_like(s)
    return ops.stack([ops.stack([one, zero], axis=-1), ops.stack([zero, s * s], axis=-1)], axis=-2)


S2 = MetricField(S2_CHART, s2_metric, "S2")


def test_s2_christoffel_closed_form():
    G = christoffel(S2, [math.pi / 3, 0.4])
    assert G[0, 1, 1] == pytest.approx(-math.sqrt(3) / 4, abs=1e-14)
    assert G[1, 0, 1] == pytest.approx(1 / math.sqrt(3), abs=1e-14)
    assert G[1, 1, 0] == pytest.approx(1 / math.sqrt(3), abs=1e-14)
    assert abs(G[0, 0, 0]) + abs(G[1, 0, 0]) + abs(G[0, 0, 1]) + abs(G[1, 1, 1]) == 0.0


def test_s2_riemann_closed_form():
    th = 1.1
    R = riemann(S2, [th, 2.0]).riemann_lowered
    assert R[0, 1, 0, 1] == pytest.approx(-math.sin(th) ** 2, abs=1e-14)
    assert R[0, 1, 1, 0] == pytest.approx(math.sin(th) ** 2, abs=1e-14)


@pytest.mark.parametrize("dim", [3, 5])
def test_unit_sphere_ricci_is_n_minus_one_times_g(dim):
    e = make_round_sphere(dim)
    cb = curvature_batch(e.metric, e.sample(np.random.default_rng(3), 20))
    ric = np.einsum("bijki->bjk", cb.riemann)
    assert np.abs(ric - (dim - 1) * cb.g).max() < 1e-12


def test_berger_at_t_one_is_round():
    rng = np.random.default_rng(0)
    b, r = make_berger_s5(1.0), make_round_sphere(5)
    x = r.sample(rng, 30)
    assert np.array_equal(b.metric.matrix(x), r.metric.matrix(x))
    assert np.abs(curvature_batch(b.metric, x).riemann - curvature_batch(r.metric, x).riemann).max() < 1e-13


def test_berger_fd_matches_series():
    e = make_berger_s5(0.5)
    x = e.sample(np.random.default_rng(1), 5)
    series = curvature_batch(e.metric, x).riemann
    fd = curvature_batch(e.metric, x, DerivativeEngine("fd", 1e-4)).riemann
    assert np.abs(series - fd).max() / np.abs(series).max() < 1e-6


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 2.0))
def test_berger_symmetries_hold_for_any_t(t):
    e = make_berger_s5(t)
    rep = curvature_invariants_check(e.metric, e.sample(np.random.default_rng(2), 5))
    assert rep.passed, rep.details


def test_pullback_by_isometries():
    e = make_berger_s5(0.5)
    x = e.sample(np.random.default_rng(4), 30)
    for iso in e.isometries.values():
        assert verify_curvature_pullback(e.metric, iso, x).passed


def test_pullback_rejects_non_isometry():
    e = make_berger_s5(0.5)
    r = make_round_sphere(5)
    x = e.sample(np.random.default_rng(5), 10)
    with pytest.raises(NotAnIsometryError):
        # a generic SO(6) element preserves the round metric but not the Berger one
        verify_curvature_pullback(e.metric, r.isometries["orthogonal-element"], x)


def test_indefinite_metric_rejected():
    bad = MetricField(S2_CHART, lambda x: -s2_metric(x), "neg")
    with pytest.raises(NotPositiveDefiniteError):
        curvature_batch(bad, [[1.0, 1.0]])


def test_sphere_metric_scales_fibre_direction():
    t = 0.5
    e = make_berger_s5(t)
    x = e.sample(np.random.default_rng(6), 4)
    g = e.metric.matrix(x)
    fibre = np.array([0, 0, 1.0, 1.0, 1.0])
    round_norm = np.einsum("i,bij,j->b", fibre, SphereMetric(5).__call__(x), fibre)
    assert np.allclose(np.einsum("i,bij,j->b", fibre, g, fibre), t * t * round_norm, atol=1e-14)
    assert np.allclose(round_norm, 1.0)
