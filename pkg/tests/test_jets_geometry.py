import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopcs import ops
from loopcs.errors import ChartMismatchError, DomainError, OrderExceededError
from loopcs.geometry import (
    DerivativeEngine,
    SmoothMap,
    circle_chart,
    compose_maps,
    interval_chart,
    partial_derivative,
    periodic_chart,
)
from loopcs.jets import Jet

FD = DerivativeEngine("fd", 1e-4)
finite = st.floats(-2.0, 2.0, allow_nan=False)


def sin_map():
    return SmoothMap(interval_chart(-10, 10), interval_chart(-10, 10), lambda x: ops.sin(x))


def test_sin_third_derivative_is_minus_cos():
    for x in (0.0, 0.3, 1.7):
        got = partial_derivative(sin_map(), [x], [0, 0, 0])
        assert abs(got[0] - (-math.cos(x))) < 1e-13


def test_fd_engine_agrees_with_series_on_sin():
    # step fd_step**(1/m) with O(h^4) truncation
    for order, tol in ((1, 1e-10), (2, 1e-7), (3, 1e-5)):
        series = partial_derivative(sin_map(), [0.7], [0] * order)
        fd = partial_derivative(sin_map(), [0.7], [0] * order, FD)
        assert abs(series[0] - fd[0]) < tol


@settings(max_examples=40, deadline=None)
@given(finite, finite)
def test_cubic_polynomial_derivatives_exact(x, y):
    # f = x^3 y + 2 x y^2
    def f(p):
        return ops.stack([p[..., 0] * p[..., 0] * p[..., 0] * p[..., 1] + 2 * p[..., 0] * p[..., 1] * p[..., 1]], axis=-1)

    jet = DerivativeEngine().jet(f, np.array([x, y]), 3)
    assert jet.parts[1][0, 0] == pytest.approx(3 * x * x * y + 2 * y * y, abs=1e-12)
    assert jet.parts[2][0, 0, 1] == pytest.approx(3 * x * x + 4 * y, abs=1e-12)
    assert jet.parts[3][0, 0, 0, 1] == pytest.approx(6 * x, abs=1e-12)
    assert jet.parts[3][0, 1, 1, 1] == 0.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-1.5, 1.5), st.floats(0.2, 2.0))
def test_chain_rule_through_composition(x, a):
    inner = SmoothMap(interval_chart(-10, 10), interval_chart(-10, 10), lambda p: a * p * p)
    outer = sin_map()
    comp = compose_maps(outer, inner)
    got = partial_derivative(comp, [x], [0])[0]
    assert got == pytest.approx(math.cos(a * x * x) * 2 * a * x, abs=1e-12)


def test_mixed_partials_are_symmetric():
    f = lambda p: ops.stack([ops.exp(p[..., 0]) * ops.sin(p[..., 1] * p[..., 2])], axis=-1)
    jet = DerivativeEngine().jet(f, np.array([0.1, 0.4, -0.9]), 3)
    t = jet.parts[3][0]
    for perm in [(1, 0, 2), (2, 1, 0), (0, 2, 1)]:
        assert np.allclose(t, np.transpose(t, perm), atol=1e-14)


def test_order_above_three_rejected():
    with pytest.raises(OrderExceededError):
        partial_derivative(sin_map(), [0.1], [0, 0, 0, 0])
    with pytest.raises(OrderExceededError):
        DerivativeEngine(max_order=2).jet(lambda x: x, np.zeros(2), 3)


def test_map_declared_order_enforced():
    m = SmoothMap(interval_chart(-1, 1), interval_chart(-1, 1), lambda x: x, derivative_order_supported=1)
    with pytest.raises(OrderExceededError):
        partial_derivative(m, [0.0], [0, 0])


def test_point_outside_domain_rejected():
    with pytest.raises(DomainError):
        partial_derivative(sin_map(), [11.0], [0])


def test_composition_chart_mismatch():
    a = SmoothMap(circle_chart(), periodic_chart(2), lambda x: x)
    with pytest.raises(ChartMismatchError):
        compose_maps(a, a)


def test_periodic_wrap():
    c = periodic_chart(2)
    w = c.wrap([[7.0, -1.0]])
    assert np.allclose(w, [[7.0 - 2 * math.pi, 2 * math.pi - 1.0]])
    assert c.contains([[100.0, -100.0]]).all()


def test_jet_seed_shapes():
    j = Jet.seed(np.zeros((4, 3)), 2)
    assert j.parts[1].shape == (4, 3, 3)
    assert j.parts[2].shape == (4, 3, 3, 3)
