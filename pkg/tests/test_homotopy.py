import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopcs import ops
from loopcs.errors import JacobianSingularError, NotAnIsometryError
from loopcs.geometry import SmoothMap, circle_chart, interval_chart, product_chart
from loopcs.homotopy import (
    Homotopy,
    d_pullback_formula,
    d_pullback_reduced,
    exterior_derivative_fd,
    isometry_vanishing_check,
    solve_alpha,
    stokes_check,
    verify_isometry_claim,
)
from loopcs.suite import sample_homotopy_points
from loopcs.zoo import make_berger_s5, make_flat_torus

BERGER = make_berger_s5(0.5)
TORUS = make_flat_torus(3)


def torus_homotopy(fn, claim="diffeomorphism"):
    chart = TORUS.chart
    dom = product_chart(interval_chart(), circle_chart(), chart)
    a = TORUS.actions["translation-w"]
    return Homotopy(SmoothMap(dom, chart, fn), (a, a), claim, "test")


def test_alpha_zero_when_homotopy_ignores_s():
    act = BERGER.actions["unitary-rotation"]
    h = Homotopy(
        SmoothMap(product_chart(interval_chart(), circle_chart(), BERGER.chart), BERGER.chart, lambda X: act.a.fn(X[..., 1:])),
        (act, act),
        "isometry",
        "static",
    )
    x = BERGER.sample(np.random.default_rng(0), 4)
    pts = np.column_stack([np.full(4, 0.3), np.full(4, 1.1), x])
    assert np.abs(solve_alpha(h, pts).alpha).max() == 0.0


def test_alpha_for_translation_flow():
    v = np.array([0.5, -1.0, 2.0])

    def F(X):
        return ops.stack([X[..., 2 + i] + (i + 1) * X[..., 1] + v[i] * X[..., 0] for i in range(3)], axis=-1)

    al = solve_alpha(torus_homotopy(F), np.array([[0.4, 1.0, 0.1, 0.2, 0.3]]))
    assert np.abs(al.alpha[0] - v).max() < 1e-15


def test_alpha_residual_small_on_generic_homotopy():
    h = BERGER.homotopies["generic"]
    pts = sample_homotopy_points(BERGER, h, np.random.default_rng(1), 10)
    full = np.column_stack([pts[:, 0], np.linspace(0, 6, 10), pts[:, 1:]])
    al = solve_alpha(h, full)
    assert al.residual.max() < 1e-9


def test_singular_jacobian_raises():
    def F(X):
        return ops.stack([X[..., 1] * 0.0 + X[..., 2] * 0.0 for _ in range(3)], axis=-1)

    with pytest.raises(JacobianSingularError):
        solve_alpha(torus_homotopy(F), np.array([[0.4, 1.0, 0.1, 0.2, 0.3]]))


def test_exterior_derivative_of_x_dy_is_one():
    # 1-form x dy on the plane: omega_0 (dx slot omitted) = x, omega_1 = 0
    coeff = lambda p: np.column_stack([p[:, 0], np.zeros(len(p))])
    value, rounding, _ = exterior_derivative_fd(coeff, np.array([0.3, -0.8]), 1e-2)
    assert value == pytest.approx(1.0, abs=1e-12)
    assert rounding < 1e-10


def test_exterior_derivative_alternating_signs():
    # omega_0 = 2 y sin x, omega_1 = -y^2 cos x: d_x omega_0 - d_y omega_1 = 4 y cos x
    coeff = lambda p: np.column_stack([2 * np.sin(p[:, 0]) * p[:, 1], -np.cos(p[:, 0]) * p[:, 1] ** 2])
    value, _, _ = exterior_derivative_fd(coeff, np.array([0.5, 0.7]), 1e-2)
    assert value == pytest.approx(4 * 0.7 * math.cos(0.5), rel=1e-8)


@settings(max_examples=5, deadline=None)
@given(st.integers(0, 10_000))
def test_formula_equals_reduced_pointwise(seed):
    h = BERGER.homotopies["generic"]
    pts = sample_homotopy_points(BERGER, h, np.random.default_rng(seed), 2)
    full = d_pullback_formula(BERGER.metric, h, pts, 128)
    red = d_pullback_reduced(BERGER.metric, h, pts, 128)
    assert np.all(np.abs(full.value - red.value) < 1e-5 * np.maximum(full.scale, red.scale))


def test_alpha_modes_agree():
    h = BERGER.homotopies["generic"]
    pts = sample_homotopy_points(BERGER, h, np.random.default_rng(2), 3)
    a = d_pullback_reduced(BERGER.metric, h, pts, 128, alpha_mode="fd")
    b = d_pullback_reduced(BERGER.metric, h, pts, 128, alpha_mode="implicit")
    assert np.abs(a.value - b.value).max() < 1e-6 * a.scale.max()


def test_isometry_homotopy_vanishes_on_berger():
    h = BERGER.homotopies["fiber-loop"]
    rng = np.random.default_rng(3)
    pts = sample_homotopy_points(BERGER, h, rng, 10)
    assert isometry_vanishing_check(BERGER.metric, h, pts, rng, 128).passed


def test_conformal_control_is_not_an_isometry():
    h = BERGER.homotopies["conformal"]
    with pytest.raises(NotAnIsometryError):
        verify_isometry_claim(BERGER.metric, h, BERGER.sample(np.random.default_rng(4), 20), np.random.default_rng(4))


def test_conformal_control_does_not_vanish():
    h = BERGER.homotopies["conformal"]
    rng = np.random.default_rng(5)
    pts = sample_homotopy_points(BERGER, h, rng, 10)
    rep = isometry_vanishing_check(BERGER.metric, h, pts, rng, 128, 1e-5, expected_fail=True, verify=False)
    assert rep.passed and rep.max_deviation > 1e-5


def test_endpoints_match_actions():
    x = BERGER.sample(np.random.default_rng(6), 10)
    for h in BERGER.homotopies.values():
        assert h.endpoint_defect(x, [0.0, 1.3, 4.0]) < 1e-12


def test_regularity_claims_enforced():
    with pytest.raises(ValueError):
        torus_homotopy(lambda X: X[..., 2:], claim="smooth")
    h = torus_homotopy(lambda X: X[..., 2:], claim="none")
    with pytest.raises(ValueError):
        d_pullback_reduced(TORUS.metric, h, np.zeros((1, 4)))
    with pytest.raises(NotAnIsometryError):
        stokes_check(BERGER.metric, BERGER.homotopies["generic"], None)


def test_flat_homotopies_give_zero():
    h = TORUS.homotopies["shear"]
    pts = np.column_stack([np.linspace(0.1, 0.9, 4), TORUS.sample(np.random.default_rng(7), 4)])
    assert np.abs(d_pullback_formula(TORUS.metric, h, pts, 16).value).max() == 0.0
