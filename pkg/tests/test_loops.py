import math

import numpy as np
import pytest

from loopcs import ops
from loopcs.errors import GridTooCoarseError
from loopcs.geometry import DerivativeEngine, SmoothMap, circle_chart
from loopcs.ktensor import k_field
from loopcs.loops import (
    Loop,
    LoopTangentFrame,
    csw_eval,
    invariant_I,
    iterate_action,
    pullback_form_at,
    theta_nodes,
)
from loopcs.quadrature import grid_for_chart
from loopcs.zoo import make_berger_s5, make_flat_torus

BERGER = make_berger_s5(0.5)
FIBER = BERGER.actions["fiber-rotation"]


def berger_loop(x0, wobble=0.0):
    """A closed loop on the Berger sphere: fibre circle with a small polar wobble."""
    x0 = np.asarray(x0, dtype=float)

    def fn(th):
        t = th[..., 0]
        cols = [ops.constant_like(t, x0[0]) + wobble * ops.sin(t), ops.constant_like(t, x0[1]) + wobble * ops.cos(2 * t)]
        cols += [ops.constant_like(t, c) + t for c in x0[2:]]
        return ops.stack(cols, axis=-1)

    return Loop(SmoothMap(circle_chart(), BERGER.chart, fn))


def frame_fields(seed):
    rng = np.random.default_rng(seed)
    A, B = rng.normal(size=(2, 5, 5))
    return LoopTangentFrame(lambda th: A[None] + np.cos(th)[:, None, None] * B[None])


X0 = np.array([0.9, 0.7, 0.1, 0.2, 0.3])


def test_constant_loop_gives_zero():
    const = Loop(SmoothMap(circle_chart(), BERGER.chart, lambda th: ops.stack([ops.constant_like(th[..., 0], c) for c in X0], axis=-1)))
    assert csw_eval(BERGER.metric, const, frame_fields(0), 32) == 0.0


def test_loop_closes():
    assert berger_loop(X0, 0.1).closure_defect() < 1e-12


def test_swapping_frame_vectors_flips_sign():
    loop = berger_loop(X0, 0.1)
    f = frame_fields(1)
    swapped = LoopTangentFrame(lambda th: f(th)[:, [1, 0, 2, 3, 4]])
    a = csw_eval(BERGER.metric, loop, f, 64)
    b = csw_eval(BERGER.metric, loop, swapped, 64)
    assert a != 0.0
    assert a == pytest.approx(-b, rel=1e-13)


def test_repeated_frame_vector_gives_zero():
    f = frame_fields(2)
    rep = LoopTangentFrame(lambda th: f(th)[:, [0, 0, 2, 3, 4]])
    assert abs(csw_eval(BERGER.metric, berger_loop(X0, 0.1), rep, 32)) < 1e-12


def test_theta_offset_invariance():
    loop = berger_loop(X0, 0.1)
    f = frame_fields(3)
    a = csw_eval(BERGER.metric, loop, f, 128)
    b = csw_eval(BERGER.metric, loop, f, 128, offset=0.37)
    assert abs(a - b) < 1e-12 * abs(a)


def test_coarse_grid_flagged():
    with pytest.raises(GridTooCoarseError):
        csw_eval(BERGER.metric, berger_loop(X0, 0.4), frame_fields(4), 4, rtol=1e-12)


def test_fibre_rotation_closed_form():
    # the action is a chart translation along (0, 0, 1, 1, 1) and K is invariant under it
    x = BERGER.sample(np.random.default_rng(5), 8)
    k = k_field(BERGER.metric, x)
    oracle = 2 * math.pi * k[:, 2:].sum(axis=1)
    got = pullback_form_at(BERGER.metric, FIBER, x, 16)
    assert np.abs(got - oracle).max() < 1e-10 * np.abs(oracle).max()


def test_pullback_matches_loop_evaluation():
    x = BERGER.sample(np.random.default_rng(6), 1)[0]
    act = BERGER.actions["unitary-rotation"]
    loop = act.loop_at(x)

    def frame(th):
        inp = np.column_stack([th, np.broadcast_to(x, (len(th), 5))])
        J = DerivativeEngine().jet(act.a.fn, inp, 1).parts[1]
        return np.swapaxes(J[:, :, 1:], 1, 2)

    a = csw_eval(BERGER.metric, loop, LoopTangentFrame(frame), 64)
    b = pullback_form_at(BERGER.metric, act, x, 64)
    assert abs(a - b) < 1e-12 * abs(b)


def test_iterate_is_definitional():
    x = BERGER.sample(np.random.default_rng(7), 10)
    a3 = iterate_action(BERGER.actions["unitary-rotation"], 3)
    for th in (0.0, 0.4, 2.5):
        assert np.array_equal(a3(th, x), BERGER.actions["unitary-rotation"](3 * th, x))
    assert iterate_action(FIBER, 1) is FIBER
    with pytest.raises(ValueError):
        iterate_action(FIBER, 0)


def test_actions_are_circle_actions():
    x = BERGER.sample(np.random.default_rng(8), 20)
    for act in BERGER.actions.values():
        assert act.check(x).passed


def test_invariant_self_convergence():
    # integrand depends on the polar angles only, so the phi and theta rules are exact
    coarse = invariant_I(BERGER.metric, FIBER, grid_for_chart(BERGER.chart, (12, 12, 2, 2, 2)), 2)
    fine = invariant_I(BERGER.metric, FIBER, grid_for_chart(BERGER.chart, (16, 16, 2, 2, 2)), 2)
    assert fine.error_estimate < 1e-9 * abs(fine.value)
    assert abs(fine.value - coarse.value) < 1e-9 * abs(fine.value)
    assert fine.nonzero


def test_flat_invariant_is_zero():
    e = make_flat_torus(5)
    r = invariant_I(e.metric, e.actions["translation"], grid_for_chart(e.chart, 2), 2)
    assert r.value == 0.0


def test_theta_nodes():
    th, w = theta_nodes(8)
    assert len(th) == 8 and w * 8 == pytest.approx(2 * math.pi)
    with pytest.raises(ValueError):
        theta_nodes(0)
