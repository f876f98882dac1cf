import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from loopcs.errors import CorruptHeaderError, HashMismatchError, TruncatedPayloadError
from loopcs.loops import invariant_I
from loopcs.quadrature import (
    GAUSS,
    MIDPOINT,
    PERIODIC,
    Axis,
    GridCache,
    QuadratureGrid,
    cache_path,
    cache_read,
    cache_write,
    grid_for_chart,
    integrate,
    parallel_map,
)
from loopcs.zoo import make_berger_s5, make_round_sphere

BERGER = make_berger_s5(0.5)


def ones(x):
    return np.ones(len(x))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=4), st.sampled_from([PERIODIC, MIDPOINT, GAUSS]))
def test_constant_integrates_to_volume(counts, rule):
    g = QuadratureGrid(tuple(Axis(c, -1.0, 2.0, rule) for c in counts))
    value, _ = integrate(ones, g, estimate=False)
    assert value == pytest.approx(3.0 ** len(counts), rel=1e-13)


def test_periodic_sin_integrates_to_zero():
    g = QuadratureGrid((Axis(7, 0, 2 * math.pi),))
    value, _ = integrate(lambda x: np.sin(x[:, 0]), g)
    assert abs(value) < 1e-15


def test_trapezoid_exact_for_trig_polynomial():
    g = QuadratureGrid((Axis(9, 0, 2 * math.pi),))
    value, _ = integrate(lambda x: np.cos(x[:, 0]) ** 2 + np.sin(4 * x[:, 0]), g, estimate=False)
    assert value == pytest.approx(math.pi, rel=1e-14)


def test_sphere_volume_refines():
    # volume of the round S^5 is pi^3
    e = make_round_sphere(5)
    dens = lambda x: np.sqrt(np.linalg.det(e.metric.matrix(x)))
    errs = []
    for n in (4, 8, 12):
        v, _ = integrate(dens, grid_for_chart(e.chart, (n, n, 1, 1, 1)), estimate=False)
        errs.append(abs(v - math.pi**3))
    assert errs[0] > errs[1] > errs[2]
    assert errs[2] < 1e-10


def test_error_estimate_tracks_error():
    g = QuadratureGrid((Axis(4, 0.0, 1.0, MIDPOINT),))
    value, est = integrate(lambda x: np.exp(x[:, 0]), g)
    assert est > abs(value - (math.e - 1)) > 0


def test_empty_grid():
    assert parallel_map(ones, np.zeros((0, 3)), 4).shape == (0,)


def test_workers_give_bit_identical_results():
    f = lambda x: np.sin(x).sum(axis=1) * np.exp(-x[:, 0])
    g = QuadratureGrid(tuple(Axis(9, 0.0, 1.0, GAUSS) for _ in range(3)))
    one = parallel_map(f, g, 1)
    many = parallel_map(f, g, 8)
    assert np.array_equal(one, many)
    assert integrate(f, g, 1) == integrate(f, g, 8)


def test_worker_exception_propagates():
    def boom(x):
        raise RuntimeError("bad node")

    with pytest.raises(RuntimeError):
        parallel_map(boom, QuadratureGrid((Axis(600, 0.0, 1.0),)), 2)


def write_sample(tmp_path, rank=1):
    data = np.random.default_rng(0).normal(size=(3, 2, 2, 2, 2) + (5,) * rank)
    c = GridCache.build(BERGER.metric, "sample", (3, 2, 2, 2, 2), data, rank)
    path = cache_write(cache_path(tmp_path, BERGER.metric, "sample", (3, 2, 2, 2, 2)), c)
    return path, data


def test_cache_round_trip(tmp_path):
    path, data = write_sample(tmp_path, rank=4)
    back = cache_read(path, BERGER.metric, "sample")
    assert np.array_equal(back.data, data)
    assert back.header["rank"] == 4 and back.header["node_counts"] == [3, 2, 2, 2, 2]


def test_cache_header_tamper_detected(tmp_path):
    path, _ = write_sample(tmp_path)
    raw = bytearray(path.read_bytes())
    i = raw.index(b'"label"')
    raw[i + 10] ^= 1
    path.write_bytes(bytes(raw))
    with pytest.raises(HashMismatchError):
        cache_read(path)


def test_cache_truncated_payload(tmp_path):
    path, _ = write_sample(tmp_path)
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(TruncatedPayloadError):
        cache_read(path)


def test_cache_bad_magic(tmp_path):
    path, _ = write_sample(tmp_path)
    path.write_bytes(b"NOTACACHE" + path.read_bytes()[9:])
    with pytest.raises(CorruptHeaderError):
        cache_read(path)


def test_cache_wrong_metric(tmp_path):
    path, _ = write_sample(tmp_path)
    with pytest.raises(HashMismatchError):
        cache_read(path, make_berger_s5(0.6).metric)
    with pytest.raises(HashMismatchError):
        cache_read(path, BERGER.metric, "other")


def test_cache_shape_checked():
    with pytest.raises(ValueError):
        GridCache.build(BERGER.metric, "x", (2, 2), np.zeros(7), 0)


def test_invariant_reload_is_bit_identical(tmp_path):
    g = grid_for_chart(BERGER.chart, (4, 4, 2, 2, 2))
    act = BERGER.actions["unitary-rotation"]
    first = invariant_I(BERGER.metric, act, g, 4, cache_dir=tmp_path)
    assert len(list(tmp_path.glob("*.grid"))) == 2
    again = invariant_I(BERGER.metric, act, g, 4, cache_dir=tmp_path)
    assert first.value == again.value and first.error_estimate == again.error_estimate
    plain = invariant_I(BERGER.metric, act, g, 4)
    assert abs(plain.value - first.value) < 1e-12 * abs(plain.value)
