"""Acceptance criteria, each at its stated tolerance; one PASS/FAIL line per criterion.

Round S^5 has K identically zero, so criteria that are stated on it are also
run on the Berger metric t = 0.5, where every quantity is nonzero.
"""

import os
import time

import numpy as np
import pytest

from loopcs import suite
from loopcs.cli import bench_fill, bench_single_k, main
from loopcs.homotopy import stokes_check
from loopcs.quadrature import grid_for_chart
from loopcs.report import CheckReport
from loopcs.zoo import make_berger_s5, make_flat_torus, make_lens, make_round_sphere

ROUND = make_round_sphere(5)
BERGER = make_berger_s5(0.5)
FLAT = make_flat_torus(5)
T = 256


def rng(seed):
    return np.random.default_rng(seed)


def test_criterion_01_flat_null(criterion):
    t0 = time.perf_counter()
    rep = suite.check_null_flat(FLAT, rng(1), 1000, 1e-12)
    elapsed = time.perf_counter() - t0
    timing = CheckReport("runtime_s", 1, elapsed, 60.0, elapsed < 60.0)
    assert criterion(1, "flat torus null suite", [rep, timing])


def test_criterion_02_k_antisymmetry(criterion):
    reps = suite.check_k_antisymmetry(ROUND, rng(2), 100, 1e-9, 1e-12)
    reps += [
        CheckReport(f"{r.name}[berger]", r.samples, r.max_deviation, r.tolerance, r.passed)
        for r in suite.check_k_antisymmetry(BERGER, rng(2), 100, 1e-9, 1e-12)
    ]
    assert criterion(2, "K antisymmetry and naive oracle", reps)


def test_criterion_03_curvature_pullback(criterion):
    reps = suite.check_isometry_pullbacks(ROUND, rng(3), 200, 1e-8)
    assert criterion(3, "curvature pullback by SO(6) isometries", reps)


def test_criterion_04_tilde_k(criterion):
    reps = [
        suite.check_tilde_k(ROUND, ROUND.homotopies["generic"], rng(4), 50, 1e-6),
        suite.check_tilde_k(BERGER, BERGER.homotopies["generic"], rng(4), 50, 1e-6),
    ]
    assert criterion(4, "alternating dK sum vanishes", reps)


def test_criterion_05_reduction(criterion):
    reps = [suite.check_reduction(BERGER, BERGER.homotopies["generic"], rng(5), 50, T, 1e-5)]
    assert criterion(5, "second-derivative formula equals alpha-reduced formula", reps)


def test_criterion_06_cartan_oracle(criterion):
    reps = [suite.check_cartan(BERGER, BERGER.homotopies["generic"], rng(6), 20, T, 5e-3, 1e-4)]
    assert criterion(6, "formula against finite-difference exterior derivative", reps)


def test_criterion_07_isometry_vanishing(criterion):
    reps = [
        suite.check_vanishing(ROUND, ROUND.homotopies["orthogonal-path"], rng(7), 50, T, 1e-6),
        suite.check_vanishing(BERGER, BERGER.homotopies["fiber-loop"], rng(7), 50, T, 1e-6),
        suite.check_vanishing(BERGER, BERGER.homotopies["conformal"], rng(7), 50, T, 1e-6, negative=True),
    ]
    assert reps[2].max_deviation > 1e-5
    assert criterion(7, "isometry homotopies vanish, conformal control does not", reps)


def test_criterion_08_iterate_scaling(criterion):
    grid = grid_for_chart(BERGER.chart, (6, 6, 4, 4, 4))
    reps = suite.check_scaling(BERGER, "unitary-rotation", [2, 3], rng(8), 20, 16, grid, 1e-10, 1e-8)
    for r in list(reps):
        dev = r.details["integral_ratio_deviation"]
        reps.append(CheckReport(f"integral_ratio[n={r.details['n']}]", 2, dev, 1e-8, dev < 1e-8))
    assert criterion(8, "iterate scaling, pointwise and integral", reps)


def test_criterion_09_lens_covering(criterion):
    reps = []
    for p in (2, 3):
        lens = make_lens(p, BERGER)
        for name in ("fiber-rotation", "unitary-rotation"):
            reps.append(suite.check_covering(lens, name, (6, 6, 6, 6, 6), 4, 1e-8))
    assert criterion(9, "lens covering scaling on the Berger family", reps)


def test_criterion_10_stokes(criterion):
    reps = [
        stokes_check(BERGER.metric, BERGER.homotopies["unitary-path"], grid_for_chart(BERGER.chart, (6, 6, 4, 4, 4)), 4,
                     rng=rng(10), verify_points=BERGER.sample(rng(10), 20)),
        stokes_check(ROUND.metric, ROUND.homotopies["orthogonal-path"], grid_for_chart(ROUND.chart, (4, 4, 4, 4, 4)), 4,
                     rng=rng(10), verify_points=ROUND.sample(rng(10), 20)),
    ]
    assert criterion(10, "Stokes: isometry-homotopic actions give equal integrals", reps)


def test_criterion_11a_single_k_eval(criterion):
    k = bench_single_k(BERGER)
    rep = CheckReport("single_k_seconds", 200, k["single_k_median_s"], 1e-3, k["single_k_median_s"] <= 1e-3)
    assert criterion(11, "one dim-5 K evaluation within 1 ms", [rep])


@pytest.mark.xfail(
    (os.cpu_count() or 1) < 8,
    reason="needs 8 physical cores; this machine has fewer, see the decisions log",
    strict=True,
)
def test_criterion_11b_parallel_speedup(criterion):
    fill = bench_fill(BERGER, "fiber-rotation", (8, 8, 4, 4, 4), 4, 8)
    reps = [
        CheckReport("speedup_at_8_workers", fill["nodes"], fill["speedup"], 5.0, fill["speedup"] >= 5.0,
                    details={"cpu_count": fill["cpu_count"]}),
        CheckReport("bit_identical", fill["nodes"], 0.0 if fill["bit_identical"] else 1.0, 0.5, fill["bit_identical"]),
    ]
    assert criterion(11, f"parallel grid fill speedup (cpu_count={fill['cpu_count']})", reps)


def test_criterion_11c_fast_preset_runtime(criterion, tmp_path, capsys):
    t0 = time.perf_counter()
    rc = main(["verify-lemmas", "--metric", "berger:t=0.5", "--grid", "fast", "--out", str(tmp_path / "r.json")])
    elapsed = time.perf_counter() - t0
    capsys.readouterr()
    reps = [
        CheckReport("exit_status", 1, float(rc), 0.5, rc == 0),
        CheckReport("runtime_s", 1, elapsed, 600.0, elapsed <= 600.0),
    ]
    assert criterion(11, "fast-preset verify-lemmas within 10 minutes", reps)
