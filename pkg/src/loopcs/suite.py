"""Named verification checks shared by the command line and the acceptance tests."""

from __future__ import annotations

import math
import time
from typing import Optional

import numpy as np

from .curvature import curvature_batch, curvature_invariants_check, verify_curvature_pullback
from .geometry import DEFAULT_ENGINE, DerivativeEngine
from .homotopy import (
    Homotopy,
    cartan_fd_oracle,
    d_pullback_formula,
    d_pullback_reduced,
    homotopy_jet,
    isometry_vanishing_check,
    relative,
    stokes_check,
    tilde_k_vanishing_check,
)
from .ktensor import assembler_for, naive_k_component
from .loops import invariant_I, iterate_action, pullback_form_at, scaling_check
from .report import CheckReport
from .zoo import LensDescriptor, ZooEntry

IMAGE_MARGIN = 0.05

DEFAULT_TOLERANCES = {
    "curvature": 1e-8,
    "pullback": 1e-8,
    "antisymmetry": 1e-9,
    "oracle": 1e-12,
    "tilde_k": 1e-6,
    "reduction": 1e-5,
    "cartan": 1e-4,
    "vanishing": 1e-6,
    "scaling_pointwise": 1e-10,
    "scaling_integral": 1e-8,
    "covering": 1e-8,
    "null": 1e-12,
}


def sample_homotopy_points(entry: ZooEntry, h: Homotopy, rng, count: int, theta_count: int = 32, engine=DEFAULT_ENGINE) -> np.ndarray:
    """Random ``(s, x)`` whose whole theta-orbit under ``F(s, ., .)`` stays off the excluded set."""
    out = []
    th = 2 * math.pi * np.arange(theta_count) / theta_count
    while len(out) < count:
        x = entry.sample(rng, 2 * count)
        s = rng.uniform(0, 1, 2 * count)
        y = homotopy_jet(h, s, x, th, 0, engine).value
        ok = entry.distance_to_excluded(y).min(axis=1) > IMAGE_MARGIN
        ok &= entry.distance_to_excluded(x) > IMAGE_MARGIN
        out.extend(np.column_stack([s, x])[ok])
    return np.array(out[:count])


def frame_samples(entry: ZooEntry, h: Homotopy, rng, count: int) -> np.ndarray:
    """Random ``(s, theta, x)`` for the alternating-derivative check."""
    p = sample_homotopy_points(entry, h, rng, count)
    theta = rng.uniform(0, 2 * math.pi, count)
    return np.column_stack([p[:, 0], theta, p[:, 1:]])


def check_curvature_invariants(entry: ZooEntry, rng, count: int = 50, tol: float = 1e-8, engine=DEFAULT_ENGINE) -> CheckReport:
    return curvature_invariants_check(entry.metric, entry.sample(rng, count), engine, tol)


def check_round_curvature(entry: ZooEntry, rng, count: int = 50, tol: float = 1e-8, engine=DEFAULT_ENGINE) -> CheckReport:
    """Unit sphere oracle ``R_ijkl = g_jk g_il - g_ik g_jl`` (the package's sign convention)."""
    cb = curvature_batch(entry.metric, entry.sample(rng, count), engine)
    g = cb.g
    oracle = np.einsum("...jk,...il->...ijkl", g, g) - np.einsum("...ik,...jl->...ijkl", g, g)
    dev = np.abs(cb.riemann_lowered - oracle).max(axis=(1, 2, 3, 4)) / np.abs(oracle).max(axis=(1, 2, 3, 4))
    worst = float(dev.max())
    return CheckReport("constant_curvature_oracle", count, worst, tol, worst < tol, details={"metric": entry.name})


def check_isometry_pullbacks(entry: ZooEntry, rng, count: int = 200, tol: float = 1e-8, engine=DEFAULT_ENGINE) -> list[CheckReport]:
    out = []
    for name, iso in entry.isometries.items():
        r = verify_curvature_pullback(entry.metric, iso, entry.sample(rng, count), engine, tol)
        r.name = f"curvature_pullback[{name}]"
        out.append(r)
    return out


def check_k_antisymmetry(entry: ZooEntry, rng, count: int = 100, tol: float = 1e-9, oracle_tol: float = 1e-12, oracle_points: int = 5, engine=DEFAULT_ENGINE) -> list[CheckReport]:
    """Adjacent lambda swaps flip sign; optimized assembly equals the loop-based oracle."""
    asm = assembler_for(entry.dim)
    pts = entry.sample(rng, count)
    R = curvature_batch(entry.metric, pts, engine).riemann
    n = entry.dim
    swaps = []
    for b in range(count):
        lam = rng.permutation(n)
        nu = int(rng.integers(n))
        base = asm.component(R[b], nu, lam)
        scale = float(np.abs(asm.terms(R[b], lam)[:, nu]).sum())
        for i in range(n - 1):
            sw = lam.copy()
            sw[i], sw[i + 1] = sw[i + 1], sw[i]
            swaps.append(float(relative(base + asm.component(R[b], nu, sw), scale)))
        rep = lam.copy()
        rep[1] = rep[0]
        swaps.append(float(relative(asm.component(R[b], nu, rep), scale)))
    worst = max(swaps)
    r1 = CheckReport("k_antisymmetry", count, worst, tol, worst < tol, details={"metric": entry.name})
    devs = []
    for b in range(min(oracle_points, count)):
        lam = rng.permutation(n)
        nu = int(rng.integers(n))
        ref, ref_abs = naive_k_component(R[b], nu, lam, asm.schedule)
        fast = float(asm.compressed(R[b])[nu]) * _levi_sign(lam)
        direct = float(asm.component(R[b], nu, lam))
        for v in (fast, direct):
            devs.append(float(relative(v - ref, ref_abs)))
    worst = max(devs)
    r2 = CheckReport("k_naive_oracle", len(devs), worst, oracle_tol, worst < oracle_tol, details={"metric": entry.name})
    return [r1, r2]


def _levi_sign(lam) -> float:
    lam = list(lam)
    if len(set(lam)) < len(lam):
        return 0.0
    inv = sum(1 for i in range(len(lam)) for j in range(i + 1, len(lam)) if lam[i] > lam[j])
    return -1.0 if inv % 2 else 1.0


def check_tilde_k(entry: ZooEntry, h: Homotopy, rng, count: int = 50, tol: float = 1e-6, engine=DEFAULT_ENGINE) -> CheckReport:
    return tilde_k_vanishing_check(entry.metric, h, frame_samples(entry, h, rng, count), tol, engine)


def check_reduction(entry: ZooEntry, h: Homotopy, rng, count: int = 50, theta_count: int = 256, tol: float = 1e-5, engine=DEFAULT_ENGINE) -> CheckReport:
    """Second-derivative formula against the alpha-reduced formula."""
    pts = sample_homotopy_points(entry, h, rng, count, engine=engine)
    full = d_pullback_formula(entry.metric, h, pts, theta_count, engine)
    red = d_pullback_reduced(entry.metric, h, pts, theta_count, engine)
    scale = np.maximum(full.scale, red.scale)
    devs = relative(full.value - red.value, scale)
    worst = float(devs.max())
    return CheckReport(
        f"reduction_agreement[{h.label}]",
        count,
        worst,
        tol,
        worst < tol,
        details={"metric": entry.name, "max_abs_value": float(np.abs(full.value).max())},
    )


def check_cartan(entry: ZooEntry, h: Homotopy, rng, count: int = 20, theta_count: int = 256, fd_step: float = 5e-3, tol: float = 1e-4, engine=DEFAULT_ENGINE) -> CheckReport:
    """Formula against central differences of the pulled-back coefficients.

    Relative to ``|formula|``, floored at ``1e-6`` of the integrand scale so a
    value that vanishes identically is compared against the stencil noise.
    """
    pts = sample_homotopy_points(entry, h, rng, count, engine=engine)
    full = d_pullback_formula(entry.metric, h, pts, theta_count, engine)
    devs = []
    for i, p in enumerate(pts):
        fd = cartan_fd_oracle(entry.metric, h, p, fd_step, theta_count, engine)
        devs.append(float(relative(full.value[i] - fd, max(abs(full.value[i]), 1e-6 * full.scale[i]))))
    worst = max(devs)
    return CheckReport(f"cartan_oracle[{h.label}]", count, worst, tol, worst < tol, details={"metric": entry.name, "fd_step": fd_step})


def check_vanishing(entry: ZooEntry, h: Homotopy, rng, count: int = 50, theta_count: int = 256, tol: float = 1e-6, negative: bool = False, engine=DEFAULT_ENGINE) -> CheckReport:
    pts = sample_homotopy_points(entry, h, rng, count, engine=engine)
    if negative:
        return isometry_vanishing_check(entry.metric, h, pts, rng, theta_count, 10 * tol, engine, expected_fail=True, verify=False)
    return isometry_vanishing_check(entry.metric, h, pts, rng, theta_count, tol, engine)


def check_negative_isometry(entry: ZooEntry, h: Homotopy, rng, count: int = 200, threshold: float = 1e-3, engine=DEFAULT_ENGINE) -> CheckReport:
    """The control homotopy must visibly fail the metric-pullback test."""
    from .homotopy import metric_defect

    x = entry.sample(rng, count)
    s = rng.uniform(0.2, 0.8, count)
    th = rng.uniform(0, 2 * math.pi, count)
    defect = max(float(metric_defect(entry.metric, h, s[i], [th[i]], x[i][None], engine).max()) for i in range(count))
    return CheckReport(
        f"isometry_claim[negative control][{h.label}]",
        count,
        defect,
        threshold,
        defect > threshold,
        expected_fail=True,
        details={"metric": entry.name},
    )


def check_scaling(entry: ZooEntry, action_name: str, ns, rng, count: int = 20, theta_count: int = 16, grid=None, tol: float = 1e-10, itol: float = 1e-8, workers: int = 1, engine=DEFAULT_ENGINE) -> list[CheckReport]:
    action = entry.actions[action_name]
    pts = entry.sample(rng, count)
    return [
        scaling_check(entry.metric, action, n, pts, theta_count, engine, tol, grid=grid, integral_tolerance=itol, workers=workers)
        for n in ns
    ]


def check_covering(lens: LensDescriptor, action_name: str, counts, theta_count: int = 4, tol: float = 1e-8, workers: int = 1, engine=DEFAULT_ENGINE) -> CheckReport:
    """``I_{S^5}(b) = p * I_{fundamental domain}(b)`` for an action commuting with the deck group."""
    from .quadrature import grid_for_chart

    base = lens.base
    action = lens.lifted_actions[action_name]
    full_grid = grid_for_chart(base.chart, counts)
    up = invariant_I(base.metric, action, full_grid, theta_count, engine, workers=workers)
    down = invariant_I(base.metric, action, lens.fundamental_grid(counts), theta_count, engine, workers=workers)
    dev = abs(up.value - lens.p * down.value) / max(abs(up.value), np.finfo(float).tiny)
    return CheckReport(
        f"lens_covering[p={lens.p},{action_name}]",
        2,
        dev,
        tol,
        dev < tol,
        details={
            "I_sphere": up.value,
            "I_fundamental": down.value,
            "I_sphere_error": up.error_estimate,
            "deck_power_defect": lens.deck_power_defect(base.sample(np.random.default_rng(0), 20)),
        },
    )


def check_null_flat(entry: ZooEntry, rng, count: int = 1000, tol: float = 1e-12, engine=DEFAULT_ENGINE) -> CheckReport:
    """Curvature, K and pulled-back integrals on a flat torus."""
    from .ktensor import k_field

    t0 = time.perf_counter()
    pts = entry.sample(rng, count)
    R = curvature_batch(entry.metric, pts, engine).riemann
    k = k_field(entry.metric, pts, engine=engine)
    worst_r, worst_k = float(np.abs(R).max()), float(np.abs(k).max())
    ints = []
    for name, act in entry.actions.items():
        ints.append(float(np.abs(pullback_form_at(entry.metric, act, pts[:50], 16, engine)).max()))
    for h in entry.homotopies.values():
        hp = np.column_stack([rng.uniform(0, 1, 10), pts[:10]])
        ints.append(float(np.abs(d_pullback_formula(entry.metric, h, hp, 16, engine).value).max()))
    worst = max([worst_r, worst_k] + ints)
    return CheckReport(
        "flat_null",
        count,
        worst,
        tol,
        worst < tol,
        details={"max_R": worst_r, "max_K": worst_k, "max_integral": max(ints), "seconds": time.perf_counter() - t0},
    )
