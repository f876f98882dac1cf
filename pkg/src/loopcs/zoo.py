"""Concrete metrics with their isometries, circle actions and homotopies.

Entries are built once and never mutated.  Sphere entries act through the
ambient space: a map is ``chart o (flow in R^{2m}) o embed``, so every
registered map is smooth with exact series derivatives.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import ops
from .ambient import (
    AmbientFlow,
    Boost,
    Rotor,
    SphereMapFn,
    Step,
    min_radius,
    random_orthogonal,
    random_unitary,
    realify,
    sphere_chart,
)
from .curvature import MetricField, isometry_defect
from .errors import ConfigError, DeckNotIsometryError
from .geometry import Chart, SmoothMap, circle_chart, interval_chart, periodic_chart, product_chart
from .homotopy import Homotopy
from .loops import CircleAction, periodic_difference, trivial_action
from .metrics import FlatMetric, SphereMetric

TWO_PI = 2 * math.pi
SAFE = 0.25  # polar margin for random sample points on spheres


@dataclass
class ZooEntry:
    name: str
    metric: MetricField
    isometries: dict = field(default_factory=dict)
    actions: dict = field(default_factory=dict)
    homotopies: dict = field(default_factory=dict)
    notes: str = ""
    sphere: bool = False

    @property
    def chart(self) -> Chart:
        return self.metric.chart

    @property
    def dim(self) -> int:
        return self.chart.dim

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Random chart points, kept away from the excluded set on spheres."""
        lo = np.array([b[0] for b in self.chart.domain_box], dtype=float)
        hi = np.array([b[1] for b in self.chart.domain_box], dtype=float)
        if self.sphere:
            polar = np.array([p is None for p in self.chart.periods])
            lo = np.where(polar, lo + SAFE, lo)
            hi = np.where(polar, hi - SAFE, hi)
        return lo + (hi - lo) * rng.uniform(size=(count, self.dim))

    def distance_to_excluded(self, points) -> np.ndarray:
        if not self.sphere:
            return np.full(np.shape(points)[:-1], np.inf)
        return min_radius(points, self.dim)


# -- flat torus ---------------------------------------------------------------


@dataclass(frozen=True)
class Translation:
    """``(theta, x) -> x + theta w``; integer ``w`` closes at ``2pi``."""

    w: tuple

    def __call__(self, X):
        theta = X[..., 0]
        return ops.stack([X[..., i + 1] + self.w[i] * theta for i in range(len(self.w))], axis=-1)


@dataclass(frozen=True)
class Shift:
    c: tuple

    def __call__(self, X):
        return ops.stack([X[..., i] + self.c[i] for i in range(len(self.c))], axis=-1)


@dataclass(frozen=True)
class QuarterTurn:
    """``(x1, x2) -> (-x2, x1)``; preserves the square lattice."""

    def __call__(self, X):
        cols = [-X[..., 1], X[..., 0]] + [X[..., i] for i in range(2, X.shape[-1])]
        return ops.stack(cols, axis=-1)


@dataclass(frozen=True)
class TorusLoopPath:
    """``x + theta w + sin(pi s) c``: a loop of translation actions (isometries for every s)."""

    w: tuple
    c: tuple

    def __call__(self, X):
        s, theta = X[..., 0], X[..., 1]
        bump = ops.sin(math.pi * s)
        return ops.stack([X[..., i + 2] + self.w[i] * theta + self.c[i] * bump for i in range(len(self.w))], axis=-1)


@dataclass(frozen=True)
class TorusShear:
    """``x + theta w + eps s(1-s) sin(x_2) e_1``: a diffeomorphism path, not an isometry."""

    w: tuple
    eps: float = 0.3

    def __call__(self, X):
        s, theta = X[..., 0], X[..., 1]
        cols = []
        for i in range(len(self.w)):
            c = X[..., i + 2] + self.w[i] * theta
            if i == 0:
                c = c + self.eps * s * (1.0 - s) * ops.sin(X[..., 3] + theta)
            cols.append(c)
        return ops.stack(cols, axis=-1)


def _action(chart: Chart, fn: Callable, label: str) -> CircleAction:
    return CircleAction(SmoothMap(product_chart(circle_chart(), chart), chart, fn, name=label), label)


def _homotopy(chart: Chart, fn: Callable, ends, claim: str, label: str) -> Homotopy:
    dom = product_chart(interval_chart(), circle_chart(), chart)
    return Homotopy(SmoothMap(dom, chart, fn, name=label), ends, claim, label)


def make_flat_torus(dim: int = 5) -> ZooEntry:
    if dim % 2 == 0:
        raise ValueError("the flat torus entry needs odd dimension")
    chart = periodic_chart(dim)
    metric = MetricField(chart, FlatMetric(dim), f"flat{dim}", {"dim": dim})
    w1 = tuple(1 if i == 0 else 0 for i in range(dim))
    w = tuple(range(1, dim + 1))
    c = tuple(0.3 * (i + 1) for i in range(dim))
    actions = {
        "trivial": trivial_action(chart),
        "translation": _action(chart, Translation(w1), "translation"),
        "translation-w": _action(chart, Translation(w), "translation-w"),
    }
    isometries = {
        "shift": SmoothMap(chart, chart, Shift(c), name="shift"),
        "quarter-turn": SmoothMap(chart, chart, QuarterTurn(), name="quarter-turn"),
    }
    tr = actions["translation-w"]
    homotopies = {
        "translation-loop": _homotopy(chart, TorusLoopPath(w, c), (tr, tr), "isometry", "translation-loop"),
        "shear": _homotopy(chart, TorusShear(w), (tr, tr), "diffeomorphism", "shear"),
    }
    return ZooEntry(f"flat{dim}", metric, isometries, actions, homotopies, "flat torus R^n / (2 pi Z)^n")


# -- spheres ------------------------------------------------------------------


def _flow(*steps: Step) -> AmbientFlow:
    return AmbientFlow(tuple(steps))


def _sphere_action(dim: int, flow: AmbientFlow, label: str) -> CircleAction:
    return _action(sphere_chart(dim), SphereMapFn(flow, dim, "action"), label)


def _sphere_homotopy(dim, flow, ends, claim, label) -> Homotopy:
    return _homotopy(sphere_chart(dim), SphereMapFn(flow, dim, "homotopy"), ends, claim, label)


def _fixed(dim: int, flow: AmbientFlow, label: str) -> SmoothMap:
    ch = sphere_chart(dim)
    return SmoothMap(ch, ch, SphereMapFn(flow, dim, "fixed"), name=label)


def _conj_action(dim, outer: AmbientFlow, inner: AmbientFlow, s_value: float, label: str) -> CircleAction:
    """Endpoint action ``C inner C^-1`` with the s-dependent steps of ``outer`` frozen at ``s_value``."""
    frozen = AmbientFlow(tuple(Step(st.op, "const", s_value) if st.var == "s" else st for st in outer.steps))
    return _sphere_action(dim, frozen.conjugate(inner), label)


def _boost_axis(size: int) -> np.ndarray:
    e = np.zeros(size)
    e[0], e[3] = 0.6, 0.8
    return e


def _common_sphere_parts(dim: int, t: float, seed: int):
    m = (dim + 1) // 2
    size = 2 * m
    rng = np.random.default_rng(seed)
    eye = np.eye(size)
    fiber = _flow(Step(Rotor(eye, (1.0,) * m), "theta"))
    rot1 = _flow(Step(Rotor(eye, (1.0,) + (0.0,) * (m - 1)), "theta"))
    torus = _flow(Step(Rotor(eye, tuple(float(j + 1) for j in range(m))), "theta"))
    U = realify(random_unitary(m, rng))
    urot = _flow(Step(Rotor(U, tuple(float(j + 1) for j in range(m))), "theta"))
    # unitary path exp(s A), A = i W diag(omega) W^*
    W = realify(random_unitary(m, rng))
    upath = _flow(Step(Rotor(W, tuple(0.9 * (j + 1) for j in range(m))), "s"))
    # closed unitary loop exp(2 pi s B) with integer spectrum
    V = realify(random_unitary(m, rng))
    uloop = _flow(Step(Rotor(V, tuple(TWO_PI * q for q in (1.0, -1.0, 2.0)[:m])), "s"))
    boost = _flow(Step(Boost(_boost_axis(size), 0.6), "s"))
    actions = {
        "trivial": trivial_action(sphere_chart(dim)),
        "fiber-rotation": _sphere_action(dim, fiber, "fiber-rotation"),
        "rotate-z1": _sphere_action(dim, rot1, "rotate-z1"),
        "torus-rotation": _sphere_action(dim, torus, "torus-rotation"),
        "unitary-rotation": _sphere_action(dim, urot, "unitary-rotation"),
    }
    isometries = {
        "identity": _fixed(dim, _flow(), "identity"),
        "unitary-element": _fixed(dim, _flow(Step(Rotor(U, (0.7,) * m), "const", 1.0)), "unitary-element"),
        "torus-element": _fixed(dim, _flow(Step(Rotor(eye, (0.4, 1.1, -0.5)[:m]), "const", 1.0)), "torus-element"),
    }
    homotopies = {
        "unitary-path": _sphere_homotopy(
            dim,
            upath.conjugate(rot1),
            (actions["rotate-z1"], _conj_action(dim, upath, rot1, 1.0, "rotate-z1@unitary")),
            "isometry",
            "unitary-path",
        ),
        "fiber-loop": _sphere_homotopy(
            dim,
            AmbientFlow(uloop.steps + fiber.steps),
            (actions["fiber-rotation"], actions["fiber-rotation"]),
            "isometry",
            "fiber-loop",
        ),
        "conformal": make_conformal_homotopy(dim, boost, rot1, actions["rotate-z1"]),
    }
    return rng, actions, isometries, homotopies, size


def make_conformal_homotopy(dim: int, boost: AmbientFlow, inner: AmbientFlow, start: CircleAction) -> Homotopy:
    """``B_s R_theta B_s^-1`` with a Moebius boost ``B_s``: diffeomorphisms, not isometries."""
    return _sphere_homotopy(
        dim,
        boost.conjugate(inner),
        (start, _conj_action(dim, boost, inner, 1.0, f"{start.label}@boost")),
        "diffeomorphism",
        "conformal",
    )


def make_round_sphere(dim: int = 5, seed: int = 7) -> ZooEntry:
    if dim not in (3, 5):
        raise ValueError("round sphere entries exist for dim 3 and 5")
    metric = MetricField(sphere_chart(dim), SphereMetric(dim, 1.0), f"round{dim}", {"dim": dim})
    rng, actions, isometries, homotopies, size = _common_sphere_parts(dim, 1.0, seed)
    m = size // 2
    O = random_orthogonal(size, rng)
    actions["orthogonal-rotation"] = _sphere_action(dim, _flow(Step(Rotor(O, tuple(float(j + 1) for j in range(m))), "theta")), "orthogonal-rotation")
    isometries["orthogonal-element"] = _fixed(dim, _flow(Step(Rotor(random_orthogonal(size, rng), (0.8, -1.3, 2.1)[:m]), "const", 1.0)), "orthogonal-element")
    A = random_orthogonal(size, rng)
    opath = _flow(Step(Rotor(A, (1.1, -0.7, 0.5)[:m]), "s"))
    rot1 = _flow(Step(Rotor(np.eye(size), (1.0,) + (0.0,) * (m - 1)), "theta"))
    homotopies["orthogonal-path"] = _sphere_homotopy(
        dim,
        opath.conjugate(rot1),
        (actions["rotate-z1"], _conj_action(dim, opath, rot1, 1.0, "rotate-z1@orthogonal")),
        "isometry",
        "orthogonal-path",
    )
    twist = _flow(Step(Boost(_boost_axis(size), 0.5), "s"), Step(Rotor(A, (0.6, 0.4, -0.3)[:m]), "s"))
    homotopies["generic"] = _sphere_homotopy(
        dim,
        twist.conjugate(rot1),
        (actions["rotate-z1"], _conj_action(dim, twist, rot1, 1.0, "rotate-z1@generic")),
        "diffeomorphism",
        "generic",
    )
    return ZooEntry(f"round{dim}", metric, isometries, actions, homotopies, f"unit S^{dim} in the toric chart", sphere=True)


def make_berger_s5(t: float = 0.5, seed: int = 7) -> ZooEntry:
    """S^5 with the Hopf fibre length scaled by ``t``; unitary maps stay isometries."""
    if not t > 0:
        raise ValueError(f"Berger parameter must be positive, got {t}")
    metric = MetricField(sphere_chart(5), SphereMetric(5, float(t)), f"berger-t{t:g}", {"t": float(t)})
    rng, actions, isometries, homotopies, size = _common_sphere_parts(5, t, seed)
    rot1 = _flow(Step(Rotor(np.eye(size), (1.0, 0.0, 0.0)), "theta"))
    A = random_orthogonal(size, rng)
    twist = _flow(Step(Boost(_boost_axis(size), 0.5), "s"), Step(Rotor(A, (0.6, 0.4, -0.3)), "s"))
    homotopies["generic"] = _sphere_homotopy(
        5,
        twist.conjugate(rot1),
        (actions["rotate-z1"], _conj_action(5, twist, rot1, 1.0, "rotate-z1@generic")),
        "diffeomorphism",
        "generic",
    )
    return ZooEntry(
        metric.name,
        metric,
        isometries,
        actions,
        homotopies,
        "round S^5 with the Hopf fibre rescaled by t (stand-in for a fibred metric over CP^2)",
        sphere=True,
    )


# -- lens spaces --------------------------------------------------------------


@dataclass
class LensDescriptor:
    """``S^5 / Z_p`` with the generator acting by fibre rotation through ``2 pi / p``."""

    p: int
    deck_action: SmoothMap
    fundamental_domain: tuple
    base: ZooEntry
    lifted_actions: dict = field(default_factory=dict)

    def deck_power_defect(self, points) -> float:
        x = np.atleast_2d(np.asarray(points, dtype=float))
        y = x
        for _ in range(self.p):
            y = self.deck_action.eval(y)
        return float(np.abs(periodic_difference(self.base.chart, y, x)).max())

    def in_fundamental_domain(self, points) -> np.ndarray:
        x = self.base.chart.wrap(points)
        lo, hi = self.fundamental_domain[2]
        return (x[..., 2] >= lo) & (x[..., 2] < hi)

    def fundamental_grid(self, counts):
        """Sub-grid of the full-sphere grid lying in the fundamental domain.

        The ``phi1`` count must be divisible by ``p`` so the two rules share nodes.
        """
        from .quadrature import grid_for_chart

        counts = tuple(counts)
        if counts[2] % self.p:
            raise ValueError(f"phi1 node count {counts[2]} not divisible by p={self.p}")
        c = counts[:2] + (counts[2] // self.p,) + counts[3:]
        return grid_for_chart(self.base.chart, c, box=self.fundamental_domain)


def make_lens(p: int, base: ZooEntry, rng: Optional[np.random.Generator] = None) -> LensDescriptor:
    if int(p) != p or p < 2:
        raise ValueError(f"lens order must be an integer >= 2, got {p}")
    p = int(p)
    eye = np.eye(6)
    deck = _fixed(5, _flow(Step(Rotor(eye, (1.0, 1.0, 1.0)), "const", TWO_PI / p)), f"deck-{p}")
    rng = rng or np.random.default_rng(p)
    pts = base.sample(rng, 20)
    defect = isometry_defect(base.metric, deck, pts)
    if defect.max() >= 1e-8:
        raise DeckNotIsometryError(f"fibre shift by 2pi/{p} is not an isometry of {base.name} ({defect.max():.2e})")
    box = list(base.chart.domain_box)
    box[2] = (0.0, TWO_PI / p)
    lifted = {k: base.actions[k] for k in ("fiber-rotation", "unitary-rotation", "rotate-z1") if k in base.actions}
    return LensDescriptor(p, deck, tuple(box), base, lifted)


# -- name lookup --------------------------------------------------------------

_SPEC = re.compile(r"^(?P<kind>[a-z]+)(?::(?P<args>.*))?$")


def parse_params(args: Optional[str]) -> dict:
    out = {}
    if not args:
        return out
    for item in args.split(","):
        if "=" not in item:
            raise ConfigError(f"expected key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = float(v)
    return out


def zoo_entry(spec: str) -> ZooEntry:
    """``flat:dim=5``, ``round:dim=5``, ``berger:t=0.5``."""
    m = _SPEC.match(spec.strip())
    if not m:
        raise ConfigError(f"bad metric spec {spec!r}")
    kind, params = m.group("kind"), parse_params(m.group("args"))
    try:
        if kind == "flat":
            return make_flat_torus(int(params.pop("dim", 5)))
        if kind == "round":
            return make_round_sphere(int(params.pop("dim", 5)))
        if kind == "berger":
            return make_berger_s5(params.pop("t", 0.5))
    finally:
        if params:
            raise ConfigError(f"unknown parameters {sorted(params)} for metric {kind!r}")
    raise ConfigError(f"unknown metric kind {kind!r}")
