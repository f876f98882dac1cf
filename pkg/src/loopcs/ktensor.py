"""Signed-permutation assembly of the K-tensor and its derivatives.

For a manifold of dimension ``n = 2k - 1``::

    K[nu, l_1..l_n] = sum_sigma sgn(sigma) * prod_{f=1..k} R[slots of factor f]

where each curvature factor takes some permuted lambda indices, possibly
``nu``, and dummy indices closing a trace cycle.  The lambda block is a full
top-degree alternating slot, so ``K[nu, l] = eps(l) * K[nu, 0..n-1]``; the
assembler computes only the ``n`` compressed values ``k[nu]`` and expands
through the Levi-Civita symbol on demand.
"""

from __future__ import annotations

import itertools
import math
import string
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .curvature import CurvatureBatch, MetricField, curvature_batch
from .errors import DimensionMismatchError, ScheduleError
from .geometry import DEFAULT_ENGINE, DerivativeEngine, PointInChart


def permutation_parity(perm: Sequence[int]) -> int:
    """+1 for even, -1 for odd, by inversion count."""
    inv = sum(1 for i in range(len(perm)) for j in range(i + 1, len(perm)) if perm[i] > perm[j])
    return -1 if inv % 2 else 1


@dataclass(frozen=True)
class ContractionSchedule:
    """Curvature factors of the K product, one 4-slot descriptor per factor.

    Slot labels: ``"L<i>"`` is lambda at permuted position ``i`` (1-based),
    ``"nu"`` the free form index, ``"e<j>"`` a dummy index.  Slots 0..2 are
    lower indices of ``R_abc^d``; slot 3 is the upper one.
    """

    factors: tuple[tuple[str, str, str, str], ...]
    name: str = "custom"

    @property
    def k(self) -> int:
        return len(self.factors)

    @property
    def dim(self) -> int:
        return 2 * self.k - 1

    def validate(self) -> None:
        n = self.dim
        lam: list[int] = []
        lower: dict[str, int] = {}
        upper: dict[str, int] = {}
        nu = 0
        for f in self.factors:
            if len(f) != 4:
                raise ScheduleError(f"factor {f} must have 4 slots")
            for pos, s in enumerate(f):
                if s.startswith("L"):
                    if pos == 3:
                        raise ScheduleError("lambda indices must occupy lower slots")
                    lam.append(int(s[1:]))
                elif s == "nu":
                    if pos == 3:
                        raise ScheduleError("nu must occupy a lower slot")
                    nu += 1
                elif s.startswith("e"):
                    book = upper if pos == 3 else lower
                    book[s] = book.get(s, 0) + 1
                else:
                    raise ScheduleError(f"unknown slot label {s!r}")
        if sorted(lam) != list(range(1, n + 1)):
            raise ScheduleError(f"lambda slots must be filled exactly once each, got {sorted(lam)}")
        if nu != 1:
            raise ScheduleError(f"nu must appear exactly once, got {nu}")
        for e in set(lower) | set(upper):
            if lower.get(e, 0) != 1 or upper.get(e, 0) != 1:
                raise ScheduleError(
                    f"dummy {e} must appear once up and once down "
                    f"(down {lower.get(e, 0)}, up {upper.get(e, 0)})"
                )


def default_schedule(k: int) -> ContractionSchedule:
    """Closed trace cycle: ``nu -> e2 -> e3 -> ... -> e_k -> e1`` with ``e1`` fed back into factor 1."""
    if k < 2:
        raise ScheduleError("k must be >= 2")
    factors = [("L1", "e1", "nu", "e2")]
    for j in range(2, k + 1):
        nxt = f"e{j + 1}" if j < k else "e1"
        factors.append((f"L{2 * j - 2}", f"L{2 * j - 1}", f"e{j}", nxt))
    return ContractionSchedule(tuple(factors), f"cycle-k{k}")


def printed_order_schedule() -> ContractionSchedule:
    """The k = 3 wiring in the order the factors are usually printed.

    Same cycle as :func:`default_schedule` with the two lambda pairs
    exchanged, which is an even relabelling.
    """
    return ContractionSchedule(
        (("L1", "e1", "nu", "e2"), ("L2", "L3", "e3", "e1"), ("L4", "L5", "e2", "e3")),
        "printed-k3",
    )


class KAssembler:
    """Vectorised K assembly with a precomputed permutation/sign table."""

    def __init__(self, schedule: ContractionSchedule):
        schedule.validate()
        self.schedule = schedule
        self.n = schedule.dim
        perms = list(itertools.permutations(range(self.n)))
        self.perms = np.array(perms, dtype=np.intp)
        self.signs = np.array([permutation_parity(p) for p in perms], dtype=float)
        # A factor holding two lambdas in its antisymmetric slot pair (0, 1)
        # gives equal terms for sigma and sigma composed with the swap, so only
        # perms ordered within each such pair are kept, with doubled weight.
        pairs = [
            (int(f[0][1:]) - 1, int(f[1][1:]) - 1)
            for f in schedule.factors
            if f[0].startswith("L") and f[1].startswith("L")
        ]
        keep = [i for i, p in enumerate(perms) if all(p[a] < p[b] for a, b in pairs)]
        self.reduced_perms = self.perms[keep]
        self.reduced_weights = self.signs[keep] * 2.0 ** len(pairs)
        letters = iter(string.ascii_lowercase.replace("z", "").replace("p", "").replace("v", "").replace("m", ""))
        dummy = {}
        self._plans = []
        for f in schedule.factors:
            lam_slots = [i for i, s in enumerate(f) if s.startswith("L")]
            lam_pos = [int(f[i][1:]) - 1 for i in lam_slots]
            rest = [i for i in range(4) if i not in lam_slots]
            subs = ""
            for i in rest:
                s = f[i]
                if s == "nu":
                    subs += "v"
                else:
                    if s not in dummy:
                        dummy[s] = next(letters)
                    subs += dummy[s]
            self._plans.append((lam_slots, lam_pos, rest, subs))
        self._levi = None
        self._paths: dict = {}

    def _gather(self, R: np.ndarray, plan, lam: np.ndarray, extra: int = 0, perms=None) -> np.ndarray:
        lam_slots, lam_pos, rest, _ = plan
        perms = self.perms if perms is None else perms
        nb = R.ndim - 4 - extra
        order = list(range(nb)) + [nb + i for i in lam_slots] + [nb + i for i in rest]
        order += list(range(nb + 4, R.ndim))
        Rt = np.transpose(R, order)
        idx = tuple(lam[perms[:, p]] for p in lam_pos)
        return Rt[(slice(None),) * nb + idx]

    def _contract(self, spec: str, ops: list) -> np.ndarray:
        key = (spec,) + tuple(o.shape for o in ops)
        path = self._paths.get(key)
        if path is None:
            path = np.einsum_path(spec, *ops, optimize="optimal")[0]
            self._paths[key] = path
        return np.einsum(spec, *ops, optimize=path)

    def _spec(self, deriv_factor: Optional[int] = None) -> str:
        ins = []
        for f, plan in enumerate(self._plans):
            s = "zp" + plan[3]
            if f == deriv_factor:
                s += "m"
            ins.append(s)
        out = "zpvm" if deriv_factor is not None else "zpv"
        return ",".join(ins) + "->" + out

    def terms(self, R: np.ndarray, lam: Optional[Sequence[int]] = None, reduced: bool = False) -> np.ndarray:
        """Per-permutation terms ``[batch, perm, nu]`` (unsigned).

        With ``reduced`` only the pair-ordered permutations are used; pair
        them with :attr:`reduced_weights`.
        """
        R = np.asarray(R, dtype=float)
        if R.shape[-4:] != (self.n,) * 4:
            raise DimensionMismatchError(f"curvature has shape {R.shape[-4:]}, schedule needs dim {self.n}")
        lam = np.arange(self.n) if lam is None else np.asarray(lam, dtype=np.intp)
        perms = self.reduced_perms if reduced else self.perms
        Rb = R.reshape((-1,) + R.shape[-4:])
        ops = [self._gather(Rb, plan, lam, perms=perms) for plan in self._plans]
        out = self._contract(self._spec(), ops)
        return out.reshape(R.shape[:-4] + out.shape[1:])

    def compressed(self, R: np.ndarray, with_scale: bool = False):
        """``k[..., nu] = K[nu, 0, 1, ..., n-1]`` (and the sum of |terms| if requested)."""
        t = self.terms(R, reduced=True)
        k = np.einsum("...pv,p->...v", t, self.reduced_weights)
        if with_scale:
            return k, np.einsum("...pv,p->...v", np.abs(t), np.abs(self.reduced_weights))
        return k

    def component(self, R: np.ndarray, nu: int, lam: Sequence[int]) -> np.ndarray:
        """Direct signed sum over all permutations for an arbitrary lambda tuple."""
        t = self.terms(R, lam)
        return np.einsum("...p,p->...", t[..., nu], self.signs)

    def derivative(self, R: np.ndarray, dR: np.ndarray) -> np.ndarray:
        """``dk[..., nu, mu] = d_mu k[nu]`` by the Leibniz rule over factors."""
        R = np.asarray(R, dtype=float)
        Rb = R.reshape((-1,) + R.shape[-4:])
        dRb = np.asarray(dR, dtype=float).reshape((-1,) + dR.shape[-5:])
        lam = np.arange(self.n)
        perms = self.reduced_perms
        base = [self._gather(Rb, plan, lam, perms=perms) for plan in self._plans]
        total = 0.0
        for f, plan in enumerate(self._plans):
            ops = list(base)
            ops[f] = self._gather(dRb, plan, lam, extra=1, perms=perms)
            total = total + self._contract(self._spec(f), ops)
        dk = np.einsum("zpvm,p->zvm", total, self.reduced_weights)
        return dk.reshape(R.shape[:-4] + dk.shape[1:])

    @property
    def levi_civita(self) -> np.ndarray:
        if self._levi is None:
            eps = np.zeros((self.n,) * self.n)
            for p, s in zip(self.perms, self.signs):
                eps[tuple(p)] = s
            self._levi = eps
        return self._levi

    def expand(self, k: np.ndarray) -> np.ndarray:
        """Full tensor ``K[..., nu, l_1, ..., l_n]`` from compressed values."""
        return np.multiply.outer(k, self.levi_civita)


_ASSEMBLERS: dict = {}


def assembler_for(dim: int, schedule: Optional[ContractionSchedule] = None) -> KAssembler:
    if dim % 2 == 0:
        raise DimensionMismatchError(f"K needs odd dimension 2k-1, got {dim}")
    schedule = schedule or default_schedule((dim + 1) // 2)
    if schedule.dim != dim:
        raise DimensionMismatchError(f"schedule is for dimension {schedule.dim}, manifold has {dim}")
    key = schedule
    if key not in _ASSEMBLERS:
        _ASSEMBLERS[key] = KAssembler(schedule)
    return _ASSEMBLERS[key]


def naive_k_component(R: np.ndarray, nu: int, lam: Sequence[int], schedule: ContractionSchedule) -> tuple[float, float]:
    """Reference value by explicit loops over permutations and dummy indices.

    Returns ``(value, sum of |per-permutation terms|)``.  Deliberately
    independent of :class:`KAssembler`: no einsum, no sign table.
    """
    R = np.asarray(R, dtype=float)
    n = R.shape[0]
    dummies = sorted({s for f in schedule.factors for s in f if s.startswith("e")})
    total = 0.0
    abs_total = 0.0
    for perm in itertools.permutations(range(n)):
        inversions = 0
        for i in range(n):
            for j in range(i + 1, n):
                if perm[i] > perm[j]:
                    inversions += 1
        sign = -1.0 if inversions % 2 else 1.0
        term = 0.0
        for es in itertools.product(range(n), repeat=len(dummies)):
            env = dict(zip(dummies, es))
            prod = 1.0
            for f in schedule.factors:
                idx = []
                for s in f:
                    if s == "nu":
                        idx.append(nu)
                    elif s.startswith("L"):
                        idx.append(lam[perm[int(s[1:]) - 1]])
                    else:
                        idx.append(env[s])
                prod *= R[idx[0], idx[1], idx[2], idx[3]]
            term += prod
        total += sign * term
        abs_total += abs(term)
    return total, abs_total


@dataclass
class KTensorSample:
    point: PointInChart
    k: np.ndarray  # full tensor [nu, l_1, ..., l_n]
    order_k: int
    compressed: np.ndarray = field(default=None)
    term_scale: np.ndarray = field(default=None)


def _point(metric: MetricField, point) -> PointInChart:
    return point if isinstance(point, PointInChart) else PointInChart(metric.chart, np.asarray(point, dtype=float))


def build_k(
    metric: MetricField,
    point,
    schedule: Optional[ContractionSchedule] = None,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    curvature: Optional[CurvatureBatch] = None,
) -> KTensorSample:
    p = _point(metric, point)
    asm = assembler_for(metric.chart.dim, schedule)
    R = curvature.riemann[0] if curvature is not None else curvature_batch(metric, p.coords[None], engine).riemann[0]
    k, scale = asm.compressed(R, with_scale=True)
    return KTensorSample(p, asm.expand(k), asm.schedule.k, k, scale)


def k_field(
    metric: MetricField,
    points,
    schedule: Optional[ContractionSchedule] = None,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    with_scale: bool = False,
):
    """Compressed ``k[B, nu]`` at a batch of points."""
    asm = assembler_for(metric.chart.dim, schedule)
    cb = curvature_batch(metric, points, engine)
    return asm.compressed(cb.riemann, with_scale=with_scale)


def k_gradient_field(metric: MetricField, points, schedule=None, engine: DerivativeEngine = DEFAULT_ENGINE) -> tuple[np.ndarray, np.ndarray]:
    """``(k[B, nu], dk[B, nu, mu])`` by differentiating through the assembly."""
    asm = assembler_for(metric.chart.dim, schedule)
    cb = curvature_batch(metric, points, engine, with_derivative=True)
    return asm.compressed(cb.riemann), asm.derivative(cb.riemann, cb.d_riemann)


def k_partials(
    metric: MetricField,
    point,
    mu: int,
    mode: str = "series",
    fd_step: float = 1e-3,
    schedule: Optional[ContractionSchedule] = None,
    engine: DerivativeEngine = DEFAULT_ENGINE,
    compressed: bool = False,
) -> np.ndarray:
    """``d K / d x^mu`` at ``point``.

    ``mode="series"`` differentiates through the assembly; ``mode="fd"`` takes
    Richardson-refined central differences of the assembled K with step
    ``fd_step``.
    """
    p = _point(metric, point)
    asm = assembler_for(metric.chart.dim, schedule)
    if mode == "series":
        _, dk = k_gradient_field(metric, p.coords[None], schedule, engine)
        out = dk[0, :, mu]
    elif mode == "fd":
        e = np.zeros(metric.chart.dim)
        e[mu] = 1.0
        h = fd_step
        pts = p.coords[None] + np.array([h, -h, 2 * h, -2 * h])[:, None] * e
        k = k_field(metric, pts, schedule, engine)
        d1 = (k[0] - k[1]) / (2 * h)
        d2 = (k[2] - k[3]) / (4 * h)
        out = (4 * d1 - d2) / 3
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return out if compressed else asm.expand(out)


def tilde_k(dK: np.ndarray, xi: np.ndarray, frames: np.ndarray) -> tuple[float, float]:
    """Alternating sum ``sum_a (-1)^a d_{X_a} K(xi; X_0..^a..X_n)``.

    ``dK[mu, nu, l_1..l_n]`` is the full derivative tensor, ``frames`` holds
    ``X_0..X_n`` as rows.  Returns ``(value, max |term_a|)``.
    """
    frames = np.asarray(frames, dtype=float)
    n = dK.shape[0]
    if frames.shape != (n + 1, n):
        raise DimensionMismatchError(f"need {n + 1} vectors of length {n}, got {frames.shape}")
    t = np.tensordot(np.asarray(xi, dtype=float), dK, axes=([0], [1]))  # [mu, l_1..l_n]
    total = 0.0
    worst = 0.0
    for a in range(n + 1):
        c = np.tensordot(frames[a], t, axes=([0], [0]))
        for b in range(n + 1):
            if b != a:
                c = np.tensordot(frames[b], c, axes=([0], [0]))
        term = (-1) ** a * float(c)
        total += term
        worst = max(worst, abs(term))
    return total, worst


def tilde_k_at(metric: MetricField, point, xi, frames, schedule=None, engine: DerivativeEngine = DEFAULT_ENGINE) -> tuple[float, float]:
    p = _point(metric, point)
    asm = assembler_for(metric.chart.dim, schedule)
    _, dk = k_gradient_field(metric, p.coords[None], schedule, engine)
    dK = asm.expand(dk[0].T)  # [mu, nu, l...]
    return tilde_k(dK, xi, frames)
