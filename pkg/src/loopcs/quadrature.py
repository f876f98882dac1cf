"""Tensor-product quadrature grids, deterministic parallel map, and the grid cache file.

Cache file layout (all integers little-endian)::

    magic        8 bytes   b"LOOPCSG\\0"
    header_len   uint32
    header       header_len bytes of UTF-8 JSON
    digest       32 bytes  sha256 of the header bytes
    payload      float64 little-endian, C order, shape = node_counts + (dim,) * rank

The header records the format version, metric name and parameter hash, a
free label, chart dimension, axis node counts, tensor rank and byte order.
"""

from __future__ import annotations

import hashlib
import json
import math
import multiprocessing
import os
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import CorruptHeaderError, HashMismatchError, TruncatedPayloadError

PERIODIC = "periodic-trapezoid"
MIDPOINT = "open-midpoint"
GAUSS = "gauss-legendre"
RULES = (PERIODIC, MIDPOINT, GAUSS)

BLOCK = 256


@dataclass(frozen=True)
class Axis:
    count: int
    lo: float
    hi: float
    rule: str = PERIODIC

    def __post_init__(self):
        if self.rule not in RULES:
            raise ValueError(f"unknown rule {self.rule!r}")
        if self.count < 1 or not self.hi > self.lo:
            raise ValueError(f"bad axis {self}")

    def nodes_weights(self) -> tuple[np.ndarray, np.ndarray]:
        n, lo, hi = self.count, self.lo, self.hi
        h = (hi - lo) / n
        if self.rule == PERIODIC:
            return lo + h * np.arange(n), np.full(n, h)
        if self.rule == MIDPOINT:
            return lo + h * (np.arange(n) + 0.5), np.full(n, h)
        x, w = np.polynomial.legendre.leggauss(n)
        return lo + (x + 1) * (hi - lo) / 2, w * (hi - lo) / 2

    def half(self) -> "Axis":
        return Axis(max(self.count // 2, 1), self.lo, self.hi, self.rule)


@dataclass(frozen=True)
class QuadratureGrid:
    axes: tuple[Axis, ...]

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def node_counts(self) -> tuple[int, ...]:
        return tuple(a.count for a in self.axes)

    @property
    def total(self) -> int:
        return math.prod(self.node_counts)

    @property
    def box(self) -> tuple[tuple[float, float], ...]:
        return tuple((a.lo, a.hi) for a in self.axes)

    @property
    def volume(self) -> float:
        return math.prod(a.hi - a.lo for a in self.axes)

    def nodes(self) -> np.ndarray:
        """All nodes, ``(total, dim)``, first axis slowest."""
        grids = np.meshgrid(*[a.nodes_weights()[0] for a in self.axes], indexing="ij")
        return np.stack([g.ravel() for g in grids], axis=-1)

    def weights(self) -> np.ndarray:
        w = np.ones(1)
        for a in self.axes:
            w = np.multiply.outer(w, a.nodes_weights()[1]).ravel()
        return w

    def half(self) -> "QuadratureGrid":
        return QuadratureGrid(tuple(a.half() for a in self.axes))

    def with_counts(self, counts: Sequence[int]) -> "QuadratureGrid":
        return QuadratureGrid(tuple(Axis(c, a.lo, a.hi, a.rule) for c, a in zip(counts, self.axes)))


def grid_for_chart(chart, counts, polar_rule: str = GAUSS, box=None) -> QuadratureGrid:
    """Periodic axes get the trapezoid rule, bounded ones ``polar_rule``."""
    if isinstance(counts, int):
        counts = (counts,) * chart.dim
    box = box or chart.domain_box
    axes = []
    for c, (lo, hi), p in zip(counts, box, chart.periods):
        axes.append(Axis(int(c), lo, hi, PERIODIC if p is not None else polar_rule))
    return QuadratureGrid(tuple(axes))


# -- parallel evaluation ----------------------------------------------------

_FIELD: Optional[Callable] = None
_NODES: Optional[np.ndarray] = None


def _run_block(bounds: tuple[int, int]) -> np.ndarray:
    lo, hi = bounds
    return np.asarray(_FIELD(_NODES[lo:hi]), dtype=float)


def parallel_map(field: Callable, grid, workers: int = 1, block: int = BLOCK) -> np.ndarray:
    """Evaluate ``field`` on every node, in fixed-size blocks, results in node order.

    Block boundaries do not depend on ``workers``, so the output is bit-identical
    for any worker count.  Workers are forked processes; an exception in any of
    them is re-raised here.
    """
    global _FIELD, _NODES
    nodes = grid.nodes() if isinstance(grid, QuadratureGrid) else np.asarray(grid, dtype=float)
    total = len(nodes)
    if total == 0:
        return np.zeros((0,))
    bounds = [(i, min(i + block, total)) for i in range(0, total, block)]
    _FIELD, _NODES = field, nodes
    try:
        if workers <= 1 or len(bounds) == 1:
            parts = [_run_block(b) for b in bounds]
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(workers) as pool:
                parts = pool.map(_run_block, bounds, chunksize=1)
    finally:
        _FIELD, _NODES = None, None
    return np.concatenate(parts, axis=0)


def integrate(field: Callable, grid: QuadratureGrid, workers: int = 1, estimate: bool = True) -> tuple[float, float]:
    """Weighted node sum and ``|Q - Q_half|`` (0.0 when ``estimate`` is off)."""
    if grid.total == 0:
        return 0.0, 0.0
    vals = parallel_map(field, grid, workers)
    value = float(np.dot(grid.weights(), vals))
    if not estimate:
        return value, 0.0
    h = grid.half()
    coarse = float(np.dot(h.weights(), parallel_map(field, h, workers)))
    return value, abs(value - coarse)


# -- cache ------------------------------------------------------------------

MAGIC = b"LOOPCSG\x00"
FORMAT_VERSION = 1


@dataclass
class GridCache:
    header: dict
    data: np.ndarray

    @classmethod
    def build(cls, metric, label: str, node_counts, data, rank: int) -> "GridCache":
        data = np.ascontiguousarray(data, dtype="<f8")
        dim = metric.chart.dim
        expected = tuple(node_counts) + (dim,) * rank
        if math.prod(expected) != data.size:
            raise ValueError(f"data of size {data.size} does not match node counts {expected}")
        header = {
            "version": FORMAT_VERSION,
            "metric": metric.name,
            "metric_hash": metric.param_hash(),
            "label": label,
            "dim": dim,
            "node_counts": list(node_counts),
            "rank": rank,
            "byte_order": "little",
        }
        return cls(header, data.reshape(expected))


def cache_path(cache_dir, metric, label: str, node_counts) -> Path:
    key = json.dumps([metric.param_hash(), label, list(node_counts)]).encode()
    return Path(cache_dir) / f"{metric.name}-{hashlib.sha256(key).hexdigest()[:16]}.grid"


def cache_write(path, cache: GridCache) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = json.dumps(cache.header, sort_keys=True).encode()
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(hashlib.sha256(head).digest())
        fh.write(np.ascontiguousarray(cache.data, dtype="<f8").tobytes())
    os.replace(tmp, path)
    return path


def cache_read(path, expected_metric=None, expected_label: Optional[str] = None) -> GridCache:
    """Load a cache file, checking structure, digest and (optionally) provenance."""
    raw = Path(path).read_bytes()
    if len(raw) < len(MAGIC) + 4 or raw[: len(MAGIC)] != MAGIC:
        raise CorruptHeaderError(f"{path}: bad magic")
    (hlen,) = struct.unpack_from("<I", raw, len(MAGIC))
    start = len(MAGIC) + 4
    if len(raw) < start + hlen + 32:
        raise CorruptHeaderError(f"{path}: header truncated")
    head = raw[start : start + hlen]
    digest = raw[start + hlen : start + hlen + 32]
    if hashlib.sha256(head).digest() != digest:
        raise HashMismatchError(f"{path}: header digest mismatch")
    try:
        header = json.loads(head.decode())
        shape = tuple(header["node_counts"]) + (header["dim"],) * header["rank"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptHeaderError(f"{path}: unreadable header ({exc})") from exc
    if header.get("version") != FORMAT_VERSION or header.get("byte_order") != "little":
        raise CorruptHeaderError(f"{path}: unsupported version or byte order")
    if expected_metric is not None and (
        header["metric"] != expected_metric.name or header["metric_hash"] != expected_metric.param_hash()
    ):
        raise HashMismatchError(f"{path}: cached for {header['metric']} with other parameters")
    if expected_label is not None and header["label"] != expected_label:
        raise HashMismatchError(f"{path}: label {header['label']!r} != {expected_label!r}")
    payload = raw[start + hlen + 32 :]
    need = 8 * math.prod(shape)
    if len(payload) != need:
        raise TruncatedPayloadError(f"{path}: payload has {len(payload)} bytes, expected {need}")
    data = np.frombuffer(payload, dtype="<f8").reshape(shape).copy()
    return GridCache(header, data)
