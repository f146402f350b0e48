"""Per-layer mapping: loop orders and tile sizes at the L2 and L1 levels,
plus the loop order inside each PE.

Mapping encoding layout (26 reals in [0, 1])::

    [l2 importance x6, l2 ratio C/K/XP/YP, l1 importance x6, l1 ratio C/K/XP/YP, pe importance x6]

Tiles are ratios of the parent extent, so one encoding adapts to any
layer.  R and S are never tiled temporally.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Mapping as MappingABC

import numpy as np

from .hwspace import AcceleratorConfig, rank_dims
from .workload import DIMS, ConvLayer, Dim

__all__ = [
    "Mapping", "MAP_ENCODING_SIZE", "TILED_DIMS", "order_from_importance", "decode_mapping",
    "trip_counts", "Trips", "format_loop_nest", "mapping_to_dict", "mapping_from_dict",
    "check_mapping",
]

MAP_ENCODING_SIZE = 26
TILED_DIMS = (Dim.C, Dim.K, Dim.XP, Dim.YP)

_L2_IMP, _L2_RATIO = slice(0, 6), slice(6, 10)
_L1_IMP, _L1_RATIO = slice(10, 16), slice(16, 20)
_PE_IMP = slice(20, 26)

_PERMUTATIONS = list(itertools.permutations(DIMS))

DimVec = tuple[int, int, int, int, int, int]


@dataclass(frozen=True)
class Mapping:
    """Loop orders are outermost-first; tiles are indexed by :class:`Dim`.

    ``fed`` lists the parallel dims whose L1 tile was raised so every array
    lane receives work.
    """

    l2_order: tuple[Dim, ...]
    l2_tile: DimVec
    l1_order: tuple[Dim, ...]
    l1_tile: DimVec
    pe_order: tuple[Dim, ...]
    fed: tuple[Dim, ...] = field(default=(), compare=False)

    def describe(self) -> str:
        def tiles(t):
            return ",".join(f"{d.name}{t[d]}" for d in DIMS)
        return (f"L2[{''.join(d.name for d in self.l2_order)}; {tiles(self.l2_tile)}] "
                f"L1[{''.join(d.name for d in self.l1_order)}; {tiles(self.l1_tile)}] "
                f"PE[{''.join(d.name for d in self.pe_order)}]")


@dataclass(frozen=True)
class Trips:
    """Loop bounds derived from a mapping.

    ``per_pe`` is the number of sequential iterations each PE runs along a
    dim; ``l1_array`` is the array-wide L1 tile (``per_pe * lanes`` along
    parallel dims, so it may exceed the real tile when lanes are padded).
    """

    l2: DimVec
    l1: DimVec
    per_pe: DimVec
    lanes: DimVec
    l1_array: DimVec


def order_from_importance(importance) -> list[Dim]:
    """Loop order outermost-first: the most important dim becomes the outer loop."""
    return rank_dims(importance)


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def _tile(ratio: float, extent: int) -> int:
    return min(max(_round_half_up(ratio * extent), 1), extent)


def _order(knobs, encoding: str) -> tuple[Dim, ...]:
    if encoding == "importance":
        return tuple(order_from_importance(knobs))
    if encoding == "index":
        n = len(_PERMUTATIONS)
        return _PERMUTATIONS[min(int(knobs[0] * n), n - 1)]
    raise ValueError(f"unknown encoding {encoding!r}")


def decode_mapping(enc, layer: ConvLayer, accel: AcceleratorConfig, *,
                   encoding: str = "importance") -> Mapping:
    """Decode a 26-entry vector; every vector in the unit cube gives a legal mapping."""
    x = np.asarray(enc, dtype=float)
    if x.shape != (MAP_ENCODING_SIZE,):
        raise ValueError(f"mapping encoding must have {MAP_ENCODING_SIZE} entries, got {x.shape}")
    ext = layer.extent
    l2 = list(ext)
    l1 = list(ext)
    r2, r1 = x[_L2_RATIO], x[_L1_RATIO]
    for i, d in enumerate(TILED_DIMS):
        l2[d] = _tile(r2[i], ext[d])
        l1[d] = _tile(r1[i], l2[d])
    fed = []
    for d, lanes in zip(accel.parallel_dims, accel.array_size):
        need = min(lanes, l2[d])
        if l1[d] < need:
            l1[d] = need
            fed.append(d)
    return Mapping(_order(x[_L2_IMP], encoding), tuple(l2), _order(x[_L1_IMP], encoding),
                   tuple(l1), _order(x[_PE_IMP], encoding), tuple(fed))


def check_mapping(mapping: Mapping, layer: ConvLayer) -> list[str]:
    problems = []
    for name in ("l2_order", "l1_order", "pe_order"):
        if sorted(getattr(mapping, name)) != list(DIMS):
            problems.append(f"{name} is not a permutation of the six dims")
    for d in DIMS:
        if not 1 <= mapping.l1_tile[d] <= mapping.l2_tile[d] <= layer.extent[d]:
            problems.append(f"tile bounds broken on {d.name}: "
                            f"1 <= {mapping.l1_tile[d]} <= {mapping.l2_tile[d]} <= {layer.extent[d]}")
    for d in (Dim.R, Dim.S):
        if mapping.l2_tile[d] != layer.extent[d] or mapping.l1_tile[d] != layer.extent[d]:
            problems.append(f"{d.name} must not be tiled")
    return problems


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def trip_counts(mapping: Mapping, layer: ConvLayer, accel: AcceleratorConfig) -> Trips:
    ext, t2, t1 = layer.extent, mapping.l2_tile, mapping.l1_tile
    l2 = tuple(_ceil_div(ext[d], t2[d]) for d in DIMS)
    l1 = tuple(_ceil_div(t2[d], t1[d]) for d in DIMS)
    per_pe = list(t1)
    lanes = [1] * 6
    array_tile = list(t1)
    for d, a in zip(accel.parallel_dims, accel.array_size):
        q = _ceil_div(t1[d], a)
        per_pe[d] = q
        lanes[d] = a
        array_tile[d] = q * a
    return Trips(l2, l1, tuple(per_pe), tuple(lanes), tuple(array_tile))


def mapping_to_dict(mapping: Mapping) -> dict:
    def level(order, tiles=None):
        doc = {"order": [d.name for d in order]}
        if tiles is not None:
            doc["tiles"] = {d.name: tiles[d] for d in DIMS}
        return doc
    doc = {"l2": level(mapping.l2_order, mapping.l2_tile),
           "l1": level(mapping.l1_order, mapping.l1_tile),
           "pe": level(mapping.pe_order)}
    if mapping.fed:
        doc["fed"] = [d.name for d in mapping.fed]
    return doc


def mapping_from_dict(doc: MappingABC) -> Mapping:
    def order(level):
        return tuple(Dim.parse(n) for n in doc[level]["order"])

    def tiles(level):
        t = doc[level]["tiles"]
        return tuple(int(t[d.name]) for d in DIMS)
    return Mapping(order("l2"), tiles("l2"), order("l1"), tiles("l1"), order("pe"),
                   tuple(Dim.parse(n) for n in doc.get("fed", ())))


def format_loop_nest(mapping: Mapping, layer: ConvLayer, accel: AcceleratorConfig) -> str:
    """Human-readable nested-loop listing of a mapping (trip-1 loops omitted)."""
    trips = trip_counts(mapping, layer, accel)
    lines, depth = [], 0

    def emit(text):
        lines.append("  " * depth + text)

    emit(f"# {layer.name}: {accel.describe()}")
    for d in mapping.l2_order:
        if trips.l2[d] > 1:
            emit(f"for {d.name.lower()}2 in range({trips.l2[d]}):  # L2 tile {mapping.l2_tile[d]}")
            depth += 1
    for d in mapping.l1_order:
        if trips.l1[d] > 1:
            emit(f"for {d.name.lower()}1 in range({trips.l1[d]}):  # L1 tile {mapping.l1_tile[d]}")
            depth += 1
    for d, a in zip(accel.parallel_dims, accel.array_size):
        emit(f"parallel_for {d.name.lower()}_lane in range({min(a, mapping.l1_tile[d])}):  # of {a} lanes")
        depth += 1
    for d in mapping.pe_order:
        if trips.per_pe[d] > 1:
            emit(f"for {d.name.lower()}0 in range({trips.per_pe[d]}):")
            depth += 1
    emit("mac()")
    return "\n".join(lines)
