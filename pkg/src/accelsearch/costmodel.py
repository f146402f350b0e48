"""Analytical latency/energy/EDP model and a brute-force reference simulator.

Model semantics shared by :func:`evaluate` and :func:`simulate_reference`:

* Edge tiles are padded: every tile at a level has the nominal tile shape,
  and parallel dims are padded up to a multiple of their axis size.
* DRAM -> L2 and L2 -> L1 (array-wide) are the modeled transfers.  A level
  refetches a tensor tile whenever the tile it needs changes between
  consecutive iterations; loops with a single trip are not loops.
* L1 contents do not survive a step of the L2 loop nest.
* Output tiles are written back on eviction; a revisited output tile is
  read back first (partial sums).  The very first visit reads nothing.
* Input tiles occupy their bounding window: ``(X'-1)*stride + S`` columns.
* Each MAC performs three L1 accesses (input, weight, partial sum).
* Latency is ``max(compute_cycles, ceil(dram_bytes / bandwidth))``.
"""
from __future__ import annotations

import enum
import itertools
import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from pathlib import Path
from typing import Mapping as MappingABC

from .hwspace import AcceleratorConfig
from .mapspace import Mapping, trip_counts
from .workload import DIMS, ConvLayer, Dim, total_macs

__all__ = [
    "EnergyModel", "CostReport", "TensorKind", "CapacityError", "OracleGuardError",
    "footprint", "refetch_multiplier", "evaluate", "simulate_reference", "load_energy_model",
    "LATENCY_MODEL", "REFERENCE_MAC_LIMIT", "compare_reports",
]

LATENCY_MODEL = "roofline: max(compute_cycles, ceil(dram_bytes / bandwidth)), no double buffering"
REFERENCE_MAC_LIMIT = 10 ** 7
LEVELS = ("dram", "l2", "l1")


class TensorKind(enum.Enum):
    INPUT = "input"
    WEIGHT = "weight"
    OUTPUT = "output"

    @property
    def relevant(self) -> frozenset[Dim]:
        return _RELEVANT[self]


_RELEVANT = {
    TensorKind.INPUT: frozenset({Dim.C, Dim.XP, Dim.YP, Dim.R, Dim.S}),
    TensorKind.WEIGHT: frozenset({Dim.C, Dim.K, Dim.R, Dim.S}),
    TensorKind.OUTPUT: frozenset({Dim.K, Dim.XP, Dim.YP}),
}
TENSORS = tuple(TensorKind)


class CapacityError(ValueError):
    """The tiles of a mapping do not fit a buffer.

    ``violation`` is the summed relative overflow over both buffers, used by
    the search to rank infeasible mappings.
    """

    def __init__(self, message: str, buffer: str, violation: float):
        super().__init__(message)
        self.buffer = buffer
        self.violation = violation


class OracleGuardError(ValueError):
    """Layer too large for the reference simulator."""


@dataclass(frozen=True)
class EnergyModel:
    """Per-access energies in arbitrary units; not calibrated to silicon."""

    e_mac: float = 1.0
    e_l1: float = 1.0
    e_l2: float = 6.0
    e_dram: float = 200.0
    bytes_per_element: int = 2

    def __post_init__(self):
        for key, v in asdict(self).items():
            if not v > 0:
                raise ValueError(f"energy model field {key} must be positive, got {v!r}")

    def per_access(self, level: str) -> float:
        return {"dram": self.e_dram, "l2": self.e_l2, "l1": self.e_l1}[level]


def load_energy_model(path: str | Path) -> EnergyModel:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    known = set(EnergyModel.__dataclass_fields__)
    unknown = sorted(set(doc) - known - {"name"})
    if unknown:
        raise ValueError(f"{path}: unknown field {unknown[0]}")
    doc.pop("name", None)
    return EnergyModel(**doc)


@dataclass(frozen=True)
class CostReport:
    latency_cycles: int
    energy_units: float
    edp: float
    compute_cycles: int
    memory_cycles: int
    utilization: float
    macs: int
    # level -> tensor -> element accesses (output counts reads + writes)
    accesses: dict

    def to_dict(self) -> dict:
        doc = asdict(self)
        doc["latency_model"] = LATENCY_MODEL
        return doc

    @classmethod
    def from_dict(cls, doc: MappingABC) -> "CostReport":
        fields = {k: doc[k] for k in cls.__dataclass_fields__}
        return cls(**fields)


def _vec(values) -> tuple[int, ...]:
    """Accept a per-dim tuple or a (possibly partial) ``{Dim: n}`` mapping."""
    if isinstance(values, MappingABC):
        return tuple(int(values.get(d, 1)) for d in DIMS)
    return tuple(values)


def footprint(kind: TensorKind, tile, stride: int = 1) -> int:
    """Elements of ``kind`` touched by one tile (input uses its bounding window)."""
    t = _vec(tile)
    if kind is TensorKind.WEIGHT:
        return t[Dim.C] * t[Dim.K] * t[Dim.R] * t[Dim.S]
    if kind is TensorKind.OUTPUT:
        return t[Dim.K] * t[Dim.XP] * t[Dim.YP]
    return (t[Dim.C] * ((t[Dim.XP] - 1) * stride + t[Dim.S])
            * ((t[Dim.YP] - 1) * stride + t[Dim.R]))


def refetch_multiplier(order, trips, kind: TensorKind) -> int:
    """How many times one level loads tiles of ``kind`` while running its loop nest.

    Loops irrelevant to the tensor that sit inside its innermost relevant
    loop leave the resident tile stationary and do not multiply.
    """
    t = _vec(trips)
    rel = kind.relevant
    order = [Dim(d) for d in order]
    inner = -1
    for pos, d in enumerate(order):
        if d in rel and t[d] > 1:
            inner = pos
    mult = math.prod(t[d] for d in rel)
    for d in order[:max(inner, 0)]:
        if d not in rel:
            mult *= t[d]
    return mult


def _assemble(accel: AcceleratorConfig, em: EnergyModel, compute: int, macs: int,
              accesses: dict) -> CostReport:
    dram_bytes = sum(accesses["dram"].values()) * em.bytes_per_element
    memory = -(-dram_bytes // accel.bandwidth)
    latency = max(compute, memory)
    energy = macs * em.e_mac
    for level in LEVELS:
        energy += sum(accesses[level][k.value] for k in TENSORS) * em.per_access(level)
    utilization = macs / (compute * accel.lanes)
    return CostReport(latency, energy, latency * energy, compute, memory, utilization, macs, accesses)


def _capacity(accel: AcceleratorConfig, em: EnergyModel, l1_need: int, l2_need: int) -> None:
    l1_bytes = l1_need * em.bytes_per_element
    l2_bytes = l2_need * em.bytes_per_element
    over = max(0.0, l1_bytes / accel.l1_bytes - 1) + max(0.0, l2_bytes / accel.l2_bytes - 1)
    if l1_bytes > accel.l1_bytes:
        raise CapacityError(f"L1 overflow: tiles need {l1_bytes} B per PE > {accel.l1_bytes} B",
                            "L1", over)
    if l2_bytes > accel.l2_bytes:
        raise CapacityError(f"L2 overflow: tiles need {l2_bytes} B > {accel.l2_bytes} B", "L2", over)


def evaluate(accel: AcceleratorConfig, mapping: Mapping, layer: ConvLayer,
             em: EnergyModel = EnergyModel()) -> CostReport:
    """Closed-form cost of running ``layer`` on ``accel`` with ``mapping``.

    Raises :class:`CapacityError` if a tile set overflows L1 or L2.
    """
    trips = trip_counts(mapping, layer, accel)
    stride, groups = layer.stride, layer.groups
    _capacity(accel, em,
              sum(footprint(k, trips.per_pe, stride) for k in TENSORS),
              sum(footprint(k, mapping.l2_tile, stride) for k in TENSORS))

    steps2 = math.prod(trips.l2)
    compute = steps2 * math.prod(trips.l1) * math.prod(trips.per_pe) * groups
    macs = total_macs(layer)
    accesses = {level: {} for level in LEVELS}
    for kind in TENSORS:
        fp2 = footprint(kind, mapping.l2_tile, stride)
        fp1 = footprint(kind, trips.l1_array, stride)
        m2 = refetch_multiplier(mapping.l2_order, trips.l2, kind)
        m1 = steps2 * refetch_multiplier(mapping.l1_order, trips.l1, kind)
        if kind is TensorKind.OUTPUT:
            distinct2 = math.prod(trips.l2[d] for d in kind.relevant)
            distinct1 = distinct2 * math.prod(trips.l1[d] for d in kind.relevant)
            # every visit writes back, every revisit reads the partial sums first
            dram = (2 * m2 - distinct2) * fp2
            l2 = (2 * m1 - distinct1) * fp1
        else:
            dram = m2 * fp2
            l2 = m1 * fp1
        accesses["dram"][kind.value] = dram * groups
        accesses["l2"][kind.value] = l2 * groups
        accesses["l1"][kind.value] = macs
    return _assemble(accel, em, compute, macs, accesses)


# --------------------------------------------------------------------------
# reference simulator


@lru_cache(maxsize=4096)
def _touched_footprint(kind: TensorKind, sizes: tuple, stride: int) -> int:
    """Count a tile's elements by enumerating the coordinates its MACs touch."""
    c, k, r, s, x, y = sizes
    if kind is TensorKind.WEIGHT:
        return len(set(itertools.product(range(c), range(k), range(r), range(s))))
    if kind is TensorKind.OUTPUT:
        return len(set(itertools.product(range(k), range(x), range(y))))
    rows = {yy * stride + rr for yy in range(y) for rr in range(r)}
    cols = {xx * stride + ss for xx in range(x) for ss in range(s)}
    # transfers move the bounding window of the touched coordinates
    return c * (max(rows) - min(rows) + 1) * (max(cols) - min(cols) + 1)


def _steps(total: int, step: int) -> list[int]:
    origins, pos = [], 0
    while pos < total:
        origins.append(pos)
        pos += step
    return origins


def _lane_load(tile: int, lanes: int) -> int:
    load = 0
    while load * lanes < tile:
        load += 1
    return load


def simulate_reference(accel: AcceleratorConfig, mapping: Mapping, layer: ConvLayer,
                       em: EnergyModel = EnergyModel()) -> CostReport:
    """Walk the mapped loop nest tile by tile and count every transfer.

    Residency is tracked per tensor and level, so refetches, write-backs
    and partial-sum reads are observed events rather than formula terms.
    One group is simulated and the counts scaled by the group count.
    """
    if total_macs(layer) > REFERENCE_MAC_LIMIT:
        raise OracleGuardError(f"layer {layer.name!r} has {total_macs(layer)} MACs "
                               f"> {REFERENCE_MAC_LIMIT}; reference simulator is for small layers")
    ext, t2, t1, stride = layer.extent, mapping.l2_tile, mapping.l1_tile, layer.stride

    lane_count = [1] * 6
    for d, a in zip(accel.parallel_dims, accel.array_size):
        lane_count[d] = a
    per_pe = tuple(_lane_load(t1[d], lane_count[d]) for d in DIMS)
    array_tile = tuple(per_pe[d] * lane_count[d] for d in DIMS)

    _capacity(accel, em,
              sum(_touched_footprint(k, per_pe, stride) for k in TENSORS),
              sum(_touched_footprint(k, t2, stride) for k in TENSORS))
    fp2 = {k: _touched_footprint(k, t2, stride) for k in TENSORS}
    fp1 = {k: _touched_footprint(k, array_tile, stride) for k in TENSORS}
    pe_steps = math.prod(per_pe)
    rel = {k: sorted(k.relevant) for k in TENSORS}

    counts = {level: {k: 0 for k in TENSORS} for level in ("dram", "l2")}
    cycles = macs = 0
    out = TensorKind.OUTPUT
    seen2, seen1 = set(), set()
    resident2 = {k: None for k in TENSORS}

    origins2 = [_steps(ext[d], t2[d]) for d in DIMS]
    for combo2 in itertools.product(*(origins2[d] for d in mapping.l2_order)):
        o2 = [0] * 6
        for d, v in zip(mapping.l2_order, combo2):
            o2[d] = v
        ids2 = {}
        for k in TENSORS:
            tile_id = tuple(o2[d] for d in rel[k])
            ids2[k] = tile_id
            if tile_id != resident2[k]:
                if k is out:
                    if resident2[k] is not None:
                        counts["dram"][out] += fp2[out]
                    if tile_id in seen2:
                        counts["dram"][out] += fp2[out]
                    seen2.add(tile_id)
                else:
                    counts["dram"][k] += fp2[k]
                resident2[k] = tile_id

        resident1 = {k: None for k in TENSORS}
        origins1 = [_steps(t2[d], t1[d]) for d in DIMS]
        for combo1 in itertools.product(*(origins1[d] for d in mapping.l1_order)):
            o1 = [0] * 6
            for d, v in zip(mapping.l1_order, combo1):
                o1[d] = v
            for k in TENSORS:
                tile_id = tuple(o1[d] for d in rel[k])
                if tile_id != resident1[k]:
                    if k is out:
                        if resident1[k] is not None:
                            counts["l2"][out] += fp1[out]
                        key = (ids2[out], tile_id)
                        if key in seen1:
                            counts["l2"][out] += fp1[out]
                        seen1.add(key)
                    else:
                        counts["l2"][k] += fp1[k]
                    resident1[k] = tile_id
            cycles += pe_steps
            real = 1
            for d in DIMS:
                lo = o2[d] + o1[d]
                hi = min(lo + t1[d], o2[d] + t2[d], ext[d])
                real *= max(0, hi - lo)
            macs += real
        if resident1[out] is not None:
            counts["l2"][out] += fp1[out]
    if resident2[out] is not None:
        counts["dram"][out] += fp2[out]

    g = layer.groups
    accesses = {level: {k.value: counts[level][k] * g for k in TENSORS} for level in ("dram", "l2")}
    accesses["l1"] = {k.value: macs * g for k in TENSORS}
    return _assemble(accel, em, cycles * g, macs * g, accesses)


def compare_reports(a: CostReport, b: CostReport) -> list[str]:
    """Fields on which two reports differ (exact comparison)."""
    diffs = []
    for key in ("latency_cycles", "energy_units", "edp", "compute_cycles", "memory_cycles", "macs"):
        if getattr(a, key) != getattr(b, key):
            diffs.append(f"{key}: {getattr(a, key)} != {getattr(b, key)}")
    for level in LEVELS:
        for k in TENSORS:
            va, vb = a.accesses[level][k.value], b.accesses[level][k.value]
            if va != vb:
                diffs.append(f"accesses[{level}][{k.value}]: {va} != {vb}")
    return diffs
