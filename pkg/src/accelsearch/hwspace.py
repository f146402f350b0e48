"""Accelerator design space: resource constraints, configs and the
unit-hypercube decoder.

Hardware encoding layout (14 reals in [0, 1])::

    [pe, l1, l2, bandwidth, ndim, size0, size1, size2, imp_C, imp_K, imp_R, imp_S, imp_XP, imp_YP]

The six trailing importance values choose the parallel dimensions: the
``ndim`` most important dims are unrolled across the array axes.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .workload import DATA_DIR, DIMS, Dim

__all__ = [
    "ResourceConstraint", "AcceleratorConfig", "InvalidDesign", "HW_ENCODING_SIZE",
    "rank_dims", "quantize", "decode_hardware", "encode_hardware", "validate",
    "parallel_semantics", "load_constraint", "bundled_constraint", "load_accelerator",
    "bundled_accelerator", "PE_STRIDE", "BUFFER_STRIDE", "ARRAY_STRIDE",
]

PE_STRIDE = 8
BUFFER_STRIDE = 16
ARRAY_STRIDE = 2
HW_ENCODING_SIZE = 14
_IDX_PE, _IDX_L1, _IDX_L2, _IDX_BW, _IDX_NDIM = 0, 1, 2, 3, 4
_IDX_SIZE = slice(5, 8)
_IDX_IMP = slice(8, 14)


class InvalidDesign(ValueError):
    """A hardware vector does not decode to a legal accelerator."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


@dataclass(frozen=True)
class ResourceConstraint:
    name: str
    max_pes: int
    max_onchip_bytes: int
    max_bandwidth: int

    def __post_init__(self):
        for key in ("max_pes", "max_onchip_bytes", "max_bandwidth"):
            v = getattr(self, key)
            if isinstance(v, bool) or not isinstance(v, int) or v <= 0:
                raise ValueError(f"constraint {self.name!r}: field {key} must be a positive integer, got {v!r}")

    def to_dict(self) -> dict:
        return {"name": self.name, "max_pes": self.max_pes,
                "max_onchip_bytes": self.max_onchip_bytes, "max_bandwidth": self.max_bandwidth}

    @classmethod
    def from_dict(cls, doc: Mapping, source: str = "<dict>") -> "ResourceConstraint":
        missing = [k for k in ("max_pes", "max_onchip_bytes", "max_bandwidth") if k not in doc]
        if missing:
            raise ValueError(f"{source}: missing field {missing[0]}")
        return cls(str(doc.get("name", Path(source).stem)), doc["max_pes"],
                   doc["max_onchip_bytes"], doc["max_bandwidth"])


@dataclass(frozen=True)
class AcceleratorConfig:
    """A concrete accelerator.  ``parallel_dims[i]`` is unrolled over axis ``i``."""

    num_pes: int
    l1_bytes: int
    l2_bytes: int
    bandwidth: int
    array_size: tuple[int, ...]
    parallel_dims: tuple[Dim, ...]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "array_size", tuple(int(a) for a in self.array_size))
        object.__setattr__(self, "parallel_dims",
                           tuple(d if isinstance(d, Dim) else Dim.parse(str(d)) for d in self.parallel_dims))

    @property
    def array_ndim(self) -> int:
        return len(self.array_size)

    @property
    def lanes(self) -> int:
        return math.prod(self.array_size)

    @property
    def onchip_bytes(self) -> int:
        return self.l2_bytes + self.num_pes * self.l1_bytes

    def axis_of(self, d: Dim) -> int | None:
        try:
            return self.parallel_dims.index(d)
        except ValueError:
            return None

    def describe(self) -> str:
        shape = "x".join(str(a) for a in self.array_size)
        dims = "-".join(d.name for d in self.parallel_dims)
        return (f"{self.array_ndim}D {shape} array ({dims} parallel), {self.num_pes} PEs, "
                f"L1 {self.l1_bytes} B/PE, L2 {self.l2_bytes} B, {self.bandwidth} B/cycle")

    def to_dict(self) -> dict:
        doc = {"num_pes": self.num_pes, "l1_bytes": self.l1_bytes, "l2_bytes": self.l2_bytes,
               "bandwidth": self.bandwidth, "array_size": list(self.array_size),
               "parallel_dims": [d.name for d in self.parallel_dims]}
        if self.name:
            doc["name"] = self.name
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping, source: str = "<dict>") -> "AcceleratorConfig":
        try:
            return cls(int(doc["num_pes"]), int(doc["l1_bytes"]), int(doc["l2_bytes"]),
                       int(doc["bandwidth"]), tuple(doc["array_size"]),
                       tuple(Dim.parse(str(d)) for d in doc["parallel_dims"]), str(doc.get("name", "")))
        except KeyError as exc:
            raise ValueError(f"{source}: missing field {exc.args[0]}") from None


def _read_json(path: str | Path):
    path = Path(path)
    try:
        return json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None


def load_constraint(path: str | Path) -> ResourceConstraint:
    return ResourceConstraint.from_dict(_read_json(path), str(path))


def bundled_constraint(name: str) -> ResourceConstraint:
    return load_constraint(DATA_DIR / "constraints" / f"{name.lower()}.json")


def load_accelerator(path: str | Path) -> AcceleratorConfig:
    return AcceleratorConfig.from_dict(_read_json(path), str(path))


def bundled_accelerator(name: str) -> AcceleratorConfig:
    """Baseline accelerator shipped with the package (eyeriss, edgetpu, ...)."""
    return load_accelerator(DATA_DIR / "accelerators" / f"{name.lower()}.json")


def _as_importance(importance) -> tuple[float, ...]:
    if isinstance(importance, Mapping):
        return tuple(float(importance[d]) for d in DIMS)
    values = tuple(float(v) for v in importance)
    if len(values) != 6:
        raise ValueError(f"need 6 importance values, got {len(values)}")
    return values


def rank_dims(importance) -> list[Dim]:
    """Dims sorted by decreasing importance; ties fall back to canonical order."""
    imp = _as_importance(importance)
    return sorted(DIMS, key=lambda d: (-imp[d], d))


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def quantize(x: float, step: int, max_value: int) -> int:
    """Map a knob in [0, 1] onto multiples of ``step`` in ``[step, max_value]``."""
    upper = (max_value // step) * step
    if upper < step:
        raise InvalidDesign(f"range below stride: max {max_value} < stride {step}")
    v = step * _round_half_up(x * max_value / step)
    return min(max(step, v), upper)


def _floor_even(v: float) -> int:
    return int(v // ARRAY_STRIDE) * ARRAY_STRIDE


_ORDERED_CHOICES = {k: list(itertools.permutations(DIMS, k)) for k in (1, 2, 3)}


def _index_choice(knob: float, choices: Sequence):
    return choices[min(int(knob * len(choices)), len(choices) - 1)]


def decode_hardware(enc, constraint: ResourceConstraint, *, encoding: str = "importance",
                    frozen: AcceleratorConfig | None = None) -> AcceleratorConfig:
    """Decode a 14-entry vector into an accelerator that satisfies ``constraint``.

    ``encoding="index"`` picks the parallel dims from the first importance
    entry as an index into the enumeration of ordered dim tuples.  With
    ``frozen`` set, only the sizing knobs (L1, L2, bandwidth) are decoded and
    the PE count, array shape and parallel dims are copied from ``frozen``.

    Raises :class:`InvalidDesign` when no legal config corresponds to ``enc``.
    """
    x = np.asarray(enc, dtype=float)
    if x.shape != (HW_ENCODING_SIZE,):
        raise ValueError(f"hardware encoding must have {HW_ENCODING_SIZE} entries, got {x.shape}")
    if frozen is not None:
        num_pes = frozen.num_pes
        if num_pes > constraint.max_pes:
            raise InvalidDesign(f"pes: frozen array needs {num_pes} PEs > {constraint.max_pes}")
    else:
        num_pes = quantize(x[_IDX_PE], PE_STRIDE, constraint.max_pes)

    budget = constraint.max_onchip_bytes
    l1_cap = ((budget - BUFFER_STRIDE) // num_pes // BUFFER_STRIDE) * BUFFER_STRIDE
    if l1_cap < BUFFER_STRIDE:
        raise InvalidDesign(f"memory: {budget} B cannot give {num_pes} PEs a {BUFFER_STRIDE} B L1 plus an L2")
    l1 = quantize(x[_IDX_L1], BUFFER_STRIDE, l1_cap)
    l2 = quantize(x[_IDX_L2], BUFFER_STRIDE, budget - num_pes * l1)
    bandwidth = quantize(x[_IDX_BW], 1, constraint.max_bandwidth)

    if frozen is not None:
        return AcceleratorConfig(num_pes, l1, l2, bandwidth, frozen.array_size, frozen.parallel_dims)

    ndim = min(3, 1 + math.floor(x[_IDX_NDIM] * 3))
    cap = _floor_even(num_pes / 2 ** (ndim - 1))
    if cap < ARRAY_STRIDE:
        raise InvalidDesign(f"array: {num_pes} PEs cannot form a {ndim}D array")
    sizes = [quantize(k, ARRAY_STRIDE, cap) for k in x[_IDX_SIZE][:ndim]]
    limit = _floor_even(num_pes // math.prod(sizes[:-1]))
    if limit < ARRAY_STRIDE:
        raise InvalidDesign(f"array: last axis would shrink below {ARRAY_STRIDE} "
                            f"({'x'.join(map(str, sizes[:-1]))} already uses {num_pes} PEs)")
    sizes[-1] = min(sizes[-1], limit)

    importance = x[_IDX_IMP]
    if encoding == "importance":
        parallel = tuple(rank_dims(importance)[:ndim])
    elif encoding == "index":
        parallel = _index_choice(importance[0], _ORDERED_CHOICES[ndim])
    else:
        raise ValueError(f"unknown encoding {encoding!r}")
    return AcceleratorConfig(num_pes, l1, l2, bandwidth, tuple(sizes), parallel)


def encode_hardware(cfg: AcceleratorConfig, constraint: ResourceConstraint) -> np.ndarray:
    """Knob vector that decodes (importance encoding) back to ``cfg``."""
    x = np.zeros(HW_ENCODING_SIZE)
    budget = constraint.max_onchip_bytes
    x[_IDX_PE] = cfg.num_pes / constraint.max_pes
    l1_cap = ((budget - BUFFER_STRIDE) // cfg.num_pes // BUFFER_STRIDE) * BUFFER_STRIDE
    x[_IDX_L1] = cfg.l1_bytes / l1_cap
    x[_IDX_L2] = cfg.l2_bytes / (budget - cfg.num_pes * cfg.l1_bytes)
    x[_IDX_BW] = cfg.bandwidth / constraint.max_bandwidth
    x[_IDX_NDIM] = (cfg.array_ndim - 0.5) / 3
    cap = _floor_even(cfg.num_pes / 2 ** (cfg.array_ndim - 1))
    for i, a in enumerate(cfg.array_size):
        x[5 + i] = a / cap
    imp = np.zeros(6)
    for rank, d in enumerate(cfg.parallel_dims):
        imp[d] = 1.0 - rank / 6
    x[_IDX_IMP] = imp
    return np.clip(x, 0.0, 1.0)


def validate(cfg: AcceleratorConfig, constraint: ResourceConstraint | None = None) -> list[str]:
    """Every violated invariant, as readable strings (empty when the config is legal)."""
    problems = []
    if cfg.array_ndim not in (1, 2, 3):
        problems.append(f"array has {cfg.array_ndim} dimensions, need 1-3")
    if len(cfg.parallel_dims) != cfg.array_ndim:
        problems.append(f"{len(cfg.parallel_dims)} parallel dims for a {cfg.array_ndim}D array")
    if len(set(cfg.parallel_dims)) != len(cfg.parallel_dims):
        problems.append("duplicate parallel dims")
    if any(a < 1 for a in cfg.array_size):
        problems.append("array axis smaller than 1")
    if cfg.lanes > cfg.num_pes:
        problems.append(f"array exceeds PEs ({cfg.lanes} > {cfg.num_pes})")
    if cfg.num_pes % PE_STRIDE:
        problems.append(f"num_pes {cfg.num_pes} not a multiple of {PE_STRIDE}")
    for key in ("l1_bytes", "l2_bytes"):
        v = getattr(cfg, key)
        if v <= 0 or v % BUFFER_STRIDE:
            problems.append(f"{key} {v} not a positive multiple of {BUFFER_STRIDE}")
    if any(a % ARRAY_STRIDE for a in cfg.array_size):
        problems.append(f"array size {cfg.array_size} not multiples of {ARRAY_STRIDE}")
    if cfg.bandwidth <= 0:
        problems.append("bandwidth must be positive")
    if constraint is not None:
        if cfg.num_pes > constraint.max_pes:
            problems.append(f"num_pes {cfg.num_pes} exceeds max {constraint.max_pes}")
        if cfg.onchip_bytes > constraint.max_onchip_bytes:
            problems.append(f"on-chip memory {cfg.onchip_bytes} B exceeds max {constraint.max_onchip_bytes} B")
        if cfg.bandwidth > constraint.max_bandwidth:
            problems.append(f"bandwidth {cfg.bandwidth} exceeds max {constraint.max_bandwidth}")
    return problems


_SEMANTICS = {Dim.C: "reduction", Dim.R: "reduction", Dim.S: "reduction",
              Dim.K: "broadcast", Dim.XP: "neighbor", Dim.YP: "neighbor"}


def parallel_semantics(d: Dim) -> str:
    """Inter-PE communication implied by unrolling ``d``: reduction, broadcast or neighbor."""
    return _SEMANTICS[Dim(d)]
