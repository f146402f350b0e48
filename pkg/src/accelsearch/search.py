"""Nested search: per-layer mappings inside accelerator search inside network search.

Seeds for the inner searches are derived from the run seed and the layer
shape only, so the fitness of an accelerator is a pure function of its
vector.  Layers with the same shape share a seed, hence a result.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import evolve
from .costmodel import CapacityError, CostReport, EnergyModel, evaluate
from .hwspace import (HW_ENCODING_SIZE, AcceleratorConfig, InvalidDesign, ResourceConstraint,
                      decode_hardware, validate)
from .mapspace import MAP_ENCODING_SIZE, Mapping, decode_mapping, mapping_from_dict, mapping_to_dict
from .netspace import NetCandidate, NetSpaceConfig, decode_network
from .workload import ConvLayer, Network, network_from_dict, network_to_dict

__all__ = [
    "SearchBudget", "SearchResult", "MODES", "geomean", "derive_seed", "search_mapping",
    "evaluate_accelerator", "search_accelerator", "co_search", "network_edp",
    "NoFeasibleMapping", "InfeasibleAccuracy", "save_result", "load_result", "reevaluate",
]

MODES = ("full", "sizing-only", "index-encoding", "random-baseline")
AGGREGATIONS = ("sum", "product")

class NoFeasibleMapping(RuntimeError):
    """No sampled mapping of a layer fits the accelerator's buffers."""


class InfeasibleAccuracy(ValueError):
    """Even the largest network in the space misses the accuracy threshold."""


@dataclass(frozen=True)
class SearchBudget:
    """Population sizes and generation counts for each search level.

    ``final_map_*`` is the larger mapping budget used to re-search the
    layers of the winning accelerator.  ``*_sigma`` is the initial standard
    deviation of each level's search distribution.
    """

    hw_generations: int = 10
    hw_population: int = 16
    map_generations: int = 10
    map_population: int = 16
    nas_generations: int = 5
    nas_population: int = 8
    seed: int = 0
    final_map_generations: int = 20
    final_map_population: int = 32
    hw_sigma: float = 0.2
    map_sigma: float = 0.4
    nas_sigma: float = 0.4

    def __post_init__(self):
        for key, v in self.__dict__.items():
            if key.endswith("_sigma"):
                if not 0 < v <= 1:
                    raise ValueError(f"budget field {key} must be in (0, 1], got {v!r}")
            elif key != "seed" and (not isinstance(v, int) or v < 1):
                raise ValueError(f"budget field {key} must be a positive integer, got {v!r}")
        for key in ("hw_population", "map_population", "nas_population", "final_map_population"):
            if getattr(self, key) < 4:
                raise ValueError(f"budget field {key} must be >= 4")

    def final(self) -> "SearchBudget":
        return replace(self, map_generations=self.final_map_generations,
                       map_population=self.final_map_population)


def geomean(values: Sequence[float]) -> float:
    vals = [float(v) for v in values]
    if not vals:
        raise ValueError("geomean of an empty list")
    if any(not v > 0 for v in vals):
        raise ValueError(f"geomean needs positive values, got {min(vals)}")
    return math.exp(sum(math.log(v) for v in vals) / len(vals))


def derive_seed(seed: int, *parts) -> int:
    digest = hashlib.sha256(repr((int(seed),) + parts).encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


# ---------------------------------------------------------------- mapping level


class _MappingObjective:
    def __init__(self, accel, layer, em, encoding):
        self.accel, self.layer, self.em, self.encoding = accel, layer, em, encoding

    def __call__(self, x):
        mapping = decode_mapping(x, self.layer, self.accel, encoding=self.encoding)
        try:
            return evaluate(self.accel, mapping, self.layer, self.em).edp, 0.0
        except CapacityError as exc:
            return math.inf, exc.violation


def search_mapping(accel: AcceleratorConfig, layer: ConvLayer, budget: SearchBudget, seed: int, *,
                   em: EnergyModel = EnergyModel(), encoding: str = "importance",
                   with_history: bool = False):
    """Best mapping of one layer (ES over the 26-entry mapping encoding).

    Returns ``(mapping, report)``, plus the generation history when
    ``with_history`` is set.  Raises :class:`NoFeasibleMapping` when no
    sampled mapping fits.
    """
    objective = _MappingObjective(accel, layer, em, encoding)
    res = evolve.es_minimize(objective, MAP_ENCODING_SIZE, budget.map_population,
                             budget.map_generations, seed, sigma=budget.map_sigma)
    if res.x is None:
        raise NoFeasibleMapping(f"layer {layer.name}: no mapping fits {accel.describe()}")
    mapping = decode_mapping(res.x, layer, accel, encoding=encoding)
    report = evaluate(accel, mapping, layer, em)
    return (mapping, report, res.history) if with_history else (mapping, report)


def network_edp(reports: Sequence[CostReport], aggregation: str = "sum") -> float:
    """Whole-network EDP: sum of layer EDPs, or total latency times total energy."""
    if aggregation == "sum":
        return math.fsum(r.edp for r in reports)
    if aggregation == "product":
        return sum(r.latency_cycles for r in reports) * math.fsum(r.energy_units for r in reports)
    raise ValueError(f"unknown aggregation {aggregation!r}")


def _map_network(accel, net: Network, budget, seed, em, encoding, cache):
    pairs = []
    for layer in net.layers:
        key = layer.shape_key
        if key not in cache:
            cache[key] = search_mapping(accel, layer, budget, derive_seed(seed, "map", key),
                                        em=em, encoding=encoding)
        pairs.append(cache[key])
    return pairs


def evaluate_accelerator(accel: AcceleratorConfig, benchmarks: Sequence[Network], budget: SearchBudget,
                         seed: int, *, em: EnergyModel = EnergyModel(), encoding: str = "importance",
                         aggregation: str = "sum", cache: dict | None = None):
    """Geomean over benchmarks of the mapping-searched network EDP.

    Returns ``(reward, {benchmark: [(mapping, report), ...]})``.  A layer
    without a feasible mapping makes the reward ``inf`` and the mapping
    dict only holds the benchmarks finished before it.
    """
    cache = {} if cache is None else cache
    found, edps = {}, []
    for net in benchmarks:
        try:
            pairs = _map_network(accel, net, budget, seed, em, encoding, cache)
        except NoFeasibleMapping:
            return math.inf, found
        found[net.name] = pairs
        edps.append(network_edp([r for _, r in pairs], aggregation))
    return geomean(edps), found


# ---------------------------------------------------------------- accelerator level


class _HardwareObjective:
    """Picklable hardware fitness, so generations can run in a process pool."""

    def __init__(self, constraint, benchmarks, budget, seed, em, encoding, frozen, aggregation):
        self.constraint, self.benchmarks, self.budget = constraint, tuple(benchmarks), budget
        self.seed, self.em, self.encoding = seed, em, encoding
        self.frozen, self.aggregation = frozen, aggregation

    def decode(self, x) -> AcceleratorConfig:
        return decode_hardware(x, self.constraint, encoding=self.encoding, frozen=self.frozen)

    def valid(self, x) -> bool:
        try:
            return not validate(self.decode(x), self.constraint)
        except InvalidDesign:
            return False

    def __call__(self, x):
        accel = self.decode(x)
        reward, found = evaluate_accelerator(accel, self.benchmarks, self.budget, self.seed, em=self.em,
                                             encoding=self.encoding, aggregation=self.aggregation)
        if math.isfinite(reward):
            return reward, 0.0
        return math.inf, 1.0 + len(self.benchmarks) - len(found)


@contextmanager
def _mapper(workers: int):
    if workers <= 1:
        yield map
        return
    with ProcessPoolExecutor(max_workers=workers) as pool:
        yield pool.map


@dataclass
class SearchResult:
    accelerator: AcceleratorConfig
    benchmarks: list[Network]
    mappings: dict[str, list[Mapping]]
    reports: dict[str, list[CostReport]]
    geomean_edp: float
    mode: str = "full"
    aggregation: str = "sum"
    constraint: ResourceConstraint | None = None
    network: NetCandidate | None = None
    accuracy: float | None = None
    history: dict[str, list] = field(default_factory=dict)

    def benchmark_edps(self) -> dict[str, float]:
        return {name: network_edp(reps, self.aggregation) for name, reps in self.reports.items()}


def _mode_settings(mode: str, constraint: ResourceConstraint, baseline: AcceleratorConfig | None):
    if mode not in MODES:
        raise ValueError(f"unknown search mode {mode!r}; expected one of {', '.join(MODES)}")
    encoding = "index" if mode == "index-encoding" else "importance"
    frozen = None
    if mode == "sizing-only":
        if baseline is None:
            raise ValueError("sizing-only mode needs a baseline accelerator")
        frozen = baseline
    return encoding, frozen


def _finalize(accel, benchmarks, budget, seed, em, encoding, aggregation, fallback):
    """Re-search the winner's mappings at the final budget, keeping the better of both runs per layer.

    ``fallback`` holds the mappings found during the search and must cover every benchmark.
    """
    final = budget.final()
    mappings, reports = {}, {}
    cache = {}
    for net in benchmarks:
        pairs = []
        for i, layer in enumerate(net.layers):
            key = layer.shape_key
            if key not in cache:
                old = fallback[net.name][i]
                try:
                    m, r = search_mapping(accel, layer, final, derive_seed(seed, "final", key),
                                          em=em, encoding=encoding)
                except NoFeasibleMapping:
                    m, r = old
                if old[1].edp <= r.edp:
                    m, r = old
                cache[key] = (m, r)
            pairs.append(cache[key])
        mappings[net.name] = [m for m, _ in pairs]
        reports[net.name] = [r for _, r in pairs]
    edps = [network_edp(reports[n.name], aggregation) for n in benchmarks]
    return mappings, reports, geomean(edps)


def search_accelerator(constraint: ResourceConstraint, benchmarks: Sequence[Network], budget: SearchBudget,
                       *, mode: str = "full", baseline: AcceleratorConfig | None = None,
                       em: EnergyModel = EnergyModel(), aggregation: str = "sum", workers: int = 1,
                       max_rejections: int = 10_000) -> SearchResult:
    """ES over accelerator encodings; reward is the geomean benchmark EDP.

    ``mode`` selects the ablation: ``sizing-only`` freezes the PE count,
    array shape and parallel dims to ``baseline``; ``index-encoding``
    decodes every ordering from a single index knob; ``random-baseline``
    samples uniformly with the same budget.
    """
    if not benchmarks:
        raise ValueError("need at least one benchmark")
    encoding, frozen = _mode_settings(mode, constraint, baseline)
    seed = budget.seed
    objective = _HardwareObjective(constraint, benchmarks, budget, seed, em, encoding, frozen, aggregation)
    search = evolve.random_search if mode == "random-baseline" else evolve.es_minimize
    kwargs = {} if mode == "random-baseline" else {"sigma": budget.hw_sigma}
    with _mapper(workers) as map_fn:
        res = search(objective, HW_ENCODING_SIZE, budget.hw_population, budget.hw_generations,
                     derive_seed(seed, "hw"), validity=objective.valid, max_rejections=max_rejections,
                     map_fn=map_fn, **kwargs)
    if res.x is None:
        raise NoFeasibleMapping(f"no accelerator under {constraint.name!r} can map every layer")
    accel = objective.decode(res.x)
    _, found = evaluate_accelerator(accel, benchmarks, budget, seed, em=em, encoding=encoding,
                                    aggregation=aggregation)
    mappings, reports, reward = _finalize(accel, benchmarks, budget, seed, em, encoding, aggregation, found)
    return SearchResult(accel, list(benchmarks), mappings, reports, reward, mode, aggregation, constraint,
                        history={"hw": res.history})


# ---------------------------------------------------------------- network level


class _CoSearchObjective:
    def __init__(self, hw: _HardwareObjective, cfg: NetSpaceConfig, oracle, min_accuracy: float,
                 max_rejections: int):
        self.hw, self.cfg, self.oracle = hw, cfg, oracle
        self.min_accuracy, self.max_rejections = min_accuracy, max_rejections

    def accepts(self, x) -> bool:
        return self.oracle(decode_network(x, self.cfg)) >= self.min_accuracy

    def search_network(self, accel: AcceleratorConfig):
        """Inner ES over network encodings, started from the largest candidate."""
        hw, budget = self.hw, self.hw.budget
        cache = {}

        def fitness(x):
            net = decode_network(x, self.cfg).realized
            reward, _ = evaluate_accelerator(accel, [net], budget, hw.seed, em=hw.em, encoding=hw.encoding,
                                             aggregation=hw.aggregation, cache=cache)
            return reward
        return evolve.es_minimize(fitness, self.cfg.encoding_size, budget.nas_population,
                                  budget.nas_generations, derive_seed(hw.seed, "nas"),
                                  validity=self.accepts, max_rejections=self.max_rejections,
                                  mean=np.ones(self.cfg.encoding_size), sigma=budget.nas_sigma)

    def __call__(self, x):
        res = self.search_network(self.hw.decode(x))
        return (res.fitness, 0.0) if math.isfinite(res.fitness) else (math.inf, 1.0)


def co_search(constraint: ResourceConstraint, cfg: NetSpaceConfig, oracle: Callable[[NetCandidate], float],
              min_accuracy: float, budget: SearchBudget, *, em: EnergyModel = EnergyModel(),
              aggregation: str = "sum", workers: int = 1, max_rejections: int = 10_000) -> SearchResult:
    """Joint accelerator and network search under an accuracy floor.

    Every network the inner search samples satisfies ``oracle(c) >=
    min_accuracy``; the outer reward is the EDP of the best such network.
    """
    largest = decode_network(np.ones(cfg.encoding_size), cfg)
    top = oracle(largest)
    if top < min_accuracy:
        raise InfeasibleAccuracy(f"largest candidate reaches accuracy {top:.4f} < required {min_accuracy}")
    seed = budget.seed
    hw = _HardwareObjective(constraint, (largest.realized,), budget, seed, em, "importance", None, aggregation)
    objective = _CoSearchObjective(hw, cfg, oracle, min_accuracy, max_rejections)
    with _mapper(workers) as map_fn:
        res = evolve.es_minimize(objective, HW_ENCODING_SIZE, budget.hw_population, budget.hw_generations,
                                 derive_seed(seed, "hw"), validity=hw.valid, max_rejections=max_rejections,
                                 map_fn=map_fn, sigma=budget.hw_sigma)
    if res.x is None:
        raise NoFeasibleMapping(f"no accelerator under {constraint.name!r} can map any accepted network")
    accel = hw.decode(res.x)
    inner = objective.search_network(accel)
    candidate = decode_network(inner.x, cfg)
    net = candidate.realized
    _, found = evaluate_accelerator(accel, [net], budget, seed, em=em, aggregation=aggregation)
    mappings, reports, reward = _finalize(accel, [net], budget, seed, em, "importance", aggregation, found)
    return SearchResult(accel, [net], mappings, reports, reward, "full", aggregation, constraint,
                        network=candidate, accuracy=oracle(candidate),
                        history={"hw": res.history, "nas": inner.history})


# ---------------------------------------------------------------- persistence


def reevaluate(result: SearchResult, em: EnergyModel = EnergyModel()) -> list[str]:
    """Stored reports that differ from a fresh :func:`evaluate` of the stored mappings."""
    problems = []
    for net in result.benchmarks:
        for layer, m, r in zip(net.layers, result.mappings[net.name], result.reports[net.name]):
            if evaluate(result.accelerator, m, layer, em) != r:
                problems.append(f"{net.name}/{layer.name}: stored report is stale")
    return problems


def _result_doc(result: SearchResult) -> dict:
    doc = {
        "mode": result.mode,
        "aggregation": result.aggregation,
        "accelerator": result.accelerator.to_dict(),
        "constraint": result.constraint.to_dict() if result.constraint else None,
        "geomean_edp": result.geomean_edp,
        "benchmarks": [],
    }
    for net in result.benchmarks:
        doc["benchmarks"].append({
            "network": network_to_dict(net),
            "edp": network_edp(result.reports[net.name], result.aggregation),
            "layers": [{"name": layer.name, "mapping": mapping_to_dict(m), "report": r.to_dict()}
                       for layer, m, r in zip(net.layers, result.mappings[net.name], result.reports[net.name])],
        })
    if result.network is not None:
        doc["network"] = result.network.to_dict()
        doc["accuracy"] = result.accuracy
    return doc


def save_result(result: SearchResult, out_dir: str | Path) -> list[Path]:
    """Write ``result.json``, ``reports.csv`` and ``history_<level>.csv`` files; returns their paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / "result.json", out / "reports.csv"]
    paths[0].write_text(json.dumps(_result_doc(result), indent=1, sort_keys=True) + "\n")
    with open(paths[1], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["benchmark", "layer", "latency", "energy", "edp"])
        for net in result.benchmarks:
            for layer, r in zip(net.layers, result.reports[net.name]):
                writer.writerow([net.name, layer.name, r.latency_cycles, repr(r.energy_units), repr(r.edp)])
    for level, hist in sorted(result.history.items()):
        path = out / f"history_{level}.csv"
        evolve.write_history_csv(hist, path)
        paths.append(path)
    return paths


def load_result(out_dir: str | Path) -> SearchResult:
    """Read a saved result; the geomean is recomputed from the stored reports."""
    out = Path(out_dir)
    doc = json.loads((out / "result.json").read_text())
    benchmarks, mappings, reports = [], {}, {}
    for item in doc["benchmarks"]:
        net = network_from_dict(item["network"], source=str(out / "result.json"))
        benchmarks.append(net)
        mappings[net.name] = [mapping_from_dict(layer["mapping"]) for layer in item["layers"]]
        reports[net.name] = [CostReport.from_dict(layer["report"]) for layer in item["layers"]]
    aggregation = doc.get("aggregation", "sum")
    reward = geomean([network_edp(reports[n.name], aggregation) for n in benchmarks])
    history = {p.stem.removeprefix("history_"): evolve.read_history_csv(p)
               for p in sorted(out.glob("history_*.csv"))}
    network = None
    if "network" in doc:
        nd = doc["network"]
        network = NetCandidate(nd["width_multiplier"], nd["active_blocks"], tuple(nd["reduction_ratios"]),
                               nd["image_size"], benchmarks[0])
    constraint = ResourceConstraint.from_dict(doc["constraint"]) if doc.get("constraint") else None
    return SearchResult(AcceleratorConfig.from_dict(doc["accelerator"]), benchmarks, mappings, reports,
                        reward, doc["mode"], aggregation, constraint, network, doc.get("accuracy"), history)
