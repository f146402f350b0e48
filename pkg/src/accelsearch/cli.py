"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 infeasible search,
4 cost-model oracle mismatch.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import search as S
from .costmodel import (CapacityError, EnergyModel, compare_reports, evaluate, load_energy_model,
                        simulate_reference)
from .evolve import BudgetExhausted, read_history_csv
from .hwspace import (AcceleratorConfig, InvalidDesign, ResourceConstraint, bundled_accelerator,
                      bundled_constraint, decode_hardware, load_accelerator, load_constraint, validate)
from .mapspace import MAP_ENCODING_SIZE, decode_mapping
from .netspace import NetSpaceConfig, TableOracle, synthetic_accuracy
from .workload import DATA_DIR, ConvLayer, Network, bundled_network, load_network

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_MISMATCH = 0, 2, 3, 4
COMMANDS = ("search-hw", "search-map", "co-search", "evaluate", "oracle-check", "ablation", "plots")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    constraint: str | None = None
    benchmarks: list[str] = field(default_factory=list)
    accelerator: str | None = None
    energy_model: str | None = None
    seed: int = 0
    hw_gens: int = 10
    hw_pop: int = 16
    map_gens: int = 10
    map_pop: int = 16
    nas_gens: int = 5
    nas_pop: int = 8
    final_map_gens: int = 20
    final_map_pop: int = 32
    min_accuracy: float = 0.0
    accuracy_table: str | None = None
    mode: str = "full"
    aggregation: str = "sum"
    workers: int = 1
    out: str = "out"
    instances: int = 500
    result: str | None = None

    def budget(self) -> S.SearchBudget:
        return S.SearchBudget(self.hw_gens, self.hw_pop, self.map_gens, self.map_pop, self.nas_gens,
                              self.nas_pop, self.seed, self.final_map_gens, self.final_map_pop)


# ---------------------------------------------------------------- resolving inputs


def _resolve(ref: str, what: str, loader, bundled, subdir: str):
    """``ref`` is a file path or the name of a bundled preset."""
    path = Path(ref)
    if path.exists():
        try:
            return loader(path)
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from None
    if (DATA_DIR / subdir / f"{ref}.json").exists():
        return bundled(ref)
    raise ConfigError(f"{what} file not found: {ref}")


def _constraint(cfg: RunConfig) -> ResourceConstraint:
    if not cfg.constraint:
        raise ConfigError("--constraint is required")
    return _resolve(cfg.constraint, "constraint", load_constraint, bundled_constraint, "constraints")


def _accelerator(cfg: RunConfig) -> AcceleratorConfig:
    if not cfg.accelerator:
        raise ConfigError("--accelerator is required")
    return _resolve(cfg.accelerator, "accelerator", load_accelerator, bundled_accelerator, "accelerators")


def _benchmarks(cfg: RunConfig) -> list[Network]:
    if not cfg.benchmarks:
        raise ConfigError("at least one --benchmarks entry is required")
    return [_resolve(b, "benchmark", load_network, bundled_network, "networks") for b in cfg.benchmarks]


def _energy(cfg: RunConfig) -> EnergyModel:
    if not cfg.energy_model:
        return EnergyModel()
    path = Path(cfg.energy_model)
    if not path.exists():
        raise ConfigError(f"energy-model file not found: {path}")
    try:
        return load_energy_model(path)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{path}: {exc}") from None


def _baseline(cfg: RunConfig, constraint: ResourceConstraint) -> AcceleratorConfig | None:
    if cfg.accelerator:
        return _accelerator(cfg)
    if (DATA_DIR / "accelerators" / f"{constraint.name}.json").exists():
        return bundled_accelerator(constraint.name)
    return None


# ---------------------------------------------------------------- output


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory {out} is not writable: {exc}") from None
    return out


def _write_config(cfg: RunConfig, out: Path) -> None:
    doc = asdict(cfg)
    doc.pop("out")
    (out / "run_config.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _write_metadata(out: Path, started: float) -> None:
    doc = {"finished": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "wall_seconds": round(time.time() - started, 3),
           "argv": sys.argv}
    (out / "metadata.json").write_text(json.dumps(doc, indent=1) + "\n")


def _utilization(result: S.SearchResult) -> float:
    macs = sum(r.macs for reps in result.reports.values() for r in reps)
    slots = sum(r.compute_cycles for reps in result.reports.values() for r in reps) * result.accelerator.lanes
    return macs / slots


def _summary(result: S.SearchResult, out: Path) -> str:
    a = result.accelerator
    lines = [f"best geomean EDP: {result.geomean_edp:.6g}",
             f"accelerator: {a.describe()}",
             f"array shape: {'x'.join(map(str, a.array_size))}   parallel dims: "
             f"{', '.join(d.name for d in a.parallel_dims)}",
             f"utilization: {_utilization(result):.3f}"]
    for name, edp in result.benchmark_edps().items():
        lines.append(f"  {name}: EDP {edp:.6g}")
    if result.network is not None:
        n = result.network
        lines.append(f"network: width {n.width_multiplier}, {n.active_blocks} blocks, image {n.image_size}, "
                     f"accuracy {result.accuracy:.4f}")
    lines.append(f"results in {out}")
    return "\n".join(lines)


# ---------------------------------------------------------------- plot data


def _history_rows(path: Path):
    return read_history_csv(path) if path.exists() else []


def _mode_dirs(result_dir: Path) -> dict[str, Path]:
    found = {}
    if (result_dir / "result.json").exists():
        mode = json.loads((result_dir / "result.json").read_text())["mode"]
        found[mode] = result_dir
    for sub in sorted(result_dir.iterdir()):
        if sub.is_dir() and (sub / "result.json").exists():
            found.setdefault(json.loads((sub / "result.json").read_text())["mode"], sub)
    return found


def _fmt(v) -> str:
    return "" if v is None else repr(v)


def emit_plots(result_dir: str | Path) -> list[Path]:
    """Write ``learning_curve.csv`` and ``comparison.csv`` from saved results."""
    root = Path(result_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"result directory not found: {root}")
    runs = _mode_dirs(root)
    if not runs:
        raise FileNotFoundError(f"no result.json under {root}")
    es_mode = next((m for m in ("full", "sizing-only", "index-encoding") if m in runs), None)
    es = _history_rows(runs[es_mode] / "history_hw.csv") if es_mode else []
    rnd = _history_rows(runs["random-baseline"] / "history_hw.csv") if "random-baseline" in runs else []
    written = [root / "learning_curve.csv", root / "comparison.csv"]
    with open(written[0], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["generation", "es_mean_edp", "es_min_edp", "random_mean_edp", "random_min_edp"])
        for g in range(max(len(es), len(rnd))):
            e = es[g] if g < len(es) else None
            r = rnd[g] if g < len(rnd) else None
            w.writerow([g, _fmt(e and e.fitness_mean), _fmt(e and e.fitness_min),
                        _fmt(r and r.fitness_mean), _fmt(r and r.fitness_min)])
    modes = [m for m in S.MODES if m in runs]
    per_mode = {m: S.load_result(runs[m]).benchmark_edps() for m in modes}
    names = list(next(iter(per_mode.values())))
    with open(written[1], "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["benchmark"] + modes)
        for name in names:
            w.writerow([name] + [_fmt(per_mode[m].get(name)) for m in modes])
    return written


# ---------------------------------------------------------------- commands


def _save(result: S.SearchResult, cfg: RunConfig, out: Path) -> None:
    S.save_result(result, out)
    _write_config(cfg, out)
    print(_summary(result, out))


def cmd_search_hw(cfg: RunConfig) -> int:
    constraint, benchmarks, em = _constraint(cfg), _benchmarks(cfg), _energy(cfg)
    baseline = _baseline(cfg, constraint) if cfg.mode == "sizing-only" else None
    if cfg.mode == "sizing-only" and baseline is None:
        raise ConfigError(f"sizing-only mode needs --accelerator (no preset named {constraint.name!r})")
    out = _out_dir(cfg)
    result = S.search_accelerator(constraint, benchmarks, cfg.budget(), mode=cfg.mode, baseline=baseline,
                                  em=em, aggregation=cfg.aggregation, workers=cfg.workers)
    _save(result, cfg, out)
    emit_plots(out)
    return EXIT_OK


def cmd_ablation(cfg: RunConfig) -> int:
    """Run the full search and every ablation mode on the same seed schedule."""
    constraint, benchmarks, em = _constraint(cfg), _benchmarks(cfg), _energy(cfg)
    baseline = _baseline(cfg, constraint)
    modes = S.MODES if baseline is not None else tuple(m for m in S.MODES if m != "sizing-only")
    if cfg.mode != "full":
        modes = ("full", cfg.mode)
    out = _out_dir(cfg)
    _write_config(cfg, out)
    for mode in modes:
        result = S.search_accelerator(constraint, benchmarks, cfg.budget(), mode=mode, baseline=baseline,
                                      em=em, aggregation=cfg.aggregation, workers=cfg.workers)
        S.save_result(result, out / mode)
        print(f"[{mode}] geomean EDP {result.geomean_edp:.6g}  {result.accelerator.describe()}")
    emit_plots(out)
    print(f"results in {out}")
    return EXIT_OK


def cmd_search_map(cfg: RunConfig) -> int:
    accel, benchmarks, em = _accelerator(cfg), _benchmarks(cfg), _energy(cfg)
    out = _out_dir(cfg)
    encoding = "index" if cfg.mode == "index-encoding" else "importance"
    reward, found = S.evaluate_accelerator(accel, benchmarks, cfg.budget(), cfg.seed, em=em,
                                           encoding=encoding, aggregation=cfg.aggregation)
    if not math.isfinite(reward):
        raise S.NoFeasibleMapping(f"some layer has no mapping that fits {accel.describe()}")
    result = S.SearchResult(accel, benchmarks, {n: [m for m, _ in p] for n, p in found.items()},
                            {n: [r for _, r in p] for n, p in found.items()}, reward, cfg.mode,
                            cfg.aggregation)
    _save(result, cfg, out)
    return EXIT_OK


def cmd_evaluate(cfg: RunConfig) -> int:
    """Re-evaluate a saved result (``--result``), or map benchmarks onto ``--accelerator``."""
    if cfg.result:
        path = Path(cfg.result)
        if not (path / "result.json").exists():
            raise ConfigError(f"result file not found: {path / 'result.json'}")
        problems = S.reevaluate(S.load_result(path), _energy(cfg))
        for p in problems:
            print(p)
        print(f"{len(problems)} stale reports")
        return EXIT_MISMATCH if problems else EXIT_OK
    return cmd_search_map(cfg)


ORACLE_LAYERS = (
    ConvLayer.make("conv3x3", 8, 8, 3, 3, 8, 8),
    ConvLayer.make("pointwise_s2", 12, 6, 1, 1, 7, 5, stride=2),
    ConvLayer.make("depthwise_s2", 1, 1, 3, 3, 6, 6, stride=2, groups=8, kind="dwconv"),
)


def oracle_check(instances: int, seed: int, em: EnergyModel = EnergyModel()) -> tuple[int, int, list[str]]:
    """Compare :func:`evaluate` with :func:`simulate_reference` on random pairs.

    Each layer gets ``instances`` pairs whose mapping fits the buffers.
    Returns ``(compared, mismatches, first few diffs)``.
    """
    rng = np.random.default_rng(seed)
    constraint = ResourceConstraint("oracle", 64, 1 << 16, 16)
    compared, mismatched, notes = 0, 0, []
    for layer in ORACLE_LAYERS:
        done = 0
        while done < instances:
            try:
                accel = decode_hardware(rng.random(14), constraint)
            except InvalidDesign:
                continue
            if validate(accel, constraint):
                continue
            mapping = decode_mapping(rng.random(MAP_ENCODING_SIZE), layer, accel)
            try:
                fast = evaluate(accel, mapping, layer, em)
            except CapacityError:
                continue
            diffs = compare_reports(fast, simulate_reference(accel, mapping, layer, em))
            done += 1
            compared += 1
            if diffs:
                mismatched += 1
                if len(notes) < 5:
                    notes.append(f"{layer.name} {accel.describe()} {mapping.describe()}: {diffs[0]}")
    return compared, mismatched, notes


def cmd_oracle_check(cfg: RunConfig) -> int:
    compared, mismatched, notes = oracle_check(cfg.instances, cfg.seed, _energy(cfg))
    for n in notes:
        print(n)
    print(f"{compared} instances, {mismatched} mismatches")
    return EXIT_MISMATCH if mismatched else EXIT_OK


def cmd_co_search(cfg: RunConfig) -> int:
    constraint, em = _constraint(cfg), _energy(cfg)
    oracle = synthetic_accuracy
    if cfg.accuracy_table:
        path = Path(cfg.accuracy_table)
        if not path.exists():
            raise ConfigError(f"accuracy-table file not found: {path}")
        try:
            oracle = TableOracle.from_file(path)
        except ValueError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    out = _out_dir(cfg)
    result = S.co_search(constraint, NetSpaceConfig(), oracle, cfg.min_accuracy, cfg.budget(), em=em,
                         aggregation=cfg.aggregation, workers=cfg.workers)
    _save(result, cfg, out)
    return EXIT_OK


def cmd_plots(cfg: RunConfig) -> int:
    if not cfg.result:
        raise ConfigError("--result is required")
    try:
        for p in emit_plots(cfg.result):
            print(p)
    except FileNotFoundError as exc:
        raise ConfigError(str(exc)) from None
    return EXIT_OK


HANDLERS = {"search-hw": cmd_search_hw, "search-map": cmd_search_map, "co-search": cmd_co_search,
            "evaluate": cmd_evaluate, "oracle-check": cmd_oracle_check, "ablation": cmd_ablation,
            "plots": cmd_plots}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="accelsearch", description=__doc__.splitlines()[0],
                                epilog="exit codes: 0 ok, 2 config error, 3 infeasible search, "
                                       "4 oracle mismatch")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--constraint", help="constraint JSON file or preset name (e.g. eyeriss)")
    p.add_argument("--benchmarks", action="append", default=[],
                   help="network JSON file or bundled name; repeatable")
    p.add_argument("--accelerator", help="accelerator JSON file or preset name")
    p.add_argument("--energy-model", help="energy model JSON file")
    p.add_argument("--seed", type=int, default=None, help="run seed (default: $NAAS_SEED or 0)")
    for flag, default in (("hw-gens", 10), ("hw-pop", 16), ("map-gens", 10), ("map-pop", 16),
                          ("nas-gens", 5), ("nas-pop", 8), ("final-map-gens", 20), ("final-map-pop", 32)):
        p.add_argument(f"--{flag}", type=int, default=default)
    p.add_argument("--min-accuracy", type=float, default=0.0)
    p.add_argument("--accuracy-table", help="JSON object mapping candidate key to accuracy")
    p.add_argument("--mode", choices=S.MODES, default="full")
    p.add_argument("--aggregation", choices=S.AGGREGATIONS, default="sum",
                   help="network EDP: sum of layer EDPs, or total latency x total energy")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--instances", type=int, default=500, help="oracle-check pairs per layer")
    p.add_argument("--result", help="saved result directory (evaluate, plots)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def parse_config(argv=None) -> tuple[RunConfig, bool]:
    args = build_parser().parse_args(argv)
    seed = args.seed
    if seed is None:
        env = os.environ.get("NAAS_SEED")
        try:
            seed = int(env) if env else 0
        except ValueError:
            raise ConfigError(f"NAAS_SEED must be an integer, got {env!r}") from None
    cfg = RunConfig(args.command, args.constraint, args.benchmarks, args.accelerator, args.energy_model, seed,
                    args.hw_gens, args.hw_pop, args.map_gens, args.map_pop, args.nas_gens, args.nas_pop,
                    args.final_map_gens, args.final_map_pop, args.min_accuracy, args.accuracy_table, args.mode,
                    args.aggregation, args.workers, args.out, args.instances, args.result)
    return cfg, args.verbose


def run(cfg: RunConfig) -> int:
    started = time.time()
    try:
        status = HANDLERS[cfg.command](cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (S.NoFeasibleMapping, S.InfeasibleAccuracy, BudgetExhausted) as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ValueError as exc:  # budget or constraint field checks
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if cfg.command not in ("oracle-check", "plots") and not (cfg.command == "evaluate" and cfg.result):
        _write_metadata(Path(cfg.out), started)
    return status


def main(argv=None) -> int:
    try:
        cfg, verbose = parse_config(argv)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(message)s")
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
