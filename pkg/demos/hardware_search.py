"""Search an accelerator for two benchmarks and compare with the ablations.

Runs the nested hardware/mapping search with a small budget under one
resource constraint and prints how each search mode fares against the
hand-designed preset it starts from.
"""
import argparse

from accelsearch.hwspace import bundled_accelerator, bundled_constraint
from accelsearch.search import MODES, SearchBudget, evaluate_accelerator, search_accelerator
from accelsearch.workload import bundled_network

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--constraint", default="eyeriss")
    parser.add_argument("--benchmarks", nargs="+", default=["smoke"])
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--hw-gens", type=int, default=5)
    args = parser.parse_args()

    constraint = bundled_constraint(args.constraint)
    baseline = bundled_accelerator(args.constraint)
    nets = [bundled_network(n) for n in args.benchmarks]
    budget = SearchBudget(hw_generations=args.hw_gens, seed=args.seed)

    ref, _ = evaluate_accelerator(baseline, nets, budget)
    print(f"{'preset':>16}: geomean EDP {ref:.4g}")
    for mode in MODES:
        res = search_accelerator(constraint, nets, budget, mode=mode, baseline=baseline)
        a = res.accelerator
        print(f"{mode:>16}: geomean EDP {res.geomean_edp:.4g} ({ref / res.geomean_edp:.2f}x)  "
              f"{a.num_pes} PEs, array {a.array_size} over {[d.name for d in a.parallel_dims]}")
