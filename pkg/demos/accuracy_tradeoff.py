"""Trade network accuracy for hardware efficiency.

Co-searches a ResNet-style network and an accelerator at several minimum
accuracies.  The accuracy oracle is the synthetic surrogate, so the
numbers illustrate the trend rather than any trained model.
"""
import argparse

import numpy as np

from accelsearch.hwspace import bundled_constraint
from accelsearch.netspace import NetSpaceConfig, decode_network, synthetic_accuracy
from accelsearch.search import SearchBudget, co_search

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--constraint", default="eyeriss")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--steps", type=int, default=3)
    args = parser.parse_args()

    cfg = NetSpaceConfig()
    lo = synthetic_accuracy(decode_network(np.zeros(cfg.encoding_size), cfg))
    hi = synthetic_accuracy(decode_network(np.ones(cfg.encoding_size), cfg))
    budget = SearchBudget(hw_generations=2, hw_population=4, map_generations=3, map_population=8,
                          nas_generations=4, nas_population=8, final_map_generations=3,
                          final_map_population=8, seed=args.seed)
    print(f"surrogate accuracy spans {lo:.3f} .. {hi:.3f}")
    for th in np.linspace(0.0, hi - 0.01, args.steps):
        res = co_search(bundled_constraint(args.constraint), cfg, synthetic_accuracy, float(th), budget)
        n = res.network
        print(f"min accuracy {th:.3f}: got {res.accuracy:.3f}, EDP {res.geomean_edp:.4g}, "
              f"width {n.width_multiplier}, {n.active_blocks} blocks, image {n.image_size}")
