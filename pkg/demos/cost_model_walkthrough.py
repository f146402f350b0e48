"""Walk one convolution through the cost model.

Decodes a handful of mapping vectors for the second MobileNetV2 layer on
the Eyeriss-like preset, prints the loop nest of the cheapest one, and
checks every report against the brute-force reference simulator.  The
reference is slow, so only a small toy layer is simulated.
"""
import argparse

import numpy as np

from accelsearch.costmodel import CapacityError, compare_reports, evaluate, simulate_reference
from accelsearch.hwspace import bundled_accelerator
from accelsearch.mapspace import MAP_ENCODING_SIZE, decode_mapping, format_loop_nest
from accelsearch.workload import ConvLayer, bundled_network

if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--samples", type=int, default=200)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    accel = bundled_accelerator("eyeriss")
    layer = bundled_network("mobilenetv2").layers[1]
    rng = np.random.default_rng(args.seed)

    best = None
    infeasible = 0
    for _ in range(args.samples):
        m = decode_mapping(rng.random(MAP_ENCODING_SIZE), layer, accel)
        try:
            r = evaluate(accel, m, layer)
        except CapacityError:
            infeasible += 1
            continue
        if best is None or r.edp < best[1].edp:
            best = (m, r)
    print(f"{layer.name}: {args.samples} random mappings, {infeasible} over capacity")
    if best is not None:
        m, r = best
        print(f"best EDP {r.edp:.4g}  latency {r.latency_cycles}  energy {r.energy_units:.4g}  "
              f"utilization {r.utilization:.2f}")
        print(format_loop_nest(m, layer, accel))

    # small enough for the reference simulator
    toy = ConvLayer.make("toy", 8, 8, 3, 3, 6, 6)
    checked = mismatched = 0
    for _ in range(20):
        m = decode_mapping(rng.random(MAP_ENCODING_SIZE), toy, accel)
        try:
            fast = evaluate(accel, m, toy)
        except CapacityError:
            continue
        checked += 1
        mismatched += bool(compare_reports(fast, simulate_reference(accel, m, toy)))
    print(f"reference check on {toy.name}: {checked} mappings, {mismatched} mismatches")
