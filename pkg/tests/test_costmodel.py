import dataclasses
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accelsearch import costmodel
from accelsearch.costmodel import (CapacityError, CostReport, EnergyModel, OracleGuardError, TensorKind,
                                   compare_reports, evaluate, footprint, load_energy_model,
                                   refetch_multiplier, simulate_reference)
from accelsearch.hwspace import AcceleratorConfig, InvalidDesign, ResourceConstraint, decode_hardware
from accelsearch.mapspace import MAP_ENCODING_SIZE, Mapping, decode_mapping
from accelsearch.workload import DIMS, ConvLayer, total_macs

C, K, R, S, XP, YP = DIMS
IN, W, OUT = TensorKind.INPUT, TensorKind.WEIGHT, TensorKind.OUTPUT
BIG = dict(l1_bytes=1 << 20, l2_bytes=1 << 24, bandwidth=64)


def untiled(layer):
    return Mapping(tuple(DIMS), layer.extent, tuple(DIMS), layer.extent, tuple(DIMS))


def test_footprint_examples():
    tile = {C: 16, K: 8, XP: 4, YP: 4}
    assert (footprint(W, tile), footprint(OUT, tile), footprint(IN, tile)) == (128, 128, 256)
    assert all(footprint(k, (1,) * 6) == 1 for k in TensorKind)
    assert footprint(IN, {C: 4, R: 3, S: 3, XP: 8, YP: 8}, stride=2) == 1156


def test_footprint_matches_enumeration():
    # the simulator counts the bounding window of the coordinates MACs touch
    assert costmodel._touched_footprint(IN, (4, 1, 3, 3, 8, 8), 2) == 1156


def test_refetch_examples():
    assert all(refetch_multiplier(DIMS, (1,) * 6, k) == 1 for k in TensorKind)
    assert refetch_multiplier([K, C, R, S, XP, YP], {K: 4, C: 8}, W) == 32
    assert refetch_multiplier([XP, C, K, R, S, YP], {XP: 2, C: 3, K: 5}, OUT) == 30
    assert refetch_multiplier([XP, K, C, R, S, YP], {XP: 2, C: 3, K: 5}, OUT) == 10


def test_refetch_examples_against_simulator():
    layer = ConvLayer.make("o", 3, 5, 1, 1, 2, 1)
    accel = AcceleratorConfig(1, **BIG, array_size=(1,), parallel_dims=(R,))
    tiles = (1, 1, 1, 1, 1, 1)
    for order, visits in (((XP, C, K, R, S, YP), 30), ((XP, K, C, R, S, YP), 10)):
        m = Mapping(order, tiles, tuple(DIMS), tiles, tuple(DIMS))
        ref = simulate_reference(accel, m, layer)
        distinct = 10
        assert ref.accesses["dram"]["output"] == 2 * visits - distinct
        assert ref == evaluate(accel, m, layer)


def test_single_pe_untiled(tiny_layer, single_pe):
    rep = evaluate(single_pe, untiled(tiny_layer), tiny_layer)
    assert rep.compute_cycles == 16 == total_macs(tiny_layer)
    assert rep == simulate_reference(single_pe, untiled(tiny_layer), tiny_layer)


def test_two_lanes_over_k(tiny_layer):
    accel = AcceleratorConfig(2, **BIG, array_size=(2,), parallel_dims=(K,))
    rep = evaluate(accel, untiled(tiny_layer), tiny_layer)
    assert rep.compute_cycles == 8
    assert rep.utilization == 1.0


def test_output_spill_matches_reference():
    layer = ConvLayer.make("spill", 4, 4, 3, 3, 4, 4)
    accel = AcceleratorConfig(8, 4096, 1 << 16, 8, (2, 2), (K, XP))
    tile = (2, 2, 3, 3, 4, 4)  # C outside K: output tiles revisited
    m = Mapping((C, K, R, S, XP, YP), tile, tuple(DIMS), tile, tuple(DIMS))
    fast, ref = evaluate(accel, m, layer), simulate_reference(accel, m, layer)
    assert fast.accesses["dram"]["output"] == ref.accesses["dram"]["output"] == 3 * 64
    assert compare_reports(fast, ref) == []


def test_report_identities():
    layer = ConvLayer.make("l", 8, 8, 3, 3, 8, 8)
    accel = AcceleratorConfig(16, 2048, 1 << 15, 4, (4, 4), (C, K))
    m = decode_mapping(np.full(MAP_ENCODING_SIZE, 0.5), layer, accel)
    rep = evaluate(accel, m, layer)
    assert rep.edp == rep.latency_cycles * rep.energy_units
    assert rep.latency_cycles == max(rep.compute_cycles, rep.memory_cycles)
    assert 0 < rep.utilization <= 1
    assert sum(rep.accesses["l1"].values()) == 3 * total_macs(layer)


def test_capacity_error_names_buffer():
    layer = ConvLayer.make("big", 64, 64, 3, 3, 16, 16)
    accel = AcceleratorConfig(8, 16, 1 << 20, 8, (8,), (K,))
    with pytest.raises(CapacityError) as err:
        evaluate(accel, untiled(layer), layer)
    assert err.value.buffer == "L1" and err.value.violation > 0
    accel = AcceleratorConfig(8, 1 << 20, 16, 8, (8,), (K,))
    with pytest.raises(CapacityError, match="L2"):
        evaluate(accel, untiled(layer), layer)


def test_oracle_guard():
    layer = ConvLayer.make("huge", 256, 256, 3, 3, 56, 56)
    with pytest.raises(OracleGuardError):
        simulate_reference(AcceleratorConfig(8, **BIG, array_size=(8,), parallel_dims=(K,)),
                           untiled(layer), layer)


def test_groups_scale_counts():
    accel = AcceleratorConfig(4, 4096, 1 << 16, 8, (2,), (XP,))
    one = ConvLayer.make("g1", 1, 1, 3, 3, 6, 6)
    many = ConvLayer.make("g8", 1, 1, 3, 3, 6, 6, groups=8, kind="dwconv")
    a, b = evaluate(accel, untiled(one), one), evaluate(accel, untiled(many), many)
    assert b.compute_cycles == 8 * a.compute_cycles
    assert b.accesses["dram"]["input"] == 8 * a.accesses["dram"]["input"]
    assert b == simulate_reference(accel, untiled(many), many)


def test_energy_model_file(tmp_path):
    path = tmp_path / "em.json"
    path.write_text(json.dumps({"name": "x", "e_dram": 100.0}))
    assert load_energy_model(path) == EnergyModel(e_dram=100.0)
    path.write_text(json.dumps({"e_sram": 1.0}))
    with pytest.raises(ValueError, match="e_sram"):
        load_energy_model(path)
    with pytest.raises(ValueError, match="e_l1"):
        EnergyModel(e_l1=0)


def test_report_dict_roundtrip():
    layer = ConvLayer.make("l", 4, 4, 3, 3, 4, 4)
    accel = AcceleratorConfig(4, 4096, 1 << 16, 8, (4,), (K,))
    rep = evaluate(accel, untiled(layer), layer)
    doc = json.loads(json.dumps(rep.to_dict()))
    assert CostReport.from_dict(doc) == rep
    assert "roofline" in doc["latency_model"]


# ---------------------------------------------------------------- properties

SMALL = ResourceConstraint("small", 32, 1 << 15, 16)
hw_vec = st.lists(st.floats(0, 1, allow_nan=False), min_size=14, max_size=14)
map_vec = st.lists(st.floats(0, 1, allow_nan=False), min_size=MAP_ENCODING_SIZE, max_size=MAP_ENCODING_SIZE)
small_layers = st.builds(
    lambda c, k, r, s, x, y, stride, g: ConvLayer("p", (c, k, r, s, x, y), stride, g),
    st.integers(1, 8), st.integers(1, 8), st.integers(1, 3), st.integers(1, 3),
    st.integers(1, 8), st.integers(1, 8), st.integers(1, 2), st.integers(1, 2))


def _pair(hv, mv, layer):
    try:
        accel = decode_hardware(np.array(hv), SMALL)
    except InvalidDesign:
        return None
    return accel, decode_mapping(np.array(mv), layer, accel)


@settings(max_examples=150, deadline=None)
@given(hw_vec, map_vec, small_layers)
def test_evaluate_matches_reference(hv, mv, layer):
    pair = _pair(hv, mv, layer)
    if pair is None:
        return
    accel, m = pair
    try:
        fast = evaluate(accel, m, layer)
    except CapacityError as exc:
        with pytest.raises(CapacityError) as again:
            simulate_reference(accel, m, layer)
        assert again.value.buffer == exc.buffer
        return
    assert compare_reports(fast, simulate_reference(accel, m, layer)) == []


@settings(max_examples=150, deadline=None)
@given(hw_vec, map_vec, small_layers, st.integers(1, 64), st.floats(1, 1000))
def test_bandwidth_and_dram_energy_monotone(hv, mv, layer, extra_bw, extra_e):
    pair = _pair(hv, mv, layer)
    if pair is None:
        return
    accel, m = pair
    try:
        base = evaluate(accel, m, layer)
    except CapacityError:
        return
    faster = evaluate(dataclasses.replace(accel, bandwidth=accel.bandwidth + extra_bw), m, layer)
    assert faster.latency_cycles <= base.latency_cycles
    costly = evaluate(accel, m, layer, EnergyModel(e_dram=200.0 + extra_e))
    assert costly.energy_units >= base.energy_units


@settings(max_examples=200)
@given(st.permutations(list(DIMS)), st.lists(st.integers(1, 4), min_size=6, max_size=6),
       st.sampled_from(list(TensorKind)), st.randoms(use_true_random=False))
def test_inner_irrelevant_loops_are_free(order, trips, kind, rnd):
    rel = kind.relevant
    inner = max(i for i, d in enumerate(order) if d in rel)
    # shuffling the irrelevant loops inside the innermost relevant loop changes nothing
    tail = order[inner + 1:]
    rnd.shuffle(tail)
    assert refetch_multiplier(order[:inner + 1] + tail, trips, kind) == refetch_multiplier(order, trips, kind)
    # pulling an outer irrelevant loop inside never adds refetches
    for d in [d for d in order[:inner] if d not in rel]:
        moved = [x for x in order if x != d] + [d]
        assert refetch_multiplier(moved, trips, kind) <= refetch_multiplier(order, trips, kind)


def test_full_utilization_when_lanes_divide():
    layer = ConvLayer.make("div", 8, 16, 1, 1, 8, 8)
    accel = AcceleratorConfig(32, **BIG, array_size=(4, 8), parallel_dims=(C, K))
    rep = evaluate(accel, untiled(layer), layer)
    assert rep.utilization == 1.0 and rep.compute_cycles >= rep.memory_cycles


# ---------------------------------------------------------------- mutation


def test_oracle_detects_corrupted_refetch(monkeypatch):
    real = costmodel.refetch_multiplier
    monkeypatch.setattr(costmodel, "refetch_multiplier", lambda o, t, k: real(o, t, k) + 1)
    rng = np.random.default_rng(5)
    layer = ConvLayer.make("m", 8, 8, 3, 3, 8, 8)
    mismatched = 0
    for _ in range(40):
        pair = _pair(rng.random(14), rng.random(MAP_ENCODING_SIZE), layer)
        if pair is None:
            continue
        try:
            fast = evaluate(*pair, layer)
        except CapacityError:
            continue
        mismatched += bool(compare_reports(fast, simulate_reference(*pair, layer)))
    assert mismatched > 0
