import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accelsearch.costmodel import evaluate
from accelsearch.hwspace import AcceleratorConfig, InvalidDesign, bundled_constraint, decode_hardware
from accelsearch.mapspace import (MAP_ENCODING_SIZE, TILED_DIMS, Mapping, check_mapping, decode_mapping,
                                  format_loop_nest, mapping_from_dict, mapping_to_dict, order_from_importance,
                                  trip_counts)
from accelsearch.workload import DIMS, ConvLayer, Dim

C, K, R, S, XP, YP = DIMS


def enc(l2_imp=(0.5,) * 6, l2_ratio=(1.0,) * 4, l1_imp=(0.5,) * 6, l1_ratio=(1.0,) * 4, pe_imp=(0.5,) * 6):
    return np.array([*l2_imp, *l2_ratio, *l1_imp, *l1_ratio, *pe_imp])


LAYER = ConvLayer.make("l", 64, 32, 3, 3, 14, 14)
ARRAY = AcceleratorConfig(64, 1024, 1 << 16, 16, (8, 8), (K, XP))


def test_order_figure_example():
    order = order_from_importance({C: 5, R: 5, K: 3, XP: 2, YP: 4, S: 1})
    assert order == [C, R, YP, K, XP, S]
    assert order[-1] is S


def test_order_ties_canonical():
    assert order_from_importance([0.7] * 6) == list(DIMS)


@given(st.lists(st.floats(0, 1, allow_nan=False), min_size=6, max_size=6, unique=True))
def test_reverse_importance_reverses_order(values):
    assert order_from_importance([-v for v in values]) == order_from_importance(values)[::-1]


def test_untiled_decode():
    m = decode_mapping(enc(), LAYER, ARRAY)
    assert m.l2_tile == LAYER.extent and m.l1_tile == LAYER.extent
    t = trip_counts(m, LAYER, ARRAY)
    assert t.l2 == (1,) * 6 and t.l1 == (1,) * 6


def test_zero_ratios_feed_lanes():
    m = decode_mapping(enc(l2_ratio=(0,) * 4, l1_ratio=(0,) * 4), LAYER, ARRAY)
    assert m.l2_tile == (1, 1, 3, 3, 1, 1)
    assert m.l1_tile == m.l2_tile  # lane minimum is capped by the L2 tile of 1
    m = decode_mapping(enc(l2_ratio=(1, 1, 1, 1), l1_ratio=(0,) * 4), LAYER, ARRAY)
    assert m.l1_tile == (1, 8, 3, 3, 8, 1)
    assert set(m.fed) == {K, XP}


def test_ratio_arithmetic():
    m = decode_mapping(enc(l2_ratio=(0.25, 1, 1, 1)), LAYER, ARRAY)
    assert m.l2_tile[C] == 16
    assert trip_counts(m, LAYER, ARRAY).l2[C] == 4


def test_round_half_up():
    layer = ConvLayer.make("odd", 6, 1, 1, 1, 1, 1)
    m = decode_mapping(enc(l2_ratio=(0.25, 1, 1, 1)), layer, ARRAY)
    assert m.l2_tile[C] == 2  # 1.5 rounds up


def test_spatial_residue():
    accel = AcceleratorConfig(16, 4096, 1 << 16, 16, (16,), (K,))
    layer = ConvLayer.make("k20", 1, 20, 1, 1, 1, 1)
    m = decode_mapping(enc(), layer, accel)
    t = trip_counts(m, layer, accel)
    assert t.per_pe[K] == 2 and t.l1_array[K] == 32
    assert evaluate(accel, m, layer).utilization == pytest.approx(20 / 32)


def test_index_encoding_orders():
    first = decode_mapping(enc(l2_imp=(0,) * 6), LAYER, ARRAY, encoding="index")
    last = decode_mapping(enc(l2_imp=(1,) * 6), LAYER, ARRAY, encoding="index")
    assert first.l2_order == tuple(DIMS)
    assert last.l2_order == tuple(reversed(DIMS))


def test_wrong_length():
    with pytest.raises(ValueError):
        decode_mapping(np.zeros(25), LAYER, ARRAY)


layers = st.builds(lambda ext, stride: ConvLayer("h", ext, stride),
                   st.tuples(st.integers(1, 40), st.integers(1, 40), st.integers(1, 5), st.integers(1, 5),
                             st.integers(1, 30), st.integers(1, 30)), st.integers(1, 2))
vectors = st.lists(st.floats(0, 1, allow_nan=False), min_size=MAP_ENCODING_SIZE,
                   max_size=MAP_ENCODING_SIZE).map(np.array)
hw = st.lists(st.floats(0, 1, allow_nan=False), min_size=14, max_size=14).map(np.array)


def _accel(vec):
    try:
        return decode_hardware(vec, bundled_constraint("nvdla256"))
    except InvalidDesign:
        return ARRAY


@settings(max_examples=300)
@given(vectors, layers, hw)
def test_decode_total_and_valid(vec, layer, hvec):
    accel = _accel(hvec)
    m = decode_mapping(vec, layer, accel)
    assert check_mapping(m, layer) == []
    t = trip_counts(m, layer, accel)
    for d in DIMS:
        assert t.l2[d] * m.l2_tile[d] >= layer.extent[d] > (t.l2[d] - 1) * m.l2_tile[d]
        assert t.l1[d] * m.l1_tile[d] >= m.l2_tile[d] > (t.l1[d] - 1) * m.l1_tile[d]
    for d, a in zip(accel.parallel_dims, accel.array_size):
        assert m.l1_tile[d] >= min(a, m.l2_tile[d])
        assert t.per_pe[d] * a >= m.l1_tile[d]


def test_check_mapping_flags_problems():
    bad = Mapping((C, C, R, S, XP, YP), (64, 32, 2, 3, 14, 14), tuple(DIMS), (65, 32, 3, 3, 14, 14), tuple(DIMS))
    problems = " ".join(check_mapping(bad, LAYER))
    assert "not a permutation" in problems and "tile bounds" in problems and "R must not be tiled" in problems


def test_dict_roundtrip():
    m = decode_mapping(np.linspace(0, 1, MAP_ENCODING_SIZE), LAYER, ARRAY)
    assert mapping_from_dict(mapping_to_dict(m)) == m
    assert set(mapping_to_dict(m)) >= {"l2", "l1", "pe"}


def test_loop_nest_listing():
    m = decode_mapping(enc(l2_ratio=(0.25, 1, 1, 1)), LAYER, ARRAY)
    text = format_loop_nest(m, LAYER, ARRAY)
    assert "for c2 in range(4)" in text
    assert "parallel_for k_lane in range(8)" in text
    assert text.rstrip().endswith("mac()")


def test_tiled_dims():
    assert TILED_DIMS == (Dim.C, Dim.K, Dim.XP, Dim.YP)
