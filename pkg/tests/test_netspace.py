import itertools
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from accelsearch.netspace import (NetSpaceConfig, SurrogateCoefficients, TableOracle, candidate_key,
                                  decode_network, make_divisible, space_cardinality, synthetic_accuracy)
from accelsearch.workload import network_from_dict, network_to_dict

CFG = NetSpaceConfig()
D = CFG.encoding_size


def test_encoding_size():
    assert D == 21


def test_upper_clamp():
    c = decode_network(np.ones(D))
    assert (c.width_multiplier, c.active_blocks, c.image_size) == (1.0, 18, 256)
    assert set(c.reduction_ratios) == {0.35}


def test_lower_clamp():
    c = decode_network(np.zeros(D))
    assert (c.width_multiplier, c.active_blocks, c.image_size) == (0.65, 10, 128)
    assert set(c.reduction_ratios) == {0.2}


def test_largest_is_resnet50_skeleton():
    net = decode_network(np.ones(D)).realized
    assert len(net) == 1 + 3 * 18
    stem = net.layers[0]
    assert stem.extent == (3, 64, 7, 7, 128, 128) and stem.stride == 2
    last = net.layers[-1]
    assert last.extent[1] == 2048 and last.extent[4] == 8


def test_channels_multiple_of_eight():
    for x in np.random.default_rng(0).random((50, D)):
        for layer in decode_network(x).realized:
            assert layer.extent[1] % 8 == 0


def test_make_divisible():
    assert make_divisible(64 * 0.65) == 40
    assert make_divisible(3) == 8
    assert make_divisible(2048 * 0.35) == 720


def test_cardinality():
    assert space_cardinality() >= 10 ** 9
    small = NetSpaceConfig((1.0,), 10, (0.25,), (128,))
    assert space_cardinality(small) == 1


def test_config_checks():
    with pytest.raises(ValueError):
        NetSpaceConfig(width_multipliers=())
    with pytest.raises(ValueError):
        NetSpaceConfig(max_blocks=30)


def test_wrong_length():
    with pytest.raises(ValueError):
        decode_network(np.zeros(20))


def test_maximal_accuracy_is_highest():
    top = synthetic_accuracy(decode_network(np.ones(D)))
    for x in np.random.default_rng(1).random((300, D)):
        assert synthetic_accuracy(decode_network(x)) <= top


def test_accuracy_deterministic():
    x = np.random.default_rng(2).random(D)
    assert synthetic_accuracy(decode_network(x)) == synthetic_accuracy(decode_network(x.copy()))


def test_depth_term_dominates_ratio_penalty():
    k = SurrogateCoefficients()
    assert k.depth / CFG.max_blocks > k.ratio * (1 - min(CFG.reduction_ratios))


vec = st.lists(st.floats(0, 1, allow_nan=False), min_size=D, max_size=D).map(np.array)


@settings(max_examples=1000, deadline=None)
@given(vec, vec)
def test_accuracy_monotone_componentwise(a, b):
    lo, hi = decode_network(np.minimum(a, b)), decode_network(np.maximum(a, b))
    assert synthetic_accuracy(lo) <= synthetic_accuracy(hi)


@settings(max_examples=200, deadline=None)
@given(vec)
def test_decode_total_and_realizable(x):
    c = decode_network(x)
    assert c == decode_network(x.copy())
    assert len(c.reduction_ratios) == c.active_blocks <= CFG.max_blocks
    assert network_from_dict(network_to_dict(c.realized)) == c.realized
    assert 0.0 <= synthetic_accuracy(c) <= 1.0


def test_accuracy_increases_with_each_axis():
    base = np.full(D, 0.5)
    acc = synthetic_accuracy(decode_network(base))
    for idx in (0, 1, D - 1):
        up = base.copy()
        up[idx] = 1.0
        assert synthetic_accuracy(decode_network(up)) > acc


def test_table_oracle(tmp_path):
    a, b = decode_network(np.zeros(D)), decode_network(np.ones(D))
    path = tmp_path / "acc.json"
    path.write_text(json.dumps({candidate_key(a): 0.9}))
    oracle = TableOracle.from_file(path)
    assert oracle(a) == 0.9
    assert oracle(b) == synthetic_accuracy(b)
    strict = TableOracle.from_file(path, fallback=None)
    with pytest.raises(KeyError):
        strict(b)


def test_keys_ignore_inactive_ratios():
    x = np.zeros(D)
    y = x.copy()
    y[2 + 15] = 1.0  # ratio knob of block 16, inactive at minimum depth
    assert candidate_key(decode_network(x)) == candidate_key(decode_network(y))
    keys = {candidate_key(decode_network(np.array([w, d] + [0.0] * (D - 2))))
            for w, d in itertools.product((0, 1), repeat=2)}
    assert len(keys) == 4
