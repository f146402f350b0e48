import json
import logging

import pytest
from hypothesis import given, strategies as st

from accelsearch.workload import (ConvLayer, Dim, Network, NetworkFormatError, bundled_network,
                                  bundled_network_names, dump_network, load_network, network_from_dict,
                                  total_macs)


def _write(tmp_path, doc, name="net.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc, indent=1))
    return path


def test_single_conv_file(tmp_path):
    path = _write(tmp_path, {"name": "one", "layers": [
        {"name": "c1", "type": "conv", "C": 64, "K": 64, "R": 3, "S": 3, "Xp": 56, "Yp": 56, "stride": 1}]})
    net = load_network(path)
    assert len(net) == 1
    layer = net.layers[0]
    assert layer.extent == (64, 64, 3, 3, 56, 56)
    assert layer.stride == 1 and layer.groups == 1


def test_zero_extent_names_layer_and_field(tmp_path):
    path = _write(tmp_path, {"layers": [
        {"name": "bad", "C": 0, "K": 4, "R": 1, "S": 1, "Xp": 2, "Yp": 2}]})
    with pytest.raises(NetworkFormatError, match=r"layers\[0\].*bad.*field C"):
        load_network(path)


def test_syntax_error_has_line_and_column(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text('{"layers": [\n  {"C": 1,,}\n]}')
    with pytest.raises(NetworkFormatError, match=r"broken\.json:2:\d+"):
        load_network(path)


def test_missing_field(tmp_path):
    path = _write(tmp_path, {"layers": [{"name": "x", "C": 1, "K": 1, "R": 1, "S": 1, "Xp": 1}]})
    with pytest.raises(NetworkFormatError, match="missing field Yp"):
        load_network(path)


def test_non_conv_layers_skipped_with_warning(tmp_path, caplog):
    caplog.set_level(logging.WARNING, logger="accelsearch.workload")
    path = _write(tmp_path, {"layers": [
        {"name": "p", "type": "pool"},
        {"name": "c", "C": 2, "K": 2, "R": 1, "S": 1, "Xp": 2, "Yp": 2}]})
    net = load_network(path)
    assert [layer.name for layer in net] == ["c"]
    assert "skipping non-conv layer" in caplog.text


def test_only_non_conv_is_empty_network(tmp_path):
    path = _write(tmp_path, {"layers": [{"name": "p", "type": "pool"}]})
    with pytest.raises(NetworkFormatError, match="no conv layers"):
        load_network(path)


def test_bundled_benchmarks():
    assert {"vgg16", "resnet50", "unet", "mobilenetv2", "squeezenet", "mnasnet"} <= set(bundled_network_names())
    assert len(bundled_network("resnet50")) == 53
    assert len(bundled_network("vgg16")) == 13


def test_resnet50_stem_macs():
    stem = bundled_network("resnet50").layers[0]
    assert stem.extent == (3, 64, 7, 7, 112, 112)
    assert total_macs(stem) == 118_013_952
    assert 3 * 64 * 7 * 7 * 112 * 112 == 118_013_952


def test_total_macs_examples():
    assert total_macs(ConvLayer.make("a", 1, 1, 1, 1, 1, 1)) == 1
    assert total_macs(ConvLayer.make("b", 2, 3, 1, 1, 4, 5)) == 120


def test_groups_scale_macs():
    dw = ConvLayer.make("dw", 1, 1, 3, 3, 8, 8, groups=32, kind="dwconv")
    assert total_macs(dw) == 9 * 64 * 32


def test_input_extent_derived():
    layer = ConvLayer.make("s2", 4, 4, 3, 5, 8, 6, stride=2)
    assert layer.in_width == (8 - 1) * 2 + 5
    assert layer.in_height == (6 - 1) * 2 + 3


def test_dim_parse():
    assert Dim.parse("XP") is Dim.XP
    assert Dim.parse("xp") is Dim.XP
    assert Dim.parse("Yp") is Dim.YP
    with pytest.raises(ValueError):
        Dim.parse("N")


extents = st.tuples(*[st.integers(1, 64)] * 6)


@given(extents, st.integers(0, 5))
def test_total_macs_multiplicative(ext, which):
    base = ConvLayer("l", ext)
    doubled = list(ext)
    doubled[which] *= 2
    assert total_macs(ConvLayer("l", tuple(doubled))) == 2 * total_macs(base)


layer_st = st.builds(
    lambda i, ext, stride, groups: ConvLayer(f"l{i}", ext, stride, groups, "dwconv" if groups > 1 else "conv"),
    st.integers(0, 99), extents, st.integers(1, 3), st.integers(1, 4))


@given(st.lists(layer_st, min_size=1, max_size=6))
def test_roundtrip(tmp_path_factory, layers):
    net = Network("rt", tuple(layers))
    path = tmp_path_factory.mktemp("rt") / "net.json"
    dump_network(net, path)
    assert load_network(path) == net


def test_from_dict_rejects_non_list():
    with pytest.raises(NetworkFormatError, match="layers must be a list"):
        network_from_dict({"layers": {}})
