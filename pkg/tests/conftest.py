import logging

import pytest

from accelsearch.hwspace import AcceleratorConfig
from accelsearch.workload import ConvLayer, Dim


@pytest.fixture(autouse=True)
def _quiet_layer_skips(caplog):
    # bundled transcriptions contain pool/fc entries that the loader skips
    caplog.set_level(logging.ERROR, logger="accelsearch.workload")


@pytest.fixture
def tiny_layer():
    return ConvLayer.make("tiny", 2, 2, 1, 1, 2, 2)


@pytest.fixture
def single_pe():
    return AcceleratorConfig(1, 1 << 20, 1 << 24, 64, (1,), (Dim.K,))
