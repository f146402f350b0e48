"""ResNet-50-style network space and accuracy oracles for co-search.

Network encoding: ``[width, depth, ratio_0 .. ratio_17, image]`` in [0, 1].
Each knob picks from its choice list by ``floor(x * len(choices))``.
The realised network is a bottleneck skeleton with stage depths between
``(2, 2, 4, 2)`` and ``(4, 4, 6, 4)`` blocks; each block is a 1x1 reduce,
a 3x3 and a 1x1 expand conv.  Shortcut projections are not modeled.

No trained weights are involved: accuracy comes from an injectable
oracle, by default :func:`synthetic_accuracy`.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

from .workload import ConvLayer, Network

__all__ = [
    "NetSpaceConfig", "NetCandidate", "decode_network", "synthetic_accuracy",
    "SurrogateCoefficients", "TableOracle", "space_cardinality", "candidate_key",
    "make_divisible",
]

STAGE_MIN = (2, 2, 4, 2)
STAGE_MAX = (4, 4, 6, 4)
STAGE_OUT = (256, 512, 1024, 2048)
STEM_OUT = 64


@dataclass(frozen=True)
class NetSpaceConfig:
    width_multipliers: tuple[float, ...] = (0.65, 0.8, 1.0)
    max_blocks: int = 18
    reduction_ratios: tuple[float, ...] = (0.2, 0.25, 0.35)
    image_sizes: tuple[int, ...] = tuple(range(128, 257, 16))

    def __post_init__(self):
        for key in ("width_multipliers", "reduction_ratios", "image_sizes"):
            values = tuple(sorted(getattr(self, key)))
            if not values:
                raise ValueError(f"net space field {key} must be non-empty")
            object.__setattr__(self, key, values)
        if not sum(STAGE_MIN) <= self.max_blocks <= sum(STAGE_MAX):
            raise ValueError(f"max_blocks must be in [{sum(STAGE_MIN)}, {sum(STAGE_MAX)}]")

    @property
    def depth_choices(self) -> tuple[int, ...]:
        return tuple(range(sum(STAGE_MIN), self.max_blocks + 1))

    @property
    def encoding_size(self) -> int:
        return 2 + self.max_blocks + 1


@dataclass(frozen=True)
class NetCandidate:
    width_multiplier: float
    active_blocks: int
    reduction_ratios: tuple[float, ...]  # one per active block
    image_size: int
    realized: Network = field(compare=False, repr=False)

    def to_dict(self) -> dict:
        return {"width_multiplier": self.width_multiplier, "active_blocks": self.active_blocks,
                "reduction_ratios": list(self.reduction_ratios), "image_size": self.image_size,
                "key": candidate_key(self)}


def make_divisible(value: float, divisor: int = 8) -> int:
    """Round to the nearest multiple of ``divisor`` without dropping more than 10%."""
    v = max(divisor, int(value + divisor / 2) // divisor * divisor)
    if v < 0.9 * value:
        v += divisor
    return v


def _pick(x: float, choices):
    return choices[min(max(int(math.floor(x * len(choices))), 0), len(choices) - 1)]


def _stage_depths(blocks: int) -> list[int]:
    depths = list(STAGE_MIN)
    extra = blocks - sum(STAGE_MIN)
    while extra > 0:
        for i in range(len(depths)):
            if extra and depths[i] < STAGE_MAX[i]:
                depths[i] += 1
                extra -= 1
    return depths


def _conv_out(size: int, stride: int) -> int:
    return -(-size // stride)


def _realize(width: float, ratios, image: int, name: str) -> Network:
    layers = []
    stem = make_divisible(STEM_OUT * width)
    size = _conv_out(image, 2)
    layers.append(ConvLayer.make("stem", 3, stem, 7, 7, size, size, stride=2))
    size = _conv_out(size, 2)  # max-pool
    cin = stem
    block = 0
    for stage, depth in enumerate(_stage_depths(len(ratios))):
        cout = make_divisible(STAGE_OUT[stage] * width)
        for b in range(depth):
            stride = 2 if (b == 0 and stage > 0) else 1
            mid = make_divisible(cout * ratios[block])
            osize = _conv_out(size, stride)
            pre = f"s{stage + 1}b{b + 1}"
            layers.append(ConvLayer.make(f"{pre}_reduce", cin, mid, 1, 1, size, size))
            layers.append(ConvLayer.make(f"{pre}_conv3x3", mid, mid, 3, 3, osize, osize, stride=stride))
            layers.append(ConvLayer.make(f"{pre}_expand", mid, cout, 1, 1, osize, osize))
            cin, size, block = cout, osize, block + 1
    return Network(name, tuple(layers))


def decode_network(enc, cfg: NetSpaceConfig = NetSpaceConfig()) -> NetCandidate:
    x = np.asarray(enc, dtype=float)
    if x.shape != (cfg.encoding_size,):
        raise ValueError(f"network encoding must have {cfg.encoding_size} entries, got {x.shape}")
    width = _pick(x[0], cfg.width_multipliers)
    blocks = _pick(x[1], cfg.depth_choices)
    ratios = tuple(_pick(v, cfg.reduction_ratios) for v in x[2:2 + blocks])
    image = _pick(x[-1], cfg.image_sizes)
    name = f"resnet_w{width}_d{blocks}_r{image}"
    return NetCandidate(width, blocks, ratios, image, _realize(width, ratios, image, name))


def space_cardinality(cfg: NetSpaceConfig = NetSpaceConfig()) -> int:
    """Number of distinct candidates (ratios of inactive blocks do not count)."""
    per_depth = sum(len(cfg.reduction_ratios) ** d for d in cfg.depth_choices)
    return len(cfg.width_multipliers) * len(cfg.image_sizes) * per_depth


@dataclass(frozen=True)
class SurrogateCoefficients:
    """``base + width*ln(w) + depth*blocks/max + image*size/256 - ratio*sum(1 - r)``.

    ``depth / max_blocks`` must exceed ``ratio * (1 - min_ratio)`` so adding
    a block never lowers accuracy.
    """

    base: float = 0.55
    width: float = 0.15
    depth: float = 0.12
    image: float = 0.10
    ratio: float = 0.002


def synthetic_accuracy(candidate: NetCandidate, coeffs: SurrogateCoefficients = SurrogateCoefficients(),
                       max_blocks: int = 18) -> float:
    """Monotone stand-in for a trained supernet's accuracy predictor."""
    acc = (coeffs.base + coeffs.width * math.log(candidate.width_multiplier)
           + coeffs.depth * candidate.active_blocks / max_blocks
           + coeffs.image * candidate.image_size / 256
           - coeffs.ratio * sum(1 - r for r in candidate.reduction_ratios))
    return min(max(acc, 0.0), 1.0)


def candidate_key(candidate: NetCandidate) -> str:
    doc = [candidate.width_multiplier, candidate.active_blocks,
           list(candidate.reduction_ratios), candidate.image_size]
    return hashlib.sha1(json.dumps(doc).encode()).hexdigest()[:16]


class TableOracle:
    """Accuracies looked up by :func:`candidate_key`, falling back to another oracle."""

    def __init__(self, table: Mapping[str, float],
                 fallback: Callable[[NetCandidate], float] | None = synthetic_accuracy):
        self.table = {str(k): float(v) for k, v in table.items()}
        self.fallback = fallback

    @classmethod
    def from_file(cls, path: str | Path, **kwargs) -> "TableOracle":
        return cls(json.loads(Path(path).read_text()), **kwargs)

    def __call__(self, candidate: NetCandidate) -> float:
        key = candidate_key(candidate)
        if key in self.table:
            return self.table[key]
        if self.fallback is None:
            raise KeyError(f"no accuracy for candidate {key}")
        return self.fallback(candidate)
