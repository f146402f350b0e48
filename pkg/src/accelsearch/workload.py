"""Convolution workloads and benchmark network files.

A layer is described by the trip counts of its six loop dimensions
(batch is fixed to 1).  Input spatial sizes are derived from the output
sizes, the stride and the kernel size, never stored.
"""
from __future__ import annotations

import enum
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

logger = logging.getLogger(__name__)

__all__ = [
    "Dim", "DIMS", "ConvLayer", "Network", "NetworkFormatError",
    "load_network", "dump_network", "network_to_dict", "network_from_dict",
    "total_macs", "bundled_network", "bundled_network_names",
]

DATA_DIR = Path(__file__).parent / "data"


class Dim(enum.IntEnum):
    """Convolution loop dimensions in canonical order (also the tie-break order)."""

    C = 0
    K = 1
    R = 2
    S = 3
    XP = 4
    YP = 5

    @classmethod
    def parse(cls, name: str) -> "Dim":
        key = name.strip().upper().replace("'", "P")
        if key in ("X", "XP"):
            return cls.XP
        if key in ("Y", "YP"):
            return cls.YP
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown dimension {name!r}; expected one of C, K, R, S, XP, YP") from None


DIMS: tuple[Dim, ...] = tuple(Dim)

# key used for each dim in network files
_FILE_KEYS = {Dim.C: "C", Dim.K: "K", Dim.R: "R", Dim.S: "S", Dim.XP: "Xp", Dim.YP: "Yp"}


class NetworkFormatError(ValueError):
    """Raised when a network file cannot be parsed or violates layer invariants."""


@dataclass(frozen=True)
class ConvLayer:
    """One convolution; ``extent`` is indexed by :class:`Dim`.

    ``groups`` > 1 models a grouped/depthwise conv: each group is an
    independent conv with the given per-group extents.
    """

    name: str
    extent: tuple[int, int, int, int, int, int]
    stride: int = 1
    groups: int = 1
    kind: str = "conv"

    def __post_init__(self):
        ext = tuple(int(v) for v in self.extent)
        if len(ext) != 6:
            raise ValueError(f"layer {self.name!r}: need 6 extents, got {len(ext)}")
        object.__setattr__(self, "extent", ext)
        for d in DIMS:
            if ext[d] < 1:
                raise NetworkFormatError(
                    f"layer {self.name!r}: field {_FILE_KEYS[d]} must be >= 1, got {ext[d]}")
        if self.stride < 1:
            raise NetworkFormatError(f"layer {self.name!r}: field stride must be >= 1, got {self.stride}")
        if self.groups < 1:
            raise NetworkFormatError(f"layer {self.name!r}: field groups must be >= 1, got {self.groups}")

    @classmethod
    def make(cls, name: str, C: int, K: int, R: int, S: int, XP: int, YP: int,
             stride: int = 1, groups: int = 1, kind: str = "conv") -> "ConvLayer":
        return cls(name, (C, K, R, S, XP, YP), stride, groups, kind)

    def __getitem__(self, d: Dim) -> int:
        return self.extent[d]

    @property
    def in_width(self) -> int:
        return (self.extent[Dim.XP] - 1) * self.stride + self.extent[Dim.S]

    @property
    def in_height(self) -> int:
        return (self.extent[Dim.YP] - 1) * self.stride + self.extent[Dim.R]

    @property
    def shape_key(self) -> tuple:
        """Everything the cost model depends on (the name is excluded)."""
        return self.extent + (self.stride, self.groups)


@dataclass(frozen=True)
class Network:
    name: str
    layers: tuple[ConvLayer, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise NetworkFormatError(f"network {self.name!r} has no conv layers")

    def __len__(self):
        return len(self.layers)

    def __iter__(self):
        return iter(self.layers)


def total_macs(layer: ConvLayer) -> int:
    """Multiply-accumulates of a layer, including all groups."""
    return math.prod(layer.extent) * layer.groups


def _layer_from_dict(item: Mapping, index: int) -> ConvLayer | None:
    locus = f"layers[{index}]"
    if not isinstance(item, Mapping):
        raise NetworkFormatError(f"{locus}: expected an object")
    kind = item.get("type", "conv")
    name = str(item.get("name", f"layer{index}"))
    if kind not in ("conv", "dwconv"):
        logger.warning("skipping non-conv layer %s (%s) of type %r", locus, name, kind)
        return None
    values = {}
    for d, key in _FILE_KEYS.items():
        if key not in item:
            raise NetworkFormatError(f"{locus} ({name}): missing field {key}")
        v = item[key]
        if isinstance(v, bool) or not isinstance(v, int):
            raise NetworkFormatError(f"{locus} ({name}): field {key} must be an integer, got {v!r}")
        values[d] = v
    stride = item.get("stride", 1)
    groups = item.get("groups", 1)
    for key, v in (("stride", stride), ("groups", groups)):
        if isinstance(v, bool) or not isinstance(v, int):
            raise NetworkFormatError(f"{locus} ({name}): field {key} must be an integer, got {v!r}")
    try:
        return ConvLayer(name, tuple(values[d] for d in DIMS), stride, groups, kind)
    except NetworkFormatError as exc:
        raise NetworkFormatError(f"{locus}: {exc}") from None


def network_from_dict(doc: Mapping, source: str = "<dict>") -> Network:
    if not isinstance(doc, Mapping) or "layers" not in doc:
        raise NetworkFormatError(f"{source}: expected an object with a 'layers' list")
    if not isinstance(doc["layers"], list):
        raise NetworkFormatError(f"{source}: field layers must be a list")
    layers = []
    for i, item in enumerate(doc["layers"]):
        try:
            layer = _layer_from_dict(item, i)
        except NetworkFormatError as exc:
            raise NetworkFormatError(f"{source}: {exc}") from None
        if layer is not None:
            layers.append(layer)
    try:
        return Network(str(doc.get("name", Path(source).stem)), tuple(layers))
    except NetworkFormatError as exc:
        raise NetworkFormatError(f"{source}: {exc}") from None


def network_to_dict(net: Network) -> dict:
    layers = []
    for layer in net.layers:
        item = {"name": layer.name, "type": layer.kind}
        item.update({key: layer.extent[d] for d, key in _FILE_KEYS.items()})
        item["stride"] = layer.stride
        if layer.groups != 1:
            item["groups"] = layer.groups
        layers.append(item)
    return {"name": net.name, "layers": layers}


def load_network(path: str | Path) -> Network:
    """Read a JSON network description.

    Errors carry the file name plus either the line/column of a syntax
    error or the offending ``layers[i].field``.
    """
    path = Path(path)
    text = path.read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NetworkFormatError(f"{path}:{exc.lineno}:{exc.colno}: {exc.msg}") from None
    return network_from_dict(doc, str(path))


def dump_network(net: Network, path: str | Path) -> None:
    Path(path).write_text(json.dumps(network_to_dict(net), indent=1) + "\n")


def bundled_network_names() -> list[str]:
    return sorted(p.stem for p in (DATA_DIR / "networks").glob("*.json"))


def bundled_network(name: str) -> Network:
    """Load one of the shipped benchmark transcriptions (e.g. ``"resnet50"``)."""
    path = DATA_DIR / "networks" / f"{name.lower()}.json"
    if not path.exists():
        raise FileNotFoundError(f"no bundled network {name!r}; have {bundled_network_names()}")
    return load_network(path)

