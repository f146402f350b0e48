"""Joint search over accelerator configurations, per-layer mappings and networks."""
from .costmodel import CostReport, EnergyModel, evaluate, simulate_reference
from .evolve import es_minimize, random_search
from .hwspace import AcceleratorConfig, ResourceConstraint, decode_hardware, rank_dims
from .mapspace import Mapping, decode_mapping, order_from_importance
from .netspace import NetSpaceConfig, decode_network, synthetic_accuracy
from .search import (SearchBudget, SearchResult, co_search, evaluate_accelerator, geomean,
                     search_accelerator, search_mapping)
from .workload import ConvLayer, Dim, Network, load_network, total_macs

__version__ = "0.1.0"

__all__ = [
    "CostReport", "EnergyModel", "evaluate", "simulate_reference", "es_minimize", "random_search",
    "AcceleratorConfig", "ResourceConstraint", "decode_hardware", "rank_dims", "Mapping", "decode_mapping",
    "order_from_importance", "NetSpaceConfig", "decode_network", "synthetic_accuracy", "SearchBudget",
    "SearchResult", "co_search", "evaluate_accelerator", "geomean", "search_accelerator", "search_mapping",
    "ConvLayer", "Dim", "Network", "load_network", "total_macs",
]
