"""Time-dependent route planning with customizable multi-level overlays.

The package splits route planning into three phases: a metric-independent
preprocessing step that partitions the road network and fixes the overlay
topology, a metric customization step that computes time-dependent shortcut
functions for every overlay arc, and a query phase answering
earliest-arrival requests on the resulting multi-level structure.  Live
traffic flows in through partial updates that re-customize only affected
cells.
"""

from .customization import CustomizationConfig, CustomizationStats, customize
from .live_update import (
    PartialUpdate,
    UpdateBatch,
    apply_update_batch,
    generate_updates,
    load_updates,
    save_updates,
)
from .network import RoadNetwork, generate_synthetic, load_network, save_network, td_dijkstra_ea
from .overlay import FunctionPool, OverlayTopology, build_topology
from .partition import MultiLevelPartition, build_partition, reorder_and_index
from .plf import PERIOD_MS, TTF, Dominance, approximate, link, merge
from .query import QueryConfig, QueryEngine, QueryResult, search_level, unpack_path
from .snapshot import EngineState, build_state, load_snapshot, save_snapshot

__version__ = "0.1.0"

__all__ = [
    "PERIOD_MS",
    "TTF",
    "Dominance",
    "approximate",
    "link",
    "merge",
    "RoadNetwork",
    "generate_synthetic",
    "load_network",
    "save_network",
    "td_dijkstra_ea",
    "PartialUpdate",
    "UpdateBatch",
    "apply_update_batch",
    "generate_updates",
    "load_updates",
    "save_updates",
    "MultiLevelPartition",
    "build_partition",
    "reorder_and_index",
    "FunctionPool",
    "OverlayTopology",
    "build_topology",
    "CustomizationConfig",
    "CustomizationStats",
    "customize",
    "EngineState",
    "build_state",
    "save_snapshot",
    "load_snapshot",
    "QueryConfig",
    "QueryEngine",
    "QueryResult",
    "search_level",
    "unpack_path",
    "__version__",
]
