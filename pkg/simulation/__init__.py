from .cusim import (
    DEFAULT_CU_TARGETS,
    SWEEP_COLUMNS,
    NodeKind,
    SimConfig,
    SimDag,
    SimMethod,
    SimNode,
    SimResult,
    SweepRow,
    build_dag,
    cu_targets,
    default_bandwidth_grid,
    simulate,
    sweep,
)
from .memory import MemoryReport, memory_overhead
from .profiles import ModelProfile, list_profiles, load_profile

__all__ = [
    "DEFAULT_CU_TARGETS",
    "SWEEP_COLUMNS",
    "NodeKind",
    "SimConfig",
    "SimDag",
    "SimMethod",
    "SimNode",
    "SimResult",
    "SweepRow",
    "build_dag",
    "cu_targets",
    "default_bandwidth_grid",
    "simulate",
    "sweep",
    "MemoryReport",
    "memory_overhead",
    "ModelProfile",
    "list_profiles",
    "load_profile",
]
