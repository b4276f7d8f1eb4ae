from .config import EvalMode, TrainConfig, TrainMode
from .engine import TrainingEngine, TrainingResult, run_training
from .metrics import CSV_COLUMNS, MetricsLog
from .paramspace import FragmentPattern, FragmentSpec, ParamVector, assign_offsets, partition
from .schedule import SyncCalendar, build_calendar, peak_bandwidth_reduction

__all__ = [
    "EvalMode",
    "TrainConfig",
    "TrainMode",
    "TrainingEngine",
    "TrainingResult",
    "run_training",
    "CSV_COLUMNS",
    "MetricsLog",
    "FragmentPattern",
    "FragmentSpec",
    "ParamVector",
    "assign_offsets",
    "partition",
    "SyncCalendar",
    "build_calendar",
    "peak_bandwidth_reduction",
]
