"""
Metrics collected by a training run, and their CSV / JSON renderings.
"""

import csv
import io
from dataclasses import dataclass, field
from typing import Dict, List, Optional

CSV_COLUMNS = [
    "step",
    "train_loss",
    "eval_loss_first",
    "eval_loss_avg",
    "eval_loss_outer",
    "bytes_step",
    "bytes_total",
    "cos_sim_rest",
    "cos_sim_win",
]


@dataclass
class MetricsRow:
    step: int
    train_loss: float
    eval_loss_first: float
    eval_loss_avg: float
    eval_loss_outer: float
    bytes_step: int
    bytes_total: int
    cos_sim_rest: Optional[float] = None
    cos_sim_win: Optional[float] = None
    outer_fallback: bool = False


@dataclass
class SyncRound:
    step: int
    fragment: int
    bytes_sent: int
    cos_sim_rest: Optional[float]
    cos_sim_win: Optional[float]


@dataclass
class MetricsLog:
    rows: List[MetricsRow] = field(default_factory=list)
    bytes_per_step: Dict[int, int] = field(default_factory=dict)
    block_bytes_per_step: Dict[int, int] = field(default_factory=dict)
    sync_rounds: List[SyncRound] = field(default_factory=list)
    momentum_advances: Dict[int, int] = field(default_factory=dict)
    step_seconds: List[float] = field(default_factory=list)
    warnings: List[str] = field(default_factory=list)

    def add_bytes(self, step: int, nbytes: int, block_bytes: int = 0) -> None:
        self.bytes_per_step[step] = self.bytes_per_step.get(step, 0) + nbytes
        self.block_bytes_per_step[step] = self.block_bytes_per_step.get(step, 0) + block_bytes

    @property
    def bytes_total(self) -> int:
        return sum(self.bytes_per_step.values())

    @property
    def peak_bytes(self) -> int:
        return max(self.bytes_per_step.values(), default=0)

    @property
    def peak_block_bytes(self) -> int:
        return max(self.block_bytes_per_step.values(), default=0)

    @property
    def num_sync_rounds(self) -> int:
        return len(self.sync_rounds)

    def cosine_between(self, after: int, upto: int):
        """Mean outer-gradient cosine similarities of rounds in (after, upto]."""
        rest = [r.cos_sim_rest for r in self.sync_rounds
                if after < r.step <= upto and r.cos_sim_rest is not None]
        win = [r.cos_sim_win for r in self.sync_rounds
               if after < r.step <= upto and r.cos_sim_win is not None]
        mean = lambda xs: sum(xs) / len(xs) if xs else None  # noqa: E731
        return mean(rest), mean(win)

    def final_row(self) -> Optional[MetricsRow]:
        return self.rows[-1] if self.rows else None

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_COLUMNS)
        for row in self.rows:
            writer.writerow([_fmt(getattr(row, col)) for col in CSV_COLUMNS])
        return buf.getvalue()

    def summary(self) -> dict:
        last = self.final_row()
        return {
            "bytes_total": self.bytes_total,
            "peak_bytes": self.peak_bytes,
            "peak_block_bytes": self.peak_block_bytes,
            "sync_rounds": self.num_sync_rounds,
            "final_step": last.step if last else 0,
            "final_train_loss": last.train_loss if last else None,
            "final_eval_loss": {
                "first_replica": last.eval_loss_first if last else None,
                "replica_average": last.eval_loss_avg if last else None,
                "outer_params": last.eval_loss_outer if last else None,
            },
            "mean_step_seconds": (
                sum(self.step_seconds) / len(self.step_seconds) if self.step_seconds else None
            ),
            "warnings": list(self.warnings),
        }


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    return str(value)
