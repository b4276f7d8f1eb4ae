"""
Result files written by the CLI:

    metrics.csv       one row per eval interval (deterministic, no timings)
    summary.json      totals, peaks, final losses, version, config echo
    final_params.bin  8-byte magic, uint32 version, uint64 count, float32 LE values
    calendar.json     sync calendar of the run
"""

import csv
import io
import json
import struct
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from core.errors import StructuralError
from core.version import describe_version
from simulation.cusim import SWEEP_COLUMNS, SweepRow
from training.config import TrainConfig
from training.engine import TrainingResult

PARAMS_MAGIC = b"SDLPARAM"
PARAMS_FORMAT_VERSION = 1
_PARAMS_HEADER = struct.Struct("<8sIQ")


def write_final_params(path: Path, values: np.ndarray) -> None:
    data = np.ascontiguousarray(values, dtype="<f4")
    with open(path, "wb") as f:
        f.write(_PARAMS_HEADER.pack(PARAMS_MAGIC, PARAMS_FORMAT_VERSION, data.size))
        f.write(data.tobytes())


def read_final_params(path: Path) -> np.ndarray:
    payload = Path(path).read_bytes()
    if len(payload) < _PARAMS_HEADER.size:
        raise StructuralError(f"{path} is too short for a parameter file")
    magic, version, count = _PARAMS_HEADER.unpack_from(payload, 0)
    if magic != PARAMS_MAGIC:
        raise StructuralError(f"{path} is not a parameter file (magic {magic!r})")
    if version != PARAMS_FORMAT_VERSION:
        raise StructuralError(f"unsupported parameter file version {version}")
    values = np.frombuffer(payload, dtype="<f4", offset=_PARAMS_HEADER.size)
    if values.size != count:
        raise StructuralError(f"header declares {count} values, file holds {values.size}")
    return values.astype(np.float32)


def build_summary(result: TrainingResult, config: TrainConfig, codec: dict) -> dict:
    summary = result.metrics.summary()
    summary.update(
        {
            "version": describe_version(),
            "mode": config.mode.value,
            "num_params": len(result.final_params),
            "num_replicas": len(result.replicas),
            "codec": codec,
            "fragments": result.layout.spec.to_dict(),
            "fragment_sizes": [result.layout.size(p) for p in range(result.layout.spec.num_fragments)],
            "momentum_advances": {str(k): v for k, v in sorted(result.metrics.momentum_advances.items())},
            "config": config.model_dump(mode="json"),
        }
    )
    return summary


def write_run_outputs(out_dir: Path, result: TrainingResult, config: TrainConfig, codec: dict) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(result.metrics.to_csv())
    summary = build_summary(result, config, codec)
    (out_dir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    write_final_params(out_dir / "final_params.bin", result.final_params.data)
    if result.calendar is not None:
        (out_dir / "calendar.json").write_text(result.calendar.to_json() + "\n")
    return summary


def sweep_csv(rows: Sequence[SweepRow]) -> str:
    with_step_time = any(r.step_time_s is not None for r in rows)
    columns = SWEEP_COLUMNS + (["step_time_s"] if with_step_time else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(getattr(row, col)) for col in columns])
    return buf.getvalue()


def targets_json(table: dict) -> str:
    rendered = {
        method: {f"{target:g}": bw for target, bw in targets.items()}
        for method, targets in table.items()
    }
    return json.dumps(rendered, indent=2)


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    return str(value)


def emit(text: str, out: Optional[Path] = None, stream=None) -> None:
    """Write to a file when a path is given, otherwise to the stream (stdout)."""
    if out is not None:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    else:
        (stream or sys.stdout).write(text)
