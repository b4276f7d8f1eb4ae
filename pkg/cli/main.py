"""
STREAMLAB COMMAND LINE
    python -m cli train    --config configs/train/toy_streaming.json [--out DIR] [--dump-calendar]
    python -m cli simulate --profile 1b --method streaming_overlap --tau 1 --bandwidth 10
    python -m cli sweep    --profile 1b --methods all [--targets 0.5,0.95] [--out sweep.csv]
    python -m cli memory   --num-params 100e9 --layers 108 --fragment-size 3

Exit codes: 0 success, 1 other run failure, 2 invalid configuration, 3 numerical abort.
"""

import argparse
import json
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from core.errors import CodecError, ConfigurationError, LabError, NumericalError
from core.logger import configure_logging, get_logger
from core.settings import get_settings
from simulation.cusim import SimMethod, SweepRow, build_dag, cu_targets, simulate, sweep
from simulation.memory import memory_overhead
from training.engine import TrainingEngine
from training.schedule import calendar_for
from .outputs import emit, sweep_csv, targets_json, write_run_outputs
from .schema import (
    MemoryConfig,
    RunConfig,
    SimulateConfig,
    SweepConfig,
    format_validation_error,
    load_run_config,
    require_section,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

logger = get_logger(__name__)


# ============================================================================
# Argument parsing
# ============================================================================


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="streamlab", description="Streaming DiLoCo training lab and bandwidth simulator"
    )
    parser.add_argument("--log-level", default=None, help="Override STREAMLAB_LOG_LEVEL")
    parser.add_argument("--log-format", choices=["json", "console"], default=None)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="Run the training simulation")
    train.add_argument("--config", required=True, type=Path, help="JSON file with a 'train' section")
    train.add_argument("--out", type=Path, default=None, help="Output directory")
    train.add_argument("--threads", type=int, default=None, help="Worker threads for inner steps")
    train.add_argument("--dump-calendar", action="store_true", help="Print the sync calendar and exit")

    def sim_args(p: argparse.ArgumentParser) -> None:
        p.add_argument("--config", type=Path, default=None)
        p.add_argument("--profile", default=None, help="Built-in profile name")
        p.add_argument("--tau", type=int, default=None)
        p.add_argument("--H", dest="H", type=int, default=None)
        p.add_argument("--fragment-size", type=int, default=None)
        p.add_argument("--pattern", choices=["sequential", "strided"], default=None)
        p.add_argument("--latency", type=float, default=None, help="Per-reduce latency in seconds")
        p.add_argument("--num-steps", type=int, default=None)
        p.add_argument("--out", type=Path, default=None)

    simulate_p = sub.add_parser("simulate", help="Simulate one method at one bandwidth")
    sim_args(simulate_p)
    simulate_p.add_argument("--method", choices=[m.value for m in SimMethod], default=None)
    simulate_p.add_argument("--bandwidth", type=float, default=None, help="Gbit/s")
    simulate_p.add_argument("--dump-calendar", action="store_true")

    sweep_p = sub.add_parser("sweep", help="CU over a bandwidth grid")
    sim_args(sweep_p)
    sweep_p.add_argument("--methods", default=None, help="'all' or comma-separated methods")
    sweep_p.add_argument("--bandwidths", type=_float_list, default=None, help="Gbit/s grid")
    sweep_p.add_argument("--targets", type=_float_list, default=None, help="CU targets")
    sweep_p.add_argument("--step-times", type=_float_list, default=None, help="Seconds per step")
    sweep_p.add_argument("--targets-out", type=Path, default=None)

    memory_p = sub.add_parser("memory", help="Outer-state memory overhead")
    memory_p.add_argument("--config", type=Path, default=None)
    memory_p.add_argument("--num-params", type=float, default=None)
    memory_p.add_argument("--layers", type=int, default=None)
    memory_p.add_argument("--fragment-size", type=int, default=None)
    memory_p.add_argument("--out", type=Path, default=None)
    return parser


def _load(path: Optional[Path]) -> RunConfig:
    return load_run_config(path) if path is not None else RunConfig()


def _sim_overrides(args) -> dict:
    return {
        "tau": args.tau,
        "H": args.H,
        "fragment_size": args.fragment_size,
        "pattern": args.pattern,
        "link_latency": args.latency,
        "num_steps": args.num_steps,
    }


# ============================================================================
# Commands
# ============================================================================


def cmd_train(args) -> int:
    config = require_section(load_run_config(args.config), "train")
    engine = TrainingEngine(config, worker_threads=args.threads)
    if args.dump_calendar:
        if engine.calendar is None:
            raise ConfigurationError("data_parallel runs have no sync calendar")
        emit(engine.calendar.to_json() + "\n")
        return EXIT_OK

    out_dir = args.out or get_settings().output_dir / args.config.stem
    result = engine.run()
    summary = write_run_outputs(out_dir, result, config, engine.codec.describe())
    logger.info(
        "run written",
        out_dir=str(out_dir),
        bytes_total=summary["bytes_total"],
        peak_bytes=summary["peak_bytes"],
    )
    return EXIT_OK


def cmd_simulate(args) -> int:
    section = _load(args.config).simulate or SimulateConfig()
    sim = section.resolve(
        profile=args.profile,
        method=args.method,
        bandwidth_gbits=args.bandwidth,
        **_sim_overrides(args),
    )
    if args.dump_calendar:
        if sim.method is SimMethod.DATA_PARALLEL:
            raise ConfigurationError("data_parallel reduces every step and has no sync calendar")
        fragment_size = sim.num_layers if sim.method is SimMethod.DILOCO else sim.fragment_size
        _, calendar = calendar_for(
            sim.num_layers, fragment_size, sim.pattern, sim.num_steps, sim.H, [sim.effective_tau]
        )
        emit(calendar.to_json() + "\n", args.out)
        return EXIT_OK

    result = simulate(build_dag(sim))
    row = SweepRow(
        method=sim.method.value,
        bandwidth_gbits=sim.bandwidth_gbits,
        cu=result.cu,
        makespan_s=result.makespan,
        bytes_total=result.bytes_total,
    )
    emit(sweep_csv([row]), args.out)
    logger.info("simulated", method=sim.method.value, cu=round(result.cu, 6))
    return EXIT_OK


def cmd_sweep(args) -> int:
    section = _load(args.config).sweep or SweepConfig()
    updates = {
        k: v
        for k, v in {
            "methods": args.methods,
            "bandwidths": args.bandwidths,
            "targets": args.targets,
            "step_times": args.step_times,
        }.items()
        if v is not None
    }
    if updates:
        section = SweepConfig(**{**section.model_dump(), **updates})
    sim = section.resolve(profile=args.profile, **_sim_overrides(args))
    rows = sweep(sim, section.bandwidths, section.method_list(), section.step_times)
    emit(sweep_csv(rows), args.out)
    table = cu_targets(rows, section.targets)
    if args.targets_out is not None:
        emit(targets_json(table) + "\n", args.targets_out)
    logger.info("bandwidth to reach CU targets (Gbit/s)", table=table)
    return EXIT_OK


def cmd_memory(args) -> int:
    section = _load(args.config).memory
    fields = section.model_dump() if section is not None else {}
    for key, value in (
        ("num_params", args.num_params),
        ("num_layers", args.layers),
        ("fragment_size", args.fragment_size),
    ):
        if value is not None:
            fields[key] = value
    missing = [k for k in ("num_params", "num_layers", "fragment_size") if k not in fields]
    if missing:
        raise ConfigurationError("missing " + ", ".join(f"memory.{k}" for k in missing))
    memory = MemoryConfig(**fields)
    report = memory_overhead(memory.num_params, memory.num_layers, memory.fragment_size)
    emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    return EXIT_OK


COMMANDS = {
    "train": cmd_train,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "memory": cmd_memory,
}


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level or args.log_format:
        configure_logging(args.log_level, args.log_format)

    try:
        return COMMANDS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ValidationError as exc:
        print(f"error: {format_validation_error(exc, prefix=args.command)}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except CodecError as exc:
        if not exc.non_finite:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_FAILURE
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except LabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
