from fastapi import APIRouter
from pydantic import ValidationError

from api.models import SimulateRequest, SimulateResponse, SweepRequest, SweepResponse
from cli.schema import SimulateConfig, format_validation_error
from core.errors import ConfigurationError
from core.logger import PerformanceLogger, get_logger
from simulation.cusim import build_dag, cu_targets, simulate, sweep
from simulation.profiles import load_all_profiles

router = APIRouter(prefix="/api/simulation", tags=["Simulation"])
logger = get_logger(__name__)

_SIM_FIELDS = set(SimulateConfig.model_fields)


def _resolve(request: SimulateRequest):
    fields = request.model_dump(include=_SIM_FIELDS, exclude_none=True)
    try:
        return SimulateConfig(**fields).resolve()
    except ValidationError as exc:
        raise ConfigurationError(format_validation_error(exc)) from exc


@router.get("/profiles")
async def list_simulation_profiles():
    """Built-in model/hardware profiles"""
    return {name: profile.model_dump(mode="json") for name, profile in load_all_profiles().items()}


@router.post("/simulate", response_model=SimulateResponse)
def simulate_point(request: SimulateRequest):
    """Compute utilization of one method at one bandwidth"""
    config = _resolve(request)
    with PerformanceLogger(logger, "simulate", method=config.method.value):
        result = simulate(build_dag(config))
    return SimulateResponse(
        method=config.method.value,
        bandwidth_gbits=config.bandwidth_gbits,
        cu=result.cu,
        makespan_s=result.makespan,
        bytes_total=result.bytes_total,
    )


@router.post("/sweep", response_model=SweepResponse)
def sweep_bandwidths(request: SweepRequest):
    """CU over a bandwidth grid, plus the bandwidth needed for each CU target"""
    config = _resolve(request)
    rows = sweep(config, request.bandwidths, request.methods)
    table = cu_targets(rows, request.targets)
    return SweepResponse(
        rows=[
            SimulateResponse(
                method=r.method,
                bandwidth_gbits=r.bandwidth_gbits,
                cu=r.cu,
                makespan_s=r.makespan_s,
                bytes_total=r.bytes_total,
            )
            for r in rows
        ],
        targets={m: {f"{t:g}": bw for t, bw in targets.items()} for m, targets in table.items()},
    )
