from fastapi import APIRouter

from api.models import MemoryRequest
from simulation.memory import memory_overhead

router = APIRouter(prefix="/api", tags=["Memory"])


@router.post("/memory")
async def outer_memory_overhead(request: MemoryRequest):
    """Extra memory for outer parameters and momentum of one fragment"""
    report = memory_overhead(request.num_params, request.num_layers, request.fragment_size)
    return report.to_dict()
