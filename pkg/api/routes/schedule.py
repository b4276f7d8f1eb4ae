from fastapi import APIRouter

from api.models import CalendarRequest
from training.paramspace import assign_offsets, partition
from training.schedule import build_calendar, peak_bandwidth_reduction

router = APIRouter(prefix="/api/schedule", tags=["Schedule"])


@router.post("/calendar")
async def sync_calendar(request: CalendarRequest):
    """Fragments, offsets and the send/receive timeline for one configuration"""
    spec = assign_offsets(partition(request.num_blocks, request.fragment_size, request.pattern), request.H)
    calendar = build_calendar(spec, request.T, request.H, request.taus)
    return {
        "fragments": spec.to_dict(),
        "calendar": calendar.to_dict(),
        "peak_bandwidth_reduction": peak_bandwidth_reduction(request.num_blocks, request.fragment_size),
    }
