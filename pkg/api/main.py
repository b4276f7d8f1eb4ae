from datetime import datetime

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from api.models import HealthCheck
from api.routes import memory, schedule, simulation
from core.errors import LabError
from core.logger import get_logger
from core.version import __version__

logger = get_logger(__name__)

app = FastAPI(
    title="Streaming DiLoCo Lab API",
    version=__version__,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.exception_handler(LabError)
async def lab_error_handler(request: Request, exc: LabError):
    logger.warning("request rejected", path=request.url.path, error=str(exc))
    return JSONResponse(status_code=422, content={"detail": str(exc), "error": type(exc).__name__})


@app.get("/")
async def root():
    return {
        "message": "Streaming DiLoCo Lab API",
        "status": "operational",
        "timestamp": datetime.now().isoformat(),
    }


@app.get("/health", response_model=HealthCheck)
async def health():
    return HealthCheck(status="ok", version=__version__, timestamp=datetime.now().isoformat())


app.include_router(simulation.router)
app.include_router(schedule.router)
app.include_router(memory.router)
