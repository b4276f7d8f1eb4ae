"""
Streaming DiLoCo Lab - HTTP entry point

- Framework: FastAPI (routes under api/)
- Environment variables (or .env):
    - STREAMLAB_LOG_LEVEL, STREAMLAB_LOG_FORMAT
    - STREAMLAB_PROFILES_DIR
    - PORT
"""

import os

from dotenv import load_dotenv

load_dotenv()

from api.main import app  # noqa: E402

__all__ = ["app"]

if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "app:app",
        host="0.0.0.0",
        port=int(os.getenv("PORT", "8000")),
        reload=False,
        log_level="info",
    )
