from fastapi import FastAPI
from fastapi.middleware.cors import CORSMiddleware
import logging

from app.api import maps, navigation, tasks
from app.config import get_settings
from app.utils.logging_utils import configure_logging

settings = get_settings()
configure_logging(settings.log_level)
logger = logging.getLogger(__name__)

app = FastAPI(
    title="Pick-and-Drop Planning API",
    description="Open-vocabulary object retrieval, navigation and pick-and-drop planning over a scanned home",
    version="1.0.0"
)

# CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=settings.allowed_origins,
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@app.on_event("startup")
def startup():
    print("🚀 Starting Pick-and-Drop Planning API...")
    if settings.map_path:
        print(f"🗺️  Map: {settings.map_path} (loaded on first request)")
    else:
        print("⚠️  MAP_PATH is not set; map endpoints answer 503 until it is")


# Include routers
app.include_router(maps.router, prefix="/api/maps", tags=["maps"])
app.include_router(navigation.router, prefix="/api/navigation", tags=["navigation"])
app.include_router(tasks.router, prefix="/api/tasks", tags=["tasks"])


@app.get("/")
async def root():
    return {
        "message": "Pick-and-Drop Planning API",
        "api_docs": "/docs",
        "endpoints": {
            "query_map": "POST /api/maps/query",
            "map_summary": "GET /api/maps/summary",
            "navigation_target": "POST /api/navigation/target",
            "navigation_path": "POST /api/navigation/path",
            "run_task": "POST /api/tasks/run"
        }
    }


@app.get("/health")
async def health_check():
    return {"status": "healthy"}


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=settings.port, reload=False)
