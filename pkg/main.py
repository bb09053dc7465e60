from contextlib import asynccontextmanager

import uvicorn
from fastapi import FastAPI

from api.planning_api import router as planning_api
from config.settings import configure_logging, get_settings, load_sensor_config
from services.episode_runner import constraint_graph_for


# Build the default constraint graph once at startup
@asynccontextmanager
async def lifespan(app: FastAPI):
    # Startup
    configure_logging()
    constraint_graph_for(load_sensor_config(get_settings().sensor_config_path))
    yield
    # Shutdown


# Main FastAPI application
app = FastAPI(
    title="Light Curtain Planner",
    version="1.0.0",
    description="Uncertainty-guided placement of programmable light curtains",
    lifespan=lifespan
)

# Include the planning API routes
app.include_router(planning_api, prefix="/api/v1", tags=["planning"])


@app.get("/")
async def root():
    return {"message": "Welcome to the Light Curtain Planner API", "version": "1.0.0"}


@app.get("/health")
async def health():
    return {"status": "healthy", "service": "Light Curtain Planner"}


if __name__ == "__main__":
    uvicorn.run(app, host="0.0.0.0", port=8000)
