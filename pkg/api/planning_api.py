from typing import List, Optional

from fastapi import APIRouter, Depends, HTTPException, status
from pydantic import BaseModel, Field, ValidationError
from starlette.concurrency import run_in_threadpool

from config.settings import Settings, get_settings, load_sensor_config
from models.curtain_models import (
    ConfidenceGrid, EpisodeConfig, EpisodeLog, NoiseConfig, PlacementExport, Scene, SensorConfig
)
from services.episode_runner import EpisodeRunner, constraint_graph_for
from services.export_service import ExportService
from services.placement_planner import PlacementPlanner
from services.strategy_registry import default_registry
from services.uncertainty_service import UncertaintyMapService
from utils.exceptions import CurtainError, PlanningError


router = APIRouter()


# Pydantic models for request/response
class ConfidenceGridPayload(BaseModel):
    x_min: float = -40.0
    x_max: float = 40.0
    z_min: float = 0.0
    z_max: float = 70.4
    nx: int
    nz: int
    values: List[List[float]]


class PlanRequest(BaseModel):
    confidence: ConfidenceGridPayload
    strategy: str = "dp"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    sensor: Optional[SensorConfig] = None


class EpisodeRequest(BaseModel):
    scene: Scene
    k: int = Field(3, ge=0)
    strategy: str = "dp"
    seed: int = Field(0, ge=0, lt=2 ** 64)
    noise: bool = False
    k_test: Optional[int] = Field(None, ge=0)
    sensor: Optional[SensorConfig] = None


def _sensor(requested: Optional[SensorConfig], settings: Settings) -> SensorConfig:
    if requested is not None:
        return requested
    return load_sensor_config(settings.sensor_config_path)


def _plan(request: PlanRequest, sensor: SensorConfig) -> PlacementExport:
    confidence = ConfidenceGrid(**request.confidence.model_dump())
    entropy_map = UncertaintyMapService.entropy_map(confidence)
    graph = constraint_graph_for(sensor)
    placement = default_registry().resolve(request.strategy).plan(graph, entropy_map, request.seed)
    return ExportService.placement_export(placement, PlacementPlanner.objective(placement, entropy_map))


def _episode(request: EpisodeRequest, sensor: SensorConfig) -> EpisodeLog:
    config = EpisodeConfig(
        k_max=request.k,
        strategy=request.strategy,
        seed=request.seed,
        noise=NoiseConfig.standard(request.seed) if request.noise else None,
        sensor=sensor
    )
    if request.k_test is not None:
        return EpisodeRunner.run_generalization(request.scene, config, request.k_test)
    return EpisodeRunner.run_episode(request.scene, config)


@router.post("/plan", response_model=PlacementExport)
async def plan_curtain(request: PlanRequest, settings: Settings = Depends(get_settings)):
    """
    Plan one curtain on the uncertainty map derived from a confidence grid
    """
    try:
        return await run_in_threadpool(_plan, request, _sensor(request.sensor, settings))
    except PlanningError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"Error planning curtain: {str(e)}"
        )
    except (CurtainError, ValidationError) as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"Invalid planning request: {str(e)}"
        )


@router.post("/episodes", response_model=EpisodeLog)
async def run_episode(request: EpisodeRequest, settings: Settings = Depends(get_settings)):
    """
    Run a LiDAR bootstrap followed by k planned curtains on the given scene
    """
    try:
        return await run_in_threadpool(_episode, request, _sensor(request.sensor, settings))
    except PlanningError as e:
        raise HTTPException(
            status_code=status.HTTP_422_UNPROCESSABLE_ENTITY,
            detail=f"Error running episode: {str(e)}"
        )
    except (CurtainError, ValidationError) as e:
        raise HTTPException(
            status_code=status.HTTP_400_BAD_REQUEST,
            detail=f"Invalid episode request: {str(e)}"
        )
