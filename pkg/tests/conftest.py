from pathlib import Path

import numpy as np
import pytest

from models.curtain_models import (
    CameraModel, ConfidenceGrid, GridGeometry, LaserConfig, LaserModel, LatticeConfig, SensorConfig
)
from services.episode_runner import constraint_graph_for
from services.export_service import ExportService
from services.geometry_engine import GeometryEngine
from services.scene_generator import SceneGenerator
from services.uncertainty_service import UncertaintyMapService


SCENE_DIR = Path(__file__).resolve().parent.parent / "data" / "scenes"

# Grid covering every candidate of the small instances below, 0.5 m cells
SMALL_GRID = GridGeometry(x_min=-8.0, x_max=8.0, z_min=0.0, z_max=14.0, nx=32, nz=28)


@pytest.fixture
def rng():
    """Seeded generator for property tests"""
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def default_sensor():
    return SensorConfig()


@pytest.fixture(scope="session")
def default_graph(default_sensor):
    """128 rays, 80 candidates per ray, 1.5 degree velocity limit"""
    return constraint_graph_for(default_sensor)


@pytest.fixture(scope="session")
def sparse_sensor():
    """
    16 rays far enough apart, and candidates far enough along each ray, that every
    candidate owns its own grid cell; the velocity limit never binds
    """
    return SensorConfig(
        camera=CameraModel(num_rays=16, fov_deg=80.0),
        laser=LaserConfig(delta_theta_max_deg=179.0),
        lattice=LatticeConfig(n=40, r_min=10.0, r_max=60.0)
    )


@pytest.fixture(scope="session")
def steered_sparse_sensor():
    """
    The sparse rig with a 5.8 degree velocity limit: one azimuth step (5.33 degrees) plus
    parallax fits, so steps toward nearer or equal ranges stay feasible while jumps
    from near candidates to far ones on the next ray are cut
    """
    return SensorConfig(
        camera=CameraModel(num_rays=16, fov_deg=80.0),
        laser=LaserConfig(delta_theta_max_deg=5.8),
        lattice=LatticeConfig(n=40, r_min=10.0, r_max=60.0)
    )


@pytest.fixture(scope="session")
def four_cars_scene():
    return ExportService.read_scene(SCENE_DIR / "four_cars.json")


@pytest.fixture(scope="session")
def corpus():
    """The default 20-scene corpus: 4 cars and 3 clutter objects per scene"""
    return SceneGenerator.build_corpus()


@pytest.fixture
def make_graph():
    """Factory for small constraint graphs"""
    def _make(
        t: int,
        n: int,
        delta_theta: float,
        fov_deg: float = 30.0,
        r_min: float = 1.0,
        r_max: float = 12.0,
        laser_position=(0.2, 0.0)
    ):
        camera = CameraModel(num_rays=t, fov_deg=fov_deg)
        lattice = GeometryEngine.build_lattice(camera, n, r_min, r_max)
        laser = LaserModel.from_delta_theta(delta_theta, position=laser_position)
        return GeometryEngine.build_constraint_graph(lattice, laser)
    return _make


@pytest.fixture
def random_entropy_map():
    """Factory for entropy maps over SMALL_GRID (or a given geometry) from random confidences"""
    def _make(rng: np.random.Generator, geometry: GridGeometry = SMALL_GRID):
        confidence = ConfidenceGrid(**geometry.model_dump(), values=rng.random(geometry.shape))
        return UncertaintyMapService.entropy_map(confidence)
    return _make


@pytest.fixture
def uniform_entropy_map():
    def _make(p: float = 0.5, geometry: GridGeometry = SMALL_GRID):
        confidence = ConfidenceGrid(**geometry.model_dump(), values=np.full(geometry.shape, p))
        return UncertaintyMapService.entropy_map(confidence)
    return _make


def random_feasible_paths(graph, rng: np.random.Generator, count: int) -> np.ndarray:
    """
    Uniformly stepped random walks that never enter a node without a feasible tail,
    shape (count, T)
    """
    t_count, n = graph.num_rays, graph.points_per_ray
    alive = np.ones((t_count, n), dtype=bool)
    for t in range(t_count - 2, -1, -1):
        alive[t] = (graph.adjacency[t] & alive[t + 1][None, :]).any(axis=1)
    if not alive[0].any():
        return np.zeros((0, t_count), dtype=int)

    paths = np.zeros((count, t_count), dtype=int)
    weights = rng.random((count, n)) * alive[0]
    paths[:, 0] = np.argmax(weights, axis=1)
    for t in range(t_count - 1):
        allowed = graph.adjacency[t][paths[:, t]] & alive[t + 1][None, :]
        weights = (rng.random((count, n)) + 1e-12) * allowed
        paths[:, t + 1] = np.argmax(weights, axis=1)
    return paths


@pytest.fixture
def feasible_paths():
    return random_feasible_paths


@pytest.fixture
def small_grid():
    return SMALL_GRID
