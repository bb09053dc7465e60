import logging
import math
from typing import Iterable, List, Optional

import numpy as np
from pydantic import ValidationError
from scipy.spatial import ConvexHull

from models.curtain_models import Obstacle, Scene, SceneBounds
from utils.exceptions import ArgumentError, SceneGenerationError


logger = logging.getLogger(__name__)


class SceneGenerator:
    """
    Random non-overlapping scenes: car-sized rectangles as targets, convex polygons as clutter
    """

    CAR_WIDTH = 1.8
    CAR_LENGTH = 4.5

    # Placement window in front of the sensor
    Z_RANGE = (8.0, 60.0)
    HALF_FOV_DEG = 35.0

    CLUTTER_RADIUS = (0.4, 1.5)
    CLUTTER_POINTS = 7
    CLEARANCE = 0.5

    MAX_PLACEMENT_ATTEMPTS = 200

    DEFAULT_CORPUS_SEEDS = range(20)
    DEFAULT_TARGETS = 4
    DEFAULT_CLUTTER = 3

    @staticmethod
    def polygons_overlap(a: np.ndarray, b: np.ndarray, clearance: float = 0.0) -> bool:
        """
        Separating-axis test for two convex polygons, treating gaps below clearance as overlap
        """
        for polygon in (a, b):
            edges = np.roll(polygon, -1, axis=0) - polygon
            normals = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
            normals /= np.linalg.norm(normals, axis=1, keepdims=True)
            proj_a = a @ normals.T
            proj_b = b @ normals.T
            gap = np.maximum(proj_b.min(axis=0) - proj_a.max(axis=0), proj_a.min(axis=0) - proj_b.max(axis=0))
            if np.any(gap > clearance):
                return False
        return True

    @staticmethod
    def _sample_center(rng: np.random.Generator, bounds: SceneBounds, margin: float) -> np.ndarray:
        z = rng.uniform(*SceneGenerator.Z_RANGE)
        half_width = min(z * math.tan(math.radians(SceneGenerator.HALF_FOV_DEG)),
                         bounds.x_max - margin, -bounds.x_min - margin)
        return np.array([rng.uniform(-half_width, half_width), z])

    @staticmethod
    def car_vertices(center: np.ndarray, yaw: float) -> np.ndarray:
        """
        Counterclockwise corners of a car footprint rotated by yaw about its center
        """
        w, l = SceneGenerator.CAR_WIDTH / 2.0, SceneGenerator.CAR_LENGTH / 2.0
        corners = np.array([[-w, -l], [w, -l], [w, l], [-w, l]])
        c, s = math.cos(yaw), math.sin(yaw)
        rotation = np.array([[c, -s], [s, c]])
        return corners @ rotation.T + center

    @staticmethod
    def clutter_vertices(center: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        radius = rng.uniform(*SceneGenerator.CLUTTER_RADIUS)
        angles = rng.uniform(0.0, 2.0 * math.pi, SceneGenerator.CLUTTER_POINTS)
        spread = radius * np.sqrt(rng.uniform(0.25, 1.0, SceneGenerator.CLUTTER_POINTS))
        points = center + np.stack([spread * np.cos(angles), spread * np.sin(angles)], axis=1)
        hull = ConvexHull(points)
        # 2-D hull vertices come back counterclockwise
        return points[hull.vertices]

    @staticmethod
    def _place(
        rng: np.random.Generator,
        bounds: SceneBounds,
        placed: List[Obstacle],
        obstacle_id: str,
        is_target: bool
    ) -> Obstacle:
        margin = SceneGenerator.CAR_LENGTH
        for _ in range(SceneGenerator.MAX_PLACEMENT_ATTEMPTS):
            center = SceneGenerator._sample_center(rng, bounds, margin)
            if is_target:
                vertices = SceneGenerator.car_vertices(center, rng.uniform(-math.pi, math.pi))
            else:
                vertices = SceneGenerator.clutter_vertices(center, rng)
            if any(SceneGenerator.polygons_overlap(vertices, other.vertex_array, SceneGenerator.CLEARANCE)
                   for other in placed):
                continue
            try:
                return Obstacle(
                    id=obstacle_id,
                    vertices=[(float(x), float(z)) for x, z in vertices],
                    is_target=is_target
                )
            except ValidationError:
                continue

        logger.warning("gave up placing %s after %d attempts", obstacle_id, SceneGenerator.MAX_PLACEMENT_ATTEMPTS)
        raise SceneGenerationError(
            f"could not place {obstacle_id} without overlap after {SceneGenerator.MAX_PLACEMENT_ATTEMPTS} attempts"
        )

    @staticmethod
    def generate(
        seed: int,
        n_targets: int,
        n_clutter: int,
        bounds: Optional[SceneBounds] = None
    ) -> Scene:
        """
        Deterministic random scene for the given seed
        """
        if n_targets < 0 or n_clutter < 0:
            raise ArgumentError("object counts must be non-negative")
        bounds = bounds or SceneBounds()
        rng = np.random.default_rng(seed)

        placed: List[Obstacle] = []
        for index in range(n_targets):
            placed.append(SceneGenerator._place(rng, bounds, placed, f"car-{index}", True))
        for index in range(n_clutter):
            placed.append(SceneGenerator._place(rng, bounds, placed, f"clutter-{index}", False))
        return Scene(bounds=bounds, objects=placed)

    @staticmethod
    def build_corpus(
        seeds: Iterable[int] = DEFAULT_CORPUS_SEEDS,
        n_targets: int = DEFAULT_TARGETS,
        n_clutter: int = DEFAULT_CLUTTER
    ) -> List[Scene]:
        return [SceneGenerator.generate(seed, n_targets, n_clutter) for seed in seeds]
