import logging
from typing import Optional, Tuple

import numpy as np

from models.curtain_models import (
    CameraModel, ConstraintGraph, CurtainPlacement, NoiseConfig, PointCloud, Ray, Scene, SceneBounds
)
from services.geometry_engine import GeometryEngine
from utils.exceptions import ArgumentError


logger = logging.getLogger(__name__)


class SceneSimulator:
    """
    Top-down world: first-hit raycasting, the single-beam LiDAR and curtain imaging
    """

    # Ray/edge pairs closer to parallel than this never intersect
    PARALLEL_TOLERANCE = 1e-12

    DEFAULT_EPSILON = 0.3
    DEFAULT_LIDAR_STRIDE = 4

    # Dropped returns beyond mean + this many standard deviations are logged as a warning
    DROPOUT_WARNING_SIGMAS = 3.0

    @staticmethod
    def dropout_above_expectation(returns: int, dropped: int, dropout_prob: float) -> bool:
        """
        True when more returns were dropped than Binomial(returns, dropout_prob) plausibly allows
        """
        expected = returns * dropout_prob
        spread = np.sqrt(returns * dropout_prob * (1.0 - dropout_prob))
        return bool(dropped > expected + SceneSimulator.DROPOUT_WARNING_SIGMAS * spread)

    @staticmethod
    def _scene_edges(scene: Scene) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Edge start points, edge vectors and owning obstacle index for every polygon edge
        """
        starts, vectors, owners = [], [], []
        for index, obstacle in enumerate(scene.objects):
            pts = obstacle.vertex_array
            starts.append(pts)
            vectors.append(np.roll(pts, -1, axis=0) - pts)
            owners.append(np.full(len(pts), index))
        if not starts:
            return np.zeros((0, 2)), np.zeros((0, 2)), np.zeros(0, dtype=int)
        return np.concatenate(starts), np.concatenate(vectors), np.concatenate(owners)

    @staticmethod
    def bounds_exit_ranges(bounds: SceneBounds, unit_dirs: np.ndarray) -> np.ndarray:
        """
        Range at which each ray from the origin leaves the scene bounds
        """
        ux, uz = unit_dirs[:, 0], unit_dirs[:, 1]
        with np.errstate(divide="ignore"):
            x_exit = np.where(ux > 0, bounds.x_max / ux, np.where(ux < 0, bounds.x_min / ux, np.inf))
            z_exit = np.where(uz > 0, bounds.z_max / uz, np.where(uz < 0, bounds.z_min / uz, np.inf))
        return np.minimum(x_exit, z_exit)

    @staticmethod
    def first_hits(scene: Scene, unit_dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        First-hit range (NaN when nothing is hit inside the bounds) and hit obstacle
        index (-1 when none) for rays from the origin along each unit direction
        """
        unit_dirs = np.asarray(unit_dirs, dtype=float).reshape(-1, 2)
        ray_count = len(unit_dirs)
        starts, vectors, owners = SceneSimulator._scene_edges(scene)
        if len(starts) == 0:
            return np.full(ray_count, np.nan), np.full(ray_count, -1)

        # Solve s * u = a + w * d for every (ray, edge) pair
        u = unit_dirs[:, None, :]
        a = starts[None, :, :]
        d = vectors[None, :, :]
        denom = u[..., 0] * d[..., 1] - u[..., 1] * d[..., 0]
        parallel = np.abs(denom) < SceneSimulator.PARALLEL_TOLERANCE
        safe = np.where(parallel, 1.0, denom)
        s = (a[..., 0] * d[..., 1] - a[..., 1] * d[..., 0]) / safe
        w = (a[..., 0] * u[..., 1] - a[..., 1] * u[..., 0]) / safe
        valid = ~parallel & (s > 0.0) & (w >= 0.0) & (w <= 1.0)

        s = np.where(valid, s, np.inf)
        nearest_edge = np.argmin(s, axis=1)
        ranges = s[np.arange(ray_count), nearest_edge]
        exits = SceneSimulator.bounds_exit_ranges(scene.bounds, unit_dirs)
        hit = np.isfinite(ranges) & (ranges <= exits)
        return np.where(hit, ranges, np.nan), np.where(hit, owners[nearest_edge], -1)

    @staticmethod
    def raycast_first_hit(scene: Scene, ray: Ray) -> Optional[float]:
        ranges, _ = SceneSimulator.first_hits(scene, np.asarray([ray.unit_dir]))
        return None if np.isnan(ranges[0]) else float(ranges[0])

    @staticmethod
    def lidar_rays(camera: CameraModel, stride: int) -> np.ndarray:
        if stride < 1:
            raise ArgumentError(f"lidar stride must be at least 1, got {stride}")
        return np.arange(0, camera.num_rays, stride)

    @staticmethod
    def lidar_scan(scene: Scene, camera: CameraModel, stride: int = DEFAULT_LIDAR_STRIDE) -> PointCloud:
        """
        First hits along every stride-th camera ray
        """
        ray_indices = SceneSimulator.lidar_rays(camera, stride)
        azimuths = GeometryEngine.ray_azimuths(camera)[ray_indices]
        unit_dirs = np.stack([np.sin(azimuths), np.cos(azimuths)], axis=1)
        ranges, _ = SceneSimulator.first_hits(scene, unit_dirs)
        hit = ~np.isnan(ranges)
        return PointCloud(
            positions=ranges[hit, None] * unit_dirs[hit],
            ray_indices=ray_indices[hit],
            sources=("lidar",) * int(hit.sum())
        )

    @staticmethod
    def image_curtain(
        scene: Scene,
        placement: CurtainPlacement,
        graph: ConstraintGraph,
        epsilon: float = DEFAULT_EPSILON,
        noise: Optional[NoiseConfig] = None,
        curtain_index: int = 1
    ) -> PointCloud:
        """
        Visible surface points lying on the curtain.

        A ray returns its first hit when that hit is within epsilon of the ray's
        control point. Under noise every return is dropped independently and the
        survivors are jittered in range, never beyond the first hit.
        """
        if epsilon <= 0.0:
            raise ArgumentError(f"epsilon must be positive, got {epsilon}")
        if not GeometryEngine.is_feasible(graph, placement):
            raise ArgumentError("placement violates the laser velocity constraint")

        unit_dirs = graph.lattice.unit_dirs
        ranges, _ = SceneSimulator.first_hits(scene, unit_dirs)
        curtain_ranges = placement.ranges
        with np.errstate(invalid="ignore"):
            returned = ~np.isnan(ranges) & (np.abs(ranges - curtain_ranges) <= epsilon)

        observed = ranges.copy()
        if noise is not None:
            rng = np.random.default_rng(noise.seed)
            keep = rng.random(len(ranges)) >= noise.dropout_prob
            jitter = rng.normal(0.0, 1.0, len(ranges)) * noise.range_sigma
            candidates = int(returned.sum())
            dropped = int((returned & ~keep).sum())
            returned &= keep
            observed = np.minimum(ranges + jitter, ranges)
            observed = np.where(observed > 0.0, observed, ranges)
            logger.debug("curtain %d: %d of %d returns dropped by noise", curtain_index, dropped, candidates)
            if SceneSimulator.dropout_above_expectation(candidates, dropped, noise.dropout_prob):
                logger.warning(
                    "curtain %d: %d of %d returns dropped, expected about %.1f",
                    curtain_index, dropped, candidates, candidates * noise.dropout_prob
                )

        rays = np.flatnonzero(returned)
        return PointCloud(
            positions=observed[rays, None] * unit_dirs[rays],
            ray_indices=rays,
            sources=(f"curtain:{curtain_index}",) * len(rays)
        )
