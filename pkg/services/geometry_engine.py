import logging
import math
from typing import List, Sequence

import numpy as np

from models.curtain_models import (
    CameraModel, CandidateLattice, ConstraintGraph, CurtainPlacement, LaserModel, Ray
)
from utils.exceptions import ArgumentError, DomainError


logger = logging.getLogger(__name__)


class GeometryEngine:
    """
    Camera rays, candidate lattices and the galvanometer constraint graph
    """

    # Tolerance when matching a placement's ranges and positions against the lattice
    LATTICE_MATCH_TOLERANCE = 1e-9

    @staticmethod
    def build_rays(camera: CameraModel) -> List[Ray]:
        """
        T rays equally spaced over [-fov/2, +fov/2], left to right
        """
        azimuths = GeometryEngine.ray_azimuths(camera)
        return [
            Ray(index=t, azimuth=float(a), unit_dir=(math.sin(a), math.cos(a)))
            for t, a in enumerate(azimuths)
        ]

    @staticmethod
    def ray_azimuths(camera: CameraModel) -> np.ndarray:
        half = math.radians(camera.fov_deg) / 2.0
        return np.linspace(-half, half, camera.num_rays)

    @staticmethod
    def laser_angle(laser: LaserModel, p: Sequence[float]) -> float:
        """
        Azimuth from +z of the vector from the laser to p
        """
        dx = p[0] - laser.position[0]
        dz = p[1] - laser.position[1]
        if dz <= 0.0:
            raise DomainError(f"point ({p[0]}, {p[1]}) is not in front of the laser")
        return math.atan2(dx, dz)

    @staticmethod
    def laser_angles(laser: LaserModel, points: np.ndarray) -> np.ndarray:
        """
        Vectorized laser_angle over an array of points with trailing dimension 2
        """
        points = np.asarray(points, dtype=float)
        dx = points[..., 0] - laser.position[0]
        dz = points[..., 1] - laser.position[1]
        if np.any(dz <= 0.0):
            raise DomainError("candidate points must lie in front of the laser")
        return np.arctan2(dx, dz)

    @staticmethod
    def build_lattice(camera: CameraModel, n: int, r_min: float, r_max: float) -> CandidateLattice:
        """
        N candidates per ray at ranges r_min + k (r_max - r_min) / (n - 1)
        """
        if n < 2:
            raise ArgumentError(f"a lattice needs at least 2 points per ray, got {n}")
        if not 0.0 < r_min < r_max:
            raise ArgumentError(f"invalid range bounds r_min={r_min}, r_max={r_max}")

        azimuths = GeometryEngine.ray_azimuths(camera)
        ranges = r_min + np.arange(n) * (r_max - r_min) / (n - 1)
        unit_dirs = np.stack([np.sin(azimuths), np.cos(azimuths)], axis=1)
        positions = ranges[None, :, None] * unit_dirs[:, None, :]

        return CandidateLattice(
            camera=camera,
            points_per_ray=n,
            r_min=r_min,
            r_max=r_max,
            azimuths=azimuths,
            ranges=ranges,
            positions=positions
        )

    @staticmethod
    def build_constraint_graph(lattice: CandidateLattice, laser: LaserModel) -> ConstraintGraph:
        """
        Keep every transition (t, i) -> (t+1, j) whose laser angle change is within delta_theta_max
        """
        t_count, n = lattice.num_rays, lattice.points_per_ray
        angles = GeometryEngine.laser_angles(laser, lattice.positions)
        limit = laser.delta_theta_max

        adjacency = np.zeros((t_count - 1, n, n), dtype=bool)
        offsets = np.zeros((t_count - 1, n + 1), dtype=np.int64)
        targets = []
        for t in range(t_count - 1):
            allowed = np.abs(angles[t + 1][None, :] - angles[t][:, None]) <= limit
            adjacency[t] = allowed
            offsets[t, 1:] = np.cumsum(allowed.sum(axis=1))
            # nonzero walks row-major, so targets are sorted within each source row
            targets.append(np.nonzero(allowed)[1].astype(np.int64))

        adjacency.setflags(write=False)
        offsets.setflags(write=False)
        angles.setflags(write=False)
        for row in targets:
            row.setflags(write=False)

        total_edges = int(offsets[:, -1].sum())
        avg_degree = total_edges / (n * (t_count - 1))
        logger.debug(
            "constraint graph: T=%d N=%d edges=%d B_avg=%.3f",
            t_count, n, total_edges, avg_degree
        )

        return ConstraintGraph(
            lattice=lattice,
            laser=laser,
            angles=angles,
            adjacency=adjacency,
            edge_offsets=offsets,
            edge_targets=tuple(targets),
            avg_degree=avg_degree
        )

    @staticmethod
    def make_placement(graph: ConstraintGraph, candidate_indices: Sequence[int]) -> CurtainPlacement:
        """
        Materialize a placement from one candidate index per ray
        """
        indices = [int(i) for i in candidate_indices]
        if len(indices) != graph.num_rays:
            raise ArgumentError(f"expected {graph.num_rays} candidate indices, got {len(indices)}")
        n = graph.points_per_ray
        for t, i in enumerate(indices):
            if not 0 <= i < n:
                raise ArgumentError(f"candidate index {i} on ray {t} outside [0, {n})")
        points = [
            graph.lattice.control_point(t, i, laser_angle=float(graph.angles[t, i]))
            for t, i in enumerate(indices)
        ]
        return CurtainPlacement(points=points, candidate_indices=indices)

    @staticmethod
    def is_feasible(graph: ConstraintGraph, placement: CurtainPlacement) -> bool:
        """
        True iff every consecutive pair of control points is an edge of the graph
        """
        GeometryEngine._check_placement(graph, placement)
        indices = np.asarray(placement.candidate_indices, dtype=int)
        rays = np.arange(graph.num_rays - 1)
        return bool(np.all(graph.adjacency[rays, indices[:-1], indices[1:]]))

    @staticmethod
    def _check_placement(graph: ConstraintGraph, placement: CurtainPlacement) -> None:
        lattice = graph.lattice
        if placement.num_rays != lattice.num_rays:
            raise ArgumentError(
                f"placement has {placement.num_rays} points but the lattice has {lattice.num_rays} rays"
            )
        tolerance = GeometryEngine.LATTICE_MATCH_TOLERANCE
        for t, (point, i) in enumerate(zip(placement.points, placement.candidate_indices)):
            if not 0 <= i < lattice.points_per_ray:
                raise ArgumentError(f"candidate index {i} outside the lattice")
            if abs(point.range - lattice.ranges[i]) > tolerance:
                raise ArgumentError(
                    f"point on ray {point.ray_index} at range {point.range} is not candidate {i}"
                )
            offset = np.abs(np.asarray(point.position) - lattice.positions[t, i])
            if point.ray_index != t or np.any(offset > tolerance):
                raise ArgumentError(
                    f"point {point.position} on ray {point.ray_index} is not candidate {i} of ray {t}"
                )
