import logging
import math
from typing import Iterable, Optional, Tuple

import numpy as np
from scipy.special import expit, logit

from models.curtain_models import (
    CameraModel, ConfidenceGrid, CurtainPlacement, GridGeometry, OccupancyBelief, PointCloud,
    SceneBounds, SensingReport
)
from services.geometry_engine import GeometryEngine
from services.scene_simulator import SceneSimulator
from services.uncertainty_service import UncertaintyMapService
from utils.exceptions import ArgumentError, DomainError


logger = logging.getLogger(__name__)

Cell = Tuple[int, int]


class OccupancyBeliefService:
    """
    Factorized occupancy belief over the anchor grid.

    The belief stands in for detector confidence: its cells feed the entropy map
    the planner reads, and sensed points update it after every sensing step.
    """

    @staticmethod
    def init_belief(geometry: GridGeometry, prior_p: float) -> OccupancyBelief:
        if not 0.0 < prior_p < 1.0:
            raise DomainError(f"prior_p must lie strictly between 0 and 1, got {prior_p}")
        return OccupancyBelief(
            **geometry.geometry().model_dump(),
            values=np.full(geometry.shape, prior_p),
            prior_p=prior_p
        )

    @staticmethod
    def _with_values(belief: OccupancyBelief, values: np.ndarray) -> OccupancyBelief:
        return OccupancyBelief(**belief.geometry().model_dump(), values=values, prior_p=belief.prior_p)

    @staticmethod
    def _cell_arrays(cells: Iterable[Cell]) -> Tuple[np.ndarray, np.ndarray]:
        cells = sorted(cells)
        if not cells:
            return np.zeros(0, dtype=int), np.zeros(0, dtype=int)
        ix, iz = zip(*cells)
        return np.asarray(ix, dtype=int), np.asarray(iz, dtype=int)

    @staticmethod
    def ideal_update(belief: OccupancyBelief, report: SensingReport) -> OccupancyBelief:
        """
        Covered cells collapse to certainty: hits to 1, misses to 0. Others keep their value.
        """
        values = np.array(belief.values)
        miss_ix, miss_iz = OccupancyBeliefService._cell_arrays(report.covered_cells - report.hit_cells)
        hit_ix, hit_iz = OccupancyBeliefService._cell_arrays(report.hit_cells)
        values[miss_ix, miss_iz] = 0.0
        values[hit_ix, hit_iz] = 1.0
        return OccupancyBeliefService._with_values(belief, values)

    @staticmethod
    def noisy_update(
        belief: OccupancyBelief,
        report: SensingReport,
        hit_likelihood: float,
        miss_likelihood: float
    ) -> OccupancyBelief:
        """
        Bayes update in log-odds: covered hits add log(hit / miss), covered misses subtract it
        """
        for name, value in (("hit_likelihood", hit_likelihood), ("miss_likelihood", miss_likelihood)):
            if not 0.0 < value < 1.0:
                raise DomainError(f"{name} must lie strictly between 0 and 1, got {value}")
        if hit_likelihood <= miss_likelihood:
            raise ArgumentError("hit_likelihood must exceed miss_likelihood")

        step = math.log(hit_likelihood / miss_likelihood)
        values = np.array(belief.values)
        miss_ix, miss_iz = OccupancyBeliefService._cell_arrays(report.covered_cells - report.hit_cells)
        hit_ix, hit_iz = OccupancyBeliefService._cell_arrays(report.hit_cells)
        with np.errstate(divide="ignore"):
            values[hit_ix, hit_iz] = expit(logit(values[hit_ix, hit_iz]) + step)
            values[miss_ix, miss_iz] = expit(logit(values[miss_ix, miss_iz]) - step)
        return OccupancyBeliefService._with_values(belief, values)

    @staticmethod
    def confidence_grid(belief: OccupancyBelief) -> ConfidenceGrid:
        return ConfidenceGrid(**belief.geometry().model_dump(), values=belief.values)

    @staticmethod
    def total_entropy(belief: OccupancyBelief) -> float:
        return float(np.sum(UncertaintyMapService.binary_entropies(belief.values)))

    @staticmethod
    def placement_cells(geometry: GridGeometry, placement: CurtainPlacement) -> np.ndarray:
        """
        Nearest cell of every control point inside the grid, shape (T', 2), ray order
        """
        ix, iz, inside = geometry.nearest_cells(placement.positions)
        return np.stack([ix[inside], iz[inside]], axis=1)

    @staticmethod
    def expected_information_gain(belief: OccupancyBelief, placement: CurtainPlacement) -> float:
        """
        Entropy removed if every cell the placement covers were resolved exactly
        """
        cells = OccupancyBeliefService.placement_cells(belief, placement)
        report = SensingReport(covered_cells=frozenset(map(tuple, cells.tolist())))
        posterior = OccupancyBeliefService.ideal_update(belief, report)
        return OccupancyBeliefService.total_entropy(belief) - OccupancyBeliefService.total_entropy(posterior)

    @staticmethod
    def curtain_report(
        geometry: GridGeometry,
        placement: CurtainPlacement,
        returns: PointCloud
    ) -> SensingReport:
        """
        Each control point covers its nearest cell; the cell is a hit when that ray returned
        """
        ix, iz, inside = geometry.nearest_cells(placement.positions)
        returned = set(int(t) for t in returns.ray_indices)
        covered, hits = set(), set()
        for t in np.flatnonzero(inside):
            cell = (int(ix[t]), int(iz[t]))
            covered.add(cell)
            if int(t) in returned:
                hits.add(cell)
        return SensingReport(covered_cells=frozenset(covered), hit_cells=frozenset(hits))

    @staticmethod
    def lidar_report(
        geometry: GridGeometry,
        bounds: SceneBounds,
        camera: CameraModel,
        stride: int,
        returns: PointCloud
    ) -> SensingReport:
        """
        Free space carved along every sampled ray up to its hit (or the bounds exit),
        plus the hit cells themselves.

        A cell is traversed when its center lies within half a cell of the ray segment.
        """
        ray_indices = SceneSimulator.lidar_rays(camera, stride)
        azimuths = GeometryEngine.ray_azimuths(camera)[ray_indices]
        unit_dirs = np.stack([np.sin(azimuths), np.cos(azimuths)], axis=1)
        lengths = SceneSimulator.bounds_exit_ranges(bounds, unit_dirs)

        hit_rays = {int(t): position for t, position in zip(returns.ray_indices, returns.positions)}
        for row, t in enumerate(ray_indices):
            if int(t) in hit_rays:
                lengths[row] = float(np.hypot(*hit_rays[int(t)]))

        xs, zs = geometry.cell_centers()
        cx, cz = np.meshgrid(xs, zs, indexing="ij")
        centers = np.stack([cx.ravel(), cz.ravel()], axis=1)
        along = np.clip(unit_dirs @ centers.T, 0.0, lengths[:, None])
        gap_x = centers[None, :, 0] - along * unit_dirs[:, 0:1]
        gap_z = centers[None, :, 1] - along * unit_dirs[:, 1:2]
        radius = 0.5 * min(geometry.cell_size)
        traversed = np.flatnonzero(np.any(np.hypot(gap_x, gap_z) <= radius, axis=0))
        covered = {(int(c // geometry.nz), int(c % geometry.nz)) for c in traversed}

        hits = set()
        if len(returns):
            ix, iz, inside = geometry.nearest_cells(returns.positions)
            hits = {(int(a), int(b)) for a, b in zip(ix[inside], iz[inside])}
        logger.debug("lidar report: %d traversed cells, %d hit cells", len(covered), len(hits))
        return SensingReport(covered_cells=frozenset(covered | hits), hit_cells=frozenset(hits))

    @staticmethod
    def apply_report(
        belief: OccupancyBelief,
        report: SensingReport,
        likelihoods: Optional[Tuple[float, float]] = None
    ) -> OccupancyBelief:
        """
        ideal_update, or noisy_update when (hit_likelihood, miss_likelihood) are given
        """
        if likelihoods is None:
            return OccupancyBeliefService.ideal_update(belief, report)
        return OccupancyBeliefService.noisy_update(belief, report, *likelihoods)
