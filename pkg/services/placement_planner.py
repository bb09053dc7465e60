import logging
from typing import Optional, Tuple

import numpy as np

from models.curtain_models import (
    CandidateLattice, ConstraintGraph, CurtainPlacement, EntropyMap, PlacementScore, ValueTable
)
from services.geometry_engine import GeometryEngine
from services.uncertainty_service import UncertaintyMapService
from utils.exceptions import ArgumentError, InstanceTooLargeError, PlanningError


logger = logging.getLogger(__name__)


class PlacementPlanner:
    """
    Curtain placement: the exact dynamic program, its brute-force oracle and the baselines.

    Every planner ranks placements by the hierarchical key
    (-total_entropy, smoothness_penalty, candidate indices).
    """

    # Entropy sums closer than this are treated as tied
    ENTROPY_TIE_TOLERANCE = 1e-9

    # Guard on N^T for the exhaustive oracle
    MAX_ORACLE_PATHS = 10 ** 7

    # Random frontoparallel curtains are drawn from this z range unless told otherwise
    DEFAULT_RANDOM_Z_RANGE = (5.0, 50.0)
    MAX_FRONTOPARALLEL_DRAWS = 100

    TIE_BREAKS = ("random", "min_angle_change")

    @staticmethod
    def node_entropies(graph: ConstraintGraph, entropy_map: EntropyMap) -> np.ndarray:
        """
        H(X) for every candidate, shape (T, N)
        """
        positions = graph.lattice.positions.reshape(-1, 2)
        values = UncertaintyMapService.lookup_entropies(entropy_map, positions)
        return values.reshape(graph.num_rays, graph.points_per_ray)

    @staticmethod
    def objective(placement: CurtainPlacement, entropy_map: EntropyMap) -> PlacementScore:
        """
        J = sum of looked-up entropies, plus the sum of squared laser angle changes
        """
        if any(point.laser_angle is None for point in placement.points):
            raise ArgumentError("placement control points must carry laser angles")
        entropies = UncertaintyMapService.lookup_entropies(entropy_map, placement.positions)
        angle_steps = np.diff(placement.laser_angles)
        return PlacementScore(
            total_entropy=float(np.sum(entropies)),
            smoothness_penalty=float(np.sum(angle_steps ** 2))
        )

    @staticmethod
    def optimize_dp(
        graph: ConstraintGraph,
        entropy_map: EntropyMap
    ) -> Tuple[CurtainPlacement, PlacementScore, ValueTable]:
        """
        Backward pass over the constraint graph computing, for every node, the best
        tail (entropy, smoothness) pair, then a forward pass following the argmax
        successors. Runs in O(N T B_avg).
        """
        entropies = PlacementPlanner.node_entropies(graph, entropy_map)
        angles = graph.angles
        t_count, n = entropies.shape

        tail_entropy = np.empty((t_count, n))
        tail_smoothness = np.empty((t_count, n))
        successors = np.full((t_count - 1, n), -1, dtype=np.int64)
        tail_entropy[-1] = entropies[-1]
        tail_smoothness[-1] = 0.0

        for t in range(t_count - 2, -1, -1):
            offsets, targets = graph.edge_offsets[t], graph.edge_targets[t]
            counts = np.diff(offsets)
            tail_entropy[t] = -np.inf
            tail_smoothness[t] = np.inf

            rows = np.flatnonzero(counts > 0)
            if len(rows):
                sources = np.repeat(np.arange(n), counts)
                cand_entropy = tail_entropy[t + 1][targets]
                cand_smoothness = (
                    tail_smoothness[t + 1][targets] + (angles[t + 1][targets] - angles[t][sources]) ** 2
                )
                best = PlacementPlanner._best_per_row(cand_entropy, cand_smoothness, offsets[rows], counts[rows])
                tail_entropy[t, rows] = entropies[t, rows] + cand_entropy[best]
                tail_smoothness[t, rows] = cand_smoothness[best]
                successors[t, rows] = targets[best]

            dead = ~np.isfinite(tail_entropy[t])
            tail_smoothness[t, dead] = np.inf
            successors[t, dead] = -1
            if dead.all():
                blocked = PlacementPlanner.first_blocked_ray(graph)
                raise PlanningError(
                    f"no feasible transition continues from ray {blocked} to ray {blocked + 1}",
                    ray_index=blocked
                )

        start = PlacementPlanner._best_single(tail_entropy[0], tail_smoothness[0])
        path = [start]
        for t in range(t_count - 1):
            path.append(int(successors[t, path[-1]]))

        placement = GeometryEngine.make_placement(graph, path)
        score = PlacementPlanner.objective(placement, entropy_map)
        table = ValueTable(
            tail_entropy=tail_entropy,
            tail_smoothness=tail_smoothness,
            successors=successors
        )
        return placement, score, table

    @staticmethod
    def first_blocked_ray(graph: ConstraintGraph) -> Optional[int]:
        """
        First ray t whose reachable candidates have no edge into ray t+1, or None
        when some full placement exists
        """
        reachable = np.ones(graph.points_per_ray, dtype=bool)
        for t in range(graph.num_rays - 1):
            reachable = graph.adjacency[t][reachable].any(axis=0)
            if not reachable.any():
                return t
        return None

    @staticmethod
    def _best_per_row(
        entropy: np.ndarray,
        smoothness: np.ndarray,
        starts: np.ndarray,
        counts: np.ndarray
    ) -> np.ndarray:
        """
        Position of the lexicographic best edge in each non-empty row segment:
        maximal entropy (within tolerance), then minimal smoothness, then first position.
        """
        row_max = np.maximum.reduceat(entropy, starts)
        near = entropy >= np.repeat(row_max, counts) - PlacementPlanner.ENTROPY_TIE_TOLERANCE
        masked = np.where(near, smoothness, np.inf)
        row_min = np.minimum.reduceat(masked, starts)
        chosen = near & (masked <= np.repeat(row_min, counts))
        positions = np.where(chosen, np.arange(len(entropy)), len(entropy))
        return np.minimum.reduceat(positions, starts)

    @staticmethod
    def _best_single(entropy: np.ndarray, smoothness: np.ndarray) -> int:
        best = PlacementPlanner._best_per_row(entropy, smoothness, np.array([0]), np.array([len(entropy)]))
        return int(best[0])

    @staticmethod
    def brute_force_oracle(
        graph: ConstraintGraph,
        entropy_map: EntropyMap
    ) -> Tuple[CurtainPlacement, PlacementScore]:
        """
        Enumerate every feasible placement and return the best under the hierarchical key
        """
        t_count, n = graph.num_rays, graph.points_per_ray
        if n ** t_count > PlacementPlanner.MAX_ORACLE_PATHS:
            raise InstanceTooLargeError(
                f"N^T = {n}^{t_count} exceeds the oracle guard of {PlacementPlanner.MAX_ORACLE_PATHS}"
            )

        # Paths grow ray by ray along graph edges, staying in lexicographic order
        paths = np.arange(n).reshape(-1, 1)
        for t in range(t_count - 1):
            rows, cols = np.nonzero(graph.adjacency[t][paths[:, -1]])
            if len(rows) == 0:
                raise PlanningError(f"no feasible placement reaches ray {t + 1}", ray_index=t)
            paths = np.hstack([paths[rows], cols.reshape(-1, 1)])

        entropies = PlacementPlanner.node_entropies(graph, entropy_map)
        rays = np.arange(t_count)
        totals = entropies[rays, paths].sum(axis=1)
        penalties = (np.diff(graph.angles[rays, paths], axis=1) ** 2).sum(axis=1)

        near = totals >= totals.max() - PlacementPlanner.ENTROPY_TIE_TOLERANCE
        masked = np.where(near, penalties, np.inf)
        best = int(np.flatnonzero(near & (masked <= masked.min()))[0])

        placement = GeometryEngine.make_placement(graph, paths[best])
        return placement, PlacementPlanner.objective(placement, entropy_map)

    @staticmethod
    def greedy(
        graph: ConstraintGraph,
        entropy_map: EntropyMap,
        tie_break: str = "random",
        seed: int = 0
    ) -> CurtainPlacement:
        """
        Left-to-right greedy walk choosing the highest-entropy successor at every ray
        """
        if tie_break not in PlacementPlanner.TIE_BREAKS:
            raise ArgumentError(f"unknown tie break {tie_break!r}")
        rng = np.random.default_rng(seed)
        entropies = PlacementPlanner.node_entropies(graph, entropy_map)
        angles = graph.angles

        def pick(candidates: np.ndarray, t: int, previous: Optional[int]) -> int:
            values = entropies[t][candidates]
            tied = candidates[values >= values.max() - PlacementPlanner.ENTROPY_TIE_TOLERANCE]
            if tie_break == "random":
                return int(rng.choice(tied))
            if previous is None:
                return int(tied[0])
            change = np.abs(angles[t][tied] - angles[t - 1][previous])
            return int(tied[np.argmin(change)])

        path = [pick(np.arange(graph.points_per_ray), 0, None)]
        for t in range(graph.num_rays - 1):
            options = graph.successors(t, path[-1])
            if len(options) == 0:
                raise PlanningError(
                    f"greedy walk reached a dead end at ray {t}, candidate {path[-1]}", ray_index=t
                )
            path.append(pick(options, t + 1, path[-1]))
        return GeometryEngine.make_placement(graph, path)

    @staticmethod
    def nearest_depth_indices(lattice: CandidateLattice, z) -> np.ndarray:
        """
        Per-ray candidate whose z-coordinate is nearest to each requested depth.

        Along one ray z = r cos(azimuth), so the nearest z is the nearest range to
        z / cos(azimuth); ties go to the lower index. Accepts a scalar or an array
        of depths and returns shape (..., T).
        """
        z = np.asarray(z, dtype=float)[..., None]
        target_ranges = z / np.cos(lattice.azimuths)
        steps = (target_ranges - lattice.r_min) / lattice.range_step
        indices = np.ceil(steps - 0.5).astype(np.int64)
        return np.clip(indices, 0, lattice.points_per_ray - 1)

    @staticmethod
    def _frontoparallel_feasible(graph: ConstraintGraph, indices: np.ndarray) -> np.ndarray:
        rays = np.arange(graph.num_rays - 1)
        return graph.adjacency[rays, indices[..., :-1], indices[..., 1:]].all(axis=-1)

    @staticmethod
    def fixed_depth(z: float, graph: ConstraintGraph) -> CurtainPlacement:
        """
        Frontoparallel curtain at depth z
        """
        indices = PlacementPlanner.nearest_depth_indices(graph.lattice, z)
        if not PlacementPlanner._frontoparallel_feasible(graph, indices):
            raise PlanningError(f"a frontoparallel curtain at z={z} m violates the velocity limit")
        return GeometryEngine.make_placement(graph, indices)

    @staticmethod
    def random_frontoparallel(
        rng_seed: int,
        graph: ConstraintGraph,
        z_min: Optional[float] = None,
        z_max: Optional[float] = None
    ) -> CurtainPlacement:
        """
        Frontoparallel curtain at a depth drawn uniformly from [z_min, z_max].

        Depths whose curtain would violate the velocity limit are redrawn.
        """
        default_lo, default_hi = PlacementPlanner.DEFAULT_RANDOM_Z_RANGE
        z_min = default_lo if z_min is None else z_min
        z_max = default_hi if z_max is None else z_max
        if z_min > z_max:
            raise ArgumentError(f"z_min={z_min} exceeds z_max={z_max}")

        rng = np.random.default_rng(rng_seed)
        for _ in range(PlacementPlanner.MAX_FRONTOPARALLEL_DRAWS):
            z = float(rng.uniform(z_min, z_max))
            indices = PlacementPlanner.nearest_depth_indices(graph.lattice, z)
            if PlacementPlanner._frontoparallel_feasible(graph, indices):
                return GeometryEngine.make_placement(graph, indices)
        raise PlanningError(f"no feasible frontoparallel curtain drawn from [{z_min}, {z_max}] m")

    @staticmethod
    def frontoparallel_uncertainty(entropy_map: EntropyMap, graph: ConstraintGraph) -> CurtainPlacement:
        """
        Frontoparallel curtain at the z-level (from the central ray's candidates)
        with the largest summed entropy; smallest z wins ties.
        """
        lattice = graph.lattice
        levels = lattice.depths[lattice.central_ray]
        indices = PlacementPlanner.nearest_depth_indices(lattice, levels)
        entropies = PlacementPlanner.node_entropies(graph, entropy_map)
        sums = entropies[np.arange(lattice.num_rays), indices].sum(axis=1)
        feasible = PlacementPlanner._frontoparallel_feasible(graph, indices)
        if not feasible.any():
            raise PlanningError("no frontoparallel curtain satisfies the velocity limit")

        sums = np.where(feasible, sums, -np.inf)
        level = int(np.flatnonzero(sums >= sums.max() - PlacementPlanner.ENTROPY_TIE_TOLERANCE)[0])
        logger.debug("frontoparallel uncertainty level z=%.3f m, sum=%.4f bits", levels[level], sums[level])
        return GeometryEngine.make_placement(graph, indices[level])

