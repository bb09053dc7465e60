import logging
import time
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from models.curtain_models import (
    ConstraintGraph, EpisodeConfig, EpisodeLog, EpisodeResult, EpisodeStep, NoiseConfig,
    OccupancyBelief, PointCloud, Scene, SensorConfig
)
from services.belief_service import OccupancyBeliefService
from services.geometry_engine import GeometryEngine
from services.placement_planner import PlacementPlanner
from services.scene_simulator import SceneSimulator
from services.strategy_registry import PlacementStrategy, StrategyRegistry, default_registry
from services.uncertainty_service import UncertaintyMapService
from utils.exceptions import ArgumentError, PlanningError


logger = logging.getLogger(__name__)


@lru_cache(maxsize=16)
def constraint_graph_for(sensor: SensorConfig) -> ConstraintGraph:
    """
    Build (once per sensor configuration) the lattice and constraint graph
    """
    lattice = GeometryEngine.build_lattice(
        sensor.camera, sensor.lattice.n, sensor.lattice.r_min, sensor.lattice.r_max
    )
    return GeometryEngine.build_constraint_graph(lattice, sensor.laser.to_laser_model())


def derive_seed(seed: int, k: int) -> int:
    """
    Independent 64-bit seed for step k of an episode seeded with seed
    """
    return int(np.random.SeedSequence([seed, k]).generate_state(1, dtype=np.uint64)[0])


class EpisodeRunner:
    """
    The sense-plan-update loop: a LiDAR bootstrap followed by planned curtains
    """

    @staticmethod
    def lidar_bootstrap(scene: Scene, sensor: SensorConfig) -> Tuple[OccupancyBelief, PointCloud, EpisodeStep]:
        started = time.perf_counter()
        stride = sensor.simulation.lidar_stride
        cloud = SceneSimulator.lidar_scan(scene, sensor.camera, stride)
        report = OccupancyBeliefService.lidar_report(sensor.grid, scene.bounds, sensor.camera, stride, cloud)
        belief = OccupancyBeliefService.init_belief(sensor.grid, sensor.belief.prior_p)
        belief = OccupancyBeliefService.ideal_update(belief, report)

        step = EpisodeStep(
            k=0,
            points_added=len(cloud),
            entropy_bits=OccupancyBeliefService.total_entropy(belief),
            sense_time_s=time.perf_counter() - started
        )
        return belief, cloud, step

    @staticmethod
    def curtain_step(
        scene: Scene,
        sensor: SensorConfig,
        belief: OccupancyBelief,
        strategy: PlacementStrategy,
        k: int,
        seed: int,
        noise: Optional[NoiseConfig] = None
    ) -> Tuple[OccupancyBelief, PointCloud, EpisodeStep]:
        """
        Plan curtain k on the current belief, image it and fold the returns into the belief
        """
        graph = constraint_graph_for(sensor)

        started = time.perf_counter()
        entropy_map = UncertaintyMapService.entropy_map(OccupancyBeliefService.confidence_grid(belief))
        try:
            placement = strategy.plan(graph, entropy_map, derive_seed(seed, k))
        except PlanningError as error:
            raise error.with_step(k) from error
        plan_time = time.perf_counter() - started

        score = PlacementPlanner.objective(placement, entropy_map)
        gain = OccupancyBeliefService.expected_information_gain(belief, placement)

        started = time.perf_counter()
        step_noise = None
        if noise is not None:
            step_noise = noise.model_copy(update={"seed": derive_seed(noise.seed, k)})
        returns = SceneSimulator.image_curtain(
            scene, placement, graph, sensor.simulation.epsilon, step_noise, curtain_index=k
        )
        report = OccupancyBeliefService.curtain_report(sensor.grid, placement, returns)
        likelihoods = None
        if noise is not None:
            likelihoods = (sensor.belief.hit_likelihood, sensor.belief.miss_likelihood)
        belief = OccupancyBeliefService.apply_report(belief, report, likelihoods)
        sense_time = time.perf_counter() - started

        step = EpisodeStep(
            k=k,
            placement=placement,
            points_added=len(returns),
            entropy_bits=OccupancyBeliefService.total_entropy(belief),
            objective_bits=score.total_entropy,
            smoothness_rad2=score.smoothness_penalty,
            information_gain_bits=gain,
            plan_time_s=plan_time,
            sense_time_s=sense_time
        )
        return belief, returns, step

    @staticmethod
    def simulate(
        scene: Scene,
        config: EpisodeConfig,
        curtains: int,
        registry: Optional[StrategyRegistry] = None
    ) -> EpisodeResult:
        if curtains < 0:
            raise ArgumentError(f"curtain count must be non-negative, got {curtains}")
        strategy = (registry or default_registry()).resolve(config.strategy)

        belief, cloud, step = EpisodeRunner.lidar_bootstrap(scene, config.sensor)
        steps, clouds = [step], [cloud]
        logger.info("episode %s seed=%d: lidar %d points, %.2f bits",
                    config.strategy, config.seed, step.points_added, step.entropy_bits)

        for k in range(1, curtains + 1):
            belief, returns, step = EpisodeRunner.curtain_step(
                scene, config.sensor, belief, strategy, k, config.seed, config.noise
            )
            cloud = cloud.union(returns)
            steps.append(step)
            clouds.append(cloud)
            logger.info("episode %s seed=%d: curtain %d, %d returns, %.2f bits (plan %.4fs)",
                        config.strategy, config.seed, k, step.points_added, step.entropy_bits, step.plan_time_s)

        log = EpisodeLog(strategy=config.strategy, seed=config.seed, steps=steps)
        return EpisodeResult(log=log, clouds=clouds, belief=belief)

    @staticmethod
    def run_episode(scene: Scene, config: EpisodeConfig) -> EpisodeLog:
        return EpisodeRunner.simulate(scene, config, config.k_max).log

    @staticmethod
    def run_generalization(scene: Scene, config: EpisodeConfig, k_test: int) -> EpisodeLog:
        """
        Run k_test curtains regardless of the configured K
        """
        return EpisodeRunner.simulate(scene, config, k_test).log

    @staticmethod
    def sample_curtain_count(k_max: int, rng: np.random.Generator) -> int:
        """
        k drawn uniformly from {0, ..., K}
        """
        return int(rng.integers(0, k_max + 1))

    @staticmethod
    def generate_training_sample(
        scene: Scene,
        config: EpisodeConfig,
        rng: np.random.Generator,
        k: Optional[int] = None
    ) -> PointCloud:
        """
        Unified cloud after a random number of curtains, or after exactly k when forced
        """
        if k is None:
            k = EpisodeRunner.sample_curtain_count(config.k_max, rng)
        elif not 0 <= k <= config.k_max:
            raise ArgumentError(f"forced curtain count {k} outside [0, {config.k_max}]")
        return EpisodeRunner.simulate(scene, config, k).cloud
