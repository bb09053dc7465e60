import gc
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from typing import Any, Callable, Iterable, List, Sequence, Tuple

import numpy as np
from scipy import stats

from models.curtain_models import (
    BenchReport, BenchRow, CameraModel, ConfidenceGrid, EpisodeConfig, GridGeometry, LaserModel,
    Scene, ScalingRow, SensorConfig
)
from services.episode_runner import EpisodeRunner, constraint_graph_for, derive_seed
from services.geometry_engine import GeometryEngine
from services.placement_planner import PlacementPlanner
from services.strategy_registry import default_registry
from services.uncertainty_service import UncertaintyMapService
from utils.exceptions import ArgumentError


logger = logging.getLogger(__name__)


def _bench_trial(args: Tuple[Scene, EpisodeConfig, int]) -> Tuple[List[float], List[float], List[float]]:
    """
    One isolated trial: cumulative (plan + sense) time, cumulative plan time and
    entropy removed after the LiDAR step and each curtain
    """
    scene, config, curtains = args
    BenchmarkService.gc_collect()
    result = EpisodeRunner.simulate(scene, config, curtains)

    sensor = config.sensor
    prior = UncertaintyMapService.binary_entropy(sensor.belief.prior_p) * sensor.grid.nx * sensor.grid.nz
    steps = result.log.steps
    total = np.cumsum([step.plan_time_s + step.sense_time_s for step in steps])
    planning = np.cumsum([step.plan_time_s for step in steps])
    removed = [prior - step.entropy_bits for step in steps]
    return total.tolist(), planning.tolist(), removed


class BenchmarkService:
    """
    Timing harness for strategies and the planner's scaling behaviour
    """

    CONFIDENCE = 0.95
    DEFAULT_CURTAINS = 3

    @staticmethod
    def gc_collect() -> None:
        """
        Force garbage collection before timing
        """
        gc.collect()

    @staticmethod
    def time_execution(func: Callable, *args, **kwargs) -> Tuple[float, Any]:
        """
        Time a single function execution
        """
        start = time.perf_counter()
        result = func(*args, **kwargs)
        elapsed = time.perf_counter() - start
        return elapsed, result

    @staticmethod
    def confidence_half_width(samples: Sequence[float], confidence: float = CONFIDENCE) -> float:
        """
        Student-t half-width of the confidence interval on the mean
        """
        samples = np.asarray(samples, dtype=float)
        n = len(samples)
        if n < 2:
            raise ArgumentError("a confidence interval needs at least two samples")
        quantile = stats.t.ppf(0.5 + confidence / 2.0, n - 1)
        return float(quantile * samples.std(ddof=1) / math.sqrt(n))

    @staticmethod
    def run_bench(
        scenes: Sequence[Scene],
        strategies: Iterable[str],
        trials: int,
        sensor: SensorConfig,
        seed: int = 0,
        workers: int = 1,
        curtains: int = DEFAULT_CURTAINS
    ) -> BenchReport:
        """
        For each strategy and k in 0..curtains, mean cumulative time and entropy
        removed over `trials` episodes cycling through the scenes
        """
        if trials < 2:
            raise ArgumentError(f"trials must be at least 2, got {trials}")
        if not scenes:
            raise ArgumentError("benchmark needs at least one scene")
        workers = max(1, workers)

        rows = []
        for strategy in strategies:
            jobs = [
                (
                    scenes[trial % len(scenes)],
                    EpisodeConfig(k_max=curtains, strategy=strategy, seed=derive_seed(seed, trial), sensor=sensor),
                    curtains
                )
                for trial in range(trials)
            ]
            if workers > 1:
                with ProcessPoolExecutor(max_workers=workers) as pool:
                    outcomes = list(pool.map(_bench_trial, jobs))
            else:
                outcomes = [_bench_trial(job) for job in jobs]

            totals = np.array([outcome[0] for outcome in outcomes])
            planning = np.array([outcome[1] for outcome in outcomes])
            removed = np.array([outcome[2] for outcome in outcomes])
            for k in range(curtains + 1):
                rows.append(BenchRow(
                    strategy=strategy,
                    k=k,
                    mean_time_s=float(totals[:, k].mean()),
                    ci_half_width_s=BenchmarkService.confidence_half_width(totals[:, k]),
                    mean_plan_time_s=float(planning[:, k].mean()),
                    plan_ci_half_width_s=BenchmarkService.confidence_half_width(planning[:, k]),
                    trials=trials,
                    mean_entropy_removed_bits=float(removed[:, k].mean())
                ))
            logger.info("bench %s: %d trials, %.4fs mean for %d curtains",
                        strategy, trials, totals[:, -1].mean(), curtains)

        return BenchReport(trials=trials, workers=workers, rows=rows)

    @staticmethod
    def random_confidence(geometry: GridGeometry, rng: np.random.Generator) -> ConfidenceGrid:
        return ConfidenceGrid(**geometry.geometry().model_dump(), values=rng.random(geometry.shape))

    @staticmethod
    def scaling_probe(
        ns: Sequence[int],
        ts: Sequence[int],
        laser: LaserModel,
        fov_deg: float = 80.0,
        r_min: float = 1.0,
        r_max: float = 70.4,
        repeats: int = 5,
        seed: int = 0
    ) -> List[ScalingRow]:
        """
        Median optimize_dp time for every (N, T) pair on a random uncertainty map
        """
        rng = np.random.default_rng(seed)
        entropy_map = UncertaintyMapService.entropy_map(BenchmarkService.random_confidence(GridGeometry(), rng))
        rows = []
        for t in ts:
            camera = CameraModel(num_rays=t, fov_deg=fov_deg)
            for n in ns:
                lattice = GeometryEngine.build_lattice(camera, n, r_min, r_max)
                graph = GeometryEngine.build_constraint_graph(lattice, laser)
                timings = []
                for _ in range(repeats):
                    BenchmarkService.gc_collect()
                    elapsed, _ = BenchmarkService.time_execution(PlacementPlanner.optimize_dp, graph, entropy_map)
                    timings.append(elapsed)
                rows.append(ScalingRow(n=n, t=t, avg_degree=graph.avg_degree, seconds=float(np.median(timings))))
                logger.debug("scaling probe N=%d T=%d B_avg=%.2f: %.5fs", n, t, graph.avg_degree, rows[-1].seconds)
        return rows

    @staticmethod
    def log_log_slope(x: Sequence[float], y: Sequence[float]) -> float:
        slope, _ = np.polyfit(np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float)), 1)
        return float(slope)

    @staticmethod
    def planning_times(
        strategy: str,
        sensor: SensorConfig,
        confidences: Sequence[ConfidenceGrid],
        seed: int = 0
    ) -> List[float]:
        """
        Planning time of one curtain per confidence grid on the sensor's graph
        """
        graph = constraint_graph_for(sensor)
        planner = default_registry().resolve(strategy)
        timings = []
        for index, confidence in enumerate(confidences):
            entropy_map = UncertaintyMapService.entropy_map(confidence)
            BenchmarkService.gc_collect()
            elapsed, _ = BenchmarkService.time_execution(planner.plan, graph, entropy_map, derive_seed(seed, index))
            timings.append(elapsed)
        return timings
