import numpy as np
import pytest

from models.curtain_models import (
    EpisodeConfig, LaserConfig, NoiseConfig, OccupancyBelief, Scene, SensorConfig
)
from services.belief_service import OccupancyBeliefService
from services.episode_runner import EpisodeRunner, constraint_graph_for, derive_seed
from services.placement_planner import PlacementPlanner
from services.strategy_registry import default_registry
from services.uncertainty_service import UncertaintyMapService
from utils.exceptions import ArgumentError, PlanningError


TIMING_FIELDS = {"steps": {"__all__": {"plan_time_s", "sense_time_s"}}}

BASELINES = ["greedy-random", "greedy-minangle", "random", "fixed:15", "fixed:30", "fixed:45", "fp-uncertainty"]


def non_increasing(sequence, tolerance=1e-9):
    return all(later <= earlier + tolerance for earlier, later in zip(sequence, sequence[1:]))


class TestEpisode:
    """Test cases for the sense-plan-update loop"""

    def test_lidar_only(self, four_cars_scene):
        """Test K = 0 logs only the LiDAR step"""
        result = EpisodeRunner.simulate(four_cars_scene, EpisodeConfig(k_max=0), 0)

        assert len(result.log.steps) == 1
        assert result.log.steps[0].placement is None
        assert set(result.cloud.sources) == {"lidar"}
        assert result.log.steps[0].points_added == len(result.cloud)

    def test_empty_scene_resolves_covered_cells(self):
        """Test an empty scene drives every covered cell to free"""
        result = EpisodeRunner.simulate(Scene(), EpisodeConfig(k_max=1), 1)
        placement = result.log.steps[1].placement
        cells = OccupancyBeliefService.placement_cells(result.belief, placement)

        assert np.all(result.belief.values[cells[:, 0], cells[:, 1]] == 0.0)
        assert result.log.steps[1].points_added == 0
        assert result.log.steps[1].entropy_bits < result.log.steps[0].entropy_bits

    def test_four_cars_entropy_strictly_decreases(self, four_cars_scene):
        """Test three planned curtains each remove entropy"""
        log = EpisodeRunner.run_episode(four_cars_scene, EpisodeConfig(k_max=3, strategy="dp"))
        entropy = log.entropy_sequence

        assert [step.k for step in log.steps] == [0, 1, 2, 3]
        assert all(later < earlier for earlier, later in zip(entropy, entropy[1:]))
        assert sum(step.points_added for step in log.steps[1:]) > 0

    @pytest.mark.parametrize("strategy", ["dp"] + BASELINES)
    def test_entropy_never_increases(self, four_cars_scene, strategy):
        """Test exact updates never add entropy, whatever the strategy"""
        log = EpisodeRunner.run_episode(four_cars_scene, EpisodeConfig(k_max=3, strategy=strategy))
        assert non_increasing(log.entropy_sequence)

    def test_drop_equals_expected_gain(self, four_cars_scene):
        """Test each exact update removes precisely the expected information gain"""
        log = EpisodeRunner.run_episode(four_cars_scene, EpisodeConfig(k_max=3))
        for previous, step in zip(log.steps, log.steps[1:]):
            assert previous.entropy_bits - step.entropy_bits == pytest.approx(step.information_gain_bits, abs=1e-6)

    def test_unified_cloud_only_grows(self, four_cars_scene):
        """Test each step's cloud extends the previous one"""
        result = EpisodeRunner.simulate(four_cars_scene, EpisodeConfig(k_max=3), 3)
        for before, after in zip(result.clouds, result.clouds[1:]):
            assert len(after) >= len(before)
            assert np.array_equal(after.positions[:len(before)], before.positions)
            assert after.sources[:len(before)] == before.sources
        assert result.cloud.count_source("curtain:") == sum(step.points_added for step in result.log.steps[1:])

    def test_deterministic(self, four_cars_scene):
        """Test equal inputs give equal logs apart from timings"""
        config = EpisodeConfig(k_max=3, strategy="greedy-random", seed=42, noise=NoiseConfig.standard(7))
        first = EpisodeRunner.run_episode(four_cars_scene, config)
        second = EpisodeRunner.run_episode(four_cars_scene, config)

        assert first.model_dump(exclude=TIMING_FIELDS) == second.model_dump(exclude=TIMING_FIELDS)

    def test_negative_curtain_count(self, four_cars_scene):
        """Test negative curtain counts are rejected"""
        with pytest.raises(ArgumentError):
            EpisodeRunner.simulate(four_cars_scene, EpisodeConfig(), -1)

    def test_planning_error_carries_step(self, four_cars_scene):
        """Test a frozen galvanometer fails at the first curtain"""
        sensor = SensorConfig(laser=LaserConfig(x=0.0, delta_theta_max_deg=1e-9))
        with pytest.raises(PlanningError) as error:
            EpisodeRunner.run_episode(four_cars_scene, EpisodeConfig(k_max=2, sensor=sensor))

        assert error.value.step == 1
        assert error.value.ray_index == 0

    def test_constraint_graph_is_cached(self, default_sensor):
        """Test one graph is built per sensor configuration"""
        assert constraint_graph_for(default_sensor) is constraint_graph_for(SensorConfig())

    def test_step_seeds(self):
        """Test derived seeds are reproducible and differ between steps"""
        assert derive_seed(3, 1) == derive_seed(3, 1)
        assert len({derive_seed(3, k) for k in range(10)}) == 10
        assert derive_seed(3, 1) != derive_seed(4, 1)


class TestGeneralization:
    """Test cases for running more curtains than trained for"""

    def test_same_k_matches_episode(self, four_cars_scene):
        """Test k_test = K reproduces the ordinary episode"""
        config = EpisodeConfig(k_max=3)
        episode = EpisodeRunner.run_episode(four_cars_scene, config)
        generalized = EpisodeRunner.run_generalization(four_cars_scene, config, 3)

        assert episode.model_dump(exclude=TIMING_FIELDS) == generalized.model_dump(exclude=TIMING_FIELDS)

    def test_ten_curtains(self, four_cars_scene):
        """Test ten curtains log eleven steps with non-increasing entropy"""
        log = EpisodeRunner.run_generalization(four_cars_scene, EpisodeConfig(k_max=3), 10)

        assert len(log.steps) == 11
        assert non_increasing(log.entropy_sequence)

    def test_resolved_belief_stays_flat(self, four_cars_scene, default_sensor):
        """Test a fully resolved belief stays at zero entropy"""
        grid = default_sensor.grid
        belief = OccupancyBelief(**grid.model_dump(), values=np.zeros(grid.shape), prior_p=0.3)
        strategy = default_registry().resolve("dp")
        for k in range(1, 11):
            belief, _, step = EpisodeRunner.curtain_step(four_cars_scene, default_sensor, belief, strategy, k, 0)
            assert step.entropy_bits == pytest.approx(0.0, abs=1e-12)


class TestTrainingSamples:
    """Test cases for randomized curtain counts"""

    def test_uniform_curtain_count(self):
        """Test k is uniform over {0, ..., K}"""
        rng = np.random.default_rng(2024)
        counts = np.bincount([EpisodeRunner.sample_curtain_count(3, rng) for _ in range(10_000)], minlength=4)
        sigma = np.sqrt(10_000 * 0.25 * 0.75)

        assert len(counts) == 4
        assert np.all(np.abs(counts - 2500) <= 3 * sigma)

    def test_forced_zero_is_lidar_only(self, four_cars_scene, rng):
        """Test k = 0 yields the LiDAR cloud alone"""
        cloud = EpisodeRunner.generate_training_sample(four_cars_scene, EpisodeConfig(k_max=3), rng, k=0)
        assert set(cloud.sources) == {"lidar"}

    def test_forced_k_matches_episode(self, four_cars_scene, rng):
        """Test k = K yields the episode's final unified cloud"""
        config = EpisodeConfig(k_max=3)
        cloud = EpisodeRunner.generate_training_sample(four_cars_scene, config, rng, k=3)
        expected = EpisodeRunner.simulate(four_cars_scene, config, 3).cloud

        assert np.array_equal(cloud.positions, expected.positions)
        assert cloud.sources == expected.sources

    def test_forced_k_out_of_range(self, four_cars_scene, rng):
        """Test forced counts above K are rejected"""
        with pytest.raises(ArgumentError):
            EpisodeRunner.generate_training_sample(four_cars_scene, EpisodeConfig(k_max=3), rng, k=4)


@pytest.mark.slow
class TestCorpus:
    """Test cases over the generated 20-scene corpus"""

    def test_optimizer_dominates_each_curtain(self, corpus, default_sensor):
        """Test no baseline beats the optimizer's objective on the same belief"""
        registry = default_registry()
        dp = registry.resolve("dp")
        graph = constraint_graph_for(default_sensor)
        violations = 0
        for scene in corpus:
            belief, _, _ = EpisodeRunner.lidar_bootstrap(scene, default_sensor)
            for k in range(1, 4):
                entropy_map = UncertaintyMapService.entropy_map(OccupancyBeliefService.confidence_grid(belief))
                best = PlacementPlanner.objective(dp.plan(graph, entropy_map, k), entropy_map).total_entropy
                for name in BASELINES:
                    placement = registry.resolve(name).plan(graph, entropy_map, derive_seed(0, k))
                    if PlacementPlanner.objective(placement, entropy_map).total_entropy > best + 1e-9:
                        violations += 1
                belief, _, _ = EpisodeRunner.curtain_step(scene, default_sensor, belief, dp, k, 0)
        assert violations == 0

    def test_optimizer_removes_most_entropy_when_cells_are_disjoint(self, corpus, sparse_sensor):
        """Test cumulative entropy removed by the optimizer leads every baseline at every step"""
        for scene in corpus:
            dp = EpisodeRunner.run_episode(scene, EpisodeConfig(k_max=3, sensor=sparse_sensor)).entropy_sequence
            for name in BASELINES:
                config = EpisodeConfig(k_max=3, strategy=name, sensor=sparse_sensor)
                other = EpisodeRunner.run_episode(scene, config).entropy_sequence
                assert all(ours <= theirs + 1e-6 for ours, theirs in zip(dp, other))

    def test_optimizer_leads_under_velocity_limit(self, corpus, steered_sparse_sensor):
        """Test cumulative dominance when the laser cannot jump freely between ranges"""
        graph = constraint_graph_for(steered_sparse_sensor)
        assert graph.avg_degree < graph.points_per_ray

        for scene in corpus:
            dp = EpisodeRunner.run_episode(scene, EpisodeConfig(k_max=3, sensor=steered_sparse_sensor))
            for name in BASELINES:
                config = EpisodeConfig(k_max=3, strategy=name, sensor=steered_sparse_sensor)
                other = EpisodeRunner.run_episode(scene, config).entropy_sequence
                assert all(ours <= theirs + 1e-6 for ours, theirs in zip(dp.entropy_sequence, other))

    def test_first_curtain_removes_most(self, corpus, sparse_sensor):
        """Test the largest drop across ten curtains comes from the first"""
        for scene in corpus:
            entropy = EpisodeRunner.run_generalization(scene, EpisodeConfig(sensor=sparse_sensor), 10).entropy_sequence
            drops = np.diff(entropy) * -1.0
            assert drops[0] >= drops.max() - 1e-9

    def test_first_curtain_removes_most_on_default_rig(self, corpus):
        """Test the first curtain gives the largest drop on at least 15 of 20 scenes"""
        leading = 0
        for scene in corpus:
            entropy = EpisodeRunner.run_generalization(scene, EpisodeConfig(k_max=3), 10).entropy_sequence
            drops = np.diff(entropy) * -1.0
            leading += int(drops[0] >= drops.max() - 1e-9)
        assert leading >= 15

    def test_ten_curtains_never_add_entropy(self, corpus):
        """Test generalization to ten curtains on every corpus scene"""
        for scene in corpus:
            log = EpisodeRunner.run_generalization(scene, EpisodeConfig(k_max=3), 10)
            assert non_increasing(log.entropy_sequence)

    def test_noise_robustness(self, corpus):
        """Test noisy sensing ends near the noiseless entropy and below LiDAR alone"""
        for seed, scene in enumerate(corpus):
            clean = EpisodeRunner.run_episode(scene, EpisodeConfig(k_max=3, seed=seed)).entropy_sequence
            noisy = EpisodeRunner.run_episode(
                scene, EpisodeConfig(k_max=3, seed=seed, noise=NoiseConfig.standard(seed))
            ).entropy_sequence

            assert abs(noisy[-1] - clean[-1]) <= 0.25 * clean[-1]
            assert noisy[-1] < noisy[0]


if __name__ == "__main__":
    pytest.main([__file__])
