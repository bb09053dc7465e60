import math

import numpy as np
import pytest
from pydantic import ValidationError

from models.curtain_models import CameraModel, LaserConfig, LaserModel, Ray
from services.geometry_engine import GeometryEngine
from utils.exceptions import ArgumentError, DomainError


class TestRays:
    """Test cases for camera ray construction"""

    def test_three_rays_over_ninety_degrees(self):
        """Test rays at -45, 0 and +45 degrees"""
        rays = GeometryEngine.build_rays(CameraModel(num_rays=3, fov_deg=90.0))

        assert [ray.index for ray in rays] == [0, 1, 2]
        assert [ray.azimuth for ray in rays] == pytest.approx([-math.pi / 4, 0.0, math.pi / 4])
        assert rays[1].unit_dir == pytest.approx((0.0, 1.0))

    def test_equal_spacing(self):
        """Test consecutive azimuths differ by fov / (T - 1)"""
        rays = GeometryEngine.build_rays(CameraModel(num_rays=5, fov_deg=80.0))
        steps = np.diff([ray.azimuth for ray in rays])

        assert steps == pytest.approx([math.radians(20.0)] * 4)

    def test_default_fan_is_symmetric_with_unit_directions(self):
        """Test the default 128-ray fan is symmetric about +z with unit directions"""
        rays = GeometryEngine.build_rays(CameraModel())

        assert len(rays) == 128
        assert rays[0].azimuth == pytest.approx(-rays[-1].azimuth)
        assert rays[-1].azimuth == pytest.approx(math.radians(40.0))
        for ray in rays:
            assert math.hypot(*ray.unit_dir) == pytest.approx(1.0, abs=1e-12)

    def test_ray_direction_must_match_azimuth(self):
        """Test a ray pointing away from its azimuth is rejected"""
        with pytest.raises(ValidationError):
            Ray(index=0, azimuth=0.0, unit_dir=(1.0, 0.0))

    def test_camera_needs_two_rays(self):
        """Test a single-ray camera is rejected"""
        with pytest.raises(ValidationError):
            CameraModel(num_rays=1)


class TestLaserAngle:
    """Test cases for the laser angle of a point"""

    def test_point_straight_ahead_of_laser(self):
        """Test a point directly in front of the laser has angle zero"""
        laser = LaserModel.from_delta_theta(0.1, position=(0.2, 0.0))
        assert GeometryEngine.laser_angle(laser, (0.2, 10.0)) == pytest.approx(0.0, abs=1e-15)

    def test_diagonal_point(self):
        """Test a point on the diagonal from a laser at the origin"""
        laser = LaserModel.from_delta_theta(0.1, position=(0.0, 0.0))
        assert GeometryEngine.laser_angle(laser, (1.0, 1.0)) == pytest.approx(math.pi / 4)

    def test_left_of_laser(self):
        """Test a point to the left of the laser"""
        laser = LaserModel.from_delta_theta(0.1, position=(0.2, 0.0))
        assert GeometryEngine.laser_angle(laser, (-3.0, 4.0)) == pytest.approx(math.atan2(-3.2, 4.0))

    def test_point_behind_laser(self):
        """Test a point not in front of the laser raises a domain error"""
        laser = LaserModel.from_delta_theta(0.1)
        with pytest.raises(DomainError):
            GeometryEngine.laser_angle(laser, (0.0, -1.0))
        with pytest.raises(DomainError):
            GeometryEngine.laser_angle(laser, (1.0, 0.0))

    def test_invariant_along_laser_ray(self, rng):
        """Test scaling a point about the laser position leaves its angle unchanged"""
        laser = LaserModel.from_delta_theta(0.1, position=(0.2, 0.0))
        for _ in range(200):
            p = np.array([rng.uniform(-20, 20), rng.uniform(0.5, 60)])
            scale = rng.uniform(0.1, 10.0)
            scaled = np.array(laser.position) + scale * (p - np.array(laser.position))
            assert GeometryEngine.laser_angle(laser, scaled) == pytest.approx(
                GeometryEngine.laser_angle(laser, p), abs=1e-12
            )

    def test_vectorized_matches_scalar(self, rng):
        """Test laser_angles agrees with laser_angle point by point"""
        laser = LaserModel.from_delta_theta(0.1)
        points = np.stack([rng.uniform(-10, 10, 50), rng.uniform(0.5, 30, 50)], axis=1)
        angles = GeometryEngine.laser_angles(laser, points)
        for point, angle in zip(points, angles):
            assert angle == pytest.approx(GeometryEngine.laser_angle(laser, point), abs=1e-15)

    def test_velocity_forms_agree(self):
        """Test omega * delta_t matches a directly configured delta theta"""
        by_velocity = LaserConfig(omega_max_deg_s=30000.0, delta_t_us=50.0).to_laser_model()
        by_angle = LaserConfig(delta_theta_max_deg=1.5).to_laser_model()

        assert by_velocity.delta_theta_max == pytest.approx(math.radians(1.5))
        assert by_angle.delta_theta_max == pytest.approx(math.radians(1.5))

    def test_velocity_forms_are_exclusive(self):
        """Test giving both velocity forms is rejected"""
        with pytest.raises(ValidationError):
            LaserConfig(delta_theta_max_deg=1.5, omega_max_deg_s=30000.0, delta_t_us=50.0)
        with pytest.raises(ValidationError):
            LaserConfig(omega_max_deg_s=30000.0)


class TestLattice:
    """Test cases for the candidate lattice"""

    def test_two_points(self):
        """Test a two-point lattice holds exactly r_min and r_max"""
        lattice = GeometryEngine.build_lattice(CameraModel(num_rays=2), 2, 1.0, 3.0)
        assert lattice.ranges.tolist() == [1.0, 3.0]

    def test_default_spacing(self):
        """Test 80 points over [1, 70.4] are spaced 69.4 / 79 apart"""
        lattice = GeometryEngine.build_lattice(CameraModel(), 80, 1.0, 70.4)

        assert np.diff(lattice.ranges) == pytest.approx([69.4 / 79] * 79)
        assert lattice.range_step == pytest.approx(69.4 / 79)
        assert lattice.positions.shape == (128, 80, 2)

    def test_three_points(self):
        """Test the midpoint of a three-point lattice"""
        lattice = GeometryEngine.build_lattice(CameraModel(num_rays=2), 3, 0.5, 1.5)
        assert lattice.ranges.tolist() == pytest.approx([0.5, 1.0, 1.5])

    def test_positions_lie_on_rays(self):
        """Test every candidate sits at its range along its ray"""
        lattice = GeometryEngine.build_lattice(CameraModel(num_rays=7, fov_deg=60.0), 5, 2.0, 10.0)
        expected = lattice.ranges[None, :, None] * lattice.unit_dirs[:, None, :]

        assert np.allclose(lattice.positions, expected, atol=1e-9)
        assert lattice.depths.shape == (7, 5)

    @pytest.mark.parametrize("n, r_min, r_max", [(1, 1.0, 3.0), (5, 0.0, 3.0), (5, 3.0, 3.0), (5, 4.0, 3.0)])
    def test_invalid_lattice(self, n, r_min, r_max):
        """Test degenerate lattices are rejected"""
        with pytest.raises(ArgumentError):
            GeometryEngine.build_lattice(CameraModel(), n, r_min, r_max)


class TestConstraintGraph:
    """Test cases for the galvanometer constraint graph"""

    def test_matches_exhaustive_check(self, make_graph):
        """Test edges are exactly the pairs within delta theta"""
        for delta in (math.radians(1.0), math.radians(4.0), math.radians(10.0)):
            graph = make_graph(4, 6, delta, fov_deg=20.0)
            limit = graph.laser.delta_theta_max
            for t in range(graph.num_rays - 1):
                for i in range(graph.points_per_ray):
                    for j in range(graph.points_per_ray):
                        expected = abs(graph.angles[t + 1, j] - graph.angles[t, i]) <= limit
                        assert graph.has_edge(t, i, j) == expected

    def test_angles_match_laser_angle(self, make_graph):
        """Test stored angles are the laser angles of the candidates"""
        graph = make_graph(3, 4, math.radians(2.0))
        for t in range(3):
            for i in range(4):
                position = graph.lattice.positions[t, i]
                assert graph.angles[t, i] == pytest.approx(GeometryEngine.laser_angle(graph.laser, position))

    def test_compressed_rows_match_adjacency(self, make_graph):
        """Test successor lists are the sorted nonzero columns of each adjacency row"""
        graph = make_graph(5, 8, math.radians(5.0))
        for t in range(graph.num_rays - 1):
            for i in range(graph.points_per_ray):
                assert graph.successors(t, i).tolist() == np.flatnonzero(graph.adjacency[t, i]).tolist()
        assert graph.num_edges == int(graph.adjacency.sum())
        assert graph.avg_degree == pytest.approx(graph.num_edges / (8 * 4))

    def test_unconstrained_graph_is_complete(self, make_graph):
        """Test a limit of pi keeps every transition"""
        graph = make_graph(5, 6, math.pi)

        assert graph.adjacency.all()
        assert graph.avg_degree == pytest.approx(6.0)

    def test_frozen_galvanometer_has_no_edges(self, make_graph):
        """Test a vanishing limit leaves no transitions between distinct rays"""
        graph = make_graph(5, 6, 1e-15, laser_position=(0.0, 0.0))

        assert graph.num_edges == 0
        assert graph.avg_degree == 0.0

    def test_edges_grow_with_limit(self, make_graph):
        """Test every edge under a smaller limit survives a larger one"""
        small = make_graph(6, 10, math.radians(3.0))
        large = make_graph(6, 10, math.radians(6.0))

        assert np.all(~small.adjacency | large.adjacency)
        assert large.num_edges >= small.num_edges

    def test_default_graph_shape(self, default_graph):
        """Test the default sensor yields a 128 x 80 graph with a partial neighbourhood"""
        assert default_graph.angles.shape == (128, 80)
        assert 0.0 < default_graph.avg_degree < 80.0


class TestFeasibility:
    """Test cases for placement feasibility"""

    def test_graph_paths_are_feasible(self, make_graph, feasible_paths, rng):
        """Test every walk along graph edges is feasible"""
        graph = make_graph(6, 8, math.radians(5.0))
        for path in feasible_paths(graph, rng, 50):
            assert GeometryEngine.is_feasible(graph, GeometryEngine.make_placement(graph, path))

    def test_missing_edge_is_infeasible(self, make_graph):
        """Test a placement using a non-edge fails the check"""
        graph = make_graph(3, 6, math.radians(2.0))
        i, j = np.argwhere(~graph.adjacency[0])[0]
        placement = GeometryEngine.make_placement(graph, [i, j, 0])

        assert not GeometryEngine.is_feasible(graph, placement)

    def test_any_placement_is_feasible_when_unconstrained(self, make_graph, rng):
        """Test arbitrary index sequences pass without a velocity limit"""
        graph = make_graph(5, 6, math.pi)
        for _ in range(20):
            placement = GeometryEngine.make_placement(graph, rng.integers(0, 6, 5))
            assert GeometryEngine.is_feasible(graph, placement)

    def test_placement_from_other_lattice(self, make_graph):
        """Test a placement built on another lattice is rejected"""
        graph = make_graph(3, 6, math.pi)
        other = make_graph(4, 6, math.pi)
        placement = GeometryEngine.make_placement(other, [0, 1, 2, 3])

        with pytest.raises(ArgumentError):
            GeometryEngine.is_feasible(graph, placement)

    def test_placement_ranges_must_match_lattice(self, make_graph):
        """Test a placement whose ranges differ from the lattice is rejected"""
        graph = make_graph(3, 6, math.pi)
        shifted = make_graph(3, 6, math.pi, r_min=1.5)
        placement = GeometryEngine.make_placement(shifted, [0, 1, 2])

        with pytest.raises(ArgumentError):
            GeometryEngine.is_feasible(graph, placement)

    def test_placement_positions_must_match_lattice(self, make_graph):
        """Test a placement from a lattice with equal ranges but another field of view is rejected"""
        graph = make_graph(4, 5, math.pi, fov_deg=30.0, r_min=1.0, r_max=3.0)
        wide = make_graph(4, 5, math.pi, fov_deg=120.0, r_min=1.0, r_max=3.0)
        placement = GeometryEngine.make_placement(wide, [0, 1, 2, 3])

        assert placement.points[0].position == pytest.approx((-0.8660254, 0.5))
        with pytest.raises(ArgumentError):
            GeometryEngine.is_feasible(graph, placement)

    def test_make_placement_checks_indices(self, make_graph):
        """Test out-of-range indices and wrong lengths are rejected"""
        graph = make_graph(3, 6, math.pi)
        with pytest.raises(ArgumentError):
            GeometryEngine.make_placement(graph, [0, 6, 0])
        with pytest.raises(ArgumentError):
            GeometryEngine.make_placement(graph, [0, 1])


if __name__ == "__main__":
    pytest.main([__file__])
