import math
import re
from typing import FrozenSet, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


Point2D = Tuple[float, float]

# Default inter-column activation interval used when only delta_theta_max is configured
DEFAULT_DELTA_T = 50e-6

SOURCE_PATTERN = re.compile(r"^(lidar|curtain:\d+)$")


def _readonly(values, dtype=float) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


# --------------------------------------------------------------------------
# Sensor geometry
# --------------------------------------------------------------------------

class CameraModel(BaseModel):
    """Rolling-shutter camera seen from above: T rays fanned symmetrically about +z"""
    model_config = ConfigDict(frozen=True)

    num_rays: int = Field(128, ge=2)
    fov_deg: float = Field(80.0, gt=0.0, lt=180.0)
    origin: Point2D = (0.0, 0.0)

    @field_validator("origin")
    @classmethod
    def origin_is_fixed(cls, origin: Point2D) -> Point2D:
        if tuple(origin) != (0.0, 0.0):
            raise ValueError("camera origin is fixed at (0, 0)")
        return origin

    @property
    def azimuth_step(self) -> float:
        return math.radians(self.fov_deg) / (self.num_rays - 1)


class LaserModel(BaseModel):
    """Galvanometer-steered laser with a bounded angular velocity"""
    model_config = ConfigDict(frozen=True)

    position: Point2D = (0.2, 0.0)
    omega_max: float = Field(gt=0.0)  # rad/s
    delta_t: float = Field(gt=0.0)  # s

    @property
    def delta_theta_max(self) -> float:
        return self.omega_max * self.delta_t

    @classmethod
    def from_delta_theta(
        cls,
        delta_theta_max: float,
        position: Point2D = (0.2, 0.0),
        delta_t: float = DEFAULT_DELTA_T
    ) -> "LaserModel":
        return cls(position=position, omega_max=delta_theta_max / delta_t, delta_t=delta_t)


class Ray(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    azimuth: float
    unit_dir: Point2D

    @model_validator(mode="after")
    def unit_dir_matches_azimuth(self) -> "Ray":
        ux, uz = self.unit_dir
        if abs(math.hypot(ux, uz) - 1.0) > 1e-12:
            raise ValueError("ray direction must have unit norm")
        if abs(ux - math.sin(self.azimuth)) > 1e-12 or abs(uz - math.cos(self.azimuth)) > 1e-12:
            raise ValueError("ray direction must equal (sin azimuth, cos azimuth)")
        return self


class ControlPoint(BaseModel):
    model_config = ConfigDict(frozen=True)

    ray_index: int = Field(ge=0)
    range: float = Field(gt=0.0)
    position: Point2D
    laser_angle: Optional[float] = None


class CandidateLattice(BaseModel):
    """N equally spaced candidate control points on every camera ray"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    camera: CameraModel
    points_per_ray: int = Field(ge=2)
    r_min: float = Field(gt=0.0)
    r_max: float
    azimuths: np.ndarray
    ranges: np.ndarray
    positions: np.ndarray

    @field_validator("azimuths", "ranges", "positions", mode="before")
    @classmethod
    def as_array(cls, values) -> np.ndarray:
        return _readonly(values)

    @model_validator(mode="after")
    def check_shapes(self) -> "CandidateLattice":
        t, n = self.camera.num_rays, self.points_per_ray
        if self.r_max <= self.r_min:
            raise ValueError("r_max must exceed r_min")
        if self.azimuths.shape != (t,) or self.ranges.shape != (n,) or self.positions.shape != (t, n, 2):
            raise ValueError("lattice arrays do not match (num_rays, points_per_ray)")
        if np.any(np.diff(self.ranges) <= 0.0):
            raise ValueError("candidate ranges must be strictly increasing")
        return self

    @property
    def num_rays(self) -> int:
        return self.camera.num_rays

    @property
    def range_step(self) -> float:
        return (self.r_max - self.r_min) / (self.points_per_ray - 1)

    @property
    def unit_dirs(self) -> np.ndarray:
        return np.stack([np.sin(self.azimuths), np.cos(self.azimuths)], axis=1)

    @property
    def depths(self) -> np.ndarray:
        """z-coordinate of every candidate, shape (T, N)"""
        return self.positions[..., 1]

    @property
    def central_ray(self) -> int:
        return (self.num_rays - 1) // 2

    def control_point(self, t: int, i: int, laser_angle: Optional[float] = None) -> ControlPoint:
        x, z = self.positions[t, i]
        return ControlPoint(
            ray_index=t,
            range=float(self.ranges[i]),
            position=(float(x), float(z)),
            laser_angle=laser_angle
        )

    def candidates(self, t: int) -> List[ControlPoint]:
        return [self.control_point(t, i) for i in range(self.points_per_ray)]


class ConstraintGraph(BaseModel):
    """
    Feasible transitions between candidates on consecutive rays.

    Edges of ray pair (t, t+1) are kept both as a dense boolean matrix and in
    compressed row form: the successors of node (t, i) are
    edge_targets[t][edge_offsets[t, i]:edge_offsets[t, i + 1]], in increasing order.
    """
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lattice: CandidateLattice
    laser: LaserModel
    angles: np.ndarray
    adjacency: np.ndarray
    edge_offsets: np.ndarray
    edge_targets: Tuple[np.ndarray, ...]
    avg_degree: float = Field(ge=0.0)

    @model_validator(mode="after")
    def check_shapes(self) -> "ConstraintGraph":
        t, n = self.lattice.num_rays, self.lattice.points_per_ray
        if self.angles.shape != (t, n):
            raise ValueError("angles must have shape (T, N)")
        if self.adjacency.shape != (t - 1, n, n) or self.edge_offsets.shape != (t - 1, n + 1):
            raise ValueError("edge arrays must cover T - 1 ray pairs")
        if len(self.edge_targets) != t - 1:
            raise ValueError("edge_targets must hold one array per ray pair")
        return self

    @property
    def num_rays(self) -> int:
        return self.lattice.num_rays

    @property
    def points_per_ray(self) -> int:
        return self.lattice.points_per_ray

    @property
    def num_edges(self) -> int:
        return int(sum(len(targets) for targets in self.edge_targets))

    def successors(self, t: int, i: int) -> np.ndarray:
        start, stop = self.edge_offsets[t, i], self.edge_offsets[t, i + 1]
        return self.edge_targets[t][start:stop]

    def has_edge(self, t: int, i: int, j: int) -> bool:
        return bool(self.adjacency[t, i, j])


# --------------------------------------------------------------------------
# Ground-plane grids
# --------------------------------------------------------------------------

class GridGeometry(BaseModel):
    """Uniform anchor grid G over the ground plane; cells indexed (ix, iz)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    x_min: float = -40.0
    x_max: float = 40.0
    z_min: float = 0.0
    z_max: float = 70.4
    nx: int = Field(160, ge=1)
    nz: int = Field(141, ge=1)

    @model_validator(mode="after")
    def check_extent(self) -> "GridGeometry":
        if self.x_min >= self.x_max or self.z_min >= self.z_max:
            raise ValueError("grid extent must satisfy x_min < x_max and z_min < z_max")
        return self

    @property
    def extent(self) -> Tuple[float, float, float, float]:
        return (self.x_min, self.x_max, self.z_min, self.z_max)

    @property
    def shape(self) -> Tuple[int, int]:
        return (self.nx, self.nz)

    @property
    def cell_size(self) -> Tuple[float, float]:
        return ((self.x_max - self.x_min) / self.nx, (self.z_max - self.z_min) / self.nz)

    def geometry(self) -> "GridGeometry":
        return GridGeometry(
            x_min=self.x_min, x_max=self.x_max, z_min=self.z_min, z_max=self.z_max,
            nx=self.nx, nz=self.nz
        )

    def cell_centers(self) -> Tuple[np.ndarray, np.ndarray]:
        dx, dz = self.cell_size
        return (
            self.x_min + (np.arange(self.nx) + 0.5) * dx,
            self.z_min + (np.arange(self.nz) + 0.5) * dz,
        )

    def nearest_cells(self, points) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        Index of the cell whose center is nearest to each point.

        Equidistant points resolve to the lower index on each axis. Returns
        (ix, iz, inside) where inside flags points within the closed extent.
        """
        points = np.asarray(points, dtype=float).reshape(-1, 2)
        x, z = points[:, 0], points[:, 1]
        dx, dz = self.cell_size
        inside = (x >= self.x_min) & (x <= self.x_max) & (z >= self.z_min) & (z <= self.z_max)
        ix = np.ceil((x - self.x_min) / dx - 1.0).astype(int)
        iz = np.ceil((z - self.z_min) / dz - 1.0).astype(int)
        return np.clip(ix, 0, self.nx - 1), np.clip(iz, 0, self.nz - 1), inside


class _GridValues(GridGeometry):
    values: np.ndarray

    @field_validator("values", mode="before")
    @classmethod
    def as_array(cls, values) -> np.ndarray:
        return _readonly(values)

    @model_validator(mode="after")
    def check_values(self) -> "_GridValues":
        if self.values.shape != (self.nx, self.nz):
            raise ValueError(f"values must have shape ({self.nx}, {self.nz})")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")
        if np.any(self.values < 0.0) or np.any(self.values > 1.0):
            raise ValueError("values must lie in [0, 1]")
        return self


class ConfidenceGrid(_GridValues):
    """Per-cell probability that an object occupies the anchor"""
    pass


class EntropyMap(_GridValues):
    """Per-cell binary entropy in bits (the uncertainty map)"""
    pass


class OccupancyBelief(_GridValues):
    """Factorized per-cell occupancy belief standing in for detector confidence"""
    prior_p: float = Field(gt=0.0, lt=1.0)


class SensingReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    covered_cells: FrozenSet[Tuple[int, int]] = frozenset()
    hit_cells: FrozenSet[Tuple[int, int]] = frozenset()

    @model_validator(mode="after")
    def hits_are_covered(self) -> "SensingReport":
        if not self.hit_cells <= self.covered_cells:
            raise ValueError("hit_cells must be a subset of covered_cells")
        return self


# --------------------------------------------------------------------------
# Placements and planner output
# --------------------------------------------------------------------------

class CurtainPlacement(BaseModel):
    """One control point per camera ray, in ray order"""
    model_config = ConfigDict(frozen=True)

    points: List[ControlPoint]
    candidate_indices: List[int]

    @model_validator(mode="after")
    def one_point_per_ray(self) -> "CurtainPlacement":
        if len(self.points) != len(self.candidate_indices):
            raise ValueError("points and candidate_indices must have equal length")
        for t, point in enumerate(self.points):
            if point.ray_index != t:
                raise ValueError(f"point {t} lies on ray {point.ray_index}")
        return self

    @property
    def num_rays(self) -> int:
        return len(self.points)

    @property
    def positions(self) -> np.ndarray:
        return np.array([point.position for point in self.points], dtype=float).reshape(-1, 2)

    @property
    def ranges(self) -> np.ndarray:
        return np.array([point.range for point in self.points], dtype=float)

    @property
    def laser_angles(self) -> np.ndarray:
        return np.array([point.laser_angle for point in self.points], dtype=float)


class PlacementScore(BaseModel):
    model_config = ConfigDict(frozen=True)

    total_entropy: float = Field(ge=0.0)  # bits
    smoothness_penalty: float = Field(ge=0.0)  # rad^2


class ValueTable(BaseModel):
    """Tail values of the backward pass; successor -1 marks a node with no feasible tail"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    tail_entropy: np.ndarray
    tail_smoothness: np.ndarray
    successors: np.ndarray


class PlacementPointExport(BaseModel):
    ray_index: int
    range_m: float
    x: float
    z: float
    laser_angle_rad: float


class PlacementExport(BaseModel):
    points: List[PlacementPointExport]
    score: PlacementScore


# --------------------------------------------------------------------------
# Scenes and sensing
# --------------------------------------------------------------------------

class Obstacle(BaseModel):
    """Strictly convex, counterclockwise polygon in the xz-plane"""
    model_config = ConfigDict(frozen=True)

    id: str
    vertices: List[Point2D] = Field(min_length=3)
    is_target: bool = False

    @field_validator("vertices")
    @classmethod
    def strictly_convex_ccw(cls, vertices: List[Point2D]) -> List[Point2D]:
        pts = np.asarray(vertices, dtype=float)
        edges = np.roll(pts, -1, axis=0) - pts
        turns = edges[:, 0] * np.roll(edges, -1, axis=0)[:, 1] - edges[:, 1] * np.roll(edges, -1, axis=0)[:, 0]
        if np.any(turns <= 1e-12):
            raise ValueError("obstacle must be strictly convex and counterclockwise")
        return vertices

    @property
    def vertex_array(self) -> np.ndarray:
        return np.asarray(self.vertices, dtype=float)


class SceneBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    x_min: float = -40.0
    x_max: float = 40.0
    z_min: float = 0.0
    z_max: float = 70.4

    @model_validator(mode="after")
    def check_extent(self) -> "SceneBounds":
        if self.x_min >= self.x_max or self.z_min >= self.z_max:
            raise ValueError("bounds must satisfy x_min < x_max and z_min < z_max")
        return self


class Scene(BaseModel):
    model_config = ConfigDict(frozen=True)

    bounds: SceneBounds = Field(default_factory=SceneBounds)
    objects: List[Obstacle] = Field(default_factory=list)

    @model_validator(mode="after")
    def objects_within_bounds(self) -> "Scene":
        ids = [obstacle.id for obstacle in self.objects]
        if len(ids) != len(set(ids)):
            raise ValueError("obstacle ids must be unique")
        for obstacle in self.objects:
            pts = obstacle.vertex_array
            if np.any(pts[:, 1] <= 0.0):
                raise ValueError(f"obstacle {obstacle.id} must lie in front of the camera (z > 0)")
            if (np.any(pts[:, 0] < self.bounds.x_min) or np.any(pts[:, 0] > self.bounds.x_max)
                    or np.any(pts[:, 1] < self.bounds.z_min) or np.any(pts[:, 1] > self.bounds.z_max)):
                raise ValueError(f"obstacle {obstacle.id} leaves the scene bounds")
        return self


class PointCloud(BaseModel):
    """Sensed points, each tagged with its camera ray and source (lidar or curtain:k)"""
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    positions: np.ndarray
    ray_indices: np.ndarray
    sources: Tuple[str, ...] = ()

    @field_validator("positions", mode="before")
    @classmethod
    def positions_array(cls, values) -> np.ndarray:
        return _readonly(np.asarray(values, dtype=float).reshape(-1, 2))

    @field_validator("ray_indices", mode="before")
    @classmethod
    def indices_array(cls, values) -> np.ndarray:
        return _readonly(np.asarray(values).reshape(-1), dtype=int)

    @model_validator(mode="after")
    def check_lengths(self) -> "PointCloud":
        if not (len(self.positions) == len(self.ray_indices) == len(self.sources)):
            raise ValueError("positions, ray_indices and sources must have equal length")
        for source in self.sources:
            if not SOURCE_PATTERN.match(source):
                raise ValueError(f"unknown point source {source!r}")
        return self

    def __len__(self) -> int:
        return len(self.sources)

    @classmethod
    def empty(cls) -> "PointCloud":
        return cls(positions=np.zeros((0, 2)), ray_indices=np.zeros(0, dtype=int), sources=())

    def union(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(
            positions=np.concatenate([self.positions, other.positions]),
            ray_indices=np.concatenate([self.ray_indices, other.ray_indices]),
            sources=self.sources + other.sources
        )

    def count_source(self, prefix: str) -> int:
        return sum(1 for source in self.sources if source.startswith(prefix))


class NoiseConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    dropout_prob: float = Field(0.0, ge=0.0, le=1.0)
    range_sigma: float = Field(0.0, ge=0.0)
    seed: int = Field(0, ge=0, lt=2 ** 64)

    @classmethod
    def standard(cls, seed: int = 0) -> "NoiseConfig":
        """
        10% dropout with 0.1 m range jitter.

        Jitter is drawn zero-mean but a return is never placed beyond its first hit,
        so only the shortening half survives and observed ranges are biased short.
        """
        return cls(dropout_prob=0.1, range_sigma=0.1, seed=seed)


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------

class LaserConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    x: float = 0.2
    z: float = 0.0
    delta_theta_max_deg: Optional[float] = Field(None, gt=0.0)
    omega_max_deg_s: Optional[float] = Field(None, gt=0.0)
    delta_t_us: Optional[float] = Field(None, gt=0.0)

    @model_validator(mode="after")
    def one_velocity_form(self) -> "LaserConfig":
        pair = (self.omega_max_deg_s, self.delta_t_us)
        if self.delta_theta_max_deg is not None and any(v is not None for v in pair):
            raise ValueError("give either delta_theta_max_deg or (omega_max_deg_s, delta_t_us), not both")
        if (pair[0] is None) != (pair[1] is None):
            raise ValueError("omega_max_deg_s and delta_t_us must be given together")
        return self

    def to_laser_model(self) -> LaserModel:
        if self.omega_max_deg_s is not None:
            return LaserModel(
                position=(self.x, self.z),
                omega_max=math.radians(self.omega_max_deg_s),
                delta_t=self.delta_t_us * 1e-6
            )
        delta_theta_deg = self.delta_theta_max_deg if self.delta_theta_max_deg is not None else 1.5
        return LaserModel.from_delta_theta(math.radians(delta_theta_deg), position=(self.x, self.z))


class LatticeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    n: int = Field(80, ge=2)
    r_min: float = Field(1.0, gt=0.0)
    r_max: float = 70.4


class BeliefConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    prior_p: float = Field(0.3, gt=0.0, lt=1.0)
    hit_likelihood: float = Field(0.9, gt=0.0, lt=1.0)
    miss_likelihood: float = Field(0.1, gt=0.0, lt=1.0)

    @model_validator(mode="after")
    def informative(self) -> "BeliefConfig":
        if self.hit_likelihood <= self.miss_likelihood:
            raise ValueError("hit_likelihood must exceed miss_likelihood")
        return self


class SimulationConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(0.3, gt=0.0)
    lidar_stride: int = Field(4, ge=1)


class SensorConfig(BaseModel):
    """Everything needed to build the sensor rig, the belief grid and the simulator"""
    model_config = ConfigDict(frozen=True)

    camera: CameraModel = Field(default_factory=CameraModel)
    laser: LaserConfig = Field(default_factory=LaserConfig)
    lattice: LatticeConfig = Field(default_factory=LatticeConfig)
    grid: GridGeometry = Field(default_factory=GridGeometry)
    belief: BeliefConfig = Field(default_factory=BeliefConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)


# --------------------------------------------------------------------------
# Episodes and benchmarks
# --------------------------------------------------------------------------

class EpisodeConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    k_max: int = Field(3, ge=0)
    strategy: str = "dp"
    noise: Optional[NoiseConfig] = None
    seed: int = Field(0, ge=0, lt=2 ** 64)
    sensor: SensorConfig = Field(default_factory=SensorConfig)


class EpisodeStep(BaseModel):
    k: int = Field(ge=0)
    placement: Optional[CurtainPlacement] = None
    points_added: int = Field(ge=0)
    entropy_bits: float
    objective_bits: Optional[float] = None
    smoothness_rad2: Optional[float] = None
    information_gain_bits: Optional[float] = None
    plan_time_s: float = 0.0
    sense_time_s: float = 0.0


class EpisodeLog(BaseModel):
    strategy: str
    seed: int
    steps: List[EpisodeStep] = Field(default_factory=list)

    @model_validator(mode="after")
    def ordered_steps(self) -> "EpisodeLog":
        for position, step in enumerate(self.steps):
            if step.k != position:
                raise ValueError("episode steps must be ordered k = 0, 1, 2, ...")
        if self.steps and self.steps[0].placement is not None:
            raise ValueError("step 0 is the LiDAR step and carries no placement")
        return self

    @property
    def entropy_sequence(self) -> List[float]:
        return [step.entropy_bits for step in self.steps]


class EpisodeResult(BaseModel):
    """An episode's log together with the unified cloud after every step and the final belief"""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    log: EpisodeLog
    clouds: List[PointCloud]
    belief: OccupancyBelief

    @property
    def cloud(self) -> PointCloud:
        return self.clouds[-1]


class BenchRow(BaseModel):
    """Cumulative cost of the LiDAR step plus k curtains, averaged over trials"""
    strategy: str
    k: int = Field(ge=0)
    mean_time_s: float = Field(ge=0.0)
    ci_half_width_s: float = Field(ge=0.0)
    mean_plan_time_s: float = Field(0.0, ge=0.0)
    plan_ci_half_width_s: float = Field(0.0, ge=0.0)
    trials: int = Field(ge=2)
    mean_entropy_removed_bits: float


class BenchReport(BaseModel):
    trials: int = Field(ge=2)
    workers: int = Field(1, ge=1)
    rows: List[BenchRow] = Field(default_factory=list)

    def row(self, strategy: str, k: int) -> BenchRow:
        for row in self.rows:
            if row.strategy == strategy and row.k == k:
                return row
        raise KeyError((strategy, k))


class ScalingRow(BaseModel):
    """One planner timing for the complexity regression"""
    n: int
    t: int
    avg_degree: float
    seconds: float

    @property
    def lattice_size(self) -> int:
        return self.n * self.t

    @property
    def work(self) -> float:
        return self.n * self.t * self.avg_degree
