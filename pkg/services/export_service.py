import csv
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type, TypeVar, Union

import numpy as np

from models.curtain_models import (
    BenchReport, CurtainPlacement, EpisodeLog, EpisodeStep, GridGeometry, OccupancyBelief,
    PlacementExport, PlacementPointExport, PlacementScore, PointCloud, Scene
)
from utils.exceptions import ArgumentError


logger = logging.getLogger(__name__)

PathLike = Union[str, Path]
GridT = TypeVar("GridT", bound=GridGeometry)

GRID_HEADER = ["x_min", "x_max", "z_min", "z_max", "nx", "nz"]
CLOUD_HEADER = ["x", "z", "ray_index", "source"]
LOG_HEADER = ["k", "entropy_bits", "objective_bits", "points_added", "plan_time_s"]
BENCH_HEADER = [
    "strategy", "k", "mean_time_s", "ci_half_width_s", "mean_plan_time_s", "plan_ci_half_width_s",
    "trials", "mean_entropy_removed_bits"
]


def format_value(value: Any) -> str:
    """
    CSV cell text: shortest round-trip repr for floats, empty for None
    """
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _optional_float(text: str) -> Optional[float]:
    return None if text == "" else float(text)


class ExportService:
    """
    JSON and CSV files for grids, placements, clouds, scenes, episode logs and bench reports
    """

    @staticmethod
    def _write_rows(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([format_value(value) for value in row])
        logger.info("wrote %s", path)
        return path

    @staticmethod
    def _read_rows(path: PathLike) -> List[Dict[str, str]]:
        with Path(path).open(newline="") as handle:
            return list(csv.DictReader(handle))

    @staticmethod
    def _write_text(path: PathLike, text: str) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info("wrote %s", path)
        return path

    # ---- grids -----------------------------------------------------------

    @staticmethod
    def grid_to_dict(grid: GridGeometry) -> Dict[str, Any]:
        data = grid.geometry().model_dump()
        data["values"] = np.asarray(grid.values).tolist()
        if isinstance(grid, OccupancyBelief):
            data["prior_p"] = grid.prior_p
        return data

    @staticmethod
    def write_grid_json(path: PathLike, grid: GridGeometry) -> Path:
        return ExportService._write_text(path, json.dumps(ExportService.grid_to_dict(grid)))

    @staticmethod
    def read_grid_json(path: PathLike, grid_type: Type[GridT]) -> GridT:
        return grid_type(**json.loads(Path(path).read_text()))

    @staticmethod
    def write_grid_csv(path: PathLike, grid: GridGeometry) -> Path:
        rows = [[grid.x_min, grid.x_max, grid.z_min, grid.z_max, grid.nx, grid.nz]]
        rows.extend(list(row) for row in np.asarray(grid.values))
        return ExportService._write_rows(path, GRID_HEADER, rows)

    @staticmethod
    def read_grid_csv(path: PathLike, grid_type: Type[GridT]) -> GridT:
        with Path(path).open(newline="") as handle:
            reader = csv.reader(handle)
            header = next(reader)
            if header != GRID_HEADER:
                raise ArgumentError(f"{path}: unexpected grid header {header}")
            x_min, x_max, z_min, z_max, nx, nz = next(reader)
            values = [[float(cell) for cell in row] for row in reader]
        return grid_type(
            x_min=float(x_min), x_max=float(x_max), z_min=float(z_min), z_max=float(z_max),
            nx=int(nx), nz=int(nz), values=values
        )

    # ---- placements and clouds ------------------------------------------

    @staticmethod
    def placement_export(placement: CurtainPlacement, score: PlacementScore) -> PlacementExport:
        points = [
            PlacementPointExport(
                ray_index=point.ray_index,
                range_m=point.range,
                x=point.position[0],
                z=point.position[1],
                laser_angle_rad=point.laser_angle
            )
            for point in placement.points
        ]
        return PlacementExport(points=points, score=score)

    @staticmethod
    def write_placement_json(path: PathLike, placement: CurtainPlacement, score: PlacementScore) -> Path:
        export = ExportService.placement_export(placement, score)
        return ExportService._write_text(path, export.model_dump_json(indent=2))

    @staticmethod
    def write_cloud_csv(path: PathLike, cloud: PointCloud) -> Path:
        rows = [
            [position[0], position[1], ray_index, source]
            for position, ray_index, source in zip(cloud.positions, cloud.ray_indices, cloud.sources)
        ]
        return ExportService._write_rows(path, CLOUD_HEADER, rows)

    @staticmethod
    def read_cloud_csv(path: PathLike) -> PointCloud:
        rows = ExportService._read_rows(path)
        if not rows:
            return PointCloud.empty()
        return PointCloud(
            positions=[(float(row["x"]), float(row["z"])) for row in rows],
            ray_indices=[int(row["ray_index"]) for row in rows],
            sources=tuple(row["source"] for row in rows)
        )

    # ---- scenes ----------------------------------------------------------

    @staticmethod
    def write_scene(path: PathLike, scene: Scene) -> Path:
        return ExportService._write_text(path, scene.model_dump_json(indent=2))

    @staticmethod
    def read_scene(path: PathLike) -> Scene:
        return Scene.model_validate_json(Path(path).read_text())

    @staticmethod
    def read_scene_dir(directory: PathLike) -> List[Scene]:
        """
        Every *.json scene in the directory, in file-name order
        """
        directory = Path(directory)
        paths = sorted(directory.glob("*.json")) if directory.is_dir() else []
        if not paths:
            raise ArgumentError(f"no scene files found in {directory}")
        return [ExportService.read_scene(path) for path in paths]

    # ---- episode logs ----------------------------------------------------

    @staticmethod
    def write_log_json(path: PathLike, log: EpisodeLog) -> Path:
        return ExportService._write_text(path, log.model_dump_json(indent=2))

    @staticmethod
    def read_log_json(path: PathLike) -> EpisodeLog:
        return EpisodeLog.model_validate_json(Path(path).read_text())

    @staticmethod
    def write_log_csv(path: PathLike, steps: Sequence[EpisodeStep]) -> Path:
        rows = [
            [step.k, step.entropy_bits, step.objective_bits, step.points_added, step.plan_time_s]
            for step in steps
        ]
        return ExportService._write_rows(path, LOG_HEADER, rows)

    @staticmethod
    def read_log_csv(path: PathLike) -> List[EpisodeStep]:
        return [
            EpisodeStep(
                k=int(row["k"]),
                entropy_bits=float(row["entropy_bits"]),
                objective_bits=_optional_float(row["objective_bits"]),
                points_added=int(row["points_added"]),
                plan_time_s=float(row["plan_time_s"])
            )
            for row in ExportService._read_rows(path)
        ]

    # ---- benchmark and comparison tables ---------------------------------

    @staticmethod
    def write_bench_json(path: PathLike, report: BenchReport) -> Path:
        return ExportService._write_text(path, report.model_dump_json(indent=2))

    @staticmethod
    def write_bench_csv(path: PathLike, report: BenchReport) -> Path:
        rows = [
            [
                row.strategy, row.k, row.mean_time_s, row.ci_half_width_s, row.mean_plan_time_s,
                row.plan_ci_half_width_s, row.trials, row.mean_entropy_removed_bits
            ]
            for row in report.rows
        ]
        return ExportService._write_rows(path, BENCH_HEADER, rows)

    @staticmethod
    def write_table_csv(path: PathLike, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> Path:
        return ExportService._write_rows(path, header, rows)
