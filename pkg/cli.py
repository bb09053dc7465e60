#!/usr/bin/env python3
"""
Command-line front end for the light curtain planner
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional, Sequence

from pydantic import ValidationError

from config.settings import configure_logging, get_settings, load_sensor_config
from models.curtain_models import EpisodeConfig, NoiseConfig, Scene
from services.benchmark_service import BenchmarkService
from services.episode_runner import EpisodeRunner
from services.export_service import ExportService
from services.scene_generator import SceneGenerator
from utils.exceptions import ConfigurationError, CurtainError


EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2

DEFAULT_STRATEGIES = "dp,greedy-random,greedy-minangle,random,fixed:15,fixed:30,fixed:45,fp-uncertainty"
COMPARE_HEADER = [
    "scene", "strategy", "k", "objective_bits", "entropy_bits", "entropy_removed_bits", "smoothness_rad2"
]


class CurtainArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1"""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def file_stem(strategy: str) -> str:
    return strategy.replace(":", "-")


def split_strategies(value: str) -> List[str]:
    return [item.strip() for item in value.split(",") if item.strip()]


def cmd_genscene(args: argparse.Namespace) -> int:
    for offset in range(args.count):
        seed = args.seed + offset
        scene = SceneGenerator.generate(seed, args.n_targets, args.n_clutter)
        ExportService.write_scene(Path(args.out) / f"scene_{seed:04d}.json", scene)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    sensor = load_sensor_config(args.config)
    scene = ExportService.read_scene(args.scene)
    config = EpisodeConfig(
        k_max=args.k,
        strategy=args.strategy,
        seed=args.seed,
        noise=NoiseConfig.standard(args.seed) if args.noise else None,
        sensor=sensor
    )
    curtains = args.k if args.k_test is None else args.k_test
    result = EpisodeRunner.simulate(scene, config, curtains)

    out = Path(args.out)
    stem = f"episode_{file_stem(args.strategy)}_{args.seed}"
    ExportService.write_log_json(out / f"{stem}.json", result.log)
    ExportService.write_log_csv(out / f"{stem}.csv", result.log.steps)
    ExportService.write_cloud_csv(out / f"{stem}_cloud.csv", result.cloud)
    ExportService.write_grid_json(out / f"{stem}_belief.json", result.belief)
    return EXIT_OK


def _load_scenes(args: argparse.Namespace) -> List[Scene]:
    if args.scene_dir is not None:
        return ExportService.read_scene_dir(args.scene_dir)
    return SceneGenerator.build_corpus()


def cmd_bench(args: argparse.Namespace) -> int:
    settings = get_settings()
    sensor = load_sensor_config(args.config)
    scenes = ExportService.read_scene_dir(args.scene_dir)
    trials = args.trials if args.trials is not None else settings.bench_trials
    report = BenchmarkService.run_bench(
        scenes, split_strategies(args.strategies), trials, sensor,
        seed=args.seed, workers=settings.threads
    )
    ExportService.write_bench_json(Path(args.out) / "bench.json", report)
    ExportService.write_bench_csv(Path(args.out) / "bench.csv", report)
    return EXIT_OK


def cmd_compare(args: argparse.Namespace) -> int:
    sensor = load_sensor_config(args.config)
    rows = []
    for index, scene in enumerate(_load_scenes(args)):
        for strategy in split_strategies(args.strategies):
            config = EpisodeConfig(k_max=args.k, strategy=strategy, seed=args.seed, sensor=sensor)
            steps = EpisodeRunner.run_episode(scene, config).steps
            for step in steps[1:]:
                rows.append([
                    index, strategy, step.k, step.objective_bits, step.entropy_bits,
                    steps[0].entropy_bits - step.entropy_bits, step.smoothness_rad2
                ])
    ExportService.write_table_csv(Path(args.out) / "compare.csv", COMPARE_HEADER, rows)
    return EXIT_OK


def build_parser() -> CurtainArgumentParser:
    parser = CurtainArgumentParser(prog="curtain", description="Uncertainty-guided light curtain placement")
    parser.add_argument("--config", help="sensor configuration JSON")
    parser.add_argument("--seed", type=int, default=0, help="64-bit seed")
    parser.add_argument("--out", default="out", help="output directory")
    parser.add_argument("--log-level", help="overrides CURTAIN_LOG_LEVEL")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=CurtainArgumentParser)

    genscene = commands.add_parser("genscene", help="generate random scenes")
    genscene.add_argument("--n-targets", type=int, default=SceneGenerator.DEFAULT_TARGETS)
    genscene.add_argument("--n-clutter", type=int, default=SceneGenerator.DEFAULT_CLUTTER)
    genscene.add_argument("--count", type=int, default=1, help="scenes to write, seeded seed, seed+1, ...")
    genscene.set_defaults(handler=cmd_genscene)

    run = commands.add_parser("run", help="run one episode on a scene")
    run.add_argument("scene", help="scene JSON file")
    run.add_argument("--strategy", default="dp")
    run.add_argument("--k", type=int, default=3, help="curtains per episode")
    run.add_argument("--k-test", type=int, help="run this many curtains regardless of --k")
    run.add_argument("--noise", action="store_true", help="10%% dropout and 0.1 m range jitter")
    run.set_defaults(handler=cmd_run)

    bench = commands.add_parser("bench", help="time strategies over a scene directory")
    bench.add_argument("scene_dir")
    bench.add_argument("--strategies", default="dp,fp-uncertainty")
    bench.add_argument("--trials", type=int, help="defaults to CURTAIN_BENCH_TRIALS")
    bench.set_defaults(handler=cmd_bench)

    compare = commands.add_parser("compare", help="entropy comparison across strategies")
    compare.add_argument("scene_dir", nargs="?", help="defaults to the generated corpus")
    compare.add_argument("--strategies", default=DEFAULT_STRATEGIES)
    compare.add_argument("--k", type=int, default=3)
    compare.set_defaults(handler=cmd_compare)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed < 0 or args.seed >= 2 ** 64:
        parser.error("--seed must be a 64-bit unsigned integer")
    for name in ("k", "k_test", "trials", "n_targets", "n_clutter", "count"):
        value = getattr(args, name, None)
        if value is not None and value < 0:
            parser.error(f"--{name.replace('_', '-')} must be non-negative")
    if getattr(args, "trials", None) is not None and args.trials < 2:
        parser.error("--trials must be at least 2")

    try:
        configure_logging(args.log_level)
        return args.handler(args)
    except ConfigurationError as error:
        print(f"configuration error: {error}", file=sys.stderr)
        return EXIT_USAGE
    except (CurtainError, ValidationError, OSError) as error:
        print(f"error: {error}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
