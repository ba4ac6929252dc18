import argparse
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from tqdm import tqdm
from tqdm.contrib.logging import logging_redirect_tqdm

from caplab.analysis.graph import build_graph, structure_checks
from caplab.geometry.curves import GeometryError
from caplab.runner.fixtures import fixture_table
from caplab.runner.pipeline import (
    ScenarioRunner,
    contour_document,
    trace_dendrite,
    write_json,
)
from caplab.runner.scenario import ConfigError, load_scenario
from caplab.solver.fields import dump_field_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2


def _configure_logging(verbose: bool, quiet: bool) -> None:
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(
        level=level, format="%(asctime)s [%(levelname)s] %(name)s: %(message)s"
    )


def run_config(path: str, out: str, grid: int | None) -> tuple[str, bool]:
    report = ScenarioRunner(out, grid).run_file(path)
    return report.scenario, report.passed


def _run(args: argparse.Namespace) -> int:
    # validate every file before solving anything
    for path in args.configs:
        load_scenario(path)
    outcomes: list[tuple[str, bool]] = []
    with logging_redirect_tqdm():
        if args.jobs > 1 and len(args.configs) > 1:
            with ProcessPoolExecutor(max_workers=args.jobs) as pool:
                futures = [
                    pool.submit(run_config, path, args.out, args.grid)
                    for path in args.configs
                ]
                for future in tqdm(futures, desc="scenarios", disable=args.quiet):
                    outcomes.append(future.result())
        else:
            for path in tqdm(args.configs, desc="scenarios", disable=args.quiet):
                outcomes.append(run_config(path, args.out, args.grid))
    for name, passed in outcomes:
        print(f"{name}: {'PASS' if passed else 'FAIL'}")
    return EXIT_OK if all(passed for _, passed in outcomes) else EXIT_FAILED


def _fixtures(args: argparse.Namespace) -> int:
    print(fixture_table())
    return EXIT_OK


def _dump_field(args: argparse.Namespace) -> int:
    context = ScenarioRunner(grid=args.grid).solve(load_scenario(args.config))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    dump_field_csv(context.field, out)
    logger.info("Wrote %s", out)
    return EXIT_OK if context.solve_report.converged else EXIT_FAILED


def _trace(args: argparse.Namespace) -> int:
    context = ScenarioRunner(grid=args.grid).solve(load_scenario(args.config))
    component = trace_dendrite(
        context, complex(*args.seed), args.level, args.node_radius, args.standoff
    )
    graph = build_graph(component, context.mask)
    checks = structure_checks(
        graph, component, soft=context.p != 2.0, loops=not context.is_real
    )
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_json([contour_document(component, graph, checks)], out)
    logger.info("Wrote %s", out)
    return EXIT_OK if checks.passed else EXIT_FAILED


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    verbosity = common.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    parser = argparse.ArgumentParser(
        prog="caplab", description="Harmonic and p-harmonic capacitor laboratory"
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser(
        "run", parents=[common], help="run scenario files and write reports"
    )
    run.add_argument("configs", nargs="+", help="scenario TOML files")
    run.add_argument("--out", default="out", help="output directory")
    run.add_argument("--grid", type=int, default=None, help="override [grid].n")
    run.add_argument("--jobs", type=int, default=1, help="scenarios run in parallel")
    run.set_defaults(handler=_run)

    fixtures = commands.add_parser(
        "fixtures", parents=[common], help="list built-in fixtures"
    )
    fixtures.set_defaults(handler=_fixtures)

    dump = commands.add_parser(
        "dump-field", parents=[common], help="solve a scenario and write field.csv"
    )
    dump.add_argument("config")
    dump.add_argument("--out", default="field.csv")
    dump.add_argument("--grid", type=int, default=None)
    dump.set_defaults(handler=_dump_field)

    trace = commands.add_parser(
        "trace", parents=[common], help="trace the level set through a point"
    )
    trace.add_argument("config")
    trace.add_argument("--seed", type=float, nargs=2, default=(0.0, 0.0))
    trace.add_argument("--level", type=float, default=None)
    trace.add_argument("--node-radius", type=float, default=2.0)
    trace.add_argument("--standoff", type=int, default=2)
    trace.add_argument("--out", default="contours.json")
    trace.add_argument("--grid", type=int, default=None)
    trace.set_defaults(handler=_trace)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose, args.quiet)
    try:
        return args.handler(args)
    except (ConfigError, GeometryError) as exc:
        print(f"caplab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
