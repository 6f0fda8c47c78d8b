from argparse import ArgumentParser
from dataclasses import dataclass, field
import itertools
import os
import pathlib
import sys
from time import time

from src.files import ConfigException, read_json

COMMANDS = ("simulate", "picard", "check", "bounds", "jump", "sweep")
SOLVER_FLAGS = {
    "n_particles": "n_particles",
    "dt": "dt",
    "T": "T",
    "jump_threshold": "jump_threshold",
}
PICARD_FLAGS = {"n_paths": "n_paths", "max_iters": "max_iters", "tol": "tol"}


class LabArgumentParser(ArgumentParser):
    """Usage errors raise instead of exiting, so they map to exit code 1."""

    def error(self, message):
        raise ConfigException(f"{self.prog}: {message}")


@dataclass
class Args:
    command: str
    seed: int
    threads: int
    debug: bool
    out: str | None
    config: dict = field(default_factory=dict)
    density: dict | None = None
    density_dir: pathlib.Path | None = None
    positions: str | None = None
    frontier: str | None = None
    solver: str = "particle"
    emit_csv: str | None = None
    bounds_paths: int | None = None
    lambda0: float | None = None
    n_lambda: int | None = None
    n_mu: int | None = None
    grid: dict[str, list] | None = None


def sanitize_seed(org_seed: None | int, config: dict) -> int:
    if org_seed is not None:
        return int(org_seed)
    if "seed" in config:
        return int(config["seed"])

    seed = int(time() * 100_000) % 1_000_000
    print(f"Generated seed: {seed}", file=sys.stderr)
    return seed


def sanitize_threads(org_threads: None | int) -> int:
    if org_threads is not None:
        threads = org_threads
    elif "STEFAN_THREADS" in os.environ:
        try:
            threads = int(os.environ["STEFAN_THREADS"])
        except ValueError:
            raise ConfigException(
                f'STEFAN_THREADS must be an integer, got "{os.environ["STEFAN_THREADS"]}"'
            )
    else:
        threads = os.cpu_count() or 1

    if threads < 1:
        raise ConfigException(f"--threads must be >= 1, got {threads}")
    return threads


def sanitize_config(org_config: str | None) -> tuple[dict, pathlib.Path | None]:
    if org_config is None:
        return {}, None

    config_path = pathlib.Path(org_config).resolve()
    config = read_json(config_path)
    if not isinstance(config, dict):
        raise ConfigException(f'config "{config_path}" must hold a JSON object')
    return config, config_path.parent


def sanitize_density(
    org_density: str | None, config: dict, config_dir: pathlib.Path | None
) -> tuple[dict | None, pathlib.Path | None]:
    """Density spec from --density, else the "density" object of the config."""
    if org_density is not None:
        density_path = pathlib.Path(org_density).resolve()
        return read_json(density_path), density_path.parent
    return config.get("density"), config_dir


def sanitize_input_file(org_path: str | None, flag: str) -> str | None:
    if org_path is None:
        return None

    path = pathlib.Path(org_path).resolve()
    if not path.is_file():
        raise ConfigException(f'{flag}: file with path "{path}" not found')
    return str(path)


def sanitize_grid(org_grid: str | None) -> dict[str, list] | None:
    if org_grid is None:
        return None

    grid = read_json(pathlib.Path(org_grid).resolve())
    if not isinstance(grid, dict) or not grid:
        raise ConfigException("--grid must hold a non-empty JSON object of field: [values]")
    for name, values in grid.items():
        if not isinstance(values, list) or not values:
            raise ConfigException(f'--grid field "{name}" must map to a non-empty list')
    return grid


def merge_solver_config(config: dict, namespace, seed: int) -> dict:
    """JSON fields first, flags on top; the result is what the manifest records."""
    merged = {k: v for k, v in config.items() if k != "density"}
    picard = dict(merged.get("picard", {}))

    for flag, key in SOLVER_FLAGS.items():
        value = getattr(namespace, flag, None)
        if value is not None:
            merged[key] = value
    for flag, key in PICARD_FLAGS.items():
        value = getattr(namespace, flag, None)
        if value is not None:
            picard[key] = value
    if getattr(namespace, "bridge", False):
        merged["bridge_correction"] = True

    if picard:
        merged["picard"] = picard
    merged["seed"] = seed
    return merged


def sweep_cells(grid: dict[str, list]) -> list[dict]:
    """Cartesian product of the grid, in the key order of the grid file."""
    names = list(grid)
    return [dict(zip(names, values)) for values in itertools.product(*grid.values())]


def _add_common(parser: ArgumentParser):
    parser.add_argument("--config", "-c", help="JSON file with solver fields and a density")
    parser.add_argument("--density", help="density JSON file; overrides the config's density")
    parser.add_argument("--seed", "-s", type=int, help="Seed used by random number generator")
    parser.add_argument(
        "--threads",
        "-t",
        type=int,
        help="worker threads (default: STEFAN_THREADS, then the CPU count)",
    )
    parser.add_argument("--out", "-o", help="output path; stdout when omitted")
    parser.add_argument("--debug", "-d", action="store_true", help="Display debug info")


def _add_solver(parser: ArgumentParser):
    parser.add_argument("--n-particles", "-n", dest="n_particles", type=int)
    parser.add_argument("--dt", type=float, help="time step")
    parser.add_argument("--T", dest="T", type=float, help="horizon")
    parser.add_argument("--jump-threshold", dest="jump_threshold", type=float)
    parser.add_argument(
        "--bridge", action="store_true", help="Brownian bridge crossing correction"
    )
    parser.add_argument("--n-paths", dest="n_paths", type=int, help="Picard paths")
    parser.add_argument("--max-iters", dest="max_iters", type=int)
    parser.add_argument("--tol", type=float, help="Picard sup-change tolerance")


def build_parser() -> LabArgumentParser:
    parser = LabArgumentParser(prog="stefan_lab")
    commands = parser.add_subparsers(dest="command", required=True, parser_class=LabArgumentParser)

    simulate = commands.add_parser("simulate", help="particle solver, frontier CSV")
    _add_common(simulate)
    _add_solver(simulate)

    picard = commands.add_parser("picard", help="minimal solution by Picard iteration")
    _add_common(picard)
    _add_solver(picard)

    check = commands.add_parser("check", help="condition report of a density")
    _add_common(check)
    check.add_argument("--lambda0", type=float, help="largest lambda to verify")
    check.add_argument("--n-lambda", dest="n_lambda", type=int)
    check.add_argument("--n-mu", dest="n_mu", type=int)

    bounds = commands.add_parser("bounds", help="verify the frontier bounds")
    _add_common(bounds)
    _add_solver(bounds)
    bounds.add_argument(
        "--solver", choices=("particle", "picard"), default="particle"
    )
    bounds.add_argument("--frontier", "-f", help="frontier CSV instead of solving")
    bounds.add_argument("--emit-csv", dest="emit_csv", help="per-t margin table")
    bounds.add_argument(
        "--bounds-paths", dest="bounds_paths", type=int, help="Monte Carlo paths of the estimators"
    )
    bounds.add_argument(
        "--lambda0", type=float, help="largest lambda of the averaging envelope behind chi-bar"
    )

    jump = commands.add_parser("jump", help="one cascade on a CSV of positions")
    jump.add_argument("--positions", "-p", required=True, help="CSV of positions")
    jump.add_argument("--debug", "-d", action="store_true", help="Display debug info")

    sweep = commands.add_parser("sweep", help="simulate over a grid of solver fields")
    _add_common(sweep)
    _add_solver(sweep)
    sweep.add_argument("--grid", "-g", required=True, help="JSON object field -> [values]")

    return parser


def get_args(argv: list[str]) -> Args:
    namespace = build_parser().parse_args(argv)

    if namespace.command == "jump":
        return Args(
            command="jump",
            seed=0,
            threads=1,
            debug=namespace.debug,
            out=None,
            positions=sanitize_input_file(namespace.positions, "--positions"),
        )

    config, config_dir = sanitize_config(namespace.config)
    density, density_dir = sanitize_density(namespace.density, config, config_dir)
    if density is None:
        raise ConfigException("no density given: pass --density or a config with a \"density\" object")

    needs_seed = namespace.command != "check"
    seed = sanitize_seed(namespace.seed, config) if needs_seed else 0

    args = Args(
        command=namespace.command,
        seed=seed,
        threads=sanitize_threads(namespace.threads),
        debug=namespace.debug,
        out=namespace.out,
        config=merge_solver_config(config, namespace, seed) if needs_seed else {},
        density=density,
        density_dir=density_dir,
    )

    match namespace.command:
        case "check":
            args.lambda0 = namespace.lambda0
            args.n_lambda = namespace.n_lambda
            args.n_mu = namespace.n_mu
        case "bounds":
            args.frontier = sanitize_input_file(namespace.frontier, "--frontier")
            args.solver = namespace.solver
            args.emit_csv = namespace.emit_csv
            args.bounds_paths = namespace.bounds_paths
            args.lambda0 = namespace.lambda0
        case "sweep":
            if namespace.out is None:
                raise ConfigException("sweep needs --out, the directory for the cell CSVs")
            args.grid = sanitize_grid(namespace.grid)

    return args
