"""Subcommand handlers behind main.py; run(argv) returns the process exit code."""

import logging
import pathlib
import sys
import time

import src.constants as c
from densities.density import Density, InvalidDensityException
from densities.loader import load_density
from densities.periodic import PeriodicOscillatoryDensity
from src.args import Args, get_args, sweep_cells
from src.bounds import BoundsException, run_bounds
from src.conditions import (
    EnvelopeRangeException,
    check_averaging_condition,
    sup_psi_bound_periodic,
)
from src.files import (
    ConfigException,
    RunManifest,
    dump_json,
    frontier_csv,
    manifest_path,
    read_frontier,
    read_positions,
    write_frontier,
    write_json,
    write_table,
)
from src.quadrature import QuadratureException
from src.solver import (
    FrontierPath,
    SolverConfig,
    SolverConfigException,
    continuum_initial_jump,
    detect_jumps,
    physical_jump_scan,
    picard_minimal,
    simulate_particles,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FINDING = 2

USAGE_ERRORS = (
    ConfigException,
    InvalidDensityException,
    SolverConfigException,
    BoundsException,
    QuadratureException,
    EnvelopeRangeException,
    ValueError,
    OSError,
)


def configure_logging(debug: bool):
    logging.basicConfig(
        level=logging.DEBUG if debug else logging.INFO,
        stream=sys.stderr,
        format="%(levelname)s %(name)s: %(message)s",
    )
    logging.getLogger().setLevel(logging.DEBUG if debug else logging.INFO)
    logging.captureWarnings(True)


def emit(text: str, out: str | None):
    if out is None:
        sys.stdout.write(text)
    else:
        pathlib.Path(out).write_text(text)
        logger.info("wrote '%s'", out)


def get_density(args: Args) -> Density:
    return load_density(args.density, base_dir=args.density_dir)


def solve(d: Density, cfg: SolverConfig, method: str, threads: int) -> tuple[FrontierPath, dict]:
    if method == "picard":
        frontier, iterations, _ = picard_minimal(d, cfg, threads=threads)
        return frontier, {"iterations": iterations, "converged": frontier.converged}
    frontier, ensemble = simulate_particles(d, cfg, threads=threads)
    return frontier, {"dead_fraction": ensemble.dead_fraction}


def initial_jump_summary(d: Density, frontier: FrontierPath) -> dict:
    return {
        "initial_jump": frontier.initial_jump,
        "continuum_initial_jump": continuum_initial_jump(d),
    }


def run_solver_command(args: Args, method: str) -> int:
    d = get_density(args)
    cfg = SolverConfig.from_json(args.config)

    start = time.perf_counter()
    frontier, summary = solve(d, cfg, method, args.threads)
    elapsed = time.perf_counter() - start

    if args.out is None:
        sys.stdout.write(frontier_csv(frontier))
        return EXIT_OK

    write_frontier(args.out, frontier)
    manifest = RunManifest(
        config={"density": d.to_spec(), "solver": cfg.to_json(), "method": method},
        seed=cfg.seed,
        timings={method: elapsed},
        outputs=[str(args.out)],
        jumps=frontier.jumps,
        summary=summary | initial_jump_summary(d, frontier),
    )
    manifest.write(manifest_path(args.out))
    return EXIT_OK


def simulate(args: Args) -> int:
    return run_solver_command(args, "particle")


def picard(args: Args) -> int:
    return run_solver_command(args, "picard")


def check(args: Args) -> int:
    d = get_density(args)
    report = check_averaging_condition(
        d,
        lambda0_candidate=args.lambda0 or c.DEFAULT_LAMBDA0,
        n_lambda=args.n_lambda or c.N_LAMBDA,
        n_mu=args.n_mu or c.N_MU,
        threads=args.threads,
    )
    data = {"density": d.to_spec()} | report.to_json()
    if isinstance(d, PeriodicOscillatoryDensity):
        lam = float(report.lambda_grid[-1])
        data["sup_psi_bound_periodic"] = [lam, sup_psi_bound_periodic(d, lam)]
    emit(dump_json(data) + "\n", args.out)
    return EXIT_OK if report.holds_1_7 else EXIT_FINDING


def bounds(args: Args) -> int:
    d = get_density(args)
    cfg = SolverConfig.from_json(args.config)
    n_samples = cfg.n_particles if args.solver == "particle" else cfg.picard.n_paths
    timings = {}

    start = time.perf_counter()
    if args.frontier is not None:
        frontier = read_frontier(
            args.frontier, n_samples, cfg.jump_threshold, method=args.solver
        )
    else:
        frontier, _ = solve(d, cfg, args.solver, args.threads)
        # same stderr and jumps as a frontier read back from CSV
        frontier = frontier.with_binomial_stderr(n_samples)
        frontier.jumps = detect_jumps(
            frontier.t_grid, frontier.lam, cfg.threshold(n_samples, frontier.t_grid)
        )
    timings["frontier"] = time.perf_counter() - start

    start = time.perf_counter()
    conditions = check_averaging_condition(
        d, lambda0_candidate=args.lambda0 or c.BOUNDS_LAMBDA0, threads=args.threads
    )
    g = conditions.g_envelope if conditions.holds_1_7 else None
    timings["conditions"] = time.perf_counter() - start

    start = time.perf_counter()
    report = run_bounds(
        d,
        frontier,
        g=g,
        n_paths=args.bounds_paths or c.BOUNDS_PATHS,
        seed=cfg.seed,
        threads=args.threads,
    )
    timings["bounds"] = time.perf_counter() - start

    data = {
        "density": d.to_spec(),
        "holds_1_7": conditions.holds_1_7,
        "lambda0": conditions.lambda0,
    } | report.to_json()
    emit(dump_json(data) + "\n", args.out)

    outputs = [] if args.out is None else [str(args.out)]
    if args.emit_csv is not None:
        header, rows = report.margin_rows(frontier, g)
        write_table(args.emit_csv, header, rows)
        outputs.append(str(args.emit_csv))

    if args.out is not None:
        RunManifest(
            config={
                "density": d.to_spec(),
                "solver": cfg.to_json(),
                "method": args.solver,
                "frontier": args.frontier,
            },
            seed=cfg.seed,
            timings=timings,
            outputs=outputs,
            jumps=frontier.jumps,
            summary={"passed": report.passed},
        ).write(manifest_path(args.out))

    return EXIT_OK if report.passed else EXIT_FINDING


def jump(args: Args) -> int:
    values = read_positions(args.positions)
    delta = physical_jump_scan(values, len(values))
    logger.debug("cascade of %d particles: %s", len(values), delta)
    print(float(delta))
    return EXIT_OK


def sweep(args: Args) -> int:
    d = get_density(args)
    out_dir = pathlib.Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    index = []
    timings = {}
    for i, cell in enumerate(sweep_cells(args.grid)):
        cfg = SolverConfig.from_json(args.config | cell)
        start = time.perf_counter()
        frontier, _ = simulate_particles(d, cfg, threads=args.threads)
        name = f"cell_{i:03d}.csv"
        timings[name] = time.perf_counter() - start
        write_frontier(out_dir / name, frontier)
        index.append(
            {
                "file": name,
                "fields": cell,
                "lambda_T": float(frontier.lam[-1]),
                "initial_jump": frontier.initial_jump,
                "jumps": frontier.jumps,
            }
        )
        logger.info("sweep cell %d: %s -> Lambda_T=%.6g", i, cell, frontier.lam[-1])

    write_json(out_dir / "index.json", index)
    RunManifest(
        config={"density": d.to_spec(), "solver": args.config, "grid": args.grid},
        seed=args.seed,
        timings=timings,
        outputs=[str(out_dir / row["file"]) for row in index] + [str(out_dir / "index.json")],
    ).write(manifest_path(out_dir))
    return EXIT_OK


COMMANDS = {
    "simulate": simulate,
    "picard": picard,
    "check": check,
    "bounds": bounds,
    "jump": jump,
    "sweep": sweep,
}


def run(argv: list[str]) -> int:
    try:
        args = get_args(argv)
    except USAGE_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR

    configure_logging(args.debug)
    try:
        return COMMANDS[args.command](args)
    except USAGE_ERRORS as e:
        logger.debug("aborting", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_ERROR

