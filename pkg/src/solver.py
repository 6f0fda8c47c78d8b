"""Particle and Picard solvers for the frontier of the supercooled Stefan problem.

Both solvers work on the same uniform time grid. The particle scheme moves
N particles X = X0 + B - Lambda with one synchronous Euler step and one
cascade resolution per grid step. The Picard scheme iterates
Lambda <- E[F(Y)], Y the running max of (-B + Lambda), starting from 0.
"""

import logging
import math
import time
from collections.abc import Callable, Iterator
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import bisect

import src.constants as c
from densities.density import Density
from src.rng import chunk_bounds, normal_icdf, open_uniform, parallel_map, stream

logger = logging.getLogger(__name__)

# time steps generated at once per chunk of Brownian paths
PATH_BLOCK_STEPS = 64


class SolverConfigException(Exception):
    pass


@dataclass
class PicardConfig:
    n_paths: int = c.PICARD_PATHS
    max_iters: int = c.PICARD_MAX_ITERS
    tol: float = c.PICARD_TOL

    def __post_init__(self):
        if self.n_paths < 1:
            raise SolverConfigException(f"picard.n_paths must be >= 1, got {self.n_paths}")
        if self.max_iters < 1:
            raise SolverConfigException(
                f"picard.max_iters must be >= 1, got {self.max_iters}"
            )
        if not self.tol > 0:
            raise SolverConfigException(f"picard.tol must be positive, got {self.tol}")


def default_jump_threshold(n: int, t_grid: np.ndarray) -> float:
    """max(5/n, 10 sqrt(dt)) with dt the widest step of the grid."""
    dt = float(np.max(np.diff(t_grid)))
    return max(c.JUMP_MIN_PARTICLES / n, c.JUMP_SQRT_DT_FACTOR * math.sqrt(dt))


@dataclass
class SolverConfig:
    n_particles: int = 10_000
    dt: float = 5e-4
    T: float = c.DEFAULT_T
    seed: int = 0
    bridge_correction: bool = False
    picard: PicardConfig = field(default_factory=PicardConfig)
    jump_threshold: float | None = None

    def __post_init__(self):
        if isinstance(self.picard, dict):
            self.picard = PicardConfig(**self.picard)
        if self.n_particles < 1:
            raise SolverConfigException(
                f"n_particles must be >= 1, got {self.n_particles}"
            )
        if not self.dt > 0:
            raise SolverConfigException(f"dt must be positive, got {self.dt}")
        if not self.T > 0:
            raise SolverConfigException(f"T must be positive, got {self.T}")
        if self.jump_threshold is not None and self.jump_threshold < 0:
            raise SolverConfigException(
                f"jump_threshold must be nonnegative, got {self.jump_threshold}"
            )

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.dt - 1e-9))

    @property
    def t_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.n_steps + 1)

    def threshold(self, n: int, t_grid: np.ndarray | None = None) -> float:
        if self.jump_threshold is not None:
            return self.jump_threshold
        return default_jump_threshold(n, self.t_grid if t_grid is None else t_grid)

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, data: dict) -> "SolverConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise SolverConfigException(f'unknown solver config field "{sorted(unknown)[0]}"')
        return cls(**data)


@dataclass
class FrontierPath:
    t_grid: np.ndarray
    lam: np.ndarray
    stderr: np.ndarray
    jumps: list[tuple[float, float]] = field(default_factory=list)
    n_samples: int = 0
    method: str = "particle"
    converged: bool = True

    @property
    def initial_jump(self) -> float:
        return float(self.lam[0])

    @property
    def alive_fraction(self) -> np.ndarray:
        return 1.0 - self.lam

    @property
    def dt(self) -> float:
        return float(self.t_grid[1] - self.t_grid[0])

    def with_binomial_stderr(self, n: int) -> "FrontierPath":
        """Same frontier, standard error sqrt(L (1 - L) / n) at every node."""
        return FrontierPath(
            t_grid=self.t_grid,
            lam=self.lam,
            stderr=binomial_stderr(self.lam, n),
            jumps=list(self.jumps),
            n_samples=n,
            method=self.method,
            converged=self.converged,
        )


def binomial_stderr(lam: np.ndarray, n: int) -> np.ndarray:
    return np.sqrt(np.clip(lam * (1.0 - lam), 0.0, None) / n)


def detect_jumps(
    t_grid: np.ndarray, lam: np.ndarray, threshold: float
) -> list[tuple[float, float]]:
    steps = np.diff(lam, prepend=0.0)
    return [(float(t_grid[k]), float(steps[k])) for k in np.flatnonzero(steps > threshold)]


@dataclass
class ParticleEnsemble:
    n: int
    positions: np.ndarray
    alive: np.ndarray
    death_time: np.ndarray
    seed: int
    streams: list[np.random.Generator] = field(default_factory=list, repr=False)

    @property
    def dead_fraction(self) -> float:
        return float(np.count_nonzero(~self.alive)) / self.n


# cascades


def _cascade_size(values: np.ndarray, n: int) -> int:
    """k* = min{k >= 0 : y_(k+1) > k/n}; values above 1 can never be reached."""
    candidates = np.sort(values[values <= 1.0])
    if len(candidates) == 0:
        return 0
    above = candidates > np.arange(len(candidates)) / n
    return int(np.argmax(above)) if above.any() else len(candidates)


def physical_jump_scan(values: ArrayLike, n: int) -> Fraction:
    """Size of the physical jump of the empirical measure of values, with mass 1/n each."""
    return Fraction(_cascade_size(np.asarray(values, dtype=float), n), n)


def physical_jump_bruteforce(values: ArrayLike, n: int, x_step: float = 1e-6) -> Fraction:
    """First x on the x_step grid with nu(0, x] < x, snapped down to the {k/n} grid.

    Reference version of physical_jump_scan for tests.
    """
    ys = np.sort(np.asarray(values, dtype=float))
    limit = int(math.ceil((1.0 + 2.0 * x_step) / x_step)) + 1
    block = 1 << 16
    for start in range(1, limit + 1, block):
        xs = np.arange(start, min(start + block, limit + 1)) * x_step
        counts = np.searchsorted(ys, xs, side="right")
        hits = np.flatnonzero(counts / n < xs)
        if len(hits):
            x = xs[hits[0]]
            return Fraction(int(math.floor(x * n + 1e-9)), n)
    return Fraction(len(ys), n)


# particle scheme


def stratified_positions(d: Density, n: int) -> np.ndarray:
    return np.asarray(d.quantile((np.arange(n) + 0.5) / n), dtype=float)


def discrete_initial_jump(d: Density, n: int) -> int:
    """Largest k with F(j/n) >= j/n for every j <= k."""
    j = np.arange(1, n + 1)
    below = np.asarray(d.cdf(j / n)) < j / n - c.PDF_TOL
    return int(np.argmax(below)) if below.any() else n


def continuum_initial_jump(d: Density) -> float:
    """inf{x > 0 : F(x) < x}, located on a dense grid of (0, 1] and refined by bisection."""
    xs = np.linspace(0.0, 1.0, c.CDF_TABLE_SIZE + 1)[1:]
    below = np.asarray(d.cdf(xs)) < xs - c.PDF_TOL
    if not below.any():
        return 1.0
    i = int(np.argmax(below))
    if i == 0:
        return 0.0
    root = bisect(
        lambda x: 1.0 if float(d.cdf(x)) >= x - c.PDF_TOL else -1.0,
        float(xs[i - 1]),
        float(xs[i]),
        xtol=c.BISECT_XTOL,
        maxiter=c.BISECT_MAX_ITER,
    )
    return float(root)


def _advance_chunk(
    positions: np.ndarray,
    alive: np.ndarray,
    gen: np.random.Generator,
    bridge_gen: np.random.Generator | None,
    dt: float,
) -> np.ndarray:
    """One Euler step for a chunk; bridge-killed particles come back as -inf."""
    # every particle draws, dead or alive, so streams stay aligned
    z_new = positions + math.sqrt(dt) * normal_icdf(gen, len(positions))
    if bridge_gen is not None:
        u = open_uniform(bridge_gen, len(positions))
        both = alive & (positions > 0) & (z_new > 0)
        with np.errstate(over="ignore", invalid="ignore"):
            p_cross = np.exp(-2.0 * positions * z_new / dt)
        z_new = np.where(both & (u < p_cross), -np.inf, z_new)
    return np.where(alive, z_new, np.nan)


def simulate_particles(
    d: Density, cfg: SolverConfig, threads: int = 1
) -> tuple[FrontierPath, ParticleEnsemble]:
    start = time.perf_counter()
    n = cfg.n_particles
    t_grid = cfg.t_grid
    dt = float(t_grid[1] - t_grid[0])
    chunks = chunk_bounds(n)

    positions = stratified_positions(d, n)
    alive = np.ones(n, dtype=bool)
    death_time = np.full(n, np.inf)

    # time 0: discrete initial jump on the ordered particles, then the cascade it triggers
    k0 = discrete_initial_jump(d, n)
    alive[:k0] = False
    death_time[:k0] = 0.0
    positions[:k0] = np.nan
    positions[alive] -= k0 / n
    k1 = _resolve_cascade(positions, alive, death_time, n, 0.0)
    dead = k0 + k1
    logger.debug("time-0 cascade: %d from F(x) >= x, %d more from the scan", k0, k1)

    lam = np.zeros(len(t_grid))
    lam[0] = dead / n

    gens = [stream(cfg.seed, c.STREAM_PARTICLES, i) for i in range(len(chunks))]
    bridge_gens = [
        stream(cfg.seed, c.STREAM_BRIDGE, i) if cfg.bridge_correction else None
        for i in range(len(chunks))
    ]

    for k in range(1, len(t_grid)):
        moved = parallel_map(
            _advance_chunk,
            [
                (positions[lo:hi], alive[lo:hi], gens[i], bridge_gens[i], dt)
                for i, (lo, hi) in enumerate(chunks)
            ],
            threads=threads,
        )
        positions = np.concatenate(moved)
        dead += _resolve_cascade(positions, alive, death_time, n, float(t_grid[k]))
        lam[k] = dead / n
        if lam[k] == 1.0:
            lam[k:] = 1.0
            logger.info("all particles absorbed at t=%.6g", t_grid[k])
            break

    frontier = FrontierPath(
        t_grid=t_grid,
        lam=lam,
        stderr=binomial_stderr(lam, n),
        jumps=detect_jumps(t_grid, lam, cfg.threshold(n)),
        n_samples=n,
        method="particle",
    )
    ensemble = ParticleEnsemble(
        n=n,
        positions=positions,
        alive=alive,
        death_time=death_time,
        seed=cfg.seed,
        streams=gens,
    )
    logger.info(
        "particle solver: n=%d, %d steps, Lambda_T=%.6g, %d jumps in %.2fs",
        n,
        len(t_grid) - 1,
        lam[-1],
        len(frontier.jumps),
        time.perf_counter() - start,
    )
    return frontier, ensemble


def _resolve_cascade(
    positions: np.ndarray,
    alive: np.ndarray,
    death_time: np.ndarray,
    n: int,
    t: float,
) -> int:
    """Kill the k* lowest alive particles and shift the rest down by k*/n, in place."""
    values = positions[alive]
    k = _cascade_size(values, n)
    if k == 0:
        return 0

    cut = np.sort(values[values <= 1.0])[k - 1]
    dying = alive & (positions <= cut)
    alive[dying] = False
    death_time[dying] = t
    positions[dying] = np.nan
    positions[alive] -= k / n
    return k


# Brownian paths and running maxima


def _running_max_blocks(
    lam: np.ndarray, dt: float, n_paths: int, seed: int, kind: int, index: int
) -> Iterator[tuple[slice, np.ndarray]]:
    """Y_k = max_{j <= k} (-B_j + Lambda_j) for one chunk, a block of steps at a time."""
    gen = stream(seed, kind, index)
    sqrt_dt = math.sqrt(dt)
    b = np.zeros(n_paths)
    y = np.full(n_paths, -np.inf)
    k = 0
    while k < len(lam):
        hi = min(k + PATH_BLOCK_STEPS, len(lam))
        width = hi - k
        increments = sqrt_dt * normal_icdf(gen, (n_paths, width))
        if k == 0:
            # B_0 = 0
            increments[:, 0] = 0.0
        walk = b[:, None] + np.cumsum(increments, axis=1)
        block = np.maximum.accumulate(
            np.concatenate([y[:, None], -walk + lam[k:hi]], axis=1), axis=1
        )[:, 1:]
        b = walk[:, -1]
        y = block[:, -1]
        yield slice(k, hi), block
        k = hi


def map_running_max(
    frontier: FrontierPath,
    n_paths: int,
    seed: int,
    fn: Callable[[np.ndarray, slice], np.ndarray],
    threads: int = 1,
    kind: int = c.STREAM_PATHS,
) -> np.ndarray:
    """Sum over paths of fn(Y_block, steps), chunk by chunk, in chunk order.

    fn gets the running maxima of a chunk on a block of steps, shape
    (paths, steps), and returns per-step sums of shape (q, steps).
    """
    lam = np.asarray(frontier.lam, dtype=float)
    dt = frontier.dt

    def chunk_sums(index: int, lo: int, hi: int) -> np.ndarray:
        total = None
        for steps, block in _running_max_blocks(lam, dt, hi - lo, seed, kind, index):
            part = np.atleast_2d(fn(block, steps))
            if total is None:
                total = np.zeros((part.shape[0], len(lam)))
            total[:, steps] = part
        return total

    sums = parallel_map(
        chunk_sums,
        [(i, lo, hi) for i, (lo, hi) in enumerate(chunk_bounds(n_paths))],
        threads=threads,
    )
    total = np.zeros_like(sums[0])
    for part in sums:
        total += part
    return total


def compute_Y_samples(
    frontier: FrontierPath,
    n_paths: int,
    seed: int,
    t_indices: ArrayLike | None = None,
    threads: int = 1,
    kind: int = c.STREAM_PATHS,
) -> np.ndarray:
    """Samples of Y at the chosen grid nodes, shape (n_paths, len(t_indices))."""
    lam = np.asarray(frontier.lam, dtype=float)
    if t_indices is None:
        t_indices = np.arange(len(lam))
    t_indices = np.asarray(t_indices, dtype=int)

    def chunk_samples(index: int, lo: int, hi: int) -> np.ndarray:
        out = np.empty((hi - lo, len(t_indices)))
        for steps, block in _running_max_blocks(
            lam, frontier.dt, hi - lo, seed, kind, index
        ):
            wanted = (t_indices >= steps.start) & (t_indices < steps.stop)
            out[:, wanted] = block[:, t_indices[wanted] - steps.start]
        return out

    parts = parallel_map(
        chunk_samples,
        [(i, lo, hi) for i, (lo, hi) in enumerate(chunk_bounds(n_paths))],
        threads=threads,
    )
    return np.concatenate(parts, axis=0)


# Picard iteration


def picard_minimal(
    d: Density, cfg: SolverConfig, threads: int = 1
) -> tuple[FrontierPath, int, list[np.ndarray]]:
    """Lambda(0) = 0, Lambda(n+1) = E[F(Y(n))] under common random numbers."""
    start = time.perf_counter()
    t_grid = cfg.t_grid
    m = cfg.picard.n_paths
    lam = np.zeros(len(t_grid))
    history = [lam]
    # build any cached CDF table before worker threads share the density
    d.cdf(0.0)

    def moments(block: np.ndarray, steps: slice) -> np.ndarray:
        f = np.asarray(d.cdf(block))
        return np.stack([f.sum(axis=0), (f * f).sum(axis=0)])

    converged = False
    second = np.zeros(len(t_grid))
    iteration = 0
    for iteration in range(1, cfg.picard.max_iters + 1):
        current = FrontierPath(t_grid=t_grid, lam=lam, stderr=np.zeros_like(lam))
        sums = map_running_max(current, m, cfg.seed, moments, threads=threads)
        new = sums[0] / m
        second = sums[1] / m
        change = float(np.max(np.abs(new - lam)))
        logger.debug("picard iteration %d: sup change %.3g", iteration, change)
        lam = new
        history.append(lam)
        if change < cfg.picard.tol:
            converged = True
            break

    if not converged:
        logger.warning(
            "picard iteration did not converge in %d iterations (last change %.3g)",
            cfg.picard.max_iters,
            change,
        )

    stderr = np.sqrt(np.clip(second - lam**2, 0.0, None) / m)
    frontier = FrontierPath(
        t_grid=t_grid,
        lam=lam,
        stderr=stderr,
        jumps=detect_jumps(t_grid, lam, cfg.threshold(m)),
        n_samples=m,
        method="picard",
        converged=converged,
    )
    logger.info(
        "picard solver: M=%d, %d iterations, Lambda_T=%.6g in %.2fs",
        m,
        iteration,
        lam[-1],
        time.perf_counter() - start,
    )
    return frontier, iteration, history
