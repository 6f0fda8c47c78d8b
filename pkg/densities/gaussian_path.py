import logging
import math

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import ks_2samp

import src.constants as c
from densities.density import Density, InvalidDensityException, as_output
from densities.tabulated import (
    cumulative_mass,
    linear_cdf,
    linear_first_moment,
    linear_quantile,
    linear_sup,
)
from src.rng import normal_icdf, stream

logger = logging.getLogger(__name__)


def fbm_covariance(points: np.ndarray, hurst: float) -> np.ndarray:
    x = points[:, None]
    y = points[None, :]
    two_h = 2.0 * hurst
    return 0.5 * (x**two_h + y**two_h - np.abs(x - y) ** two_h)


def fbm_factor(grid: np.ndarray, hurst: float) -> np.ndarray:
    """Lower Cholesky factor of the fBm covariance on the positive grid points."""
    points = grid[grid > 0]
    try:
        return np.linalg.cholesky(fbm_covariance(points, hurst))
    except np.linalg.LinAlgError as e:
        spacing = float(np.min(np.diff(grid)))
        raise InvalidDensityException(
            f"fBm covariance factorization failed for H={hurst} on a grid with spacing {spacing:.3g}"
        ) from e


def sample_fbm_paths(
    grid: ArrayLike, hurst: float, n_draws: int, seed: int
) -> np.ndarray:
    """Exact fBm draws on grid, shape (n_draws, len(grid)); S_0 = 0."""
    grid = np.asarray(grid, dtype=float)
    if not 0 < hurst < 1:
        raise InvalidDensityException(f"hurst must lie in (0, 1), got {hurst}")
    if grid[0] != 0 or np.any(np.diff(grid) <= 0):
        raise InvalidDensityException("fBm grid must start at 0 and be strictly increasing")

    factor = fbm_factor(grid, hurst)
    z = normal_icdf(stream(seed, c.STREAM_FBM, 0), (n_draws, factor.shape[0]))
    paths = np.zeros((n_draws, len(grid)))
    paths[:, 1:] = z @ factor.T
    return paths


def lil_envelope(grid: np.ndarray, hurst: float, beta_lil: float) -> np.ndarray:
    """kappa_x = beta sqrt(x^2H |log|log x||); infinite at x = 1, zero at x = 0."""
    kappa = np.zeros_like(grid)
    inner = (grid > 0) & (grid < 1)
    x = grid[inner]
    kappa[inner] = beta_lil * np.sqrt(x ** (2.0 * hurst) * np.abs(np.log(np.abs(np.log(x)))))
    kappa[grid >= 1] = math.inf
    return kappa


class GaussianPathDensity(Density):
    """(1 + S - kappa)_+ ^ 1 on [0, 1] with an exponential tail on (1, inf).

    The tail m exp(-(x - 1)) carries the mass the [0, 1] part lacks. When the
    [0, 1] part already has mass >= 1 it is scaled down instead and the
    density is flagged as rescaled.
    """

    family = "gaussian_path"

    def __init__(
        self,
        grid: ArrayLike,
        path: ArrayLike,
        hurst: float,
        beta_lil: float,
        seed: int | None = None,
    ):
        grid = np.asarray(grid, dtype=float)
        path = np.asarray(path, dtype=float)
        if grid.shape != path.shape or len(grid) < 2:
            raise InvalidDensityException("grid and path must match and hold >= 2 points")
        if grid[0] != 0 or grid[-1] != 1 or np.any(np.diff(grid) <= 0):
            raise InvalidDensityException("grid must increase strictly from 0 to 1")
        if not 0 < hurst < 1:
            raise InvalidDensityException(f"hurst must lie in (0, 1), got {hurst}")
        if beta_lil < 0:
            raise InvalidDensityException(f"beta_lil must be nonnegative, got {beta_lil}")

        self.grid = grid
        self.path = path
        self.hurst = float(hurst)
        self.beta_lil = float(beta_lil)
        self.seed = seed
        self.kappa = lil_envelope(grid, self.hurst, self.beta_lil)
        self.values = np.clip(1.0 + path - self.kappa, 0.0, 1.0)

        mass = cumulative_mass(grid, self.values)
        self.rescaled = mass[-1] >= 1.0
        if self.rescaled:
            logger.warning(
                "gaussian path density has mass %.6g on [0, 1]; rescaling, no tail attached",
                mass[-1],
            )
            self.values = self.values / mass[-1]
            mass = mass / mass[-1]
        self.mass = mass
        self.core_mass = float(mass[-1])
        self.tail_mass = 0.0 if self.rescaled else 1.0 - self.core_mass

    def describe(self) -> str:
        return f"H={self.hurst}, beta={self.beta_lil:.6g}, n={len(self.grid)}, tail={self.tail_mass:.6g}"

    def to_spec(self) -> dict:
        spec = {
            "family": self.family,
            "hurst": self.hurst,
            "beta_lil": self.beta_lil,
            "grid": self.grid.tolist(),
            "path": self.path.tolist(),
        }
        if self.seed is not None:
            spec["seed"] = self.seed
        return spec

    @property
    def support_end(self) -> float:
        return math.inf if self.tail_mass > 0 else 1.0

    def _tail_pdf(self, x: np.ndarray) -> np.ndarray:
        return self.tail_mass * np.exp(-c.TAIL_RATE * (x - 1.0))

    def pdf(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.asarray(x, dtype=float)
        core = np.interp(xs, self.grid, self.values, left=0.0, right=0.0)
        values = np.where(xs > 1.0, self._tail_pdf(np.maximum(xs, 1.0)), core)
        return as_output(x, values)

    def cdf_exact(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.asarray(x, dtype=float)
        core = linear_cdf(self.grid, self.values, self.mass, xs)
        tail = self.tail_mass * (1.0 - np.exp(-c.TAIL_RATE * np.maximum(xs - 1.0, 0.0)))
        values = np.where(xs <= 0, 0.0, core + tail)
        return as_output(x, np.clip(values, 0.0, 1.0))

    def cdf(self, x: ArrayLike) -> np.ndarray | float:
        return self.cdf_exact(x)

    def integral(self, lo: ArrayLike, hi: ArrayLike) -> np.ndarray | float:
        values = np.asarray(self.cdf_exact(hi)) - np.asarray(self.cdf_exact(lo))
        return as_output(hi if np.ndim(hi) else lo, np.maximum(values, 0.0))

    def quantile(self, u: ArrayLike) -> np.ndarray | float:
        us = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        core = linear_quantile(self.grid, self.values, self.mass, us)
        if self.tail_mass > 0:
            with np.errstate(divide="ignore"):
                rest = np.clip((us - self.core_mass) / self.tail_mass, 0.0, 1.0)
                tail = 1.0 - np.log1p(-rest) / c.TAIL_RATE
            core = np.where(us > self.core_mass, tail, core)
        return as_output(u, core)

    def sup_pdf(self, lo: float, hi: float) -> tuple[float, float]:
        best = linear_sup(self.grid, self.values, lo, min(hi, 1.0)) if lo <= 1 else (0.0, lo)
        if hi > 1.0 and self.tail_mass > best[0]:
            start = max(lo, 1.0)
            return float(self._tail_pdf(np.asarray(start))), start
        return best

    def max_level(self) -> float:
        return max(float(np.max(self.values)), self.tail_mass)

    def first_moment(self) -> float:
        core = linear_first_moment(self.grid, self.values)
        # int_1^inf x m exp(-rate (x - 1)) dx
        tail = self.tail_mass * (1.0 / c.TAIL_RATE + 1.0 / c.TAIL_RATE**2)
        return core + tail


def build_gaussian_path(
    hurst: float, beta_lil: float, grid_size: int, seed: int
) -> GaussianPathDensity:
    if grid_size < 2:
        raise InvalidDensityException(f"grid_size must be >= 2, got {grid_size}")
    grid = np.linspace(0.0, 1.0, grid_size)
    path = sample_fbm_paths(grid, hurst, 1, seed)[0]
    density = GaussianPathDensity(grid, path, hurst, beta_lil, seed=seed)
    logger.info("built %s", density)
    return density


def lil_touch_fraction(
    hurst: float,
    beta_lil: float,
    grid_size: int,
    eps: float,
    seeds: range = range(c.LIL_SEEDS),
) -> float:
    """Share of seeds whose density reaches f = 1 at some grid point of (0, eps).

    f = 1 exactly where S >= kappa, so the count does not depend on the rescaling.
    """
    touched = 0
    for seed in seeds:
        d = build_gaussian_path(hurst, beta_lil, grid_size, seed)
        window = (d.grid > 0) & (d.grid < eps)
        if np.any(d.path[window] >= d.kappa[window]):
            touched += 1
    fraction = touched / len(seeds)
    logger.info(
        "H=%s beta=%.6g: f = 1 below %s in %d of %d seeds", hurst, beta_lil, eps, touched, len(seeds)
    )
    return fraction


def scaling_ks_pvalue(
    hurst: float, r: float, x: float = 1.0, n_draws: int = c.KS_DRAWS, seed: int = 0
) -> float:
    """Two-sample KS p-value of S_rx / r^H against S_x, from independent draws."""
    if not 0 < r < 1:
        raise InvalidDensityException(f"scaling factor r must lie in (0, 1), got {r}")
    grid = np.array([0.0, r * x, x])
    scaled = sample_fbm_paths(grid, hurst, n_draws, seed)[:, 1] / r**hurst
    plain = sample_fbm_paths(grid, hurst, n_draws, seed + 1)[:, 2]
    return float(ks_2samp(scaled, plain).pvalue)
