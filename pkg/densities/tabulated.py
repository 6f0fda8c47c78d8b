import logging

import numpy as np
from numpy.typing import ArrayLike

import src.constants as c
from densities.density import Density, InvalidDensityException, as_output

logger = logging.getLogger(__name__)


# Exact helpers for a continuous piecewise linear density through (nodes, values).


def cumulative_mass(nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    steps = np.diff(nodes) * (values[:-1] + values[1:]) / 2.0
    return np.concatenate([[0.0], np.cumsum(steps)])


def linear_cdf(
    nodes: np.ndarray, values: np.ndarray, mass: np.ndarray, x: np.ndarray
) -> np.ndarray:
    """int_{nodes[0]}^x of the interpolant; constant outside the nodes.

    Rising segments are integrated from their left node, falling ones back
    from their right node, so every term moves the same way as x and the
    result is monotone in floating point too.
    """
    xs = np.clip(x, nodes[0], nodes[-1])
    i = np.clip(np.searchsorted(nodes, xs, side="right") - 1, 0, len(nodes) - 2)
    h = nodes[i + 1] - nodes[i]
    slope = (values[i + 1] - values[i]) / h
    d = xs - nodes[i]
    e = nodes[i + 1] - xs
    rising = mass[i] + values[i] * d + slope * d**2 / 2.0
    falling = mass[i + 1] - (values[i + 1] * e - slope * e**2 / 2.0)
    out = np.where(slope >= 0, rising, falling)
    return np.clip(out, mass[i], mass[i + 1])


def linear_quantile(
    nodes: np.ndarray, values: np.ndarray, mass: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """Smallest x with linear_cdf(x) >= u, solving the quadratic in each segment."""
    u = np.clip(u, 0.0, mass[-1])
    i = np.clip(np.searchsorted(mass, u, side="left") - 1, 0, len(nodes) - 2)
    h = nodes[i + 1] - nodes[i]
    slope = (values[i + 1] - values[i]) / h
    r = u - mass[i]
    b = values[i]
    root = np.sqrt(np.maximum(b**2 + 2.0 * slope * r, 0.0))
    denom = b + root
    d = np.where(denom > 0, 2.0 * r / np.where(denom > 0, denom, 1.0), 0.0)
    return np.clip(nodes[i] + d, nodes[i], nodes[i + 1])


def linear_first_moment(nodes: np.ndarray, values: np.ndarray) -> float:
    h = np.diff(nodes)
    x0 = nodes[:-1]
    f0, f1 = values[:-1], values[1:]
    return float(np.sum(h * (x0 * (f0 + f1) / 2.0 + h * (f0 + 2.0 * f1) / 6.0)))


def linear_sup(
    nodes: np.ndarray, values: np.ndarray, lo: float, hi: float
) -> tuple[float, float]:
    """Max of the interpolant on [lo, hi] and where it is attained."""
    inside = (nodes > lo) & (nodes < hi)
    xs = np.concatenate([[lo, hi], nodes[inside]])
    fs = np.interp(xs, nodes, values, left=0.0, right=0.0)
    i = int(np.argmax(fs))
    return float(fs[i]), float(xs[i])


class TabulatedDensity(Density):
    """Linear interpolation of (grid, values); zero outside [grid[0], grid[-1]]."""

    family = "tabulated"

    def __init__(self, grid: ArrayLike, values: ArrayLike, source: str | None = None):
        grid = np.asarray(grid, dtype=float)
        values = np.asarray(values, dtype=float)
        if grid.ndim != 1 or len(grid) < 2 or grid.shape != values.shape:
            raise InvalidDensityException(
                f"grid and values must be matching 1-d arrays with >= 2 points, got {grid.shape} and {values.shape}"
            )
        if np.any(np.diff(grid) <= 0):
            raise InvalidDensityException("grid must be strictly increasing")
        if grid[0] < 0:
            raise InvalidDensityException(f"grid must start at x >= 0, got {grid[0]}")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise InvalidDensityException("values must be finite and nonnegative")

        mass = cumulative_mass(grid, values)
        if mass[-1] <= 0:
            raise InvalidDensityException("tabulated density has zero mass")
        if abs(mass[-1] - 1.0) > c.PDF_TOL:
            logger.warning("tabulated density has mass %.12g, rescaling to 1", mass[-1])
            values = values / mass[-1]
            mass = mass / mass[-1]

        self.grid = grid
        self.values = values
        self.mass = mass
        self.source = source

    def describe(self) -> str:
        return f"n={len(self.grid)}, [{self.grid[0]:.6g}, {self.grid[-1]:.6g}]"

    def to_spec(self) -> dict:
        if self.source is not None:
            return {"family": self.family, "csv": self.source}
        return {
            "family": self.family,
            "grid": self.grid.tolist(),
            "values": self.values.tolist(),
        }

    @property
    def support_end(self) -> float:
        return float(self.grid[-1])

    def pdf(self, x: ArrayLike) -> np.ndarray | float:
        return as_output(x, np.interp(x, self.grid, self.values, left=0.0, right=0.0))

    def cdf_exact(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.asarray(x, dtype=float)
        values = linear_cdf(self.grid, self.values, self.mass, xs)
        values = np.where(xs < self.grid[0], 0.0, values)
        return as_output(x, np.clip(values, 0.0, 1.0))

    def cdf(self, x: ArrayLike) -> np.ndarray | float:
        return self.cdf_exact(x)

    def integral(self, lo: ArrayLike, hi: ArrayLike) -> np.ndarray | float:
        values = np.asarray(self.cdf_exact(hi)) - np.asarray(self.cdf_exact(lo))
        return as_output(hi if np.ndim(hi) else lo, np.maximum(values, 0.0))

    def quantile(self, u: ArrayLike) -> np.ndarray | float:
        us = np.asarray(u, dtype=float)
        return as_output(u, linear_quantile(self.grid, self.values, self.mass, us))

    def sup_pdf(self, lo: float, hi: float) -> tuple[float, float]:
        return linear_sup(self.grid, self.values, lo, hi)

    def first_moment(self) -> float:
        return linear_first_moment(self.grid, self.values)


def uniform(lo: float, hi: float) -> TabulatedDensity:
    level = 1.0 / (hi - lo)
    return TabulatedDensity([lo, hi], [level, level])
