from abc import ABC, abstractmethod
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike

import src.constants as c
from src.quadrature import adaptive_simpson


class InvalidDensityException(Exception):
    pass


def as_output(x: ArrayLike, values: np.ndarray) -> np.ndarray | float:
    """Scalars in, scalars out; arrays keep their shape."""
    if np.ndim(x) == 0:
        return float(values)
    return values


def linear_inverse(nodes: np.ndarray, values: np.ndarray, u: ArrayLike) -> np.ndarray:
    """Smallest x with F(x) >= u, F piecewise linear through (nodes, values)."""
    u = np.clip(np.asarray(u, dtype=float), 0.0, values[-1])
    idx = np.searchsorted(values, u, side="left")
    idx = np.clip(idx, 1, len(nodes) - 1)
    f0, f1 = values[idx - 1], values[idx]
    x0, x1 = nodes[idx - 1], nodes[idx]
    span = np.where(f1 > f0, f1 - f0, 1.0)
    x = x0 + (u - f0) / span * (x1 - x0)
    x = np.where(u <= values[0], nodes[0], x)
    return np.clip(x, x0, x1)


def monotone_interp(x: ArrayLike, nodes: np.ndarray, values: np.ndarray) -> np.ndarray:
    """np.interp for nondecreasing values, clamped per segment so it never steps back."""
    xs = np.asarray(x, dtype=float)
    i = np.clip(np.searchsorted(nodes, xs, side="right") - 1, 0, len(nodes) - 2)
    x0, x1 = nodes[i], nodes[i + 1]
    f0, f1 = values[i], values[i + 1]
    out = f0 + (f1 - f0) / (x1 - x0) * (np.clip(xs, x0, x1) - x0)
    out = np.clip(out, f0, f1)
    out = np.where(xs < nodes[0], 0.0, out)
    return np.where(xs >= nodes[-1], values[-1], out)


class Density(ABC):
    """A probability density on [0, inf) with its CDF and quantile function.

    Subclasses provide the density, the exact mass of intervals and the
    right end of the support; everything else has a generic fallback that
    the families override when they know better.
    """

    family = "density"

    def __str__(self) -> str:
        return f"{self.family}({self.describe()})"

    def __repr__(self) -> str:
        return str(self)

    def describe(self) -> str:
        return ""

    @property
    @abstractmethod
    def support_end(self) -> float:
        pass

    @abstractmethod
    def pdf(self, x: ArrayLike) -> np.ndarray | float:
        pass

    @abstractmethod
    def integral(self, lo: ArrayLike, hi: ArrayLike) -> np.ndarray | float:
        """Mass of [lo, hi], exact or by quadrature."""

    @abstractmethod
    def to_spec(self) -> dict:
        pass

    def cdf_exact(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.maximum(np.asarray(x, dtype=float), 0.0)
        return as_output(x, np.clip(self.integral(np.zeros_like(xs), xs), 0.0, 1.0))

    @cached_property
    def cdf_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense (nodes, F(nodes)) table behind the vectorized cdf and quantile."""
        end = self.support_end
        if not np.isfinite(end):
            raise InvalidDensityException(
                f"{self.family} has unbounded support and must provide its own cdf"
            )
        uniform = np.linspace(0.0, end, c.CDF_TABLE_SIZE + 1)
        geometric = np.geomspace(
            c.CDF_TABLE_FLOOR * end, uniform[1], c.CDF_TABLE_GEOMETRIC, endpoint=False
        )
        nodes = np.unique(np.concatenate([uniform, geometric]))
        values = np.asarray(self.cdf_exact(nodes), dtype=float)
        values = np.clip(np.maximum.accumulate(values), 0.0, 1.0)
        values[-1] = 1.0
        return nodes, values

    def cdf(self, x: ArrayLike) -> np.ndarray | float:
        nodes, values = self.cdf_table
        return as_output(x, monotone_interp(x, nodes, values))

    def quantile(self, u: ArrayLike) -> np.ndarray | float:
        nodes, values = self.cdf_table
        return as_output(u, linear_inverse(nodes, values, u))

    def sup_pdf(self, lo: float, hi: float) -> tuple[float, float]:
        """Supremum of f on [lo, hi] and a point attaining it (dense scan)."""
        xs = np.linspace(lo, hi, 4097)
        fs = np.asarray(self.pdf(xs))
        i = int(np.argmax(fs))
        return float(fs[i]), float(xs[i])

    def max_level(self) -> float:
        return self.sup_pdf(0.0, self.support_end)[0]

    def first_moment(self) -> float:
        # integration by parts: int x f = end * F(end) - int F
        end = self.support_end
        return end - adaptive_simpson(lambda x: float(self.cdf_exact(x)), 0.0, end)
