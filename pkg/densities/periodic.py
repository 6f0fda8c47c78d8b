import logging
import math
from abc import ABC, abstractmethod
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike

import src.constants as c
from densities.density import Density, InvalidDensityException, as_output
from src.quadrature import (
    QuadratureException,
    gauss_legendre,
    gauss_legendre_segments,
    increasing_root,
)

logger = logging.getLogger(__name__)

# geometric pieces used for the partial integral below the first lattice node
PARTIAL_PIECES = 4


class PeriodicProfile(ABC):
    """A periodic function Psi: [0, inf) -> [-1, 1].

    Psi is split as mean + Psi0 with Psi0 of zero mean; H0 is the
    antiderivative of Psi0 with H0(0) = 0 and h_bar its mean over one period.
    """

    name = "profile"
    period: float
    mean: float
    h_bar: float

    def __str__(self) -> str:
        return self.name

    @abstractmethod
    def __call__(self, u: np.ndarray) -> np.ndarray:
        pass

    @abstractmethod
    def antiderivative0(self, u: np.ndarray) -> np.ndarray:
        """H0(u) = int_0^u (Psi - mean)."""

    @abstractmethod
    def to_spec(self):
        pass

    def breakpoints(self) -> np.ndarray:
        """Offsets in [0, period) where the lattice of smooth pieces starts."""
        return np.linspace(0.0, self.period, 4, endpoint=False)

    @property
    def max_value(self) -> float:
        return float(self(self.argmax_offsets[:1])[0])

    @property
    @abstractmethod
    def argmax_offsets(self) -> np.ndarray:
        pass

    def sup_antiderivative(self) -> float:
        """sup over u >= 0 of H(u) = int_0^u Psi, infinite when the mean is positive."""
        if self.mean > c.PDF_TOL:
            return math.inf
        u = np.linspace(0.0, self.period, 4097)
        return float(np.max(self.mean * u + self.antiderivative0(u)))


class SineProfile(PeriodicProfile):
    name = "sine"
    period = 2.0 * math.pi
    mean = 0.0
    h_bar = 1.0

    def __call__(self, u):
        return np.sin(u)

    def antiderivative0(self, u):
        return 1.0 - np.cos(u)

    @property
    def argmax_offsets(self):
        return np.array([math.pi / 2.0])

    def to_spec(self):
        return "sine"


class ConstantProfile(PeriodicProfile):
    name = "constant"
    period = 1.0
    h_bar = 0.0

    def __init__(self, value: float):
        if not -1.0 <= value <= 1.0:
            raise InvalidDensityException(f"constant profile must lie in [-1, 1], got {value}")
        self.mean = float(value)

    def __str__(self) -> str:
        return f"constant({self.mean})"

    def __call__(self, u):
        return np.full(np.shape(u), self.mean)

    def antiderivative0(self, u):
        return np.zeros(np.shape(u))

    def breakpoints(self):
        return np.array([0.0])

    @property
    def argmax_offsets(self):
        return np.array([0.0])

    def to_spec(self):
        return {"constant": self.mean}


class TabulatedProfile(PeriodicProfile):
    """One period sampled on a uniform grid, linearly interpolated and repeated."""

    name = "tabulated"

    def __init__(self, period: float, values: ArrayLike):
        values = np.asarray(values, dtype=float)
        if period <= 0:
            raise InvalidDensityException(f"profile period must be positive, got {period}")
        if values.ndim != 1 or len(values) < 2:
            raise InvalidDensityException("profile needs at least two samples per period")
        if np.any(np.abs(values) > 1.0):
            raise InvalidDensityException("profile values must lie in [-1, 1]")

        self.period = float(period)
        self.samples = values
        self.nodes = np.linspace(0.0, self.period, len(values) + 1)
        self.values = np.append(values, values[0])
        self.mean = float(np.mean(values))

        # H0 is piecewise quadratic; exact values at the nodes
        h = self.period / len(values)
        centered = self.values - self.mean
        steps = h * (centered[:-1] + centered[1:]) / 2.0
        self.h_nodes = np.concatenate([[0.0], np.cumsum(steps)])
        areas = (
            h * self.h_nodes[:-1]
            + centered[:-1] * h**2 / 2.0
            + (centered[1:] - centered[:-1]) * h**2 / 6.0
        )
        self.h_bar = float(np.sum(areas) / self.period)

    def __str__(self) -> str:
        return f"tabulated(period={self.period}, n={len(self.samples)})"

    def __call__(self, u):
        return np.interp(np.mod(u, self.period), self.nodes, self.values)

    def antiderivative0(self, u):
        u = np.asarray(u, dtype=float)
        h = self.period / len(self.samples)
        offset = np.mod(u, self.period)
        i = np.clip((offset // h).astype(int), 0, len(self.samples) - 1)
        d = offset - self.nodes[i]
        v0 = self.values[i] - self.mean
        v1 = self.values[i + 1] - self.mean
        return self.h_nodes[i] + v0 * d + (v1 - v0) * d**2 / (2.0 * h)

    def breakpoints(self):
        return self.nodes[:-1]

    @property
    def argmax_offsets(self):
        top = np.max(self.samples)
        return self.nodes[:-1][self.samples == top]

    def to_spec(self):
        return {"period": self.period, "values": self.samples.tolist()}


def make_profile(spec) -> PeriodicProfile:
    if spec == "sine":
        return SineProfile()
    if isinstance(spec, dict) and "constant" in spec:
        return ConstantProfile(float(spec["constant"]))
    if isinstance(spec, dict) and {"period", "values"} <= spec.keys():
        return TabulatedProfile(float(spec["period"]), spec["values"])
    raise InvalidDensityException(
        f'psi must be "sine", {{"constant": c}} or {{"period", "values"}}, got {spec!r}'
    )


class PeriodicOscillatoryDensity(Density):
    """f(x) = (1 + Psi(x^-alpha)) / 2 on (0, a], zero beyond a.

    With u = x^-alpha the CDF becomes
        F(x) = (1 + mean) x / 2 + K(x^-alpha) / (2 alpha),
        K(A) = int_A^inf Psi0(u) u^-s du,  s = 1 + 1/alpha,
    and K is tabulated once on a lattice of smooth pieces of Psi, summed from
    the far end. Past the lattice the remainder is (h_bar - H0(A)) A^-s.
    """

    family = "periodic"

    def __init__(self, alpha: float, psi: PeriodicProfile):
        if not alpha > 0:
            raise InvalidDensityException(f"alpha must be positive, got {alpha}")
        self.alpha = float(alpha)
        self.psi = psi
        self.s = 1.0 + 1.0 / self.alpha
        self._build_lattice()
        self.a = normalize_periodic(self)

    def describe(self) -> str:
        return f"alpha={self.alpha}, psi={self.psi}, a={self.a:.12g}"

    def to_spec(self) -> dict:
        return {"family": self.family, "alpha": self.alpha, "psi": self.psi.to_spec()}

    @property
    def support_end(self) -> float:
        return self.a

    def _integrand(self, u: np.ndarray) -> np.ndarray:
        return (self.psi(u) - self.psi.mean) * u ** (-self.s)

    def _far_tail(self, big_a: np.ndarray) -> np.ndarray:
        return (self.psi.h_bar - self.psi.antiderivative0(big_a)) * big_a ** (-self.s)

    def _build_lattice(self):
        offsets = self.psi.breakpoints()
        self.lattice_k = None
        if isinstance(self.psi, ConstantProfile):
            return

        per_period = len(offsets)
        n_periods = min(
            c.PERIODIC_MAX_PERIODS,
            c.PERIODIC_EVAL_BUDGET // (per_period * c.GL_NODES),
        )
        period = self.psi.period
        starts = (np.arange(n_periods)[:, None] * period + offsets[None, :]).ravel()
        nodes = np.append(starts, n_periods * period)

        x, w = gauss_legendre(c.GL_NODES)
        pieces = np.zeros(len(nodes) - 1)
        block = c.PERIODIC_BLOCK * per_period
        # the first piece starts at u = 0 and is never used whole
        for lo in range(1, len(pieces), block):
            hi = min(lo + block, len(pieces))
            left = nodes[lo:hi]
            width = nodes[lo + 1 : hi + 1] - left
            pieces[lo:hi] = width * (self._integrand(left[:, None] + width[:, None] * x) @ w)

        suffix = np.cumsum(pieces[::-1])[::-1] + self._far_tail(np.asarray(nodes[-1]))
        self.lattice = nodes
        self.lattice_k = np.append(suffix, self._far_tail(np.asarray(nodes[-1])))
        logger.debug(
            "periodic lattice: %d periods, %d pieces, u_max=%.3g",
            n_periods,
            len(pieces),
            nodes[-1],
        )

    def _tail_integral(self, big_a: np.ndarray) -> np.ndarray:
        """K(A) for A > 0."""
        out = np.zeros_like(big_a)
        if self.lattice_k is None:
            return out

        far = big_a >= self.lattice[-1]
        out[far] = self._far_tail(big_a[far])

        near = np.flatnonzero(~far)
        for lo in range(0, len(near), c.PERIODIC_BLOCK):
            idx = near[lo : lo + c.PERIODIC_BLOCK]
            a_vals = big_a[idx]
            j = np.searchsorted(self.lattice, a_vals, side="right")
            upper = self.lattice[j]
            ratio = upper / a_vals
            edges = a_vals[:, None] * ratio[:, None] ** (
                np.arange(PARTIAL_PIECES + 1) / PARTIAL_PIECES
            )
            partial = gauss_legendre_segments(
                self._integrand, edges[:, :-1], edges[:, 1:]
            ).sum(axis=1)
            out[idx] = partial + self.lattice_k[j]
        return out

    def raw_cdf(self, x: ArrayLike) -> np.ndarray | float:
        """int_0^x (1 + Psi(y^-alpha)) / 2 dy without the cut at a."""
        xs = np.asarray(x, dtype=float)
        flat = np.atleast_1d(xs).ravel()
        values = np.zeros_like(flat)
        pos = flat > 0
        if np.any(pos):
            big_a = flat[pos] ** (-self.alpha)
            values[pos] = (1.0 + self.psi.mean) * flat[pos] / 2.0 + self._tail_integral(
                big_a
            ) / (2.0 * self.alpha)
        return as_output(x, values.reshape(xs.shape))

    def cdf_exact(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.asarray(x, dtype=float)
        values = np.asarray(self.raw_cdf(np.minimum(xs, self.a)), dtype=float)
        values = np.where(xs >= self.a, 1.0, np.clip(values, 0.0, 1.0))
        return as_output(x, values)

    def integral(self, lo: ArrayLike, hi: ArrayLike) -> np.ndarray | float:
        values = np.asarray(self.cdf_exact(hi)) - np.asarray(self.cdf_exact(lo))
        return as_output(hi if np.ndim(hi) else lo, np.maximum(values, 0.0))

    def pdf(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            u = np.where(xs > 0, xs, 1.0) ** (-self.alpha)
        values = (1.0 + self.psi(u)) / 2.0
        values = np.where(xs == 0, (1.0 + self.psi.mean) / 2.0, values)
        values = np.where((xs < 0) | (xs > self.a), 0.0, values)
        return as_output(x, values)

    def sup_pdf(self, lo: float, hi: float) -> tuple[float, float]:
        lo, hi = max(lo, 0.0), min(hi, self.a)
        if hi <= lo:
            return 0.0, lo
        u_lo = hi ** (-self.alpha)
        u_hi = math.inf if lo == 0 else lo ** (-self.alpha)
        period = self.psi.period

        candidates = []
        for offset in self.psi.argmax_offsets:
            k = math.ceil((u_lo - offset) / period)
            u = offset + k * period
            if u <= u_hi:
                candidates.append(u)
        if candidates:
            u = min(candidates)
            return (1.0 + self.psi.max_value) / 2.0, u ** (-1.0 / self.alpha)

        xs = np.linspace(lo, hi, 4097)
        fs = np.asarray(self.pdf(xs))
        i = int(np.argmax(fs))
        return float(fs[i]), float(xs[i])

    @cached_property
    def sup_antiderivative(self) -> float:
        return self.psi.sup_antiderivative()


def normalize_periodic(density: PeriodicOscillatoryDensity) -> float:
    """Smallest a with int_0^a f = 1."""
    cap = c.PERIODIC_X_CAP
    try:
        a = increasing_root(lambda x: float(density.raw_cdf(x)), 1.0, hi=1.0, hi_cap=cap)
    except QuadratureException as e:
        raise InvalidDensityException(
            f"normalization of the periodic density failed below a={cap}: {e}"
        ) from e
    residual = float(density.raw_cdf(a)) - 1.0
    logger.debug("periodic normalization a=%.15g residual=%.3g", a, residual)
    return a


def make_periodic(alpha: float, psi="sine") -> PeriodicOscillatoryDensity:
    profile = psi if isinstance(psi, PeriodicProfile) else make_profile(psi)
    return PeriodicOscillatoryDensity(alpha, profile)
