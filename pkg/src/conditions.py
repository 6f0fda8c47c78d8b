"""The window average psi and the pointwise, moment and averaging conditions."""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import minimize_scalar

import src.constants as c
from densities.density import Density
from densities.periodic import PeriodicOscillatoryDensity
from src.quadrature import QuadratureException, increasing_root
from src.rng import parallel_map

logger = logging.getLogger(__name__)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class EnvelopeRangeException(Exception):
    pass


def psi(d: Density, lam: ArrayLike, mu: ArrayLike) -> np.ndarray | float:
    """int_mu^{mu+1} f(lam x) dx = (F(lam (mu + 1)) - F(lam mu)) / lam."""
    lam_arr, mu_arr = np.broadcast_arrays(
        np.asarray(lam, dtype=float), np.asarray(mu, dtype=float)
    )
    safe = np.where(lam_arr > 0, lam_arr, 1.0)
    mass = np.asarray(d.integral(safe * mu_arr, safe * (mu_arr + 1.0)), dtype=float)
    values = np.where(lam_arr > 0, mass / safe, float(d.pdf(0.0)))
    if np.ndim(lam) == 0 and np.ndim(mu) == 0:
        return float(values)
    return values


def sup_psi(d: Density, lam: float) -> tuple[float, float]:
    """Max of psi(lam, .) over [0, 1]: grid seeds, then a bounded Brent refinement."""
    seeds = np.linspace(0.0, 1.0, c.N_SUP_SEEDS)
    values = np.asarray(psi(d, np.full_like(seeds, lam), seeds))
    i = int(np.argmax(values))
    best, best_mu = float(values[i]), float(seeds[i])

    lo, hi = seeds[max(i - 1, 0)], seeds[min(i + 1, len(seeds) - 1)]
    result = minimize_scalar(
        lambda mu: -float(psi(d, lam, mu)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": c.SUP_PSI_XTOL},
    )
    if -result.fun > best:
        best, best_mu = float(-result.fun), float(result.x)
    return best, best_mu


@dataclass
class EnvelopeFunction:
    """Nondecreasing g, either tabulated (left-constant) or given by a callable.

    A table holds g_values[i] on [s_grid[i], s_grid[i + 1]) and g_values[0]
    below s_grid[0]; s_max bounds where g is known.
    """

    s_grid: np.ndarray = field(default_factory=lambda: np.zeros(0))
    g_values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    fn: Callable[[np.ndarray], np.ndarray] | None = None
    s_max: float = math.inf

    @classmethod
    def from_callable(cls, fn, s_max: float = math.inf) -> "EnvelopeFunction":
        return cls(fn=fn, s_max=s_max)

    def __call__(self, s: ArrayLike) -> np.ndarray | float:
        s_arr = np.asarray(s, dtype=float)
        if self.fn is not None:
            values = np.broadcast_to(np.asarray(self.fn(s_arr), dtype=float), s_arr.shape)
        elif len(self.s_grid) == 0:
            values = np.zeros_like(s_arr)
        else:
            i = np.clip(np.searchsorted(self.s_grid, s_arr, side="right") - 1, 0, None)
            values = self.g_values[i]
        return float(values) if np.ndim(s) == 0 else values

    def tilde(self, s: ArrayLike) -> np.ndarray | float:
        return np.asarray(s) * self(s) if np.ndim(s) else float(s) * self(s)

    @property
    def minimum(self) -> float:
        if self.fn is not None or len(self.g_values) == 0:
            return math.nan
        return float(np.min(self.g_values))

    def to_pairs(self) -> list[list[float]]:
        return [[float(s), float(g)] for s, g in zip(self.s_grid, self.g_values)]


def g_tilde_inverse(g: EnvelopeFunction, y: float) -> float:
    """Smallest s with s g(s) >= y."""
    if y < 0:
        raise EnvelopeRangeException(f"g-tilde inverse needs y >= 0, got {y}")
    if y == 0:
        return 0.0

    if math.isfinite(g.s_max):
        top = g.tilde(g.s_max)
        if y > top:
            raise EnvelopeRangeException(
                f"y={y:.6g} is outside the range [0, {top:.6g}] of s*g(s) on [0, {g.s_max:.6g}]"
            )
        return increasing_root(g.tilde, y, lo=0.0, hi=g.s_max)

    try:
        return increasing_root(g.tilde, y, lo=0.0, hi=1.0)
    except QuadratureException as e:
        raise EnvelopeRangeException(f"y={y:.6g} is beyond the range of s*g(s): {e}") from e


def chi_bar(g: EnvelopeFunction, t: float) -> float:
    """Early-time bound g-tilde^-1(sqrt(2/pi) sqrt(t)) on the frontier."""
    if t <= 0:
        return 0.0
    return g_tilde_inverse(g, SQRT_2_OVER_PI * math.sqrt(t))


def condition_bound_from_h(h: Callable[[float], float], s: ArrayLike):
    """The averaging envelope g(s) = h(s/2)/2 implied by a pointwise witness h."""
    return np.asarray(h(np.asarray(s) / 2.0)) / 2.0


def sup_psi_bound_periodic(d: PeriodicOscillatoryDensity, lam: float) -> float:
    """1/2 + sup H lam^alpha 2^(alpha+1) / alpha with H(x) = int_0^x Psi."""
    return 0.5 + d.sup_antiderivative * lam**d.alpha * 2.0 ** (d.alpha + 1.0) / d.alpha


def check_pointwise_condition(
    d: Density, x_max: float | None = None, n_windows: int = c.N_DYADIC_WINDOWS
) -> tuple[bool, float | None, EnvelopeFunction]:
    """Whether f <= 1 - h near 0 for some positive nondecreasing h.

    Scans dyadic windows (2^-k-1 x_max, 2^-k x_max]. The witness h takes on
    window k the smallest margin 1 - max f over windows 0..k, so it is
    nondecreasing in x however the raw margins move with k, and it is zero
    below the last window. Returns the verdict, a violating x (the one
    closest to x_max) and h.
    """
    if x_max is None:
        x_max = min(c.POINTWISE_X_MAX, d.support_end)

    margins = np.empty(n_windows)
    witness = None
    for k in range(n_windows):
        hi = x_max * 2.0**-k
        top, at = d.sup_pdf(hi / 2.0, hi)
        margins[k] = 1.0 - top
        if margins[k] <= 0 and witness is None:
            witness = at

    h_values = np.minimum.accumulate(margins)
    lows = x_max * 2.0 ** -np.arange(1, n_windows + 1)
    h = EnvelopeFunction(
        s_grid=np.concatenate([[0.0], lows[::-1]]),
        g_values=np.concatenate([[0.0], np.clip(h_values[::-1], 0.0, None)]),
        s_max=x_max,
    )

    holds = witness is None
    logger.debug("pointwise condition: holds=%s, min margin %.6g", holds, np.min(margins))
    return holds, witness, h


def check_moment_condition(d: Density) -> tuple[bool, float]:
    f_le_1 = d.max_level() <= 1.0 + c.PDF_TOL
    return f_le_1, float(d.first_moment())


@dataclass
class ConditionReport:
    lambda_grid: np.ndarray
    mu_grid: np.ndarray
    psi_values: np.ndarray
    sup_psi_per_lambda: np.ndarray
    argmax_mu: np.ndarray
    g_envelope: EnvelopeFunction
    holds_1_5: bool
    witness_1_5: float | None
    holds_1_6: bool
    first_moment: float
    holds_1_7: bool
    margin_1_7: float
    lambda0: float | None
    worst_psi: list[tuple[float, float, float]]
    g_from_pointwise: np.ndarray | None = None

    def to_json(self) -> dict:
        return {
            "holds_1_5": self.holds_1_5,
            "holds_1_6": self.holds_1_6,
            "holds_1_7": self.holds_1_7,
            "lambda0": self.lambda0,
            "g_envelope": self.g_envelope.to_pairs(),
            "worst_psi": [[lam, mu, value] for lam, mu, value in self.worst_psi],
            "margin_1_7": self.margin_1_7,
            "witness_1_5": self.witness_1_5,
            "first_moment": self.first_moment,
            "g_from_pointwise": None
            if self.g_from_pointwise is None
            else [[float(s), float(g)] for s, g in self.g_from_pointwise],
            "sup_psi_per_lambda": [
                [float(lam), float(mu), float(value)]
                for lam, mu, value in zip(
                    self.lambda_grid, self.argmax_mu, self.sup_psi_per_lambda
                )
            ],
        }


def _psi_row(d: Density, lam: float, mu_grid: np.ndarray):
    row = np.asarray(psi(d, np.full_like(mu_grid, lam), mu_grid))
    top, top_mu = sup_psi(d, lam)
    return row, top, top_mu


def fit_envelope(
    s_values: np.ndarray, psi_values: np.ndarray, s_lo: float, s_hi: float
) -> EnvelopeFunction:
    """g(s) = inf over s' >= s of 1 - max psi in the s-bin of s'."""
    edges = np.geomspace(s_lo, s_hi, c.N_S_BINS + 1)
    bins = np.clip(np.searchsorted(edges, s_values, side="right") - 1, 0, c.N_S_BINS - 1)
    worst = np.full(c.N_S_BINS, -np.inf)
    np.maximum.at(worst, bins, psi_values)

    d_values = np.where(np.isfinite(worst), 1.0 - worst, np.inf)
    g_values = np.minimum.accumulate(d_values[::-1])[::-1]
    filled = np.isfinite(g_values)
    return EnvelopeFunction(
        s_grid=edges[:-1][filled], g_values=g_values[filled], s_max=float(edges[-1])
    )


def check_averaging_condition(
    d: Density,
    lambda0_candidate: float = c.DEFAULT_LAMBDA0,
    n_lambda: int = c.N_LAMBDA,
    n_mu: int = c.N_MU,
    lambda_min: float = c.LAMBDA_MIN,
    threads: int = 1,
) -> ConditionReport:
    if not lambda0_candidate > lambda_min:
        raise ValueError(
            f"lambda0 candidate {lambda0_candidate} must exceed lambda_min {lambda_min}"
        )
    lambda_grid = np.geomspace(lambda_min, lambda0_candidate, n_lambda)
    mu_grid = np.linspace(0.0, 1.0, n_mu)

    rows = parallel_map(
        _psi_row, [(d, lam, mu_grid) for lam in lambda_grid], threads=threads
    )
    psi_values = np.stack([row for row, _, _ in rows])
    sup_values = np.array([top for _, top, _ in rows])
    argmax_mu = np.array([top_mu for _, _, top_mu in rows])

    passing = sup_values < 1.0
    n_prefix = len(passing) if passing.all() else int(np.argmin(passing))
    lambda0 = float(lambda_grid[n_prefix - 1]) if n_prefix > 0 else None

    # every node plus the refined maximizer of each row, restricted to the verified rows
    lam_nodes = np.concatenate(
        [np.repeat(lambda_grid[:n_prefix], n_mu), lambda_grid[:n_prefix]]
    )
    mu_nodes = np.concatenate([np.tile(mu_grid, n_prefix), argmax_mu[:n_prefix]])
    psi_nodes = np.concatenate([psi_values[:n_prefix].ravel(), sup_values[:n_prefix]])
    s_nodes = lam_nodes * (mu_nodes + 1.0)
    envelope = fit_envelope(s_nodes, psi_nodes, lambda_min, 2.0 * lambda0_candidate)

    margin = float(1.0 - np.max(sup_values))
    holds_1_7 = bool(passing.all()) and envelope.minimum > 0

    order = np.argsort(sup_values)[::-1][: c.N_WORST_PSI]
    worst = [
        (float(lambda_grid[i]), float(argmax_mu[i]), float(sup_values[i])) for i in order
    ]

    holds_1_5, witness, h = check_pointwise_condition(d)
    g_from_pointwise = None
    if holds_1_5 and len(envelope.s_grid):
        # h is only known up to its s_max
        s = envelope.s_grid[envelope.s_grid <= h.s_max]
        implied = condition_bound_from_h(h, s)
        g_from_pointwise = np.column_stack([s, implied])
        short = np.asarray(envelope(s)) < implied - c.PDF_TOL
        if envelope.s_max <= h.s_max and short.any():
            logger.warning(
                "fitted envelope below h(s/2)/2 at %d of %d s nodes", np.count_nonzero(short), len(s)
            )
    f_le_1, moment = check_moment_condition(d)
    holds_1_6 = f_le_1 and math.isfinite(moment)

    if not holds_1_7:
        logger.warning(
            "averaging condition fails for %s: max psi %.6g at lambda=%.3g",
            d,
            worst[0][2],
            worst[0][0],
        )

    return ConditionReport(
        lambda_grid=lambda_grid,
        mu_grid=mu_grid,
        psi_values=psi_values,
        sup_psi_per_lambda=sup_values,
        argmax_mu=argmax_mu,
        g_envelope=envelope,
        holds_1_5=holds_1_5,
        witness_1_5=witness,
        holds_1_6=holds_1_6,
        first_moment=moment,
        holds_1_7=holds_1_7,
        margin_1_7=margin,
        lambda0=lambda0,
        worst_psi=worst,
        g_from_pointwise=g_from_pointwise,
    )
