"""Closed-form constants of the piecewise family and Monte Carlo checks of the frontier bounds.

Every check is reported as a Margin: observed minus required on the side
the inequality certifies, with the Monte Carlo standard error at the
worst node. A check that reached no node is reported as not-run, and
the report only passes when every margin passes.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction

import numpy as np
from numpy.typing import ArrayLike
from scipy.stats import norm

import src.constants as c
from densities.density import Density
from densities.piecewise import PiecewiseGeometricDensity
from src.conditions import EnvelopeFunction, EnvelopeRangeException, chi_bar
from src.rng import chunk_bounds, normal_icdf, parallel_map, stream
from src.solver import FrontierPath, compute_Y_samples

logger = logging.getLogger(__name__)

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


class BoundsException(Exception):
    pass


@dataclass
class Margin:
    """Observed minus required for one inequality.

    A lenient margin passes above -N_SE standard errors, a strict one only
    above +N_SE. A margin that checked no node is "not-run" and never passes.
    """

    name: str
    inequality: str
    value: float | None
    stderr: float = 0.0
    where: float | None = None
    checked: int = 0
    strict: bool = False

    @property
    def status(self) -> str:
        if self.value is None or self.checked == 0:
            return "not-run"
        if self.strict:
            return "pass" if self.value - c.N_SE * self.stderr > 0 else "fail"
        return "pass" if self.value >= -c.N_SE * self.stderr else "fail"

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_json(self) -> dict:
        return asdict(self) | {"status": self.status, "passed": self.passed}


def min_margin(
    name: str,
    inequality: str,
    values: np.ndarray,
    stderr: np.ndarray,
    where: np.ndarray,
    strict: bool = False,
) -> Margin:
    """The node whose margin is furthest below zero in units of its standard error."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        return Margin(name, inequality, None, strict=strict)
    stderr = np.asarray(stderr, dtype=float)
    score = values - c.N_SE * stderr if strict else values + c.N_SE * stderr
    i = int(np.argmin(score))
    return Margin(
        name,
        inequality,
        float(values[i]),
        float(stderr[i]),
        float(where[i]),
        checked=len(values),
        strict=strict,
    )


# constants of the piecewise family


def compute_L(d: PiecewiseGeometricDensity) -> tuple[Fraction, Fraction, bool]:
    """(rho, L, L < 1) with rho = (1 + p)/2 and L the slope bound of F on G."""
    rho = (1 + d.p) / 2
    L = ((1 - d.q) * d.alpha2 + d.q * (1 - rho) * d.alpha1) / (1 - d.q * rho)
    return rho, L, L < 1


def g_bands(
    d: PiecewiseGeometricDensity, band_cap: int = c.G_BAND_CAP
) -> list[tuple[Fraction, Fraction]]:
    """Bands [a_{2n+2}, rho a_{2n+1}] for n <= band_cap and [a_2, a_1], in exact arithmetic."""
    rho, _, _ = compute_L(d)
    bands = [(d.endpoint(2), d.endpoint(1))]
    for n in range(1, band_cap + 1):
        bands.append((d.endpoint(2 * n + 2), rho * d.endpoint(2 * n + 1)))
    return bands


def in_G(d: PiecewiseGeometricDensity, y: ArrayLike, band_cap: int = c.G_BAND_CAP):
    y = np.asarray(y, dtype=float)
    bands = sorted((float(lo), float(hi)) for lo, hi in g_bands(d, band_cap)[1:])
    lows = np.array([lo for lo, _ in bands])
    highs = np.array([hi for _, hi in bands])
    i = np.searchsorted(lows, y, side="right") - 1
    inside = (i >= 0) & (y <= highs[np.clip(i, 0, None)])
    return inside | (y >= float(d.endpoint(2)))


def bruteforce_sup_ratio(
    d: PiecewiseGeometricDensity,
    n_y: int = c.BRUTEFORCE_GRID,
    n_h: int = c.BRUTEFORCE_GRID,
    band_cap: int = c.G_BAND_CAP,
) -> tuple[float, float, float]:
    """Max of (F(y + h) - F(y)) / h over y on G and y + h <= a1, on grids.

    y runs over evenly spaced points of every G band, y + h over evenly
    spaced points of every band of f; both include the band endpoints.
    Returns (value, y, h) at the maximum. Bands below the density's
    sliver cut are left out, the float CDF is linear there.
    """
    band_cap = min(band_cap, d.n_bands - 2)
    g = g_bands(d, band_cap)
    per_y = max(2, n_y // len(g))
    ys = np.unique(
        np.concatenate([np.linspace(float(lo), float(hi), per_y) for lo, hi in g])
    )

    edges = [float(d.endpoint(k)) for k in range(1, 2 * band_cap + 4)]
    per_z = max(2, n_h // (len(edges) - 1))
    zs = np.unique(
        np.concatenate(
            [np.linspace(lo, hi, per_z) for hi, lo in zip(edges[:-1], edges[1:])]
        )
    )

    fy = np.asarray(d.cdf(ys))
    fz = np.asarray(d.cdf(zs))
    h = zs[None, :] - ys[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(h > 0, (fz[None, :] - fy[:, None]) / h, -np.inf)
    i, j = np.unravel_index(int(np.argmax(ratio)), ratio.shape)
    return float(ratio[i, j]), float(ys[i]), float(h[i, j])


def ratio_sequence_exact(d: PiecewiseGeometricDensity, y, n: int) -> list[Fraction]:
    """(F(a_2k) - F(y)) / (a_2k - y) for k = 1..n, exactly."""
    fy = d.cdf_rational(y)
    out = []
    for k in range(1, n + 1):
        a = d.endpoint(2 * k)
        out.append((d.beta2 * a - fy) / (a - y))
    return out


def compute_sqrt_constants(
    d: PiecewiseGeometricDensity, beta_slope: float
) -> tuple[float, float, float]:
    """c1 = beta1 sqrt(2/pi), c2 = alpha2 sqrt(2/pi)/(1 - beta2), c3 = alpha2 sqrt(2/pi)/(1 - beta_slope)."""
    if d.beta2 >= 1:
        raise BoundsException(f"c2 needs beta2 < 1, got beta2={d.beta2}")
    if not 0 <= beta_slope < 1:
        raise BoundsException(f"c3 needs beta_slope in [0, 1), got {beta_slope}")
    alpha2 = float(d.alpha2)
    c1 = float(d.beta1) * SQRT_2_OVER_PI
    c2 = alpha2 * SQRT_2_OVER_PI / (1.0 - float(d.beta2))
    c3 = alpha2 * SQRT_2_OVER_PI / (1.0 - beta_slope)
    return c1, c2, c3


def analytic_slope_candidate(d: PiecewiseGeometricDensity, c1: float, c2: float) -> dict:
    """The explicit slope bound beta built from C, the far-field slope and P(y + B_t in H)."""
    alpha1, alpha2 = float(d.alpha1), float(d.alpha2)
    beta2, p, r = float(d.beta2), float(d.p), float(d.r)
    big_c = (2.0 * alpha1 + 1.0) * beta2 / (alpha1 * (1.0 - beta2))
    far = (1.0 + beta2) / 2.0
    near = norm.cdf((1.0 - p) * c1 / 2.0) - 0.5
    middle = (
        (1.0 - p)
        / p
        * c1
        / math.sqrt(2.0 * math.pi)
        * math.exp(-((1.0 - r) ** 2) * (1.0 + big_c) ** 2 * c2**2 / (2.0 * r**2))
    )
    prob_h = min(near, middle, 0.5)
    beta = max(far, alpha2 - (alpha2 - alpha1) * prob_h)
    return {"C": big_c, "far_slope": far, "prob_H_lower": prob_h, "beta": beta}


# Monte Carlo helpers


def sample_U(c3: float, n_paths: int, seed: int, threads: int = 1) -> np.ndarray:
    """U = sup_{s <= 1} (B_s + c3 sqrt(s)) on a U_STEPS grid."""
    s = np.linspace(0.0, 1.0, c.U_STEPS + 1)[1:]
    drift = c3 * np.sqrt(s)

    def chunk(index: int, lo: int, hi: int) -> np.ndarray:
        gen = stream(seed, c.STREAM_U, index)
        walk = np.cumsum(normal_icdf(gen, (hi - lo, c.U_STEPS)), axis=1) / math.sqrt(
            c.U_STEPS
        )
        return np.maximum(np.max(walk + drift, axis=1), 0.0)

    parts = parallel_map(
        chunk,
        [(i, lo, hi) for i, (lo, hi) in enumerate(chunk_bounds(n_paths))],
        threads=threads,
    )
    return np.concatenate(parts)


def band_entry_bound(a: float, b: float, u_samples: np.ndarray) -> tuple[float, float]:
    """P(|N| >= a) P(U <= b - a) and its standard error; zero when b <= a."""
    if b <= a:
        return 0.0, 0.0
    tail = 2.0 * norm.sf(a)
    if math.isinf(b):
        return float(tail), 0.0
    hits = np.mean(u_samples <= b - a)
    se = math.sqrt(hits * (1.0 - hits) / len(u_samples))
    return float(tail * hits), float(tail * se)


def estimate_iota(
    c3: float, p: float, q: float, n_paths: int = c.BOUNDS_PATHS, seed: int = 0, threads: int = 1
) -> tuple[float, float]:
    rho = (1.0 + p) / 2.0
    u = sample_U(c3, n_paths, seed, threads)
    return band_entry_bound(1.0 / q, 1.0 / q + rho - p, u)


def estimate_F_t(
    d: Density,
    lam_t: float,
    t: float,
    x: ArrayLike,
    n_samples: int = c.BOUNDS_PATHS,
    seed: int = 0,
    index: int = 0,
) -> tuple[np.ndarray, np.ndarray]:
    """F_t(x) = E[F(Lambda_t - B_t + x) - F(Lambda_t - B_t)] with B_t = sqrt(t) N."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if t == 0:
        values = np.asarray(d.cdf(lam_t + x)) - float(d.cdf(lam_t))
        return values, np.zeros_like(values)

    gen = stream(seed, c.STREAM_BOUNDS, 1_000_000 + index)
    base = lam_t - math.sqrt(t) * normal_icdf(gen, n_samples)
    f0 = np.asarray(d.cdf(base))
    diffs = np.asarray(d.cdf(base[:, None] + x[None, :])) - f0[:, None]
    return diffs.mean(axis=0), diffs.std(axis=0) / math.sqrt(n_samples)


def check_t_indices(frontier: FrontierPath, n_checks: int = c.N_T_CHECKS) -> np.ndarray:
    """About n_checks log-spaced grid nodes in (0, T]."""
    k_max = len(frontier.t_grid) - 1
    picks = np.unique(np.round(np.geomspace(1, k_max, n_checks)).astype(int))
    return picks[(picks >= 1) & (picks <= k_max)]


def default_h_grid(d: Density, n: int = c.N_H_CHECKS) -> np.ndarray:
    top = d.support_end if math.isfinite(d.support_end) else 1.0
    return np.geomspace(c.H_MIN_FRACTION * top, top, n)


def estimate_beta_slope(
    d: Density,
    frontier: FrontierPath,
    t_indices: np.ndarray,
    x_grid: np.ndarray,
    n_samples: int,
    seed: int,
) -> tuple[float, float]:
    """max over (t, x) of F_t(x)/x, t = 0 included, with the SE at the maximizer."""
    best, best_se = -math.inf, 0.0
    for k in np.concatenate([[0], t_indices]):
        values, se = estimate_F_t(
            d,
            float(frontier.lam[k]),
            float(frontier.t_grid[k]),
            x_grid,
            n_samples,
            seed,
            index=int(k),
        )
        ratio = values / x_grid
        i = int(np.argmax(ratio))
        if ratio[i] > best:
            best, best_se = float(ratio[i]), float(se[i] / x_grid[i])
    return best, best_se


# frontier checks


def verify_frontier_envelopes(
    frontier: FrontierPath,
    c1: float | None = None,
    c2: float | None = None,
    c3: float | None = None,
    g: EnvelopeFunction | None = None,
) -> dict[str, Margin]:
    t = frontier.t_grid
    lam = frontier.lam
    se = frontier.stderr
    pos = t > 0
    margins = {}

    if c1 is not None:
        margins["sqrt_lower"] = min_margin(
            "sqrt_lower", "Lambda_t - c1 sqrt(t) >= 0",
            lam[pos] - c1 * np.sqrt(t[pos]), se[pos], t[pos],
        )
    if c2 is not None:
        margins["sqrt_upper"] = min_margin(
            "sqrt_upper", "c2 sqrt(t) - Lambda_t >= 0",
            c2 * np.sqrt(t[pos]) - lam[pos], se[pos], t[pos],
        )
    if c3 is not None:
        # lag h in grid steps
        best = None
        for h in range(1, len(t)):
            values = c3 * np.sqrt(t[h:] - t[:-h]) - (lam[h:] - lam[:-h])
            errors = np.sqrt(se[h:] ** 2 + se[:-h] ** 2)
            i = int(np.argmin(values + c.N_SE * errors))
            score = values[i] + c.N_SE * errors[i]
            if best is None or score < best[0]:
                best = (score, values[i], errors[i], t[i])
        margins["holder"] = Margin(
            "holder", "c3 sqrt(h) - (Lambda_{t+h} - Lambda_t) >= 0",
            float(best[1]), float(best[2]), float(best[3]),
            checked=len(t) * (len(t) - 1) // 2,
        )
    if g is not None:
        nodes, bound = [], []
        for k in np.flatnonzero(pos):
            try:
                bound.append(chi_bar(g, float(t[k])))
            except EnvelopeRangeException:
                break
            nodes.append(k)
        if not nodes:
            logger.warning("chi-bar is undefined at every positive grid time, raise lambda0")
        elif len(nodes) < np.count_nonzero(pos):
            logger.info(
                "chi-bar defined on %d of %d positive grid times", len(nodes), np.count_nonzero(pos)
            )
        nodes = np.asarray(nodes, dtype=int)
        margins["chi_bar"] = min_margin(
            "chi_bar", "chi_bar_t - Lambda_t >= 0",
            np.asarray(bound) - lam[nodes], se[nodes], t[nodes],
        )
    return margins


def increment_margins(
    frontier: FrontierPath,
    d: Density,
    t_indices: np.ndarray | None = None,
    n_samples: int = c.BOUNDS_PATHS,
    seed: int = 0,
) -> Margin:
    """Lambda_{t+h} - Lambda_t - F_t(Lambda_{t+h} - Lambda_t) <= max f sqrt(2/pi) sqrt(h).

    Exact F_0 from t = 0 to every later node; Monte Carlo F_t from the given t nodes.
    """
    level = d.max_level()
    t, lam, se = frontier.t_grid, frontier.lam, frontier.stderr
    starts = [0] + ([] if t_indices is None else [int(k) for k in t_indices])
    values, errors, where = [], [], []
    for k in starts:
        later = np.arange(k + 1, len(t))
        if len(later) == 0:
            continue
        rise = lam[later] - lam[k]
        f_t, f_se = estimate_F_t(d, float(lam[k]), float(t[k]), rise, n_samples, seed, index=k)
        values.append(level * SQRT_2_OVER_PI * np.sqrt(t[later] - t[k]) - (rise - f_t))
        errors.append(np.sqrt(se[later] ** 2 + se[k] ** 2) * (1.0 + level) + f_se)
        where.append(t[later])
    if not values:
        return Margin("increment", "", None)
    return min_margin(
        "increment",
        "max f sqrt(2/pi) sqrt(h) - (Lambda_{t+h} - Lambda_t - F_t(Lambda_{t+h} - Lambda_t)) >= 0",
        np.concatenate(values),
        np.concatenate(errors),
        np.concatenate(where),
    )


def band_at(d: PiecewiseGeometricDensity, t: float) -> tuple[float, float]:
    """(a, b) of the G band used at time t: [a sqrt t, b sqrt t] is that band."""
    root = math.sqrt(t)
    rho, _, _ = compute_L(d)
    a3 = float(d.endpoint(3))
    if root >= a3:
        return float(d.endpoint(2)) / root, math.inf
    # a_{2n+3} <= sqrt t < a_{2n+1}
    n = 1
    while float(d.endpoint(2 * n + 3)) > root:
        n += 1
    lo = float(d.endpoint(2 * n + 2))
    hi = float(rho * d.endpoint(2 * n + 1))
    return lo / root, hi / root


def estimate_prob_in_G(
    frontier: FrontierPath,
    d: PiecewiseGeometricDensity,
    c3: float | None,
    t_indices: np.ndarray,
    n_paths: int = c.BOUNDS_PATHS,
    seed: int = 0,
    threads: int = 1,
) -> tuple[list[dict], Margin | None, Margin]:
    """P(Y_t in G) and the two sides of the band inequality per checked t.

    Returns the rows, the margin LHS - RHS (None without c3) and the strict
    margin of min P(Y_t in G) over the threshold (alpha2 - 1)/(alpha2 - L).
    """
    _, L, _ = compute_L(d)
    threshold = float((d.alpha2 - 1) / (d.alpha2 - L))
    y = compute_Y_samples(
        frontier, n_paths, seed, t_indices, threads=threads, kind=c.STREAM_BOUNDS
    )
    u = sample_U(c3, n_paths, seed, threads) if c3 is not None else None

    rows = []
    for col, k in enumerate(t_indices):
        t = float(frontier.t_grid[k])
        a, b = band_at(d, t)
        samples = y[:, col]
        inside = (samples >= a * math.sqrt(t)) & (samples <= b * math.sqrt(t))
        lhs = float(inside.mean())
        lhs_se = math.sqrt(lhs * (1.0 - lhs) / n_paths)
        rhs, rhs_se = band_entry_bound(a, b, u) if u is not None else (math.nan, 0.0)
        member = float(in_G(d, samples).mean())
        rows.append(
            {
                "t": t,
                "a": a,
                "b": b,
                "lhs": lhs,
                "lhs_se": lhs_se,
                "rhs": rhs,
                "rhs_se": rhs_se,
                "prob_G": member,
                "prob_G_se": math.sqrt(member * (1.0 - member) / n_paths),
            }
        )

    usable = [row for row in rows if not math.isnan(row["rhs"])]
    band_margin = None if u is None else min_margin(
        "band_entry",
        "P(Y_t in [a sqrt t, b sqrt t]) - P(|N| >= a) P(U <= b - a) >= 0",
        np.array([row["lhs"] - row["rhs"] for row in usable]),
        np.array([math.hypot(row["lhs_se"], row["rhs_se"]) for row in usable]),
        np.array([row["t"] for row in usable]),
    )
    prob_margin = min_margin(
        "probG",
        f"P(Y_t in G) - (alpha2 - 1)/(alpha2 - L) > 0, threshold {threshold:.6g}",
        np.array([row["prob_G"] - threshold for row in rows]),
        np.array([row["prob_G_se"] for row in rows]),
        np.array([row["t"] for row in rows]),
        strict=True,
    )
    return rows, band_margin, prob_margin


def estimate_delta0(
    frontier: FrontierPath,
    d: Density,
    t_indices: np.ndarray,
    h_grid: np.ndarray,
    n_paths: int = c.BOUNDS_PATHS,
    seed: int = 0,
    g: EnvelopeFunction | None = None,
    threads: int = 1,
) -> tuple[float, float, list[dict]]:
    """sup over (t, h) of E[(F(Y_t + h) - F(Y_t)) / h].

    Each node also carries the contraction ratio E[F(Y_t + h) - F(Y_t)] / h
    next to 1 - E[1{Y_t <= h} g(Y_t + h)] when g is given.
    """
    y = compute_Y_samples(
        frontier, n_paths, seed, t_indices, threads=threads, kind=c.STREAM_BOUNDS
    )
    best, best_se = -math.inf, 0.0
    nodes = []
    for col, k in enumerate(t_indices):
        samples = y[:, col]
        f0 = np.asarray(d.cdf(samples))
        for h in h_grid:
            quotient = (np.asarray(d.cdf(samples + h)) - f0) / h
            mean = float(quotient.mean())
            se = float(quotient.std() / math.sqrt(n_paths))
            node = {"t": float(frontier.t_grid[k]), "h": float(h), "ratio": mean, "se": se}
            if g is not None:
                weight = np.where(samples <= h, np.asarray(g(samples + h)), 0.0)
                node["bound"] = float(1.0 - weight.mean())
            nodes.append(node)
            if mean > best:
                best, best_se = mean, se
    return best, best_se, nodes


# report


@dataclass
class BoundsReport:
    family: str
    beta1: float | None = None
    beta2: float | None = None
    admissible_4_4: bool | None = None
    rho: float | None = None
    L: float | None = None
    L_lt_1: bool | None = None
    bruteforce_L: float | None = None
    c1: float | None = None
    c2: float | None = None
    c3: float | None = None
    beta_slope: float | None = None
    beta_slope_se: float | None = None
    analytic_slope: dict | None = None
    iota: float | None = None
    delta0_hat: float | None = None
    delta0_se: float | None = None
    threshold_G: float | None = None
    margins: dict[str, Margin] = field(default_factory=dict)
    prob_G: list[dict] = field(default_factory=list)
    delta0_nodes: list[dict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(m.passed for m in self.margins.values())

    def to_json(self) -> dict:
        data = asdict(self)
        data["margins"] = {name: m.to_json() for name, m in self.margins.items()}
        data["passed"] = self.passed
        return data

    def margin_rows(self, frontier: FrontierPath, g: EnvelopeFunction | None = None):
        """Per-t table behind the frontier margins."""
        header = ["t", "lambda", "stderr", "lower_margin", "upper_margin", "chi_bar"]
        rows = []
        for t, lam, se in zip(frontier.t_grid, frontier.lam, frontier.stderr):
            root = math.sqrt(t)
            lower = lam - self.c1 * root if self.c1 is not None else math.nan
            upper = self.c2 * root - lam if self.c2 is not None else math.nan
            bound = math.nan
            if g is not None:
                try:
                    bound = chi_bar(g, float(t))
                except EnvelopeRangeException:
                    pass
            rows.append([t, lam, se, lower, upper, bound])
        return header, rows


def run_bounds(
    d: Density,
    frontier: FrontierPath,
    g: EnvelopeFunction | None = None,
    n_paths: int = c.BOUNDS_PATHS,
    seed: int = 0,
    threads: int = 1,
) -> BoundsReport:
    report = BoundsReport(family=d.family)
    t_indices = check_t_indices(frontier)
    h_grid = default_h_grid(d)
    c1 = c2 = c3 = None

    if isinstance(d, PiecewiseGeometricDensity):
        rho, L, L_lt_1 = compute_L(d)
        report.beta1, report.beta2 = float(d.beta1), float(d.beta2)
        report.admissible_4_4 = d.admissible
        report.rho, report.L, report.L_lt_1 = float(rho), float(L), L_lt_1
        report.bruteforce_L = bruteforce_sup_ratio(d)[0]
        report.threshold_G = float((d.alpha2 - 1) / (d.alpha2 - L))

        slope, slope_se = estimate_beta_slope(
            d, frontier, t_indices, default_h_grid(d), n_paths, seed
        )
        report.beta_slope, report.beta_slope_se = slope, slope_se
        try:
            c1, c2, c3 = compute_sqrt_constants(d, slope)
        except BoundsException as e:
            logger.warning("square-root constants unavailable: %s", e)
            if d.beta2 < 1:
                c1 = float(d.beta1) * SQRT_2_OVER_PI
                c2 = float(d.alpha2) * SQRT_2_OVER_PI / (1.0 - float(d.beta2))
        report.c1, report.c2, report.c3 = c1, c2, c3
        if c1 is not None:
            report.analytic_slope = analytic_slope_candidate(d, c1, c2)
        if c3 is not None:
            report.iota = estimate_iota(c3, float(d.p), float(d.q), n_paths, seed, threads)[0]

        rows, band_margin, prob_margin = estimate_prob_in_G(
            frontier, d, c3, t_indices, n_paths, seed, threads
        )
        report.prob_G = rows
        if band_margin is not None:
            report.margins["band_entry"] = band_margin
        report.margins["probG"] = prob_margin

    report.margins |= verify_frontier_envelopes(frontier, c1, c2, c3, g)
    report.margins["increment"] = increment_margins(frontier, d, t_indices, n_paths, seed)

    delta0, delta0_se, nodes = estimate_delta0(
        frontier, d, t_indices, h_grid, n_paths, seed, g, threads
    )
    report.delta0_hat, report.delta0_se, report.delta0_nodes = delta0, delta0_se, nodes
    report.margins["delta0"] = Margin(
        "delta0", "1 - delta0_hat > 0", 1.0 - delta0, delta0_se, checked=len(nodes), strict=True
    )

    for margin in report.margins.values():
        if margin.status == "not-run":
            logger.warning("%s checked no node", margin.name)
        elif not margin.passed:
            logger.warning(
                "%s fails: margin %.6g (se %.3g) at t=%s", margin.name, margin.value, margin.stderr, margin.where
            )
    return report
