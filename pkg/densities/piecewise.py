import logging
import math
from fractions import Fraction

import numpy as np
from numpy.typing import ArrayLike

import src.constants as c
from densities.density import Density, InvalidDensityException, as_output

logger = logging.getLogger(__name__)

Rational = Fraction | int | float | str


def as_fraction(value: Rational) -> Fraction:
    if isinstance(value, float):
        return Fraction(value).limit_denominator(10**12)
    return Fraction(value)


class PiecewiseGeometricDensity(Density):
    """Density alternating between alpha1 and alpha2 on geometric bands.

    f = alpha1 on [a_{2n}, a_{2n-1}) and alpha2 on [a_{2n+1}, a_{2n}) with
    a_{2n-1} = r^{n-1} a1, a_{2n} = p r^{n-1} a1, r = pq. We fix a1 = 1/beta1,
    which makes F(a1) = 1. Parameters are kept as Fractions so the band
    identities can be checked exactly; float copies drive the numerics.
    """

    family = "piecewise"

    def __init__(self, alpha1: Rational, alpha2: Rational, p: Rational, q: Rational):
        self.alpha1 = as_fraction(alpha1)
        self.alpha2 = as_fraction(alpha2)
        self.p = as_fraction(p)
        self.q = as_fraction(q)

        if not 0 < self.alpha1 < 1 < self.alpha2:
            raise InvalidDensityException(
                f"need 0 < alpha1 < 1 < alpha2, got alpha1={self.alpha1}, alpha2={self.alpha2}"
            )
        for name, value in (("p", self.p), ("q", self.q)):
            if not 0 < value < 1:
                raise InvalidDensityException(f"{name} must lie in (0, 1), got {value}")

        self.r = self.p * self.q
        one_minus_r = 1 - self.r
        self.beta1 = (
            self.alpha2 * self.p * (1 - self.q) + self.alpha1 * (1 - self.p)
        ) / one_minus_r
        self.beta2 = (
            self.alpha2 * (1 - self.q) + self.alpha1 * self.q * (1 - self.p)
        ) / one_minus_r
        self.a1 = 1 / self.beta1
        self.admissibility_bound = 1 + self.q * (1 - self.p) / (1 - self.q) * (
            1 - self.alpha1
        )
        self.admissible = self.alpha2 < self.admissibility_bound

        # float mirrors
        self._alpha1 = float(self.alpha1)
        self._alpha2 = float(self.alpha2)
        self._p = float(self.p)
        self._r = float(self.r)
        self._beta1 = float(self.beta1)
        self._beta2 = float(self.beta2)
        self._a1 = float(self.a1)
        self._log_r = math.log(self._r)

        # bands below the cut collapse into a sliver at level beta1
        self.n_bands = math.ceil(math.log(c.BAND_CUTOFF) / self._log_r)
        self.cut = self._a1 * self._r**self.n_bands

    def describe(self) -> str:
        return f"alpha1={self.alpha1}, alpha2={self.alpha2}, p={self.p}, q={self.q}"

    def to_spec(self) -> dict:
        return {
            "family": self.family,
            "alpha1": str(self.alpha1),
            "alpha2": str(self.alpha2),
            "p": str(self.p),
            "q": str(self.q),
        }

    @property
    def support_end(self) -> float:
        return self._a1

    def endpoint(self, k: int) -> Fraction:
        """Exact band endpoint a_k, k >= 1."""
        if k < 1:
            raise InvalidDensityException(f"band endpoints start at k=1, got {k}")
        n = (k + 1) // 2
        scale = self.r ** (n - 1) * self.a1
        return scale if k % 2 == 1 else self.p * scale

    def _cycles(self, x: np.ndarray):
        """Cycle index m with a1 r^(m+1) <= x < a1 r^m, plus its three endpoints."""
        safe = np.clip(x, self.cut, self._a1)
        m = np.floor(np.log(safe / self._a1) / self._log_r)
        m = np.clip(m, 0, self.n_bands - 1)
        top = self._a1 * np.power(self._r, m)
        m = np.where((safe >= top) & (m > 0), m - 1, m)
        bottom = self._a1 * np.power(self._r, m + 1)
        m = np.where(safe < bottom, m + 1, m)
        m = np.clip(m, 0, self.n_bands - 1)
        top = self._a1 * np.power(self._r, m)
        bottom = self._a1 * np.power(self._r, m + 1)
        mid = self._p * top
        return top, mid, bottom

    def pdf(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.asarray(x, dtype=float)
        top, mid, bottom = self._cycles(xs)
        level = np.where(xs >= mid, self._alpha1, self._alpha2)
        level = np.where(xs < self.cut, self._beta1, level)
        level = np.where((xs < 0) | (xs >= self._a1), 0.0, level)
        return as_output(x, level)

    def cdf(self, x: ArrayLike) -> np.ndarray | float:
        xs = np.asarray(x, dtype=float)
        top, mid, bottom = self._cycles(xs)
        f_mid = self._beta2 * mid
        upper = np.clip(f_mid + self._alpha1 * (xs - mid), f_mid, self._beta1 * top)
        f_bottom = self._beta1 * bottom
        lower = np.clip(f_bottom + self._alpha2 * (xs - bottom), f_bottom, f_mid)
        values = np.where(xs >= mid, upper, lower)
        values = np.where(xs < self.cut, self._beta1 * np.maximum(xs, 0.0), values)
        values = np.where(xs >= self._a1, 1.0, values)
        return as_output(x, values)

    def cdf_exact(self, x: ArrayLike) -> np.ndarray | float:
        return self.cdf(x)

    def integral(self, lo: ArrayLike, hi: ArrayLike) -> np.ndarray | float:
        values = np.asarray(self.cdf(hi)) - np.asarray(self.cdf(lo))
        shape_of = hi if np.ndim(hi) else lo
        return as_output(shape_of, np.maximum(values, 0.0))

    def quantile(self, u: ArrayLike) -> np.ndarray | float:
        """Band inversion of the piecewise linear CDF."""
        us = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        safe = np.clip(us, self._beta1 * self.cut, 1.0)
        # F(a1 r^m) = r^m because beta1 * a1 = 1
        m = np.floor(np.log(safe) / self._log_r)
        m = np.clip(m, 0, self.n_bands - 1)
        m = np.where((safe >= np.power(self._r, m)) & (m > 0), m - 1, m)
        m = np.where(safe < np.power(self._r, m + 1), m + 1, m)
        m = np.clip(m, 0, self.n_bands - 1)
        top = self._a1 * np.power(self._r, m)
        bottom = self._a1 * np.power(self._r, m + 1)
        mid = self._p * top
        f_mid = self._beta2 * mid
        upper = np.clip(mid + (us - f_mid) / self._alpha1, mid, top)
        lower = np.clip(bottom + (us - self._beta1 * bottom) / self._alpha2, bottom, mid)
        x = np.where(us >= f_mid, upper, lower)
        x = np.where(us < self._beta1 * self.cut, us / self._beta1, x)
        x = np.where(us >= 1.0, self._a1, x)
        return as_output(u, x)

    def sup_pdf(self, lo: float, hi: float) -> tuple[float, float]:
        hi = min(hi, self._a1)
        lo = max(lo, 0.0)
        if hi <= lo:
            return 0.0, lo
        if lo < self.cut:
            if hi >= self.cut:
                return self._alpha2, self.cut
            return self._beta1, lo
        top, mid, bottom = (float(v) for v in self._cycles(np.asarray(lo)))
        if lo < mid:
            return self._alpha2, lo
        # lo sits in an alpha1 band; the next alpha2 band starts at top
        if hi >= top and top < self._a1:
            return self._alpha2, top
        return self._alpha1, lo

    def first_moment(self) -> float:
        per_cycle = (
            self._alpha2 * (self._p**2 - self._r**2) + self._alpha1 * (1 - self._p**2)
        ) / 2.0
        return self._a1**2 * per_cycle / (1 - self._r**2)

    # exact rational helpers

    def cdf_rational(self, x: Rational) -> Fraction:
        """F(x) by enumerating bands from a1 downwards, in exact arithmetic."""
        x = as_fraction(x)
        if x <= 0:
            return Fraction(0)
        if x >= self.a1:
            return Fraction(1)

        mass_above = Fraction(0)
        top = self.a1
        while top > x:
            mid = self.p * top
            bottom = self.r * top
            mass_above += self.alpha1 * (top - max(mid, x))
            if x < mid:
                mass_above += self.alpha2 * (mid - max(bottom, x))
            top = bottom
        return 1 - mass_above

    def psi_rational(self, lam: Rational, mu: Rational) -> Fraction:
        lam, mu = as_fraction(lam), as_fraction(mu)
        if lam == 0:
            raise InvalidDensityException("psi at lambda = 0 has no exact band form")
        return (self.cdf_rational(lam * (mu + 1)) - self.cdf_rational(lam * mu)) / lam

    def violation_witness(self, n: int) -> tuple[Fraction, Fraction]:
        """(lambda, mu) with lambda*mu = a_{2n+1} and lambda*(mu+1) = a_{2n}."""
        if self.q > Fraction(1, 2):
            raise InvalidDensityException(
                f"the violation witness needs q <= 1/2, got q={self.q}"
            )
        lam = (1 - self.q) / self.q * self.endpoint(2 * n + 1)
        return lam, self.q / (1 - self.q)


def make_piecewise(
    alpha1: Rational, alpha2: Rational, p: Rational, q: Rational
) -> PiecewiseGeometricDensity:
    density = PiecewiseGeometricDensity(alpha1, alpha2, p, q)
    if not density.admissible:
        logger.warning(
            "alpha2=%s violates alpha2 < %s (beta2=%s >= 1); the square-root bounds do not apply",
            density.alpha2,
            density.admissibility_bound,
            density.beta2,
        )
    return density
