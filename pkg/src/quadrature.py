"""Numerical integration and root finding shared by the density and condition code."""

import logging
from collections.abc import Callable
from functools import cache

import numpy as np
from scipy.optimize import bisect

import src.constants as c

logger = logging.getLogger(__name__)


class QuadratureException(Exception):
    pass


def _simpson(fa: float, fm: float, fb: float, h: float) -> float:
    return h / 6.0 * (fa + 4.0 * fm + fb)


def adaptive_simpson(
    f: Callable[[float], float],
    a: float,
    b: float,
    tol: float = c.QUAD_TOL,
    max_subdivisions: int = c.QUAD_MAX_SUBDIVISIONS,
) -> float:
    """Adaptive Simpson's rule with an absolute tolerance.

    Works off an explicit stack instead of recursion so deep refinements near
    an oscillating endpoint cannot hit the interpreter's recursion limit.
    """
    if a == b:
        return 0.0
    if a > b:
        return -adaptive_simpson(f, b, a, tol, max_subdivisions)

    fa, fb = f(a), f(b)
    m = (a + b) / 2.0
    fm = f(m)
    stack = [(a, b, fa, fm, fb, _simpson(fa, fm, fb, b - a), tol)]
    total = 0.0
    subdivisions = 0

    while stack:
        lo, hi, flo, fmid, fhi, whole, eps = stack.pop()
        mid = (lo + hi) / 2.0
        lm, rm = (lo + mid) / 2.0, (mid + hi) / 2.0
        flm, frm = f(lm), f(rm)
        left = _simpson(flo, flm, fmid, mid - lo)
        right = _simpson(fmid, frm, fhi, hi - mid)
        err = (left + right - whole) / 15.0

        if abs(err) <= eps or hi - lo < 1e-15 * max(1.0, abs(hi)):
            # richardson extrapolation on the accepted panel
            total += left + right + err
            continue

        subdivisions += 1
        if subdivisions > max_subdivisions:
            raise QuadratureException(
                f"adaptive Simpson exceeded {max_subdivisions} subdivisions on [{a}, {b}]"
            )
        stack.append((mid, hi, fmid, frm, fhi, right, eps / 2.0))
        stack.append((lo, mid, flo, flm, fmid, left, eps / 2.0))

    return total


@cache
def gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(n)
    return (x + 1.0) / 2.0, w / 2.0


def gauss_legendre_segments(
    f: Callable[[np.ndarray], np.ndarray],
    lo: np.ndarray,
    hi: np.ndarray,
    n: int = c.GL_PARTIAL_NODES,
) -> np.ndarray:
    """Integrate a vectorized f over many segments [lo_i, hi_i] at once."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    x, w = gauss_legendre(n)
    width = hi - lo
    nodes = lo[..., None] + width[..., None] * x
    return width * (f(nodes) @ w)


def increasing_root(
    fn: Callable[[float], float],
    target: float,
    lo: float = 0.0,
    hi: float = 1.0,
    xtol: float = c.BISECT_XTOL,
    max_doublings: int = c.BRACKET_MAX_DOUBLINGS,
    hi_cap: float = np.inf,
) -> float:
    """Smallest x >= lo with fn(x) >= target, for nondecreasing fn.

    The upper end of the bracket is doubled until it reaches the target;
    giving up after `max_doublings` or past `hi_cap` is an error.
    """
    if fn(lo) >= target:
        return lo

    doublings = 0
    while fn(hi) < target:
        lo, hi = hi, 2.0 * hi
        doublings += 1
        if doublings > max_doublings or hi > hi_cap:
            raise QuadratureException(
                f"could not bracket a root of level {target} below {min(hi, hi_cap)}"
            )

    # bisect needs a sign change; ties at the target count as reached
    root = bisect(
        lambda x: -1.0 if fn(x) < target else 1.0,
        lo,
        hi,
        xtol=xtol,
        maxiter=c.BISECT_MAX_ITER,
    )
    logger.debug("bisection root %.15g for level %.6g", root, target)
    return float(root)
