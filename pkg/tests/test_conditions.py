import math
import os
import sys
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import sici

# Add the project root to Python path so we can import from src
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from densities.gaussian_path import build_gaussian_path
from densities.periodic import make_periodic
from densities.piecewise import make_piecewise
from densities.tabulated import TabulatedDensity, uniform
from src.conditions import (
    EnvelopeFunction,
    EnvelopeRangeException,
    check_averaging_condition,
    check_moment_condition,
    check_pointwise_condition,
    chi_bar,
    condition_bound_from_h,
    fit_envelope,
    g_tilde_inverse,
    psi,
    sup_psi,
    sup_psi_bound_periodic,
)

HALF = Fraction(1, 2)


@pytest.fixture(scope="module")
def piecewise():
    return make_piecewise(HALF, Fraction(21, 20), HALF, HALF)


@pytest.fixture(scope="module")
def sine():
    return make_periodic(1.0)


@pytest.fixture(scope="module")
def ramp():
    # f(x) = x on [0, sqrt 2]
    grid = np.linspace(0.0, math.sqrt(2.0), 2001)
    return TabulatedDensity(grid, grid)


# psi


def test_psi_of_the_unit_uniform():
    assert psi(uniform(0.0, 1.0), 0.3, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_psi_broadcasts():
    values = psi(uniform(0.0, 1.0), 0.3, np.array([0.0, 0.5, 1.0]))
    assert values.shape == (3,)


def test_psi_on_the_violating_window(piecewise):
    lam = float(piecewise.endpoint(3))
    assert psi(piecewise, lam, 1.0) == pytest.approx(1.05, abs=1e-12)


def test_psi_sine_matches_riemann_sum(sine):
    lam = 0.01
    value = psi(sine, lam, 0.0)
    assert value < 0.75

    # midpoint sum where the integrand is resolved, closed form below x = 0.1
    x = 0.1 + 0.9 * (np.arange(1_000_000) + 0.5) / 1_000_000
    riemann = 0.9 * float(np.mean(sine.pdf(lam * x)))
    _, ci = sici(10.0 / lam)
    head = (0.1 + 0.1 * np.sin(10.0 / lam) - ci / lam) / 2.0
    assert value == pytest.approx(head + riemann, abs=1e-6)


def test_psi_at_zero_lambda_is_the_density_at_zero(sine):
    assert psi(sine, 0.0, 0.3) == sine.pdf(0.0)


def test_psi_of_piecewise_matches_riemann_sums(piecewise):
    rng = np.random.default_rng(41)
    n_panels = 1_000_000
    x = (np.arange(n_panels) + 0.5) / n_panels
    edges = np.array([float(piecewise.endpoint(k)) for k in range(1, 2 * piecewise.n_bands + 1)])
    jump = float(piecewise.alpha2 - piecewise.alpha1)
    for _ in range(100):
        lam = 10.0 ** rng.uniform(-3.0, 0.0)
        mu = rng.uniform(0.0, 1.0)
        riemann = float(np.mean(piecewise.pdf(lam * (mu + x))))
        crossed = np.count_nonzero((edges > lam * mu) & (edges < lam * (mu + 1.0))) + 1
        # the midpoint rule is off by at most half a panel per band edge
        assert psi(piecewise, lam, mu) == pytest.approx(riemann, abs=1e-9 + crossed * jump / (2.0 * n_panels))


# sup psi


def test_sup_psi_of_piecewise_reaches_alpha2(piecewise):
    for n in range(1, 6):
        top, _ = sup_psi(piecewise, float(piecewise.endpoint(2 * n + 1)))
        assert top >= 1.05 - 1e-9


def test_sup_psi_of_the_unit_uniform():
    top, _ = sup_psi(uniform(0.0, 1.0), 0.4)
    assert top == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("lam", [1e-2, 1e-3, 1e-4])
def test_sup_psi_of_sine_stays_below_three_quarters(sine, lam):
    top, mu = sup_psi(sine, lam)
    assert top < 0.75 + 1e-6
    assert 0.0 <= mu <= 1.0


def test_sup_psi_bound_periodic(sine):
    lam = 1e-3
    top, _ = sup_psi(sine, lam)
    assert top <= sup_psi_bound_periodic(sine, lam)
    assert sup_psi_bound_periodic(sine, lam) == pytest.approx(0.5 + 2.0 * 4.0 * lam)


# envelope functions


def test_g_tilde_inverse_examples():
    assert g_tilde_inverse(EnvelopeFunction.from_callable(lambda s: np.ones_like(s)), 0.7) == pytest.approx(0.7, abs=1e-10)
    assert g_tilde_inverse(EnvelopeFunction.from_callable(lambda s: s), 0.09) == pytest.approx(0.3, abs=1e-10)
    two_branch = EnvelopeFunction.from_callable(lambda s: np.minimum(s, 0.5))
    assert g_tilde_inverse(two_branch, 0.3) == pytest.approx(0.6, abs=1e-10)
    assert g_tilde_inverse(two_branch, 0.0) == 0.0


def test_g_tilde_inverse_outside_the_table():
    g = EnvelopeFunction(s_grid=np.array([0.0, 0.5]), g_values=np.array([0.5, 1.0]), s_max=1.0)
    assert g_tilde_inverse(g, 0.5) == pytest.approx(0.5, abs=1e-10)
    with pytest.raises(EnvelopeRangeException, match="outside the range"):
        g_tilde_inverse(g, 1.5)


def test_chi_bar_examples():
    one = EnvelopeFunction.from_callable(lambda s: np.ones_like(s))
    identity = EnvelopeFunction.from_callable(lambda s: s)
    assert chi_bar(one, 0.0) == 0.0
    assert chi_bar(one, 1.0) == pytest.approx(math.sqrt(2.0 / math.pi), abs=1e-10)
    assert chi_bar(identity, 1.0) == pytest.approx((2.0 / math.pi) ** 0.25, abs=1e-10)


def test_condition_bound_from_h():
    np.testing.assert_allclose(condition_bound_from_h(lambda x: x, [1.0, 2.0]), [0.25, 0.5])


def test_fitted_envelope_dominates_the_pointwise_bound(ramp):
    report = check_averaging_condition(ramp, n_lambda=30, n_mu=21)
    assert report.holds_1_5
    pairs = report.g_from_pointwise
    assert len(pairs) > 0
    assert np.all(pairs[:, 0] <= 0.25)
    # with f = x, h(s/2)/2 is close to 3/8 and the fitted g close to 1
    assert np.all(np.asarray(report.g_envelope(pairs[:, 0])) >= pairs[:, 1] - 1e-9)
    np.testing.assert_allclose(pairs[:, 1], condition_bound_from_h(check_pointwise_condition(ramp)[2], pairs[:, 0]))
    assert report.to_json()["g_from_pointwise"][0] == [pytest.approx(pairs[0, 0]), pytest.approx(pairs[0, 1])]


def test_no_pointwise_bound_without_a_witness(sine):
    report = check_averaging_condition(sine, n_lambda=12, n_mu=11)
    assert report.g_from_pointwise is None
    assert report.to_json()["g_from_pointwise"] is None


@pytest.mark.parametrize(
    "g",
    [
        EnvelopeFunction.from_callable(lambda s: np.minimum(0.2 + s, 0.9)),
        EnvelopeFunction(s_grid=np.array([0.0, 0.1, 0.3]), g_values=np.array([0.2, 0.4, 0.7]), s_max=1.0),
    ],
)
def test_g_tilde_inverse_undoes_g_tilde(g):
    for s in np.linspace(0.01, 0.99, 25):
        assert g_tilde_inverse(g, g.tilde(s)) == pytest.approx(s, abs=1e-9)


def test_fit_envelope_is_nondecreasing_and_drops_empty_bins():
    rng = np.random.default_rng(5)
    s = np.geomspace(1e-6, 1e-2, 500)
    values = 0.5 + 0.2 * rng.random(500)
    g = fit_envelope(s, values, 1e-6, 2e-2)
    assert np.all(np.diff(g.g_values) >= 0)
    assert g.minimum == pytest.approx(1.0 - values.max())
    # no samples in (1e-2, 2e-2]
    assert g.s_grid[-1] <= 1e-2


# pointwise and moment conditions


def test_pointwise_condition_examples(piecewise, sine, ramp):
    holds, witness, _ = check_pointwise_condition(piecewise)
    assert not holds
    assert piecewise.pdf(witness) == 1.05

    holds, witness, _ = check_pointwise_condition(sine)
    assert not holds
    assert sine.pdf(witness) == pytest.approx(1.0, abs=1e-9)

    holds, witness, h = check_pointwise_condition(ramp)
    assert holds
    assert witness is None
    assert np.all(h.g_values[1:] > 0)


def test_pointwise_witness_is_nondecreasing(ramp, sine):
    for d in (ramp, sine):
        _, _, h = check_pointwise_condition(d)
        assert np.all(np.diff(h.g_values) >= 0)
        assert h.g_values[0] == 0.0

    # 1 - max f is 3/4 on (1/8, 1/4] and larger on every inner window
    _, _, h = check_pointwise_condition(ramp, x_max=0.25)
    assert h(0.2) == pytest.approx(0.75, abs=1e-9)
    for x in np.geomspace(1e-6, 0.25, 50):
        assert h(x) <= 1.0 - ramp.pdf(x) + 1e-9


def test_pointwise_witness_takes_the_smallest_margin_so_far():
    # f = 0.9 on [0.08, 0.1] inside the window (1/16, 1/8], 0.2 elsewhere; unit mass
    grid = np.array([0.0, 0.08, 0.08 + 1e-9, 0.1, 0.1 + 1e-9, 4.93])
    values = np.array([0.2, 0.2, 0.9, 0.9, 0.2, 0.2])
    holds, _, h = check_pointwise_condition(TabulatedDensity(grid, values), x_max=0.25)
    assert holds
    # raw margins 0.8, 0.1, 0.8, ... as k grows
    assert h(0.2) == pytest.approx(0.8, abs=1e-6)
    assert h(0.09) == pytest.approx(0.1, abs=1e-6)
    assert h(0.04) == pytest.approx(0.1, abs=1e-6)


def test_moment_condition_examples(piecewise, sine):
    f_le_1, moment = check_moment_condition(sine)
    assert f_le_1
    assert 0.0 < moment < sine.a

    f_le_1, moment = check_moment_condition(piecewise)
    assert not f_le_1
    assert math.isfinite(moment)

    f_le_1, moment = check_moment_condition(build_gaussian_path(0.5, math.sqrt(2.0), 129, seed=2))
    assert f_le_1
    assert math.isfinite(moment)


# averaging condition


def test_averaging_condition_fails_for_piecewise(piecewise):
    # the default lambda grid is fine enough to land near every a_{2n+1}
    report = check_averaging_condition(piecewise, n_mu=21)
    assert not report.holds_1_7
    assert report.worst_psi[0][2] > 1.0
    assert report.margin_1_7 < 0


def test_averaging_condition_holds_for_sine(sine):
    report = check_averaging_condition(sine, n_lambda=40, n_mu=21)
    assert report.holds_1_7
    assert report.lambda0 == pytest.approx(1e-2)
    assert report.g_envelope.minimum >= 0.25 - 1e-6
    assert not report.holds_1_5
    assert report.holds_1_6

    data = report.to_json()
    assert data["holds_1_7"] is True
    assert len(data["sup_psi_per_lambda"]) == 40


def test_averaging_condition_holds_for_ramp(ramp):
    report = check_averaging_condition(ramp, n_lambda=30, n_mu=21)
    assert report.holds_1_5
    assert report.holds_1_7


def test_averaging_condition_rejects_small_candidate(sine):
    with pytest.raises(ValueError):
        check_averaging_condition(sine, lambda0_candidate=1e-7)


def test_averaging_condition_is_thread_independent(sine):
    one = check_averaging_condition(sine, n_lambda=12, n_mu=11, threads=1)
    four = check_averaging_condition(sine, n_lambda=12, n_mu=11, threads=4)
    np.testing.assert_array_equal(one.sup_psi_per_lambda, four.sup_psi_per_lambda)
    np.testing.assert_array_equal(one.g_envelope.g_values, four.g_envelope.g_values)
