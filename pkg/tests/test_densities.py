import json
import math
import os
import sys
from fractions import Fraction

import numpy as np
import pytest
from scipy.special import sici
from scipy.stats import ks_2samp

# Add the project root to Python path so we can import from src
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from densities.density import InvalidDensityException
from densities.gaussian_path import (
    GaussianPathDensity,
    build_gaussian_path,
    lil_envelope,
    lil_touch_fraction,
    sample_fbm_paths,
    scaling_ks_pvalue,
)
from densities.loader import load_density, read_density
from densities.periodic import TabulatedProfile, make_periodic
from densities.piecewise import PiecewiseGeometricDensity, make_piecewise
from densities.tabulated import TabulatedDensity, uniform

HALF = Fraction(1, 2)


@pytest.fixture(scope="module")
def piecewise():
    return make_piecewise(HALF, Fraction(21, 20), HALF, HALF)


@pytest.fixture(scope="module")
def sine():
    return make_periodic(1.0)


def sine_cdf(x):
    # int_0^x (1 + sin(1/y)) / 2 dy = x/2 + (x sin(1/x) - Ci(1/x)) / 2
    _, ci = sici(1.0 / x)
    return x / 2.0 + (x * np.sin(1.0 / x) - ci) / 2.0


# piecewise family


def test_piecewise_constants(piecewise):
    assert piecewise.beta1 == Fraction(41, 60)
    assert piecewise.beta2 == Fraction(13, 15)
    assert piecewise.admissibility_bound == Fraction(5, 4)
    assert piecewise.admissible
    assert piecewise.a1 == Fraction(60, 41)


def test_piecewise_admissibility_flags(caplog):
    assert make_piecewise(HALF, Fraction(9, 8), HALF, HALF).beta2 == Fraction(11, 12)
    assert make_piecewise(HALF, Fraction(9, 8), HALF, HALF).admissible

    d = make_piecewise(HALF, Fraction(3, 2), HALF, HALF)
    assert not d.admissible
    assert "violates" in caplog.text


@pytest.mark.parametrize(
    "params",
    [
        (Fraction(3, 2), Fraction(21, 20), HALF, HALF),
        (HALF, Fraction(9, 10), HALF, HALF),
        (HALF, Fraction(21, 20), 0, HALF),
        (HALF, Fraction(21, 20), HALF, 1),
    ],
)
def test_piecewise_rejects_out_of_range(params):
    with pytest.raises(InvalidDensityException):
        PiecewiseGeometricDensity(*params)


def test_piecewise_pdf_bands(piecewise):
    a1 = float(piecewise.a1)
    assert piecewise.pdf(0.99 * a1) == 0.5
    assert piecewise.pdf(float(piecewise.endpoint(3)) * 1.01) == 1.05
    assert piecewise.pdf(a1) == 0.0
    assert piecewise.pdf(-1.0) == 0.0


def test_piecewise_cdf_examples(piecewise):
    a2 = piecewise.endpoint(2)
    assert a2 == Fraction(30, 41)
    assert piecewise.cdf_rational(a2) == Fraction(26, 41)
    assert piecewise.cdf(float(a2)) == pytest.approx(26 / 41, abs=1e-14)
    assert piecewise.cdf(0.0) == 0.0
    assert piecewise.cdf(60 / 41) == 1.0


def test_piecewise_integral_matches_cdf(piecewise):
    a2 = float(piecewise.endpoint(2))
    assert piecewise.integral(0.0, a2) == pytest.approx(26 / 41, abs=1e-14)
    np.testing.assert_allclose(piecewise.integral(np.array([0.1, 0.2]), a2), 26 / 41 - piecewise.cdf(np.array([0.1, 0.2])), atol=1e-14)


def test_piecewise_quantile_examples(piecewise):
    assert piecewise.quantile(1.0) == pytest.approx(60 / 41, abs=1e-14)
    assert piecewise.quantile(26 / 41) == pytest.approx(30 / 41, abs=1e-13)


def test_piecewise_float_cdf_matches_rational(piecewise):
    xs = np.linspace(1e-6, float(piecewise.a1), 997)
    exact = np.array([float(piecewise.cdf_rational(Fraction(x))) for x in xs])
    np.testing.assert_allclose(piecewise.cdf(xs), exact, atol=1e-13)


def test_piecewise_cdf_at_band_endpoints(piecewise):
    for k in range(1, 41):
        beta = piecewise.beta1 if k % 2 == 1 else piecewise.beta2
        a_k = piecewise.endpoint(k)
        assert piecewise.cdf_rational(a_k) == beta * a_k


def test_piecewise_cdf_is_monotone(piecewise):
    xs = np.sort(np.concatenate([np.geomspace(1e-16, 1.5, 20_000), np.linspace(0, 1.5, 20_000)]))
    assert np.all(np.diff(piecewise.cdf(xs)) >= 0)


def test_piecewise_first_moment(piecewise):
    xs = np.linspace(0.0, float(piecewise.a1), 2_000_001)
    riemann = np.trapezoid(xs * piecewise.pdf(xs), xs)
    assert piecewise.first_moment() == pytest.approx(riemann, rel=1e-4)


def test_violation_witness_hits_alpha2(piecewise):
    for n in range(1, 11):
        lam, mu = piecewise.violation_witness(n)
        assert mu == 1
        assert piecewise.psi_rational(lam, mu) == Fraction(21, 20)


def test_violation_witness_needs_small_q():
    d = make_piecewise(HALF, Fraction(21, 20), HALF, Fraction(2, 3))
    with pytest.raises(InvalidDensityException):
        d.violation_witness(1)


# periodic family


def test_periodic_constant_profiles():
    assert make_periodic(1.0, {"constant": 1.0}).a == pytest.approx(1.0, abs=1e-10)
    assert make_periodic(1.0, {"constant": 0.0}).a == pytest.approx(2.0, abs=1e-10)


def test_periodic_sine_normalization(sine):
    assert abs(sine_cdf(sine.a) - 1.0) < 1e-8


def test_periodic_sine_cdf_matches_closed_form(sine):
    xs = np.array([1e-4, 1e-3, 0.01, 0.05, 0.2, 0.5, 0.9 * sine.a])
    np.testing.assert_allclose(sine.raw_cdf(xs), sine_cdf(xs), atol=1e-10)


def test_periodic_sine_pdf(sine):
    assert sine.pdf(2.0 / math.pi) == pytest.approx(1.0, abs=1e-15)
    assert sine.pdf(0.0) == 0.5
    assert sine.pdf(sine.a * 1.01) == 0.0


def test_periodic_sup_pdf_finds_the_peaks(sine):
    top, at = sine.sup_pdf(0.01, 0.02)
    assert top == 1.0
    assert 0.01 <= at <= 0.02
    assert sine.pdf(at) == pytest.approx(1.0, abs=1e-12)


def test_periodic_tabulated_profile_matches_sine():
    u = np.linspace(0.0, 2.0 * math.pi, 4096, endpoint=False)
    tab = make_periodic(1.0, TabulatedProfile(2.0 * math.pi, np.sin(u)))
    assert tab.a == pytest.approx(make_periodic(1.0).a, abs=1e-5)


def test_periodic_rejects_bad_alpha():
    with pytest.raises(InvalidDensityException):
        make_periodic(0.0)


# gaussian path family


def test_fbm_starts_at_zero_and_has_brownian_variance():
    grid = np.linspace(0.0, 1.0, 11)
    paths = sample_fbm_paths(grid, 0.5, 10_000, seed=3)
    assert np.all(paths[:, 0] == 0.0)
    np.testing.assert_allclose(paths[:, 1:].var(axis=0), grid[1:], rtol=0.05)


def test_gaussian_path_matches_lil_formula():
    grid = np.linspace(0.0, 1.0, 201)
    path = np.zeros_like(grid)
    d = GaussianPathDensity(grid, path, 0.5, math.sqrt(2.0))
    assert not d.rescaled

    inner = (grid > 0) & (grid < 1)
    x = grid[inner]
    expected = np.clip(1.0 - np.sqrt(2.0 * x * np.abs(np.log(np.abs(np.log(x))))), 0.0, 1.0)
    np.testing.assert_allclose(d.pdf(x), expected, atol=1e-12)
    assert d.pdf(0.0) == 1.0
    assert d.cdf(1e6) == pytest.approx(1.0, abs=1e-12)


def test_lil_envelope_endpoints():
    kappa = lil_envelope(np.array([0.0, 0.5, 1.0]), 0.5, 1.0)
    assert kappa[0] == 0.0
    assert math.isinf(kappa[2])


def test_gaussian_path_tail_moments():
    d = build_gaussian_path(0.5, math.sqrt(2.0), 257, seed=11)
    assert d.core_mass + d.tail_mass == pytest.approx(1.0, abs=1e-12)
    assert d.quantile(d.cdf(1.7)) == pytest.approx(1.7, rel=1e-9)
    assert d.max_level() <= 1.0


def test_lil_touches_a_majority_of_seeds_below_one_half():
    assert lil_touch_fraction(0.5, math.sqrt(2.0), 1025, 0.5) > 0.5


@pytest.mark.slow
def test_lil_touch_fraction_shrinks_with_eps_and_beta():
    root2 = math.sqrt(2.0)
    near_zero = lil_touch_fraction(0.5, root2, 1025, 0.1)
    # on a finite grid the envelope near 0 is only a couple of standard deviations
    assert 0.1 <= near_zero <= 0.5
    assert near_zero <= lil_touch_fraction(0.5, root2, 1025, 0.5)
    assert lil_touch_fraction(0.5, 1.0, 1025, 0.1) >= near_zero >= lil_touch_fraction(0.5, 2.0, 1025, 0.1)


@pytest.mark.parametrize("hurst", [0.5, 0.7])
def test_fbm_is_self_similar(hurst):
    assert scaling_ks_pvalue(hurst, 0.25) > 0.01


def test_wrong_scaling_is_rejected():
    grid = np.array([0.0, 0.25, 1.0])
    scaled = sample_fbm_paths(grid, 0.5, 5000, seed=0)[:, 1] / 0.25
    plain = sample_fbm_paths(grid, 0.5, 5000, seed=1)[:, 2]
    assert ks_2samp(scaled, plain).pvalue < 1e-6
    with pytest.raises(InvalidDensityException):
        scaling_ks_pvalue(0.5, 1.5)


# tabulated family and loader


def test_uniform_quantile_and_moment():
    d = uniform(0.0, 2.0)
    assert d.quantile(0.5) == pytest.approx(1.0)
    assert d.first_moment() == pytest.approx(1.0)
    assert d.cdf(0.5) == pytest.approx(0.25)


def test_tabulated_rescales_mass(caplog):
    d = TabulatedDensity([0.0, 1.0], [2.0, 2.0])
    assert d.cdf(1.0) == 1.0
    assert "rescaling" in caplog.text


def test_tabulated_rejects_bad_grid():
    with pytest.raises(InvalidDensityException):
        TabulatedDensity([0.0, 0.0], [1.0, 1.0])
    with pytest.raises(InvalidDensityException):
        TabulatedDensity([0.0, 1.0], [1.0, -1.0])


def test_loader_round_trips_specs(piecewise, tmp_path):
    loaded = load_density(piecewise.to_spec())
    assert loaded.alpha2 == piecewise.alpha2

    (tmp_path / "f.csv").write_text("x,f\n0,0.5\n2,0.5\n")
    (tmp_path / "d.json").write_text(json.dumps({"family": "tabulated", "csv": "f.csv"}))
    d = read_density(tmp_path / "d.json")
    assert d.cdf(1.0) == pytest.approx(0.5)


def test_loader_names_missing_fields():
    with pytest.raises(InvalidDensityException, match='"alpha2"'):
        load_density({"family": "piecewise", "alpha1": "1/2", "p": "1/2", "q": "1/2"})
    with pytest.raises(InvalidDensityException, match="unknown density family"):
        load_density({"family": "lognormal"})


# every family


@pytest.mark.parametrize("family", ["piecewise", "sine", "gaussian_path", "uniform"])
def test_cdf_undoes_quantile(family, piecewise, sine):
    d = {
        "piecewise": piecewise,
        "sine": sine,
        "gaussian_path": build_gaussian_path(0.5, math.sqrt(2.0), 257, seed=11),
        "uniform": uniform(0.0, 2.0),
    }[family]
    u = (np.arange(1000) + 0.5) / 1000
    np.testing.assert_allclose(d.cdf(d.quantile(u)), u, atol=1e-9)
