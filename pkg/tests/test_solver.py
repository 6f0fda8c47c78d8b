import math
import os
import sys
from fractions import Fraction

import numpy as np
import pytest

# Add the project root to Python path so we can import from src
sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from densities.piecewise import make_piecewise
from densities.tabulated import TabulatedDensity, uniform
from src.solver import (
    FrontierPath,
    PicardConfig,
    SolverConfig,
    SolverConfigException,
    compute_Y_samples,
    continuum_initial_jump,
    detect_jumps,
    discrete_initial_jump,
    physical_jump_bruteforce,
    physical_jump_scan,
    picard_minimal,
    simulate_particles,
)

HALF = Fraction(1, 2)
# leading term of the discrete-monitoring bias of a Brownian running max, in units of sqrt(dt)
MONITORING_BIAS = 0.5826


@pytest.fixture(scope="module")
def piecewise():
    return make_piecewise(HALF, Fraction(21, 20), HALF, HALF)


def flat_frontier(t_grid, value=0.0):
    lam = np.full(len(t_grid), value)
    return FrontierPath(t_grid=t_grid, lam=lam, stderr=np.zeros_like(lam))


# cascades


@pytest.mark.parametrize(
    "values, expected",
    [
        ([0.3, 0.5, 0.7, 0.9], Fraction(0)),
        ([-0.05, 0.3, 0.6, 0.9], Fraction(1, 4)),
        ([-0.05, 0.1, 0.4, 0.6], Fraction(1)),
        ([-0.1, 0.2, 0.26, 0.9], Fraction(3, 4)),
    ],
)
def test_physical_jump_examples(values, expected):
    assert physical_jump_scan(values, 4) == expected
    assert physical_jump_bruteforce(values, 4) == expected


def test_particles_above_one_never_join_a_cascade():
    assert physical_jump_scan([-0.1, 0.1, 0.2, 5.0], 4) == Fraction(3, 4)


def test_scan_matches_bruteforce_on_random_ensembles():
    rng = np.random.default_rng(2024)
    checked = 0
    while checked < 1000:
        n = int(rng.integers(2, 65))
        values = rng.uniform(-0.2, 1.2, n)
        # the oracle cannot resolve particles closer than its step to some k/n
        gaps = np.abs(values[:, None] - np.arange(n + 1)[None, :] / n)
        if gaps.min() < 2e-6:
            continue
        assert physical_jump_scan(values, n) == physical_jump_bruteforce(values, n)
        checked += 1


# time-0 jump


def test_initial_jump_full_cascade():
    d = uniform(0.0, 0.5)
    assert discrete_initial_jump(d, 1000) == 1000
    assert continuum_initial_jump(d) == 1.0

    frontier, ensemble = simulate_particles(d, SolverConfig(n_particles=1000, dt=1e-3, T=0.01))
    assert frontier.initial_jump == 1.0
    assert np.all(frontier.lam == 1.0)
    assert ensemble.dead_fraction == 1.0


def test_initial_jump_none():
    d = uniform(0.0, 2.0)
    assert discrete_initial_jump(d, 1000) == 0
    assert continuum_initial_jump(d) == 0.0

    frontier, _ = simulate_particles(d, SolverConfig(n_particles=1000, dt=1e-3, T=0.01))
    assert frontier.initial_jump == 0.0


def test_continuum_initial_jump_partial():
    # f = 2 on [0, 0.3], then 0.2 up to 2.3: F(x) = x at x = 0.675
    d = TabulatedDensity([0.0, 0.3, 0.3 + 1e-9, 2.3], [2.0, 2.0, 0.2, 0.2])
    root = continuum_initial_jump(d)
    assert root == pytest.approx(0.675, abs=1e-6)
    assert d.cdf(root) == pytest.approx(root, abs=1e-9)


# particle scheme


def test_far_density_is_not_absorbed():
    cfg = SolverConfig(n_particles=10_000, dt=5e-4, T=0.1, seed=1)
    frontier, _ = simulate_particles(uniform(10.0, 11.0), cfg)
    assert frontier.lam[-1] <= 1e-3


def test_particle_frontier_invariants(piecewise):
    cfg = SolverConfig(n_particles=20_000, dt=1e-3, T=0.05, seed=4)
    frontier, ensemble = simulate_particles(piecewise, cfg)
    assert np.all(np.diff(frontier.lam) >= 0)
    assert np.all((frontier.lam >= 0) & (frontier.lam <= 1))
    assert ensemble.dead_fraction == frontier.lam[-1]
    assert np.all(ensemble.positions[ensemble.alive] > 0)
    assert np.all(np.isfinite(ensemble.death_time[~ensemble.alive]))
    np.testing.assert_allclose(frontier.alive_fraction + frontier.lam, 1.0)


def test_particle_frontier_is_thread_independent(piecewise):
    cfg = SolverConfig(n_particles=20_000, dt=1e-3, T=0.02, seed=9, bridge_correction=True)
    one, _ = simulate_particles(piecewise, cfg, threads=1)
    four, _ = simulate_particles(piecewise, cfg, threads=4)
    np.testing.assert_array_equal(one.lam, four.lam)


def test_bridge_correction_kills_at_least_as_many(piecewise):
    plain, _ = simulate_particles(piecewise, SolverConfig(n_particles=50_000, dt=1e-3, T=0.05, seed=2))
    bridged, _ = simulate_particles(
        piecewise, SolverConfig(n_particles=50_000, dt=1e-3, T=0.05, seed=2, bridge_correction=True)
    )
    se = math.sqrt(2.0) * plain.stderr[-1]
    assert bridged.lam[-1] >= plain.lam[-1] - 3.0 * se


def test_uniform_small_time_slope():
    # Lambda_t ~ E[F(sqrt(t) |N|)] = sqrt(t) sqrt(2/pi) / 2 as t -> 0
    cfg = SolverConfig(n_particles=50_000, dt=1e-5, T=0.01, seed=5)
    frontier, _ = simulate_particles(uniform(0.0, 2.0), cfg)
    t = frontier.t_grid[-1]
    expected = math.sqrt(t) * math.sqrt(2.0 / math.pi) / 2.0
    bias = 0.5 * MONITORING_BIAS * math.sqrt(cfg.dt)
    se = frontier.stderr[-1]
    # feedback from Lambda only pushes the frontier up, by O(t)
    assert expected - bias - 3.0 * se <= frontier.lam[-1] <= 1.5 * expected


# running maxima


def test_running_max_of_brownian_motion():
    t_grid = np.linspace(0.0, 0.01, 1001)
    y = compute_Y_samples(flat_frontier(t_grid), 20_000, seed=3, t_indices=[1000])
    se = y[:, 0].std() / math.sqrt(len(y))
    expected = math.sqrt(2.0 * 0.01 / math.pi)
    bias = MONITORING_BIAS * math.sqrt(1e-5)
    assert expected - bias - 3.0 * se <= y[:, 0].mean() <= expected + 3.0 * se


def test_running_max_starts_at_lambda():
    t_grid = np.linspace(0.0, 0.1, 101)
    y = compute_Y_samples(flat_frontier(t_grid, 0.3), 5000, seed=1)
    assert np.all(y[:, 0] == 0.3)
    assert np.all(y >= 0.3)
    assert np.all(np.diff(y, axis=1) >= 0)


def test_running_max_is_monotone_in_lambda():
    t_grid = np.linspace(0.0, 0.1, 101)
    low = flat_frontier(t_grid)
    low.lam = np.sqrt(t_grid) / 4.0
    high = flat_frontier(t_grid)
    high.lam = np.sqrt(t_grid) / 2.0
    y_low = compute_Y_samples(low, 5000, seed=8)
    y_high = compute_Y_samples(high, 5000, seed=8)
    assert np.all(y_low <= y_high)


def test_running_max_is_thread_independent():
    t_grid = np.linspace(0.0, 0.1, 201)
    one = compute_Y_samples(flat_frontier(t_grid), 20_000, seed=6, threads=1)
    four = compute_Y_samples(flat_frontier(t_grid), 20_000, seed=6, threads=4)
    np.testing.assert_array_equal(one, four)


# Picard iteration


def test_picard_first_iterate_for_uniform():
    cfg = SolverConfig(dt=1e-5, T=0.01, seed=7, picard=PicardConfig(n_paths=20_000, max_iters=1))
    frontier, iterations, history = picard_minimal(uniform(0.0, 2.0), cfg)
    assert iterations == 1
    assert not frontier.converged
    lam1 = history[1][-1]
    expected = 0.1 * math.sqrt(2.0 / math.pi) / 2.0
    bias = 0.5 * MONITORING_BIAS * math.sqrt(cfg.dt)
    se = frontier.stderr[-1]
    assert expected - bias - 3.0 * se <= lam1 <= expected + 3.0 * se
    assert history[1][0] == 0.0


def test_picard_iterates_increase(piecewise):
    cfg = SolverConfig(
        dt=1e-3, T=0.05, seed=3, picard=PicardConfig(n_paths=4000, max_iters=15, tol=1e-9)
    )
    _, _, history = picard_minimal(piecewise, cfg)
    steps = np.diff(np.stack(history), axis=0)
    assert np.all(steps >= 0)


def test_picard_is_thread_independent(piecewise):
    cfg = SolverConfig(dt=1e-3, T=0.02, seed=3, picard={"n_paths": 20_000, "max_iters": 3})
    one, _, _ = picard_minimal(piecewise, cfg, threads=1)
    four, _, _ = picard_minimal(piecewise, cfg, threads=4)
    np.testing.assert_array_equal(one.lam, four.lam)


@pytest.mark.slow
def test_picard_converges_and_matches_particles(piecewise):
    cfg = SolverConfig(
        n_particles=100_000,
        dt=5e-4,
        T=0.25,
        seed=0,
        picard=PicardConfig(n_paths=100_000, max_iters=50, tol=1e-3),
    )
    picard, iterations, history = picard_minimal(piecewise, cfg, threads=4)
    assert picard.converged
    assert iterations <= 50
    assert np.all(np.diff(np.stack(history), axis=0) >= 0)

    particles, _ = simulate_particles(piecewise, cfg, threads=4)
    assert np.max(np.abs(particles.lam - picard.lam)) < 0.02


# config and frontier plumbing


def test_solver_config_validation():
    with pytest.raises(SolverConfigException, match="dt"):
        SolverConfig(dt=0.0)
    with pytest.raises(SolverConfigException, match="n_particles"):
        SolverConfig(n_particles=0)
    with pytest.raises(SolverConfigException, match="tol"):
        SolverConfig(picard={"tol": 0.0})
    with pytest.raises(SolverConfigException, match="unknown solver config field"):
        SolverConfig.from_json({"n_particles": 10, "particles": 1})


def test_solver_config_grid_and_threshold():
    cfg = SolverConfig(n_particles=100, dt=0.01, T=0.25)
    assert cfg.n_steps == 25
    assert cfg.t_grid[-1] == 0.25
    assert cfg.threshold(100) == pytest.approx(max(5 / 100, 10 * math.sqrt(0.01)))
    assert SolverConfig.from_json(cfg.to_json()) == cfg


def test_default_threshold_follows_the_grid():
    cfg = SolverConfig(n_particles=100, dt=0.03, T=0.05)
    # T is split into two equal steps of 0.025
    assert cfg.threshold(10**6) == pytest.approx(10 * math.sqrt(0.025))
    assert cfg.threshold(10**6, np.array([0.0, 1e-4, 2e-4])) == pytest.approx(0.1)
    assert SolverConfig(jump_threshold=0.2).threshold(10) == 0.2


def test_detect_jumps():
    t_grid = np.array([0.0, 0.1, 0.2])
    lam = np.array([0.3, 0.31, 0.5])
    assert [t for t, _ in detect_jumps(t_grid, lam, 0.1)] == [0.0, 0.2]
