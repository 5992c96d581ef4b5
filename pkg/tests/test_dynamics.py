import math

import numpy as np
import pytest

from sweeplab.catalog import catalog_entry
from sweeplab.desing import sigma_from_talweg
from sweeplab.dynamics import (
    OrbitError,
    catching_up,
    catching_up_on,
    excess_estimate,
    piecewise_catching_up,
    refine_to_orbit,
    sequence_table,
    talweg_chasing,
    total_length,
    velocity_check,
)
from sweeplab.process import ProcessError, project

DISK = catalog_entry("shrinking_disk").build()
GROW = catalog_entry("expanding_disk").build()
BALL = catalog_entry("moving_ball").build()
QUAD = catalog_entry("sublevel_quadratic").build()
OSC = catalog_entry("oscillatory_interval").build()


def test_shrinking_disk_sequence():
    seq = catching_up(DISK, 0.0, 0.5, 10, [1.0, 0.0])
    t = 0.05 * np.arange(11)
    assert np.allclose(seq.times, t, atol=1e-15)
    assert np.allclose(seq.points, np.column_stack([1 - t, 0 * t]), atol=1e-15)
    assert seq.length == pytest.approx(0.5, abs=1e-14)


def test_expanding_disk_sequence_is_still():
    seq = catching_up(GROW, 0.0, 1.0, 16, [1.0, 0.0])
    assert np.all(seq.points == [1.0, 0.0]) and seq.length == 0.0


def test_moving_ball_trailing_point():
    seq = catching_up(BALL, 0.0, 1.0, 20, [-1.0, 0.0])
    assert np.allclose(seq.points[:, 0], seq.times - 1.0, atol=1e-14)
    assert seq.length == pytest.approx(1.0, abs=1e-13)


def test_sequence_invariants():
    seq = catching_up(QUAD, -0.25, -0.01, 64, [0.3, 0.4])
    for i in range(len(seq.times) - 1):
        assert np.allclose(seq.points[i + 1], project(QUAD, seq.times[i + 1], seq.points[i]), atol=1e-12)
    assert seq.length >= np.linalg.norm(seq.points[-1] - seq.points[0]) - 1e-15
    tab = sequence_table(seq)
    assert tab.shape == (65, 4) and tab[0, -1] == 0.0


def test_bad_inputs():
    with pytest.raises(ProcessError):
        catching_up(DISK, 0.0, 0.5, 10, [2.0, 0.0])
    with pytest.raises(ValueError):
        catching_up(DISK, 0.0, 0.5, 0, [0.0, 0.0])
    with pytest.raises(ValueError):
        catching_up_on(DISK, [0.0, 0.2, 0.1], [0.0, 0.0])


def test_piecewise_examples():
    runs = piecewise_catching_up(DISK, [((0.0, 0.2), 8, [1.0, 0.0]), ((0.2, 0.4), 8, [0.0, 0.8])])
    assert total_length(runs) == pytest.approx(0.4, abs=1e-14)
    single = piecewise_catching_up(DISK, [((0.0, 0.3), 5, [0.0, 1.0])])
    assert single[0].length == pytest.approx(catching_up(DISK, 0.0, 0.3, 5, [0.0, 1.0]).length)
    with pytest.raises(ValueError):
        piecewise_catching_up(DISK, [((0.0, 0.2), 4, [1.0, 0.0]), ((0.3, 0.4), 4, [0.6, 0.0])])
    with pytest.raises(ProcessError):
        piecewise_catching_up(DISK, [((0.0, 0.2), 4, [1.0, 0.0]), ((0.2, 0.4), 4, [0.9, 0.0])])


def test_oscillatory_chasing_dominates_negative_variation():
    t = np.linspace(0.1, 0.3, 20001)
    run = talweg_chasing(OSC, t)
    h = t ** 2 * (2 + np.sin(1 / t ** 2))
    nv = np.sum(np.maximum(0.0, -np.diff(h)))
    assert run.total >= nv - 1e-12


def test_refine_examples():
    o = refine_to_orbit(DISK, 0.0, 0.5, [1.0, 0.0], tol=1e-6)
    assert o.length == pytest.approx(0.5, abs=1e-14) and o.residual <= 1e-14 and o.steps == 128
    o = refine_to_orbit(QUAD, -0.25, -0.01, [0.5, 0.0])
    assert abs(o.length - 0.4) <= 1e-3
    assert refine_to_orbit(GROW, 0.0, 1.0, [0.5, 0.0]).length == 0.0


def test_refine_reports_missing_orbit():
    with pytest.raises(OrbitError, match="no convergent orbit detected"):
        refine_to_orbit(BALL, 0.0, 1.0, [-0.6, 0.8], tol=1e-12, max_steps=2 ** 10)


def test_velocity_examples():
    o = refine_to_orbit(DISK, 0.0, 0.5, [1.0, 0.0])
    assert velocity_check(DISK, o).max_deviation <= 1e-9
    o = refine_to_orbit(GROW, 0.0, 1.0, [1.0, 0.0])
    assert velocity_check(GROW, o).max_deviation == 0.0


def test_excess_examples():
    ex, _ = excess_estimate(DISK, 0.0, 0.2, 128)
    assert ex == pytest.approx(0.2, abs=1e-12)
    ex, _ = excess_estimate(GROW, 0.0, 0.2, 128)
    assert ex == 0.0
    _, haus = excess_estimate(BALL, 0.0, 0.3, 128)
    assert haus == pytest.approx(0.3, abs=1e-12)


def test_sequence_lengths_approach_orbit_length_monotonically():
    # off-axis start on the moving ball: first-order convergence from below
    o = refine_to_orbit(BALL, 0.0, 1.0, [-0.6, 0.8], tol=1e-5)
    gaps = [abs(catching_up(BALL, 0.0, 1.0, 2 ** k, [-0.6, 0.8]).length - o.length) for k in range(3, 9)]
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_catching_up_stays_under_sigma():
    sig = sigma_from_talweg(QUAD, -0.25, 0.0)
    rng = np.random.default_rng(5)
    for _ in range(5):
        t = np.sort(rng.uniform(-0.25, -1e-3, rng.integers(3, 40)))
        th = rng.uniform(0, 2 * math.pi)
        x0 = math.sqrt(-t[0]) * np.array([math.cos(th), math.sin(th)])
        seq = catching_up_on(QUAD, t, x0)
        assert seq.length <= sig(t[-1]) - sig(t[0]) + 1e-3
