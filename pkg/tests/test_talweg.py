import math

import numpy as np
import pytest

from sweeplab.catalog import catalog, catalog_entry
from sweeplab.field_expr import parse_field
from sweeplab.talweg import (
    CONVERGENT,
    DIVERGENT_A,
    CriticalValueError,
    TalwegTable,
    cumulative_talweg,
    integrate_talweg,
    sample_talweg,
    talweg_at,
)

DISK = catalog_entry("shrinking_disk").build()
QUAD = catalog_entry("sublevel_quadratic").build()
OSC = catalog_entry("oscillatory_interval").build()
GROW = catalog_entry("expanding_disk").build()

H = parse_field("t^2*(2+sin(1/t^2))", 1)


def h_prime(t):
    return float(H.jet(t, [0.0]).dt)


@pytest.mark.parametrize("t", [0.0, 0.3, 0.6, 0.9])
def test_shrinking_disk_talweg_is_one(t):
    p = talweg_at(DISK, t, 64)
    assert p.phi_up == pytest.approx(1.0, abs=1e-12)
    assert np.linalg.norm(p.point) == pytest.approx(1.0 - t, abs=1e-12)


def test_quadratic_talweg_value():
    assert talweg_at(QUAD, -0.25, 64).phi_up == pytest.approx(1.0, abs=1e-6)


def test_expanding_disk_talweg_zero_sym_positive():
    p = talweg_at(GROW, 0.5, 64)
    assert p.phi_up == 0.0 and p.phi_sym == pytest.approx(1.0, abs=1e-12)


def test_talweg_needs_eight_samples():
    with pytest.raises(ValueError):
        talweg_at(DISK, 0.1, 4)


def test_sample_shrinking_disk():
    tab = sample_talweg(DISK, 0.0, 0.5, 21, 64)
    assert len(tab) == 21 and np.allclose(tab.phi_up, 1.0, atol=1e-12)


def test_sample_quadratic_closed_form():
    tab = sample_talweg(QUAD, -0.25, -1e-4, 65, 64)
    ref = 1.0 / (2.0 * np.sqrt(-tab.grid))
    assert np.max(np.abs(tab.phi_up - ref)) <= 1e-6


def test_sample_oscillatory_matches_derivative():
    tab = sample_talweg(OSC, 0.05, 0.3, 65, 64)
    ref = np.array([max(0.0, -h_prime(t)) for t in tab.grid])
    assert np.max(np.abs(tab.phi_up - ref)) <= 1e-6


@pytest.mark.parametrize("entry", catalog(), ids=lambda e: e.name)
def test_table_invariants(entry):
    S = entry.build()
    lo, hi = entry.lemma_window
    tab = sample_talweg(S, lo, hi, 17, 32)
    assert np.all(np.diff(tab.grid) > 0)
    assert np.all(tab.phi_up <= tab.phi_sym)
    assert len(tab.phi_up) == len(tab.phi_sym) == len(tab.grid) == len(tab.critical_flags)


@pytest.mark.parametrize("entry", [e for e in catalog() if e.spec["dim"] == 2], ids=lambda e: e.name)
def test_doubling_m_never_lowers_the_max(entry):
    S = entry.build()
    lo, hi = entry.lemma_window
    for t in np.linspace(lo, hi, 5):
        a, b = talweg_at(S, t, 16).phi_up, talweg_at(S, t, 32).phi_up
        assert b >= a - 1e-9


def test_integrals_and_verdicts():
    assert tuple(integrate_talweg(sample_talweg(DISK, 0.0, 0.5), 0.0, 0.5)) == pytest.approx((0.5, CONVERGENT))
    val, verdict = integrate_talweg(sample_talweg(QUAD, -0.25, 0.0), -0.25, 0.0)
    assert verdict == CONVERGENT and abs(val - 0.5) <= 1e-3
    res = integrate_talweg(sample_talweg(OSC, 0.0, 0.3, per_level=1024), 0.0, 0.3)
    assert res.verdict == DIVERGENT_A and math.isinf(res.value)


def test_oscillatory_estimates_grow_as_window_opens():
    vals = []
    for eps in (0.05, 0.025, 0.0125, 0.00625):
        tab = sample_talweg(OSC, eps, 0.3, 2049, 8)
        vals.append(integrate_talweg(tab, eps, 0.3).value)
    assert all(b > a for a, b in zip(vals, vals[1:]))


def test_interior_critical_value_raises():
    tab = TalwegTable(np.array([0.0, 0.5, 1.0]), np.array([1.0, np.inf, 1.0]), np.array([1.0, np.inf, 1.0]),
                      np.zeros((3, 1)), np.array([False, True, False]))
    with pytest.raises(CriticalValueError, match="critical value inside window"):
        integrate_talweg(tab, 0.0, 1.0)


def test_cumulative_is_monotone_and_matches_total():
    tab = sample_talweg(QUAD, -0.25, 0.0)
    t, cum = cumulative_talweg(tab, -0.25, 0.0)
    assert cum[0] == 0.0 and np.all(np.diff(cum) >= 0)
    assert cum[-1] == pytest.approx(integrate_talweg(tab, -0.25, 0.0).value, abs=1e-12)
    inner = t < -1e-3
    assert np.max(np.abs(cum[inner] - (0.5 - np.sqrt(-t[inner])))) <= 1e-3


def test_adaptive_pass_refines_jumps():
    tab = sample_talweg(OSC, 0.05, 0.3, 9, 8)
    assert 9 < len(tab) <= 4 * 9
