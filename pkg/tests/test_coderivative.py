import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sweeplab.catalog import catalog_entry
from sweeplab.coderivative import (
    ModulusValue,
    asym_modulus,
    modulus_at,
    moduli_arrays,
    oriented_calm_estimate,
    sym_modulus,
)
from sweeplab.process import NormalRay, process_from_dict


def ray(alpha, *u):
    return NormalRay.from_generator(alpha, list(u))


def dense_cone_sup(alpha, u, signed=True, n=200001):
    """sup of a+ (or |a|) over lambda (alpha, u) with lambda |u| <= 1, by sampling lambda."""
    lam_max = 1.0 / np.linalg.norm(u)
    lam = np.linspace(0.0, lam_max, n)
    a = lam * alpha
    return float(np.max(np.maximum(a, 0.0) if signed else np.abs(a)))


def test_asym_examples():
    assert asym_modulus(ray(1, 2, 0)).value == pytest.approx(0.5, abs=1e-15)
    assert asym_modulus(ray(1, 2, 0)).value == pytest.approx(dense_cone_sup(1, [2, 0]), abs=1e-12)
    assert asym_modulus(ray(-1, 2, 0)).value == 0.0
    m = asym_modulus(ray(1, 0, 0))
    assert m.critical and m.value == math.inf


def test_sym_examples():
    assert sym_modulus(ray(-1, 2, 0)).value == pytest.approx(0.5, abs=1e-15)
    assert sym_modulus(ray(0, 1, 0)).value == 0.0
    assert sym_modulus(ray(1, 2, 0)).value == pytest.approx(dense_cone_sup(1, [2, 0], signed=False), abs=1e-12)


def test_zero_marker_and_downward_vertical():
    z = NormalRay.zero_marker(2)
    assert asym_modulus(z).value == 0.0 and sym_modulus(z).value == 0.0
    assert asym_modulus(ray(-1, 0, 0)).value == 0.0
    assert sym_modulus(ray(-1, 0, 0)).critical


def test_modulus_value_flag():
    assert ModulusValue(math.inf).critical and not ModulusValue(2.0).critical
    with pytest.raises(ValueError):
        ModulusValue(-1.0)


def test_modulus_at_examples():
    Q = process_from_dict({"kind": "sublevel", "dim": 2, "domain": [-2, 0], "f": "x1^2 + x2^2"})
    a, s = modulus_at(Q, -1.0, [1.0, 0.0])
    assert a.value == pytest.approx(0.5, abs=1e-12) and s.value == pytest.approx(0.5, abs=1e-12)
    static = process_from_dict({"kind": "implicit", "dim": 2, "domain": [0.5, 2], "g": "x1^2 + x2^2 - t"})
    x = [1.0, 0.0]
    a, s = modulus_at(static, 1.0, x)
    assert a.value == 0.0 and s.value == pytest.approx(0.5, abs=1e-12)
    a, s = modulus_at(Q, -1.0, [0.2, 0.1])
    assert (a.value, s.value) == (0.0, 0.0)


def test_calm_estimate_examples():
    disk = catalog_entry("shrinking_disk").build()
    assert oriented_calm_estimate(disk, 0.0, [1.0, 0.0]) == pytest.approx(1.0, abs=1e-6)
    grow = catalog_entry("expanding_disk").build()
    assert oriented_calm_estimate(grow, 0.0, [1.0, 0.0]) == 0.0
    ball = catalog_entry("moving_ball").build()
    assert oriented_calm_estimate(ball, 0.0, [-1.0, 0.0]) == pytest.approx(1.0, abs=1e-6)


finite = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=500, deadline=None)
@given(finite, st.lists(finite, min_size=1, max_size=4), st.floats(1e-3, 1e3))
def test_order_and_homogeneity(alpha, u, c):
    if alpha == 0 and not any(u):
        return
    r = ray(alpha, *u)
    a, s = asym_modulus(r).value, sym_modulus(r).value
    assert a <= s
    scaled = NormalRay(c * r.alpha, c * r.u, r.degenerate)
    assert asym_modulus(scaled).value == pytest.approx(a, rel=1e-12)
    assert sym_modulus(scaled).value == pytest.approx(s, rel=1e-12)


def test_vectorized_moduli_match_scalar():
    rng = np.random.default_rng(0)
    alpha = rng.normal(size=100)
    u = rng.normal(size=(100, 2))
    u[:5] = 0.0
    up, sy = moduli_arrays(alpha, np.linalg.norm(u, axis=1))
    for k in range(100):
        r = NormalRay.from_generator(alpha[k], u[k])
        assert up[k] == pytest.approx(asym_modulus(r).value, rel=1e-12)
        assert sy[k] == pytest.approx(sym_modulus(r).value, rel=1e-12)
