import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from prwtail.sv import (
    QuadratureError,
    SlowlyVaryingSpec,
    adaptive_simpson,
    dehaan_ratio,
    karamata_ratio,
    potter_check,
    slow_variation_deviation,
    tilde_log,
)

FAMILIES = [
    SlowlyVaryingSpec("constant", {"c": 2.0}),
    SlowlyVaryingSpec("log_power", {"beta": 0.5}),
    SlowlyVaryingSpec("log_power", {"beta": -0.5}),
    SlowlyVaryingSpec("iterated_log", {"beta": 2.0}),
    SlowlyVaryingSpec("oscillating"),
]


def test_simpson_polynomial_exact():
    v, err = adaptive_simpson(lambda x: x**3 - 2 * x, 0.0, 2.0)
    assert v == pytest.approx(0.0, abs=1e-12)


def test_simpson_budget():
    with pytest.raises(QuadratureError):
        adaptive_simpson(lambda x: np.sin(1.0 / np.maximum(x, 1e-300)), 0.0, 1.0, budget=1000)


@pytest.mark.parametrize("sv", FAMILIES, ids=lambda s: s.family + str(s.params))
@pytest.mark.parametrize("u", [0.5, 3.0, 40.0])
def test_integral_matches_scipy(sv, u):
    ref, _ = quad(lambda v: float(sv.ell(v)), 0.0, u, limit=500, epsabs=0, epsrel=1e-11)
    assert tilde_log(sv, 1.0, u).value == pytest.approx(ref, rel=1e-8)


def test_constant_closed_form():
    sv = SlowlyVaryingSpec("constant")
    assert tilde_log(sv, math.e, 5.0).value == pytest.approx(4.0, rel=1e-14)


def test_log_power_closed_form_against_quadrature():
    sv = SlowlyVaryingSpec("log_power", {"beta": 0.7})
    closed = sv.closed_integral(-1.0, 30.0)
    from prwtail.sv import integrate_pieces

    num, _ = integrate_pieces(sv.ell, -1.0, 30.0, sv.breaks(), 1e-12)
    assert closed == pytest.approx(num, rel=1e-10)


def test_infinite_lower_bound_rejected():
    with pytest.raises(ValueError):
        tilde_log(SlowlyVaryingSpec("constant"), 0.0, 1.0)


def test_u_below_x0_rejected():
    with pytest.raises(ValueError):
        tilde_log(SlowlyVaryingSpec("constant"), math.e**2, 1.0)


@pytest.mark.parametrize("sv", FAMILIES[1:], ids=lambda s: s.family)
def test_dehaan_ratio_tends_to_log_lambda(sv):
    lam = 3.0
    near = abs(dehaan_ratio(sv, lam, 1e4) - math.log(lam))
    assert near < 0.05
    assert near <= abs(dehaan_ratio(sv, lam, 10.0) - math.log(lam)) + 1e-3


@pytest.mark.parametrize("sv", FAMILIES, ids=lambda s: s.family)
def test_karamata_ratio_tends_to_one(sv):
    assert karamata_ratio(sv, 1.0, 1.0, 200.0) == pytest.approx(1.0, abs=0.02)


def test_slow_variation_deviation_decreases():
    sv = SlowlyVaryingSpec("log_power", {"beta": 1.0})
    d = slow_variation_deviation(sv, 2.0, [10.0, 100.0, 1000.0])
    assert np.all(np.diff(d) < 0)


def test_potter_constant_is_one():
    rep = potter_check(SlowlyVaryingSpec("constant"), 0.1, np.linspace(0, 50, 200))
    assert rep.A == pytest.approx(1.0)
    assert not rep.growing


def test_potter_oscillating_bounded():
    rep = potter_check(SlowlyVaryingSpec("oscillating"), 0.1, np.linspace(0, 400, 2000))
    assert 1.0 <= rep.A <= math.e**2


@pytest.mark.parametrize("bad", [{"beta": -1.0}, {"beta": -2.0}])
def test_log_power_beta_bound(bad):
    with pytest.raises(ValueError):
        SlowlyVaryingSpec("log_power", bad)


def test_unknown_family():
    with pytest.raises(ValueError):
        SlowlyVaryingSpec("polynomial")


@given(st.sampled_from(FAMILIES), st.floats(-5, 50), st.floats(0.01, 5))
@settings(max_examples=40, deadline=None)
def test_integral_additive(sv, a, w):
    v1, _ = sv.integral(a, a + w)
    v2, _ = sv.integral(a + w, a + 2 * w)
    v, _ = sv.integral(a, a + 2 * w)
    assert v1 + v2 == pytest.approx(v, rel=1e-8)


@given(st.sampled_from(FAMILIES))
def test_json_round_trip(sv):
    assert SlowlyVaryingSpec.from_json(sv.to_json()) == sv
