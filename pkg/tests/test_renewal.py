import math

import numpy as np
import pytest

from prwtail.model import PreconditionError, TiltedLaw
from prwtail.renewal import (
    GateError,
    default_stop,
    left_tail_check,
    renewal_functional_mc,
    renewal_histogram_mc,
    renewal_interval_mc,
    renewal_lattice_oracle,
    stone_check,
)

Z = TiltedLaw("normal", {"mean": 1.0, "var": 2.0})
UNIT = TiltedLaw("point", {"at": 1.0})


def test_point_walk_counts_integers():
    est = renewal_interval_mc(UNIT, 2.5, 7.0, 1000, seed=0, workers=1)
    assert est.value == 5.0
    assert est.stderr == 0.0


def test_origin_is_counted():
    est = renewal_interval_mc(UNIT, -0.5, 0.5, 100, seed=0, workers=1)
    assert est.value == 1.0


def test_empty_interval():
    assert renewal_interval_mc(Z, 3.0, 3.0, 10).value == 0.0
    with pytest.raises(ValueError):
        renewal_interval_mc(Z, 3.0, 2.0, 10)


def test_blackwell_small():
    est = renewal_interval_mc(Z, 20.0, 22.0, 20_000, seed=5, workers=1)
    assert abs(est.value - 2.0) < 4 * est.stderr + 0.01


def test_needs_positive_drift():
    with pytest.raises(PreconditionError):
        renewal_interval_mc(TiltedLaw("normal", {"mean": -1.0, "var": 1.0}), 0, 1, 10)


def test_worker_count_does_not_change_result():
    a = renewal_interval_mc(Z, 5.0, 9.0, 40_000, seed=11, workers=1)
    b = renewal_interval_mc(Z, 5.0, 9.0, 40_000, seed=11, workers=4)
    assert a.value == b.value and a.stderr == b.stderr


def test_histogram_matches_intervals():
    edges = [0.0, 2.0, 4.0, 8.0]
    h = renewal_histogram_mc(Z, edges, 30_000, seed=2, workers=1)
    for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])):
        e = renewal_interval_mc(Z, a, b, 30_000, seed=9, workers=1)
        assert abs(h.mass[i] - e.value) < 4 * math.hypot(h.stderr[i], e.stderr)


def test_histogram_point_law():
    h = renewal_histogram_mc(UNIT, [0.0, 1.0, 3.5, 4.0], 100, seed=0)
    assert np.array_equal(h.mass, [1.0, 2.0, 1.0])


def test_functional_window():
    g = lambda s: s
    est = renewal_functional_mc(UNIT, g, lambda s: s <= 4.0, 10, default_stop(UNIT, 4.0), seed=0)
    assert est.value == 0 + 1 + 2 + 3 + 4


def test_stop_rule_margin():
    assert default_stop(Z, 10.0).s_stop == pytest.approx(50.0)
    assert default_stop(UNIT, 10.0).s_stop == 10.0


def test_oracle_point_law():
    tab = renewal_lattice_oracle(UNIT, 0.5, -1.0, 10.0)
    assert tab.mass(-0.5, 0.0) == pytest.approx(1.0)
    assert tab.mass(0.0, 6.0) == pytest.approx(6.0)


@pytest.mark.parametrize("u", [10.0, 25.0])
def test_oracle_blackwell_and_stone(u):
    tab = renewal_lattice_oracle(Z, 0.01, -25.0, u + 2)
    assert tab.mass(u, u + 1) == pytest.approx(1.0, abs=1e-3)
    assert tab.mass(-100.0, u) - u == pytest.approx(1.5, abs=0.01)
    assert tab.escaped_left < 1e-6


def test_oracle_refuses_short_window():
    with pytest.raises(ValueError, match="escaped"):
        renewal_lattice_oracle(Z, 0.05, -1.0, 10.0)


def test_stone_gate():
    z = TiltedLaw("two_point", {"z1": 1.0, "z2": -math.sqrt(2), "w1": 0.83})
    with pytest.raises(GateError):
        stone_check(z, [5.0], 100)


def test_left_tail_origin(canon):
    res = left_tail_check(canon.tilted(), canon.a, canon.alpha, 0.0, 2000, seed=1)
    assert res.value >= 1.0
    assert res.theory == pytest.approx(1.0)
