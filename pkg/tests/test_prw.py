import math

import numpy as np
import pytest

from prwtail.model import BoundedPerturbationSpec, FactorLawSpec, ModelSpec
from prwtail.prw import (
    BiasZoneError,
    curve_counts,
    fixed_point_distance,
    min_moment_alpha,
    min_power,
    sample_sup,
    sup_ensemble,
    tail_curve,
    wilson,
)


class FixedUniforms:
    """Stand-in generator: ``random`` alternates between two constants."""

    def __init__(self, first, second):
        self.vals = [first, second]
        self.calls = 0

    def random(self, size):
        v = self.vals[self.calls % 2]
        self.calls += 1
        return np.full(size, v)


def test_first_term_lower_bound(two_point):
    # every A = e^{-sqrt 2}, every B = 5: R is the first term
    s = sample_sup(two_point, 1e-6, 10_000, FixedUniforms(0.9, 0.8))
    assert s.value == pytest.approx(5.0)
    assert s.value >= 5.0 * (1 - 1e-12)
    assert s.pi_final <= 1e-6
    assert not s.truncated


def test_mean_steps_canonical(canon):
    b = sup_ensemble(canon, 100_000, 1e-6, 10_000, seed=1, workers=1)
    assert 14 <= b.steps.mean() <= 20
    assert b.truncated.sum() == 0
    assert np.all((b.log_pi <= math.log(1e-6)) | (b.steps == 10_000))


def test_cap_flag(canon):
    b = sup_ensemble(canon, 1000, 1e-6, 3, seed=1, workers=1)
    assert b.truncated.mean() > 0.9
    assert np.all(b.steps <= 3)


def test_below_floor_is_certain(canon):
    c = tail_curve(canon, [-1.0, 0.0], 10_000, seed=2, c_hat=0.0, workers=1)
    assert c.p_hat[0] == 1.0


def test_curve_invariants(canon):
    c = tail_curve(canon, [1, 2, 3, 4, 5, 6], 50_000, seed=3, c_hat=2.0, workers=1)
    assert np.all(np.diff(c.p_hat) <= 0)
    assert np.all(c.ci_low <= c.p_hat) and np.all(c.p_hat <= c.ci_high)
    assert all(math.isfinite(v) for r in c.rows() for v in r)
    assert np.all(c.theory_second < c.theory_first)


def test_wilson_width_scaling():
    lo1, hi1 = wilson(1000, 1_000_000)
    lo2, hi2 = wilson(2000, 2_000_000)
    assert (hi1 - lo1) / (hi2 - lo2) == pytest.approx(math.sqrt(2), rel=0.01)


def test_wilson_zero_count():
    lo, hi = wilson(0, 1000)
    assert lo < 1e-12 and 0 < hi < 0.005


def test_bias_zone_refused(canon):
    with pytest.raises(BiasZoneError, match="smaller tau"):
        tail_curve(canon, [2.0, 8.0], 20_000, tau_stop=0.5, seed=1, c_hat=0.0, workers=1)


def test_scaling_relation_exact(canon):
    s = math.log(3.0)
    u = np.array([2.0, 4.0, 6.0])
    scaled = curve_counts(canon, u, 100_000, seed=4, workers=1, log_scale=s)
    plain = curve_counts(canon, u - s, 100_000, seed=4, workers=1)
    assert np.array_equal(scaled.counts, plain.counts)


def test_monotone_coupling(canon):
    a = sup_ensemble(canon, 20_000, seed=6, workers=1)
    b = sup_ensemble(canon, 20_000, seed=6, workers=1, log_scale=0.25)
    assert np.all(b.log_r >= a.log_r)


def test_workers_do_not_change_counts(canon):
    a = curve_counts(canon, [3.0, 5.0], 200_000, seed=8, workers=1)
    b = curve_counts(canon, [3.0, 5.0], 200_000, seed=8, workers=3)
    assert np.array_equal(a.counts, b.counts) and a.moment_sum == b.moment_sum


def test_moment_sanity(canon):
    r = np.exp(sup_ensemble(canon, 1_000_000, seed=9, workers=1).log_r)

    def median_block_mean(x, size):
        return np.median(x[: x.size // size * size].reshape(-1, size).mean(axis=1))

    below = r ** (canon.alpha - 0.2)
    above = r ** (canon.alpha + 0.2)
    # finite moment: the running mean settles
    assert below[: r.size // 4].mean() / below.mean() == pytest.approx(1.0, abs=0.1)
    # infinite moment: typical block means keep growing with the block size
    assert median_block_mean(above, 10_000) / median_block_mean(above, 100) > 3.0


def test_min_power_zero_factor():
    assert min_power(np.array([-np.inf]), np.array([1.0]), np.array([3.0]), 1.0)[0] == 0.0


def test_min_moment_stability(canon):
    full = min_moment_alpha(canon, 30, 20_000, seed=10, workers=1)
    half = min_moment_alpha(canon, 15, 20_000, seed=10, workers=1)
    assert full.estimate > 0
    assert abs(half.estimate - full.estimate) <= full.spread
    assert full.estimate == pytest.approx(2.0, abs=0.15)


def test_min_moment_block_size_one(canon):
    mm = min_moment_alpha(canon, 101, 1, seed=1, workers=1)
    assert mm.estimate == np.median(mm.block_means)


def test_fixed_point(canon):
    res = fixed_point_distance(canon, 100_000, seed=12, workers=1)
    assert res.ks <= 0.015 and not res.report_only
    coupled = fixed_point_distance(canon, 100_000, seed=12, workers=1, coupled=True)
    assert coupled.ks <= 0.015


def test_fixed_point_small_sample_flag(canon):
    assert fixed_point_distance(canon, 100, seed=1, workers=1).report_only


def test_goldie_model_curve():
    m = ModelSpec(FactorLawSpec("lognormal", {"m": -1.0, "s2": 2.0}), BoundedPerturbationSpec("constant", {"b0": 1.0}))
    c = tail_curve(m, [1.0, 2.0], 50_000, seed=1, workers=1, c_hat=0.5)
    assert c.theory_first[0] == pytest.approx(0.5 * math.exp(-1.0))
