import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from prwtail import kernels

needs_ext = pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")


def _sup(mod, log_a, log_b, log_tau, cap, start):
    n = log_a.shape[0]
    lp, lm, st = start[0].copy(), start[1].copy(), start[2].copy()
    done = mod.sup_advance(log_a, log_b, lp, lm, st, log_tau, cap)
    return lp, lm, st, done


@needs_ext
@given(
    st.integers(1, 40),
    st.integers(1, 12),
    st.floats(-20, -0.1),
    st.integers(1, 30),
    st.integers(0, 2**32 - 1),
)
@settings(max_examples=80, deadline=None)
def test_sup_kernels_bit_identical(n, k, log_tau, cap, seed):
    rng = np.random.default_rng(seed)
    log_a = rng.normal(-0.5, 1.5, (n, k))
    log_b = rng.standard_exponential((n, k)) * rng.choice([1.0, 5.0], (n, k))
    start = (rng.normal(0, 0.3, n), np.where(rng.random(n) < 0.5, -np.inf, rng.normal(0, 1, n)), rng.integers(0, cap, n))
    a = _sup(kernels.compiled, log_a, log_b, log_tau, cap, start)
    b = _sup(kernels.fallback, log_a, log_b, log_tau, cap, start)
    for x, y in zip(a, b):
        assert np.array_equal(x, y)


@needs_ext
@given(st.integers(1, 40), st.integers(1, 70), st.floats(-5, 50), st.integers(0, 2**32 - 1))
@settings(max_examples=80, deadline=None)
def test_walk_kernels_bit_identical(n, k, s_stop, seed):
    rng = np.random.default_rng(seed)
    z = rng.normal(1.0, 1.4, (n, k))
    s0 = rng.normal(0, 3, n)
    s1, s2 = s0.copy(), s0.copy()
    p1, d1 = kernels.compiled.walk_advance(z, s1, s_stop)
    p2, d2 = kernels.fallback.walk_advance(z, s2, s_stop)
    assert np.array_equal(p1, p2, equal_nan=True)
    assert np.array_equal(d1, d2)
    assert np.array_equal(s1, s2)


@pytest.mark.parametrize("mod", [kernels.fallback] + ([kernels.compiled] if kernels.compiled else []))
def test_sup_semantics(mod):
    # Pi_0 B_1 = 5 is the largest term; Pi drops below tau after two steps
    log_a = np.array([[-2.0, -2.0, -2.0, -2.0]])
    log_b = np.array([[math.log(5.0), 0.0, 0.0, 10.0]])
    lp, lm, st = np.zeros(1), np.full(1, -np.inf), np.zeros(1, dtype=np.int64)
    done = mod.sup_advance(log_a, log_b, lp, lm, st, -3.0, 100)
    assert done[0] and st[0] == 2
    assert lm[0] == pytest.approx(math.log(5.0))
    assert lp[0] == pytest.approx(-4.0)


@pytest.mark.parametrize("mod", [kernels.fallback] + ([kernels.compiled] if kernels.compiled else []))
def test_walk_semantics(mod):
    z = np.array([[1.0, 1.0, 1.0, 1.0]])
    s = np.array([0.5])
    pos, done = mod.walk_advance(z, s, 2.0)
    assert done[0]
    assert np.array_equal(pos[0, :2], [1.5, 2.5])
    assert np.isnan(pos[0, 2:]).all()
    assert s[0] == 2.5


def test_pure_python_switch():
    env = dict(os.environ, PRWTAIL_PURE_PYTHON="1")
    out = subprocess.run(
        [sys.executable, "-c", "import prwtail.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "python"


@needs_ext
def test_compiled_is_default():
    env = {k: v for k, v in os.environ.items() if k != "PRWTAIL_PURE_PYTHON"}
    out = subprocess.run(
        [sys.executable, "-c", "import prwtail.kernels as k; print(k.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "cython"
