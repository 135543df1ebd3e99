"""Supremum of the perturbed multiplicative walk ``R = sup_n A_1...A_{n-1} B_n``.

Paths run in the log domain: ``log Pi_n`` accumulates ``log A`` and the
running maximum tracks ``log Pi_{k-1} + log B_k``.  A path stops once
``Pi_n <= tau_stop`` (or after ``cap`` steps).  Because ``R <= max(M_n,
Pi_n R')`` with ``R'`` an independent copy, stopping early underestimates
``P(R > x)`` by at most ``P(Pi_n R' > x)``, which Markov's inequality bounds
by ``tau^s E R^s / x^s`` for any ``s < alpha``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import ks_2samp

from . import kernels
from .model import ModelSpec, PreconditionError
from .streams import (
    TAG_MIN_MOMENT,
    TAG_PAIRS,
    TAG_SUP,
    TAG_SUP_PRIME,
    map_chunks,
    stream,
)

TAU_STOP = 1e-6
CAP = 10_000
CHUNK = 1 << 16
BLOCK = 8
WILSON_Z = 1.959963984540054
BIAS_FRACTION = 0.05


class BiasZoneError(PreconditionError):
    """The truncation bias is not negligible at a requested level."""


def bias_exponent(alpha: float) -> float:
    """Moment order ``s < alpha`` used in the truncation-bias bound."""
    return alpha - 0.1 if alpha > 0.2 else alpha / 2.0


@dataclass
class SupSample:
    value: float
    steps: int
    pi_final: float
    truncated: bool


@dataclass
class SupBatch:
    """An ensemble of truncated suprema, in log form."""

    log_r: np.ndarray
    steps: np.ndarray
    log_pi: np.ndarray
    truncated: np.ndarray

    def __len__(self) -> int:
        return self.log_r.size

    def sample(self, i: int) -> SupSample:
        return SupSample(
            float(np.exp(self.log_r[i])), int(self.steps[i]), float(np.exp(self.log_pi[i])), bool(self.truncated[i])
        )


def _check_tau(tau_stop: float, cap: int) -> None:
    if not 0 < tau_stop < 1:
        raise ValueError("tau_stop must lie in (0, 1)")
    if cap < 1:
        raise ValueError("cap must be >= 1")


def _run_sups(model: ModelSpec, size: int, tau_stop: float, cap: int, rng, log_scale: float = 0.0) -> SupBatch:
    """``size`` independent suprema from one generator (``B`` scaled by ``e^log_scale``)."""
    if model.a.mean_log >= 0:
        raise PreconditionError("needs E log A < 0 so that Pi_n -> 0")
    log_tau = math.log(tau_stop)
    log_pi = np.zeros(size)
    log_m = np.full(size, -np.inf)
    steps = np.zeros(size, dtype=np.int64)
    active = np.arange(size)
    while active.size:
        log_a, log_b = model.sample_log_pairs(rng, (active.size, BLOCK))
        if log_scale:
            log_b = log_b + log_scale
        lp, lm, st = log_pi[active], log_m[active], steps[active]
        done = kernels.sup_advance(
            np.ascontiguousarray(log_a), np.ascontiguousarray(log_b), lp, lm, st, log_tau, cap
        )
        log_pi[active], log_m[active], steps[active] = lp, lm, st
        active = active[~done]
    truncated = (steps >= cap) & (log_pi > log_tau)
    return SupBatch(log_m, steps, log_pi, truncated)


def sample_sup(model: ModelSpec, tau_stop: float = TAU_STOP, cap: int = CAP, rng=None) -> SupSample:
    """One truncated supremum."""
    _check_tau(tau_stop, cap)
    rng = np.random.default_rng() if rng is None else rng
    return _run_sups(model, 1, tau_stop, cap, rng).sample(0)


def sup_ensemble(
    model: ModelSpec,
    n: int,
    tau_stop: float = TAU_STOP,
    cap: int = CAP,
    seed: int = 0,
    tag: int = TAG_SUP,
    workers: int | None = None,
    log_scale: float = 0.0,
) -> SupBatch:
    """``n`` suprema on the streams ``(seed, tag, chunk)``."""
    _check_tau(tau_stop, cap)
    if n < 1:
        raise ValueError("n must be >= 1")
    parts = map_chunks(
        lambda i, size: _run_sups(model, size, tau_stop, cap, stream(seed, tag, i), log_scale),
        n,
        CHUNK,
        workers,
    )
    return SupBatch(*(np.concatenate([getattr(p, f) for p in parts]) for f in ("log_r", "steps", "log_pi", "truncated")))


def pair_ensemble(model: ModelSpec, n: int, seed: int = 0, workers: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``n`` draws of ``(log A, log B)`` on the pair streams."""
    parts = map_chunks(lambda i, size: model.sample_log_pairs(stream(seed, TAG_PAIRS, i), size), n, CHUNK, workers)
    return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])


# ---------------------------------------------------------------------------
# tail curve


def wilson(k, n: int, z: float = WILSON_Z) -> tuple[np.ndarray, np.ndarray]:
    k = np.asarray(k, dtype=float)
    p = k / n
    z2 = z * z
    denom = 1.0 + z2 / n
    centre = (p + z2 / (2 * n)) / denom
    half = z / denom * np.sqrt(p * (1 - p) / n + z2 / (4.0 * n * n))
    return np.clip(centre - half, 0.0, 1.0), np.clip(centre + half, 0.0, 1.0)


@dataclass
class TailCurve:
    u: np.ndarray
    p_hat: np.ndarray
    ci_low: np.ndarray
    ci_high: np.ndarray
    theory_first: np.ndarray
    theory_second: np.ndarray
    bias_bound: np.ndarray
    counts: np.ndarray
    n_paths: int
    n_truncated: int
    mean_steps: float
    c_hat: float

    COLUMNS = ("u", "p_hat", "ci_low", "ci_high", "theory_first", "theory_second", "bias_bound")

    def rows(self) -> list[tuple[float, ...]]:
        return [tuple(float(getattr(self, c)[i]) for c in self.COLUMNS) for i in range(self.u.size)]


@dataclass
class CurveCounts:
    """Reduced statistics of a sup ensemble on a level grid."""

    u: np.ndarray
    counts: np.ndarray
    n: int
    moment_sum: float
    moment_order: float
    n_truncated: int
    steps_sum: int

    @property
    def p_hat(self) -> np.ndarray:
        return self.counts / self.n

    @property
    def moment(self) -> float:
        return self.moment_sum / self.n


def curve_counts(
    model: ModelSpec,
    u_grid: Sequence[float],
    n_paths: int,
    tau_stop: float = TAU_STOP,
    cap: int = CAP,
    seed: int = 0,
    workers: int | None = None,
    log_scale: float = 0.0,
    tag: int = TAG_SUP,
) -> CurveCounts:
    """Exceedance counts of ``log R > u`` without keeping the ensemble in memory."""
    _check_tau(tau_stop, cap)
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    us = np.asarray(u_grid, dtype=float)
    s = bias_exponent(model.alpha)

    def run(i: int, size: int):
        b = _run_sups(model, size, tau_stop, cap, stream(seed, tag, i), log_scale)
        srt = np.sort(b.log_r)
        above = size - np.searchsorted(srt, us, side="right")
        mom = float(np.exp(s * b.log_r).sum())
        return above.astype(np.int64), mom, int(b.truncated.sum()), int(b.steps.sum())

    counts = np.zeros(us.size, dtype=np.int64)
    mom = 0.0
    trunc = steps = 0
    for c, m, t, st in map_chunks(run, n_paths, CHUNK, workers):
        counts += c
        mom += m
        trunc += t
        steps += st
    return CurveCounts(us, counts, n_paths, mom, s, trunc, steps)


def bias_bound(model: ModelSpec, u, tau_stop: float, moment: float, order: float) -> np.ndarray:
    """``tau^s E R^s / x^s`` at ``x = e^u``."""
    u = np.asarray(u, dtype=float)
    return np.exp(order * (math.log(tau_stop) - u)) * moment


def theory_columns(model: ModelSpec, u, c_hat: float) -> tuple[np.ndarray, np.ndarray]:
    """First and second order tail approximations on ``u``.

    Critical regime: ``e^(-alpha u) Ltilde_B(e^u) / rho`` and that minus
    ``e^(-alpha u) c_hat``.  Subcritical: ``P(B > e^u) / (1 - E A^alpha)``.
    Goldie (bounded B): ``c_hat e^(-alpha u)`` with ``c_hat`` the plug-in
    constant.
    """
    u = np.asarray(u, dtype=float)
    al = model.alpha
    decay = np.exp(-al * u)
    if model.regime == "critical":
        first = decay * np.array([model.tilde_b(float(x)) for x in u]) / model.rho
        return first, first - decay * c_hat
    if model.regime == "subcritical":
        first = np.asarray(model.b_law.tail(np.exp(u)), dtype=float) / (1.0 - model.a.moment(al))
        return first, first.copy()
    first = c_hat * decay
    return first, first.copy()


def tail_curve(
    model: ModelSpec,
    u_grid: Sequence[float],
    n_paths: int,
    tau_stop: float = TAU_STOP,
    seed: int = 0,
    workers: int | None = None,
    cap: int = CAP,
    c_hat: float | None = None,
    counts: CurveCounts | None = None,
    check_bias: bool = True,
) -> TailCurve:
    """Tail estimate of ``R`` on ``x = e^u`` with Wilson 95% intervals and theory columns.

    ``c_hat`` is the second-order constant (``E min(AR,B)_+^alpha / (alpha rho)``
    in the critical regime); when omitted it is estimated by
    :func:`min_moment_alpha` with its default sizes.  Pre-computed ``counts``
    from :func:`curve_counts` may be passed to share an ensemble.
    """
    us = np.asarray(u_grid, dtype=float)
    if us.ndim != 1 or us.size == 0:
        raise ValueError("u_grid must be a non-empty list")
    if np.any(np.diff(us) <= 0):
        raise ValueError("u_grid must be strictly increasing")
    if counts is None:
        counts = curve_counts(model, us, n_paths, tau_stop, cap, seed, workers)
    elif not np.array_equal(counts.u, us):
        raise ValueError("counts were computed on a different grid")
    n = counts.n
    p = counts.p_hat
    lo, hi = wilson(counts.counts, n)
    bias = bias_bound(model, us, tau_stop, counts.moment, counts.moment_order)
    if check_bias:
        ref = np.where(counts.counts > 0, p, hi)
        bad = bias >= BIAS_FRACTION * ref
        if np.any(bad):
            u_bad = ", ".join(f"{x:g}" for x in us[bad])
            raise BiasZoneError(
                f"truncation bias is not below {BIAS_FRACTION:g} p_hat at u = {u_bad}; use a smaller tau_stop"
            )
    if c_hat is None:
        if model.regime == "critical":
            mm = min_moment_alpha(model, tau_stop=tau_stop, seed=seed, workers=workers)
            c_hat = mm.estimate / (model.alpha * model.rho)
        elif model.regime == "goldie":
            c_hat = goldie_plugin(model, 1_000_000, tau_stop, seed, workers).value
        else:
            c_hat = 0.0
    first, second = theory_columns(model, us, c_hat)
    return TailCurve(
        us, p, lo, hi, first, second, bias, counts.counts.copy(), n, counts.n_truncated, counts.steps_sum / n, float(c_hat)
    )


# ---------------------------------------------------------------------------
# second-order constant


@dataclass
class MinMoment:
    """Median of block means of ``min(A R, B)_+^alpha``."""

    estimate: float
    spread: float
    stderr: float
    block_means: np.ndarray
    n_blocks: int
    block_size: int


def mom_stderr(block_means: np.ndarray) -> float:
    """Normal-theory standard error of a median of block means, sigma taken from the IQR."""
    q1, q3 = np.percentile(block_means, [25, 75])
    sigma = (q3 - q1) / 1.3489795003921634
    return math.sqrt(math.pi / 2.0) * sigma / math.sqrt(block_means.size)


def min_moment_alpha(
    model: ModelSpec,
    n_blocks: int = 30,
    block_size: int = 100_000,
    tau_stop: float = TAU_STOP,
    seed: int = 0,
    workers: int | None = None,
    cap: int = CAP,
) -> MinMoment:
    """``E min(A R, B)_+^alpha`` with ``R`` independent of ``(A, B)``."""
    if n_blocks < 1 or block_size < 1:
        raise ValueError("n_blocks and block_size must be >= 1")
    if not model.arb_holds:
        raise PreconditionError("the moment condition on (A, B) does not hold for this model")
    n = n_blocks * block_size
    r = sup_ensemble(model, n, tau_stop, cap, seed, TAG_MIN_MOMENT, workers)
    log_a, log_b = pair_ensemble(model, n, seed, workers)
    vals = min_power(log_a, log_b, r.log_r, model.alpha)
    means = vals.reshape(n_blocks, block_size).mean(axis=1)
    q1, q3 = np.percentile(means, [25, 75])
    return MinMoment(float(np.median(means)), float(q3 - q1), mom_stderr(means), means, n_blocks, block_size)


def min_power(log_a, log_b, log_r, alpha: float) -> np.ndarray:
    """``min(A R, B)_+^alpha`` from logs; a zero factor gives 0."""
    m = np.minimum(np.asarray(log_a) + np.asarray(log_r), np.asarray(log_b))
    with np.errstate(under="ignore"):
        return np.exp(alpha * m)


@dataclass
class PluginEstimate:
    value: float
    stderr: float
    n: int


def goldie_plugin(
    model: ModelSpec,
    n: int,
    tau_stop: float = TAU_STOP,
    seed: int = 0,
    workers: int | None = None,
    rho_scale: float = 1.0,
) -> PluginEstimate:
    """``E(max(AR, B)^alpha - (AR)^alpha) / (alpha rho)`` with ``R`` independent of ``(A, B)``.

    ``rho_scale`` multiplies ``rho`` (for sensitivity checks).
    """
    al = model.alpha
    r = sup_ensemble(model, n, tau_stop, CAP, seed, TAG_MIN_MOMENT, workers)
    log_a, log_b = pair_ensemble(model, n, seed, workers)
    ar = log_a + r.log_r
    with np.errstate(under="ignore"):
        vals = np.exp(al * np.maximum(ar, log_b)) - np.exp(al * ar)
    scale = al * model.rho * rho_scale
    return PluginEstimate(float(vals.mean() / scale), float(vals.std(ddof=1) / math.sqrt(n) / scale), n)


# ---------------------------------------------------------------------------
# fixed point


@dataclass
class FixedPointResult:
    ks: float
    pvalue: float
    n: int
    report_only: bool


def fixed_point_distance(
    model: ModelSpec,
    n: int,
    tau_stop: float = TAU_STOP,
    seed: int = 0,
    workers: int | None = None,
    coupled: bool = False,
) -> FixedPointResult:
    """Two-sample KS distance between ``R`` and ``max(A R', B)``.

    ``R'`` comes from its own streams, or from the same streams as ``R`` when
    ``coupled``.  Below ``n = 1e4`` the result is flagged as report-only.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    r = sup_ensemble(model, n, tau_stop, CAP, seed, TAG_SUP, workers)
    r2 = r if coupled else sup_ensemble(model, n, tau_stop, CAP, seed, TAG_SUP_PRIME, workers)
    log_a, log_b = pair_ensemble(model, n, seed, workers)
    mapped = np.maximum(log_a + r2.log_r, log_b)
    res = ks_2samp(r.log_r, mapped)
    return FixedPointResult(float(res.statistic), float(res.pvalue), n, n < 10_000)
