"""Renewal measure of a positive-drift walk: Monte Carlo functionals and a lattice oracle.

``int g dH = E sum_{n>=0} g(S_n)`` is estimated from whole paths (visit
counts), so the estimate is unbiased apart from the stop rule: a path is
abandoned once it exceeds ``s_stop``, and from there it returns below
``s_stop - M`` with probability at most ``exp(-theta M)`` where ``theta`` is
the walk's return rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import kernels
from .model import FactorLawSpec, PreconditionError, TiltedLaw
from .streams import RunningMoments, TAG_RENEWAL, map_chunks, stream

CHUNK = 1 << 14
BLOCK = 64
HARD_CAP = 1_000_000
M_CUT = 40.0


class GateError(PreconditionError):
    """The increment law is outside the family a check is valid for."""


@dataclass(frozen=True)
class StopRule:
    s_stop: float
    cap: int = HARD_CAP


def default_stop(z: TiltedLaw, u_max: float) -> StopRule:
    """Stop at ``u_max + 40/theta``; the neglected return mass is ``<= e^-40``."""
    rate = z.return_rate
    margin = 0.0 if math.isinf(rate) else M_CUT / rate
    return StopRule(u_max + margin)


@dataclass
class RenewalFunctionalEstimate:
    value: float
    stderr: float
    n_paths: int
    seed: int
    truncation: dict = field(default_factory=dict)


Accumulator = Callable[[np.ndarray, np.ndarray], np.ndarray]


def weights_accumulator(weights: Sequence[Callable[[np.ndarray], np.ndarray]]) -> Accumulator:
    """Turn per-visit weight functions into an accumulator of per-path sums."""

    def acc(pos: np.ndarray, seen: np.ndarray) -> np.ndarray:
        out = np.empty((len(weights), pos.shape[0]))
        for w, f in enumerate(weights):
            out[w] = np.where(seen, f(pos), 0.0).sum(axis=1)
        return out

    acc.k = len(weights)
    return acc


def _path_sums(
    z: TiltedLaw,
    acc: Accumulator,
    n_paths: int,
    stop: StopRule,
    seed: int,
    workers: int | None,
    tag: int = TAG_RENEWAL,
) -> tuple[RunningMoments, int]:
    """Per-path sums over visited levels ``S_0 = 0, S_1, ...``, merged over chunks.

    ``acc(pos, seen)`` maps a block of positions (rows = paths) to an array of
    shape ``(k, rows)``; ``seen`` masks the positions actually visited.
    """
    if z.mean <= 0:
        raise PreconditionError("renewal estimates need E Z > 0")
    k = acc.k

    def run(index: int, size: int):
        rng = stream(seed, tag, index)
        sums = acc(np.zeros((size, 1)), np.ones((size, 1), dtype=bool))
        s = np.zeros(size)
        active = np.arange(size)
        steps = 0
        while active.size:
            inc = z.sample(rng, (active.size, BLOCK))
            s_act = s[active]
            pos, done = kernels.walk_advance(inc, s_act, stop.s_stop)
            s[active] = s_act
            seen = ~np.isnan(pos)
            sums[:, active] += acc(np.where(seen, pos, 0.0), seen)
            active = active[~done]
            steps += BLOCK
            if steps >= stop.cap and active.size:
                break
        keep = np.ones(size, dtype=bool)
        keep[active] = False  # paths that hit the hard cap are discarded
        return sums[:, keep], int(active.size)

    moments = RunningMoments(k)
    discarded = 0
    for sums, lost in map_chunks(run, n_paths, CHUNK, workers):
        moments.add_chunk(sums)
        discarded += lost
    return moments, discarded


def renewal_functionals_mc(
    z: TiltedLaw,
    weights: Sequence[Callable[[np.ndarray], np.ndarray]],
    n_paths: int,
    stop: StopRule,
    seed: int = 0,
    workers: int | None = None,
) -> list[RenewalFunctionalEstimate]:
    """Several functionals ``int w_k dH`` from one path ensemble."""
    if n_paths < 1:
        raise ValueError("n_paths must be >= 1")
    mom, lost = _path_sums(z, weights_accumulator(weights), n_paths, stop, seed, workers)
    trunc = {"s_stop": stop.s_stop, "cap": stop.cap, "discarded": lost}
    return [
        RenewalFunctionalEstimate(float(m), float(se), mom.n, seed, dict(trunc))
        for m, se in zip(mom.mean, mom.stderr)
    ]


def renewal_functional_mc(
    z: TiltedLaw,
    g: Callable[[np.ndarray], np.ndarray],
    window: Callable[[np.ndarray], np.ndarray] | None,
    n_paths: int,
    stop: StopRule,
    seed: int = 0,
    workers: int | None = None,
) -> RenewalFunctionalEstimate:
    """``E sum_{n>=0} g(S_n) 1{window(S_n)}``."""
    if window is None:
        f = g
    else:
        f = lambda s: np.where(window(s), g(s), 0.0)
    return renewal_functionals_mc(z, [f], n_paths, stop, seed, workers)[0]


def indicator(a: float, b: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda s: ((s > a) & (s <= b)).astype(float)


def renewal_interval_mc(
    z: TiltedLaw, a: float, b: float, n_paths: int, seed: int = 0, workers: int | None = None
) -> RenewalFunctionalEstimate:
    """``H((a, b])`` as the mean number of visits per path."""
    if b < a:
        raise ValueError("need a <= b")
    stop = default_stop(z, b)
    if a == b:
        return RenewalFunctionalEstimate(0.0, 0.0, n_paths, seed, {"s_stop": stop.s_stop, "cap": stop.cap, "discarded": 0})
    one = lambda s: np.ones_like(s)
    return renewal_functional_mc(z, one, lambda s: (s > a) & (s <= b), n_paths, stop, seed, workers)


@dataclass
class RenewalHistogram:
    edges: np.ndarray
    mass: np.ndarray
    stderr: np.ndarray
    n_paths: int


def renewal_histogram_mc(
    z: TiltedLaw, edges: Sequence[float], n_paths: int, seed: int = 0, workers: int | None = None
) -> RenewalHistogram:
    """``H((e_i, e_{i+1}])`` for consecutive edges, from one ensemble."""
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be strictly increasing")
    nb = edges.size - 1
    stop = default_stop(z, float(edges[-1]))

    def acc(pos: np.ndarray, seen: np.ndarray) -> np.ndarray:
        rows = pos.shape[0]
        b = np.searchsorted(edges, pos, side="left") - 1
        ok = seen & (b >= 0) & (b < nb)
        flat = (np.arange(rows)[:, None] * nb + b)[ok]
        return np.bincount(flat, minlength=rows * nb).reshape(rows, nb).T.astype(float)

    acc.k = nb
    mom, _ = _path_sums(z, acc, n_paths, stop, seed, workers)
    return RenewalHistogram(edges, mom.mean.copy(), mom.stderr.copy(), mom.n)


@dataclass
class LatticeRenewalTable:
    """``H_h(kh) = sum_{n<=N} mu_h^{*n}({kh})`` on ``k_lo..k_lo+len-1``."""

    h: float
    k_lo: int
    masses: np.ndarray
    n_conv: int
    escaped_left: float
    remaining: float

    @property
    def grid(self) -> np.ndarray:
        return self.h * (self.k_lo + np.arange(self.masses.size))

    def mass(self, a: float, b: float) -> float:
        """Total mass of grid points ``kh`` in ``(a, b]``."""
        k0 = math.floor(a / self.h + 1e-9) + 1
        k1 = math.floor(b / self.h + 1e-9)
        i0 = max(k0 - self.k_lo, 0)
        i1 = min(k1 - self.k_lo, self.masses.size - 1)
        if i1 < i0:
            return 0.0
        return float(self.masses[i0 : i1 + 1].sum())


def renewal_lattice_oracle(
    z: TiltedLaw,
    h: float,
    lo: float,
    hi: float,
    tol: float = 1e-6,
    max_conv: int = 100_000,
) -> LatticeRenewalTable:
    """Renewal masses of the mean-preserving lattice discretisation of ``Z``.

    Convolution powers are accumulated on ``[lo, hi + margin]`` until the mass
    left inside the window drops below ``tol``; the margin is
    ``20/theta`` so mass leaving to the right cannot come back in a
    noticeable amount.  Mass pushed off the left edge is tallied in
    ``escaped_left``.
    """
    if h <= 0:
        raise ValueError("h must be positive")
    if not hi > lo:
        raise ValueError("need hi > lo")
    rate = z.return_rate
    margin = 0.0 if math.isinf(rate) else 20.0 / rate
    k_lo = math.floor(lo / h + 1e-9)
    k_hi = math.ceil((hi + margin) / h - 1e-9)
    size = k_hi - k_lo + 1
    j_lo, mu = z.lattice_masses(h)
    if -k_lo < 0 or -k_lo >= size:
        raise ValueError("window must contain the origin")
    cur = np.zeros(size)
    cur[-k_lo] = 1.0
    total = cur.copy()
    escaped = 0.0
    n = 0
    while n < max_conv:
        full = fftconvolve(cur, mu) if mu.size > 64 else np.convolve(cur, mu)
        full = np.clip(full, 0.0, None)
        # full[i] sits at window index j_lo + i
        start = -j_lo
        if start > 0:
            escaped += float(full[:start].sum())
        new = np.zeros(size)
        src_lo = max(start, 0)
        dst_lo = max(-start, 0)
        length = min(full.size - src_lo, size - dst_lo)
        if length > 0:
            new[dst_lo : dst_lo + length] = full[src_lo : src_lo + length]
        cur = new
        total += cur
        n += 1
        if cur.sum() < tol:
            break
    remaining = float(cur.sum())
    if escaped > tol:
        raise ValueError(f"range too small: mass {escaped:.3g} escaped past the left edge {lo}")
    keep = k_hi - k_lo + 1 - int(round(margin / h))
    return LatticeRenewalTable(h, k_lo, total[: max(keep, 1)], n, escaped, remaining)


@dataclass
class StoneRemainder:
    u: float
    value: float
    stderr: float


@dataclass
class StoneReport:
    remainders: list[StoneRemainder]
    target: float
    converging: bool


def stone_check(
    z: TiltedLaw, u_grid: Sequence[float], n_paths: int, seed: int = 0, workers: int | None = None
) -> StoneReport:
    """``H((-inf, u]) - u/EZ`` along a grid; the limit is ``EZ^2 / (2 (EZ)^2)``."""
    if not z.strongly_nonlattice:
        raise GateError("the second-order renewal expansion needs a strongly non-lattice law")
    us = [float(u) for u in u_grid]
    stop = default_stop(z, max(us))
    weights = [lambda s, u=u: (s <= u).astype(float) for u in us]
    ests = renewal_functionals_mc(z, weights, n_paths, stop, seed, workers)
    rems = [StoneRemainder(u, e.value - u / z.mean, e.stderr) for u, e in zip(us, ests)]
    target = z.second_moment / (2.0 * z.mean**2)
    converging = abs(rems[-1].value - target) <= abs(rems[0].value - target) + 3 * math.hypot(
        rems[0].stderr, rems[-1].stderr
    )
    return StoneReport(rems, target, converging)


@dataclass
class LeftTailResult:
    u: float
    value: float
    stderr: float
    theory: float


def left_tail_check(
    z: TiltedLaw,
    a: FactorLawSpec,
    alpha: float,
    u: float,
    n_paths: int,
    seed: int = 0,
    workers: int | None = None,
) -> LeftTailResult:
    """``e^(alpha u) H((-inf, -u])``; its limit is ``1 / (-alpha E log A)``.

    The interval is closed, so for ``u = 0`` the origin ``S_0 = 0`` counts and
    the value is at least 1.
    """
    if u < 0:
        raise ValueError("u must be >= 0")
    mlog = a.mean_log
    if mlog >= 0:
        raise PreconditionError("needs E log A < 0")
    stop = default_stop(z, -u)
    est = renewal_functional_mc(
        z, lambda s: np.ones_like(s), lambda s: s <= -u, n_paths, stop, seed, workers
    )
    scale = math.exp(alpha * u)
    return LeftTailResult(u, scale * est.value, scale * est.stderr, 1.0 / (-alpha * mlog))
