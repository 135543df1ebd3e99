"""Laws of (A, B), the critical exponent, and the tilted increment law.

``A`` is described through ``log A`` (lognormal or two-point), so ``A >= 0``
holds by construction and the cumulant ``kappa(s) = log E A^s`` has a closed
form.  ``B`` is described by its right tail.  A regularly varying tail is the
monotone envelope of ``min(1, x^-alpha L(x))`` above an explicit floor, which
turns any catalogue ``L`` into the tail of an honest random variable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any

import numpy as np
from scipy.optimize import brentq
from scipy.special import log_ndtr, ndtr

from .sv import QUAD_REL_TOL, SlowlyVaryingSpec, adaptive_simpson, integrate_pieces
from .streams import RunningMoments, TAG_ARB, map_chunks, stream

KAPPA_TOL = 1e-9
ALPHA_TOL = 1e-12
# two_point log A is treated as arithmetic when u1/u2 is this close to p/q, q <= MAX_DENOM
MAX_DENOM = 10_000
RATIONAL_TOL = 1e-9


class NoCriticalExponentError(ValueError):
    """``E A^s = 1`` has no positive root for this law."""


class PreconditionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# law of A


@dataclass(frozen=True)
class FactorLawSpec:
    """Law of ``log A``: ``lognormal`` (params m, s2) or ``two_point`` (u1, u2, p)."""

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        p = {k: float(v) for k, v in self.params.items()}
        if self.family == "lognormal":
            _require(p, ("m", "s2"), self.family)
            if p["s2"] <= 0:
                raise ValueError("lognormal needs s2 > 0")
        elif self.family == "two_point":
            _require(p, ("u1", "u2", "p"), self.family)
            if not 0 < p["p"] < 1:
                raise ValueError("two_point needs 0 < p < 1")
            if p["u1"] == p["u2"]:
                raise ValueError("two_point needs distinct atoms")
            if _looks_arithmetic(p["u1"], p["u2"]):
                raise ValueError(
                    f"two_point atoms {p['u1']}, {p['u2']} have a (near) rational ratio; "
                    "log A would be arithmetic"
                )
        else:
            raise ValueError(f"unknown factor law family {self.family!r}")
        object.__setattr__(self, "params", p)

    def kappa(self, s):
        """``log E A^s``."""
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.family == "lognormal":
            out = p["m"] * s + 0.5 * p["s2"] * s * s
        else:
            out = np.logaddexp(math.log(p["p"]) + s * p["u1"], math.log1p(-p["p"]) + s * p["u2"])
        return float(out) if out.ndim == 0 else out

    def dkappa(self, s: float) -> float:
        p = self.params
        if self.family == "lognormal":
            return p["m"] + p["s2"] * s
        w1, w2 = self._tilt_weights(s)
        return w1 * p["u1"] + w2 * p["u2"]

    def _tilt_weights(self, s: float) -> tuple[float, float]:
        p = self.params
        l1 = math.log(p["p"]) + s * p["u1"]
        l2 = math.log1p(-p["p"]) + s * p["u2"]
        top = max(l1, l2)
        e1, e2 = math.exp(l1 - top), math.exp(l2 - top)
        return e1 / (e1 + e2), e2 / (e1 + e2)

    def moment(self, s: float) -> float:
        """``E A^s``."""
        return math.exp(self.kappa(s))

    @property
    def mean_log(self) -> float:
        """``E log A``."""
        return self.dkappa(0.0)

    def sample_log(self, rng: np.random.Generator, size) -> np.ndarray:
        p = self.params
        if self.family == "lognormal":
            return rng.normal(p["m"], math.sqrt(p["s2"]), size)
        return np.where(rng.random(size) < p["p"], p["u1"], p["u2"])

    @property
    def has_density(self) -> bool:
        return self.family == "lognormal"

    def to_json(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj: dict) -> "FactorLawSpec":
        _no_extra(obj, {"family", "params"}, "A")
        return cls(obj["family"], dict(obj.get("params", {})))


def _require(p: dict, names, family: str) -> None:
    missing = [n for n in names if n not in p]
    if missing:
        raise ValueError(f"{family} needs parameters {missing}")
    extra = set(p) - set(names)
    if extra:
        raise ValueError(f"unexpected parameters for {family}: {sorted(extra)}")


def _no_extra(obj: Any, allowed: set, where: str) -> None:
    if not isinstance(obj, dict):
        raise ValueError(f"{where} must be a JSON object")
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unknown keys in {where}: {sorted(extra)}")


def _looks_arithmetic(u1: float, u2: float) -> bool:
    r = u1 / u2
    approx = Fraction(r).limit_denominator(MAX_DENOM)
    return abs(r - float(approx)) <= RATIONAL_TOL


def solve_alpha(a: FactorLawSpec) -> float:
    """The positive root of ``kappa(s) = 0``."""
    d0 = a.dkappa(0.0)
    if d0 >= 0:
        raise NoCriticalExponentError(
            f"kappa'(0) = E log A = {d0:g} >= 0: E A^s >= 1 for all s >= 0"
        )
    hi = 1e-3
    while a.kappa(hi) <= 0:
        hi *= 2.0
        if hi > 1e4:
            raise NoCriticalExponentError("E A^s stays below 1 on (0, 1e4]")
    lo = hi / 2.0
    while a.kappa(lo) >= 0 and lo > 1e-12:
        lo /= 2.0
    root = brentq(a.kappa, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    # polish with Newton on the closed-form cumulant
    for _ in range(3):
        d = a.dkappa(root)
        if d == 0:
            break
        step = a.kappa(root) / d
        root -= step
        if abs(step) <= 1e-16 * max(1.0, root):
            break
    return root


def compute_rho(a: FactorLawSpec, alpha: float) -> float:
    """``rho = E A^alpha log A = kappa'(alpha)`` at a critical ``alpha``."""
    k = a.kappa(alpha)
    if abs(k) > KAPPA_TOL:
        raise PreconditionError(f"kappa({alpha}) = {k:.3g} is not 0; alpha is not critical")
    rho = a.dkappa(alpha) * math.exp(k)
    if rho <= 0:
        raise PreconditionError(f"rho = {rho:g} is not positive")
    return rho


# ---------------------------------------------------------------------------
# tilted law


@dataclass(frozen=True)
class TiltedLaw:
    """Law of an increment ``Z``: ``normal(mean, var)``, ``two_point`` or ``point``.

    ``return_rate`` is the ``theta > 0`` with ``E exp(-theta Z) = 1``; a walk at
    height ``h`` above a level returns below it with probability at most
    ``exp(-theta h)``.  For a law obtained by tilting ``A`` at its critical
    exponent, ``theta = alpha``.
    """

    family: str
    params: dict

    def __post_init__(self):
        p = {k: float(v) for k, v in self.params.items()}
        if self.family == "normal":
            _require(p, ("mean", "var"), "normal")
        elif self.family == "two_point":
            _require(p, ("z1", "z2", "w1"), "two_point")
        elif self.family == "point":
            _require(p, ("at",), "point")
        else:
            raise ValueError(f"unknown tilted law {self.family!r}")
        object.__setattr__(self, "params", p)

    @property
    def mean(self) -> float:
        p = self.params
        if self.family == "normal":
            return p["mean"]
        if self.family == "point":
            return p["at"]
        return p["w1"] * p["z1"] + (1 - p["w1"]) * p["z2"]

    @property
    def second_moment(self) -> float:
        p = self.params
        if self.family == "normal":
            return p["var"] + p["mean"] ** 2
        if self.family == "point":
            return p["at"] ** 2
        return p["w1"] * p["z1"] ** 2 + (1 - p["w1"]) * p["z2"] ** 2

    @property
    def strongly_nonlattice(self) -> bool:
        return self.family == "normal"

    def cumulant(self, s):
        s = np.asarray(s, dtype=float)
        p = self.params
        if self.family == "normal":
            out = p["mean"] * s + 0.5 * p["var"] * s * s
        elif self.family == "point":
            out = p["at"] * s
        else:
            out = np.logaddexp(math.log(p["w1"]) + s * p["z1"], math.log1p(-p["w1"]) + s * p["z2"])
        return float(out) if out.ndim == 0 else out

    @property
    def return_rate(self) -> float:
        if self.mean <= 0:
            raise PreconditionError("increment law needs a positive mean")
        p = self.params
        if self.family == "normal":
            return 2.0 * p["mean"] / p["var"]
        if self.family == "point":
            return math.inf
        if min(p["z1"], p["z2"]) >= 0:
            return math.inf
        # t -> cumulant(-t) is convex, zero at 0 with slope -EZ, so bracket by halving/doubling
        lo, hi = 0.5, 1.0
        while self.cumulant(-lo) >= 0:
            lo, hi = lo / 2.0, lo
        while self.cumulant(-hi) <= 0:
            lo, hi = hi, hi * 2.0
        return brentq(lambda t: self.cumulant(-t), lo, hi, xtol=1e-14)

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        p = self.params
        if self.family == "normal":
            return rng.normal(p["mean"], math.sqrt(p["var"]), size)
        if self.family == "point":
            return np.full(size, p["at"])
        return np.where(rng.random(size) < p["w1"], p["z1"], p["z2"])

    def lattice_masses(self, h: float) -> tuple[int, np.ndarray]:
        """Mean-preserving discretisation on ``h * Z``: ``(k_min, masses)``.

        Each unit of mass at ``z`` is split between the two neighbouring grid
        points in proportion to proximity (linear hat weights), which keeps the
        mean exact.  For the normal law the hat weights are integrated in
        closed form through the second difference of ``E (x - Z)+``.
        """
        p = self.params
        if self.family == "normal":
            mu, sd = p["mean"], math.sqrt(p["var"])
            k_lo = math.floor((mu - 14 * sd) / h) - 1
            k_hi = math.ceil((mu + 14 * sd) / h) + 1
            x = h * np.arange(k_lo - 1, k_hi + 2)
            t = (x - mu) / sd
            psi = (x - mu) * ndtr(t) + sd * np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
            masses = (psi[2:] - 2 * psi[1:-1] + psi[:-2]) / h
            masses = np.clip(masses, 0.0, None)
            masses /= masses.sum()
            return k_lo, masses
        atoms = [(p["at"], 1.0)] if self.family == "point" else [(p["z1"], p["w1"]), (p["z2"], 1 - p["w1"])]
        ks = [math.floor(z / h) for z, _ in atoms]
        k_lo, k_hi = min(ks), max(ks) + 1
        masses = np.zeros(k_hi - k_lo + 1)
        for (z, w), k in zip(atoms, ks):
            frac = z / h - k
            masses[k - k_lo] += w * (1 - frac)
            masses[k + 1 - k_lo] += w * frac
        return k_lo, masses


def make_tilted(a: FactorLawSpec, alpha: float) -> TiltedLaw:
    """Law of ``Z`` with ``P(Z in .) = E A^alpha 1{log A in .}``."""
    if alpha != 0 and abs(a.kappa(alpha)) > KAPPA_TOL:
        raise PreconditionError(f"kappa({alpha}) != 0; the tilt would not be a probability law")
    p = a.params
    if a.family == "lognormal":
        return TiltedLaw("normal", {"mean": p["m"] + alpha * p["s2"], "var": p["s2"]})
    w1, _ = a._tilt_weights(alpha)
    return TiltedLaw("two_point", {"z1": p["u1"], "z2": p["u2"], "w1": w1})


# ---------------------------------------------------------------------------
# law of B


class _LogTail:
    """Shared machinery for tails given by ``log_tail(v) = log P(B > e^v)``."""

    v_floor: float = -math.inf

    def log_tail(self, v):
        raise NotImplementedError

    def tail(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            v = np.log(x)
        out = np.where(x > 0, np.exp(self.log_tail(np.where(x > 0, v, 0.0))), 1.0)
        return float(out) if out.ndim == 0 else out

    def log_quantile(self, q):
        """``log inf{x : P(B > x) <= q}`` by bisection on ``log x``."""
        q = np.asarray(q, dtype=float)
        lq = np.log(q)
        lo = np.full(q.shape, self.v_floor if math.isfinite(self.v_floor) else -60.0)
        at_floor = self.log_tail(lo) <= lq
        hi = lo + 1.0
        for _ in range(200):
            short = self.log_tail(hi) > lq
            if not short.any():
                break
            hi = np.where(short, lo + 2 * (hi - lo), hi)
        for _ in range(200):
            if np.all(hi - lo <= 1e-13 * np.maximum(1.0, np.abs(hi))):
                break
            mid = 0.5 * (lo + hi)
            ok = self.log_tail(mid) <= lq
            hi = np.where(ok, mid, hi)
            lo = np.where(ok, lo, mid)
        out = np.where(at_floor, lo, hi)
        return float(out) if out.ndim == 0 else out

    def quantile(self, q):
        return np.exp(self.log_quantile(q))


@dataclass(frozen=True)
class PerturbationTailSpec(_LogTail):
    """Regularly varying tail ``T(x) = min_{x_floor <= t <= x} min(1, t^-alpha L(t))``.

    ``T = 1`` below ``x_floor``.  Beyond the point where ``t^-alpha L(t)`` is
    nonincreasing the running minimum is exact; on the (short) stretch before
    it the minimum is taken on a fixed grid, which still defines a valid,
    nonincreasing, right-continuous tail.
    """

    alpha: float
    sv: SlowlyVaryingSpec
    x_floor: float = 1.0

    _GRID = 20_001

    def __post_init__(self):
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if self.x_floor <= 0:
            raise ValueError("x_floor must be positive")
        v_floor = math.log(self.x_floor)
        object.__setattr__(self, "v_floor", v_floor)
        v_star = self.sv.monotone_from(self.alpha)
        if v_star <= v_floor:
            object.__setattr__(self, "_grid", None)
            object.__setattr__(self, "v_star", v_floor)
        else:
            grid = np.linspace(v_floor, v_star, self._GRID)
            running = np.minimum.accumulate(np.minimum(0.0, self._g(grid)))
            object.__setattr__(self, "_grid", (grid, running))
            object.__setattr__(self, "v_star", v_star)

    def _g(self, v):
        return -self.alpha * v + self.sv.log_ell(v)

    def log_tail(self, v):
        v = np.asarray(v, dtype=float)
        g = np.minimum(0.0, self._g(v))
        if self._grid is None:
            out = g
        else:
            grid, running = self._grid
            idx = np.clip(np.searchsorted(grid, v, side="right") - 1, 0, grid.size - 1)
            out = np.where(v < self.v_star, running[idx], np.minimum(running[-1], g))
        out = np.where(v < self.v_floor, 0.0, out)
        return float(out) if out.ndim == 0 else out

    @property
    def is_pareto(self) -> bool:
        return self.sv.family == "constant"

    @property
    def envelope_exact(self) -> bool:
        """True when ``T(x) = x^-alpha L(x)`` for every ``x >= x_floor``."""
        return self._grid is None and self._g(self.v_floor) <= 0.0

    def log_quantile(self, q):
        if self.is_pareto:
            q = np.asarray(q, dtype=float)
            out = np.maximum(self.v_floor, (math.log(self.sv.c) - np.log(q)) / self.alpha)
            return float(out) if out.ndim == 0 else out
        return super().log_quantile(q)

    def induced(self) -> "InducedSlowlyVarying":
        return InducedSlowlyVarying(self)

    def to_json(self) -> dict:
        return {"alpha": self.alpha, "L": self.sv.to_json(), "x_floor": self.x_floor}

    @classmethod
    def from_json(cls, obj: dict) -> "PerturbationTailSpec":
        _no_extra(obj, {"alpha", "L", "x_floor"}, "B")
        if "alpha" not in obj:
            raise ValueError("B needs alpha")
        sv = SlowlyVaryingSpec.from_json(obj.get("L", {"family": "constant"}))
        return cls(float(obj["alpha"]), sv, float(obj.get("x_floor", 1.0)))


@dataclass(frozen=True)
class BoundedPerturbationSpec(_LogTail):
    """Bounded ``B``: ``uniform`` on [lo, hi] or ``constant`` b0 (all moments finite)."""

    family: str
    params: dict

    def __post_init__(self):
        p = {k: float(v) for k, v in self.params.items()}
        if self.family == "uniform":
            _require(p, ("lo", "hi"), "uniform")
            if not 0 < p["lo"] < p["hi"]:
                raise ValueError("uniform B needs 0 < lo < hi")
        elif self.family == "constant":
            _require(p, ("b0",), "constant")
            if p["b0"] <= 0:
                raise ValueError("constant B needs b0 > 0")
        else:
            raise ValueError(f"unknown bounded B family {self.family!r}")
        object.__setattr__(self, "params", p)

    def log_tail(self, v):
        x = np.exp(np.asarray(v, dtype=float))
        p = self.params
        if self.family == "constant":
            t = np.where(x < p["b0"], 1.0, 0.0)
        else:
            t = np.clip((p["hi"] - x) / (p["hi"] - p["lo"]), 0.0, 1.0)
        with np.errstate(divide="ignore"):
            out = np.log(t)
        return float(out) if out.ndim == 0 else out

    def log_quantile(self, q):
        q = np.asarray(q, dtype=float)
        p = self.params
        if self.family == "constant":
            out = np.full(q.shape, math.log(p["b0"]))
        else:
            out = np.log(p["hi"] - q * (p["hi"] - p["lo"]))
        return float(out) if out.ndim == 0 else out

    def moment(self, s: float) -> float:
        p = self.params
        if self.family == "constant":
            return p["b0"] ** s
        lo, hi = p["lo"], p["hi"]
        return (hi ** (s + 1) - lo ** (s + 1)) / ((s + 1) * (hi - lo))

    def to_json(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}


@dataclass(frozen=True)
class BreimanTail(_LogTail):
    """Tail of ``B = A * b0`` with ``b0`` Pareto(alpha, 1) independent of ``A``.

    ``P(B > x) = P(A >= x) + x^-alpha E[A^alpha 1{A < x}]``, closed form for
    both catalogue laws of ``A``.
    """

    a: FactorLawSpec
    alpha: float

    def log_tail(self, v):
        v = np.asarray(v, dtype=float)
        al = self.alpha
        p = self.a.params
        if self.a.family == "lognormal":
            sd = math.sqrt(p["s2"])
            k = self.a.kappa(al)
            out = np.logaddexp(
                log_ndtr(-(v - p["m"]) / sd),
                -al * v + k + log_ndtr((v - p["m"] - al * p["s2"]) / sd),
            )
        else:
            t1 = np.minimum(0.0, al * (p["u1"] - v)) + math.log(p["p"])
            t2 = np.minimum(0.0, al * (p["u2"] - v)) + math.log1p(-p["p"])
            out = np.logaddexp(t1, t2)
        out = np.minimum(out, 0.0)
        return float(out) if out.ndim == 0 else out

    def induced(self) -> "InducedSlowlyVarying":
        return InducedSlowlyVarying(self)


class InducedSlowlyVarying:
    """``L_B(x) = x^alpha P(B > x)`` of a tail, in log domain.

    Below the floor ``L_B(x) = x^alpha``, so the de Haan integral from 0 is
    finite; that piece is integrated in closed form.
    """

    family = "induced"

    def __init__(self, tail):
        self.tail_spec = tail
        self.alpha = tail.alpha
        self.v_floor = tail.v_floor if math.isfinite(tail.v_floor) else -40.0 / tail.alpha

    def ell(self, u):
        u = np.asarray(u, dtype=float)
        return np.exp(self.alpha * u + self.tail_spec.log_tail(u))

    def log_ell(self, u):
        return self.alpha * np.asarray(u, dtype=float) + self.tail_spec.log_tail(u)

    def breaks(self) -> tuple[float, ...]:
        t = self.tail_spec
        pts = [self.v_floor]
        if isinstance(t, PerturbationTailSpec):
            pts += [x for x in (0.0, t.v_star) if x > self.v_floor]
        return tuple(pts)

    def integral(self, a: float, b: float, rel_tol: float = QUAD_REL_TOL) -> tuple[float, float]:
        if b < a:
            v, e = self.integral(b, a, rel_tol)
            return -v, e
        al = self.alpha
        t = self.tail_spec
        total, err = 0.0, 0.0
        if a < self.v_floor:
            # T = 1 below the floor (for breiman, 1 - P(A b0 <= e^-40/alpha), negligible)
            top = min(b, self.v_floor)
            low = 0.0 if math.isinf(a) else math.exp(al * a)
            total += (math.exp(al * top) - low) / al
            a = top
        if b <= a:
            return total, err
        if isinstance(t, PerturbationTailSpec) and t.envelope_exact:
            closed = t.sv.closed_integral(a, b)
            if closed is not None:
                return total + closed, err
        v, e = integrate_pieces(self.ell, a, b, self.breaks(), rel_tol)
        return total + v, err + e


# ---------------------------------------------------------------------------
# the model


DEPENDENCE = ("independent", "breiman")


@dataclass(frozen=True)
class ModelSpec:
    """Joint law of ``(A, B)`` with derived ``alpha`` and ``rho``.

    ``regime`` is one of

    * ``critical``    ``E A^alpha_B = 1`` and B regularly varying with ``E B^alpha = inf``
    * ``subcritical`` ``E A^alpha_B < 1``
    * ``goldie``      bounded B with a critical A (``E B^alpha < inf``)
    """

    a: FactorLawSpec
    b: Any
    dependence: str = "independent"

    def __post_init__(self):
        if self.dependence not in DEPENDENCE:
            raise ValueError(f"dependence must be one of {DEPENDENCE}")
        if isinstance(self.b, BoundedPerturbationSpec):
            if self.dependence != "independent":
                raise ValueError("bounded B supports only independent dependence")
            alpha = solve_alpha(self.a)
            regime = "goldie"
        else:
            alpha_b = self.b.alpha
            k = self.a.kappa(alpha_b)
            if abs(k) <= KAPPA_TOL:
                alpha, regime = alpha_b, "critical"
            elif k < 0:
                alpha, regime = alpha_b, "subcritical"
            else:
                raise ValueError(f"E A^alpha_B = {math.exp(k):.4g} > 1 is not supported")
            if self.dependence == "breiman":
                if regime != "critical":
                    raise ValueError("breiman dependence needs a critical A")
                if not (self.b.is_pareto and self.b.sv.c == 1.0 and self.b.x_floor == 1.0):
                    raise ValueError("breiman dependence uses b0 ~ Pareto(alpha, 1); set B to that law")
        rho = compute_rho(self.a, alpha) if regime != "subcritical" else math.nan
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "regime", regime)

    # -- B -------------------------------------------------------------------
    @property
    def b_law(self):
        """The law of B itself (for breiman, the product law)."""
        if self.dependence == "breiman":
            return BreimanTail(self.a, self.alpha)
        return self.b

    def log_b_from_uniform(self, log_a, q):
        """Inverse-transform ``log B`` from uniforms ``q`` in (0, 1]."""
        if self.dependence == "breiman":
            return np.asarray(log_a) - np.log(q) / self.alpha
        return self.b.log_quantile(q)

    def sample_log_pairs(self, rng: np.random.Generator, size) -> tuple[np.ndarray, np.ndarray]:
        log_a = self.a.sample_log(rng, size)
        q = 1.0 - rng.random(size)
        return log_a, self.log_b_from_uniform(log_a, q)

    def tilted(self) -> TiltedLaw:
        return make_tilted(self.a, self.alpha)

    def induced_sv(self) -> InducedSlowlyVarying:
        if isinstance(self.b_law, BoundedPerturbationSpec):
            raise PreconditionError("bounded B has no regularly varying tail")
        return InducedSlowlyVarying(self.b_law)

    def tilde_b(self, u: float) -> float:
        """``Ltilde_B(e^u) = int_0^{e^u} L_B(t)/t dt``."""
        return self.induced_sv().integral(-math.inf, u)[0]

    @property
    def arb_holds(self) -> bool:
        """Moment condition E A^eta B^(alpha-eta) < inf for some eta.

        Every catalogue ``A`` has ``E A^(alpha+eps) < inf`` for all eps, which
        implies it by Hoelder (independent case); in the breiman case
        ``A^eta (A b0)^(alpha-eta) = A^alpha b0^(alpha-eta)`` is integrable.
        """
        return self.regime in ("critical", "goldie")

    # -- io --------------------------------------------------------------------
    def to_json(self) -> dict:
        return {"A": self.a.to_json(), "B": self.b.to_json(), "dependence": self.dependence}

    @classmethod
    def from_json(cls, obj: dict) -> "ModelSpec":
        _no_extra(obj, {"A", "B", "dependence"}, "model")
        for key in ("A", "B"):
            if key not in obj:
                raise ValueError(f"model needs {key!r}")
        a = FactorLawSpec.from_json(obj["A"])
        bobj = obj["B"]
        if isinstance(bobj, dict) and "family" in bobj:
            _no_extra(bobj, {"family", "params"}, "B")
            b = BoundedPerturbationSpec(bobj["family"], dict(bobj.get("params", {})))
        else:
            b = PerturbationTailSpec.from_json(bobj)
        return cls(a, b, obj.get("dependence", "independent"))


def canonical_model() -> ModelSpec:
    """lognormal(-1, 2) A with Pareto(1, 1) B: alpha = rho = 1, Z ~ normal(1, 2)."""
    return ModelSpec(
        FactorLawSpec("lognormal", {"m": -1.0, "s2": 2.0}),
        PerturbationTailSpec(1.0, SlowlyVaryingSpec("constant"), 1.0),
    )


def two_point_p(u1: float = 1.0, u2: float = -math.sqrt(2.0), alpha: float = 1.0) -> float:
    """The mass on ``u1`` making ``E A^alpha = 1``."""
    e1, e2 = math.exp(alpha * u1), math.exp(alpha * u2)
    return (1 - e2) / (e1 - e2)


def two_point_model() -> ModelSpec:
    return ModelSpec(
        FactorLawSpec("two_point", {"u1": 1.0, "u2": -math.sqrt(2.0), "p": two_point_p()}),
        PerturbationTailSpec(1.0, SlowlyVaryingSpec("constant"), 1.0),
    )


# ---------------------------------------------------------------------------
# operations on B


def sample_pair(model: ModelSpec, rng: np.random.Generator) -> tuple[float, float]:
    """One draw of ``(A, B)``."""
    log_a, log_b = model.sample_log_pairs(rng, 1)
    return float(np.exp(log_a[0])), float(np.exp(log_b[0]))


def tail_b(model: ModelSpec, x):
    return model.b_law.tail(x)


def quantile_b(model: ModelSpec, q):
    q = np.asarray(q, dtype=float)
    if np.any((q <= 0) | (q >= 1)):
        raise ValueError("q must lie in (0, 1)")
    out = model.b_law.quantile(q)
    return float(out) if np.ndim(out) == 0 else out


def truncated_moment_b(model: ModelSpec, r: float, x: float) -> float:
    """``E B^(alpha+r) 1{B <= x}`` as ``(alpha+r) int_0^x t^(alpha+r-1) T(t) dt - x^(alpha+r) T(x)``.

    The integral is taken in ``t`` (not ``log t``) on a geometric initial
    mesh, independently of the log-domain de Haan integral.
    """
    if x <= 0:
        raise ValueError("x must be positive")
    if r < 0:
        raise ValueError("r must be >= 0")
    law = model.b_law
    s = model.alpha + r
    floor = math.exp(law.v_floor) if math.isfinite(law.v_floor) else 0.0
    if isinstance(law, BreimanTail):
        floor = math.exp(-60.0 / model.alpha)
    if x <= floor:
        return 0.0
    # T = 1 on (0, floor]
    head = floor**s / s
    f = lambda t: t ** (s - 1.0) * law.tail(t)
    nodes = np.geomspace(floor, x, 2049)
    breaks = []
    if isinstance(law, PerturbationTailSpec):
        breaks = [math.exp(v) for v in (0.0, law.v_star) if floor < math.exp(v) < x]
    pts = [floor] + sorted(breaks) + [x]
    integral = 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        seg = nodes[(nodes > lo) & (nodes < hi)]
        mesh = np.concatenate([[lo], seg, [hi]])
        v, _ = adaptive_simpson(f, lo, hi, rel_tol=1e-12, nodes=mesh)
        integral += v
    return s * (head + integral) - x**s * float(law.tail(x))


@dataclass
class ArbEstimate:
    eta: float
    estimate: float
    stderr: float
    estimate_half: float
    stderr_half: float
    stable: bool
    theory: float | None
    n: int


def b_moment(model: ModelSpec, s: float) -> float:
    """``E B^s = s int_0^inf t^(s-1) T(t) dt`` for ``0 < s < alpha``, by quadrature in log t."""
    law = model.b_law
    if isinstance(law, BoundedPerturbationSpec):
        return law.moment(s)
    if not 0 < s < model.alpha:
        raise ValueError("need 0 < s < alpha")
    ind = InducedSlowlyVarying(law)
    g = lambda v: np.exp((s - model.alpha) * v) * ind.ell(v)
    lo = ind.v_floor
    head = math.exp(s * lo) if isinstance(law, PerturbationTailSpec) else 0.0
    if isinstance(law, BreimanTail):
        lo = -60.0 / s
    # integrand decays like exp(-(alpha - s) v) beyond the floor
    hi = lo + 80.0 / (model.alpha - s)
    body, _ = integrate_pieces(g, lo, hi, ind.breaks(), rel_tol=1e-11)
    return head + s * body


def check_arb(model: ModelSpec, eta: float, n: int, seed: int = 0, workers: int | None = None) -> ArbEstimate:
    """Monte Carlo estimate of ``E A^eta B^(alpha-eta)`` with a half-sample stability check."""
    if not 0 < eta < model.alpha:
        raise PreconditionError("eta must lie in (0, alpha)")
    if n < 10_000:
        raise PreconditionError("check_arb needs n >= 1e4")
    al = model.alpha
    chunk = 1 << 16

    def run(i: int, size: int) -> np.ndarray:
        rng = stream(seed, TAG_ARB, i)
        log_a, log_b = model.sample_log_pairs(rng, size)
        return np.exp(eta * log_a + (al - eta) * log_b)

    parts = map_chunks(run, n, chunk, workers)
    full, half = RunningMoments(), RunningMoments()
    half_n = n // 2
    seen = 0
    for vals in parts:
        full.add_chunk(vals[None, :])
        take = max(0, min(vals.size, half_n - seen))
        if take:
            half.add_chunk(vals[None, :take])
        seen += vals.size
    est, se = float(full.mean[0]), float(full.stderr[0])
    est_h, se_h = float(half.mean[0]), float(half.stderr[0])
    stable = abs(est - est_h) < 3.0 * math.hypot(se, se_h)
    theory = None
    if model.dependence == "independent":
        theory = model.a.moment(eta) * b_moment(model, al - eta)
    return ArbEstimate(eta, est, se, est_h, se_h, stable, theory, n)
