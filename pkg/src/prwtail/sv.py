"""Slowly varying functions in log domain and the de Haan integral.

A slowly varying ``L`` is always handled through ``ell(u) = L(exp(u))`` so that
arguments like ``exp(400)`` never have to be formed.  The de Haan integral
``int_{x0}^{x} L(t)/t dt`` becomes ``int_{log x0}^{log x} ell(v) dv``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

QUAD_REL_TOL = 1e-9
QUAD_BUDGET = 1_000_000

FAMILIES = ("constant", "log_power", "iterated_log", "oscillating")


class QuadratureError(RuntimeError):
    """Adaptive quadrature exhausted its evaluation budget."""


def adaptive_simpson(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rel_tol: float = QUAD_REL_TOL,
    budget: int = QUAD_BUDGET,
    n_init: int | None = None,
    nodes: np.ndarray | None = None,
) -> tuple[float, float]:
    """Composite adaptive Simpson rule for a vectorised integrand.

    All unresolved panels are bisected together each round, so the integrand
    is called on arrays rather than scalars.  Panels are accepted once the
    Richardson difference is below their share of
    ``rel_tol * (1 + |integral|)``.

    Returns ``(value, error_estimate)``.
    """
    if a == b:
        return 0.0, 0.0
    sign = 1.0
    if b < a:
        a, b, sign = b, a, -1.0
    if nodes is None:
        n0 = n_init or int(min(max(16, math.ceil(b - a)), 4096))
        nodes = np.linspace(a, b, n0 + 1)
    lo, hi = nodes[:-1], nodes[1:]
    mid = 0.5 * (lo + hi)
    flo, fmid, fhi = f(lo), f(mid), f(hi)
    evals = 3 * lo.size
    whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi)
    tol = rel_tol * (1.0 + abs(float(whole.sum())))
    width = b - a
    value = 0.0
    err = 0.0
    while lo.size:
        lm = 0.5 * (lo + mid)
        rm = 0.5 * (mid + hi)
        flm, frm = f(lm), f(rm)
        evals += 2 * lo.size
        left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid)
        right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi)
        diff = left + right - whole
        ok = np.abs(diff) <= 15.0 * tol * (hi - lo) / width
        value += float(np.sum((left + right + diff / 15.0)[ok]))
        err += float(np.sum(np.abs(diff[ok]) / 15.0))
        bad = ~ok
        if not bad.any():
            break
        if evals > budget:
            raise QuadratureError(
                f"adaptive Simpson on [{a}, {b}] did not reach tolerance {tol:.3g} "
                f"within {budget} evaluations"
            )
        lo, mid, hi = lo[bad], mid[bad], hi[bad]
        flo, fmid, fhi = flo[bad], fmid[bad], fhi[bad]
        lm, rm, flm, frm = lm[bad], rm[bad], flm[bad], frm[bad]
        left, right = left[bad], right[bad]
        lo, mid, hi = np.concatenate([lo, mid]), np.concatenate([lm, rm]), np.concatenate([mid, hi])
        flo, fmid, fhi = (
            np.concatenate([flo, fmid]),
            np.concatenate([flm, frm]),
            np.concatenate([fmid, fhi]),
        )
        whole = np.concatenate([left, right])
    return sign * value, err


def integrate_pieces(
    f: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    breaks: Sequence[float] = (),
    rel_tol: float = QUAD_REL_TOL,
) -> tuple[float, float]:
    """Adaptive Simpson on [a, b] split at interior ``breaks`` (kinks, jumps)."""
    pts = [a] + sorted(x for x in breaks if a < x < b) + [b]
    total, err = 0.0, 0.0
    for lo, hi in zip(pts[:-1], pts[1:]):
        v, e = adaptive_simpson(f, lo, hi, rel_tol=rel_tol)
        total += v
        err += e
    return total, err


@dataclass(frozen=True)
class SlowlyVaryingSpec:
    """A catalogue slowly varying function.

    Families (``ell(u) = L(e^u)``, ``u+ = max(u, 0)``):

    * ``constant``      ``c``
    * ``log_power``     ``c * (e + u+)**beta``, ``beta > -1``
    * ``iterated_log``  ``c * log(e + u+)**beta``
    * ``oscillating``   ``c * exp(sin(sqrt(u+)))``

    Every family is constant for ``u <= 0`` (``x <= 1``).
    """

    family: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown slowly varying family {self.family!r}")
        params = {"c": 1.0, **{k: float(v) for k, v in self.params.items()}}
        allowed = {"c"} | ({"beta"} if self.family in ("log_power", "iterated_log") else set())
        extra = set(params) - allowed
        if extra:
            raise ValueError(f"unexpected parameters for {self.family}: {sorted(extra)}")
        if params["c"] <= 0:
            raise ValueError("c must be positive")
        if self.family in ("log_power", "iterated_log"):
            if "beta" not in params:
                raise ValueError(f"{self.family} needs parameter beta")
            if self.family == "log_power" and params["beta"] <= -1:
                raise ValueError("log_power needs beta > -1")
        object.__setattr__(self, "params", params)

    @property
    def c(self) -> float:
        return self.params["c"]

    @property
    def domain_floor(self) -> float:
        """Smallest x from which the family formula (rather than its constant extension) applies."""
        return 0.0 if self.family == "constant" else 1.0

    def ell(self, u):
        u = np.asarray(u, dtype=float)
        up = np.maximum(u, 0.0)
        c = self.c
        if self.family == "constant":
            return np.full_like(u, c)
        if self.family == "log_power":
            return c * (math.e + up) ** self.params["beta"]
        if self.family == "iterated_log":
            return c * np.log(math.e + up) ** self.params["beta"]
        return c * np.exp(np.sin(np.sqrt(up)))

    def log_ell(self, u):
        return np.log(self.ell(u))

    def closed_integral(self, a: float, b: float) -> float | None:
        """``int_a^b ell`` when the family has an antiderivative, else None."""
        if self.family == "constant":
            return self.c * (b - a)
        if self.family == "log_power":
            beta = self.params["beta"]

            def prim(v: float) -> float:
                if v <= 0:
                    return self.c * math.e**beta * v
                return self.c * ((math.e + v) ** (beta + 1) - math.e ** (beta + 1)) / (beta + 1)

            return prim(b) - prim(a)
        return None

    def breaks(self) -> tuple[float, ...]:
        return () if self.family == "constant" else (0.0,)

    def integral(self, a: float, b: float, rel_tol: float = QUAD_REL_TOL) -> tuple[float, float]:
        """``(int_a^b ell(v) dv, abs error)``; ``a = -inf`` diverges for every family."""
        if math.isinf(a) or math.isinf(b):
            raise ValueError(
                "the integral of a slowly varying function over an infinite range diverges; "
                "use the tail-induced function of a perturbation law for x0 = 0"
            )
        closed = self.closed_integral(a, b)
        if closed is not None:
            return closed, 0.0
        return integrate_pieces(self.ell, a, b, self.breaks(), rel_tol)

    def monotone_from(self, alpha: float) -> float:
        """A point beyond which ``-alpha*u + log ell(u)`` is nonincreasing."""
        if self.family == "constant":
            return -math.inf
        if self.family == "log_power":
            beta = self.params["beta"]
            # d/du log ell = beta / (e + u) for u > 0
            return -math.inf if beta <= alpha * math.e else beta / alpha - math.e
        if self.family == "iterated_log":
            beta = self.params["beta"]
            if beta <= alpha * math.e:
                # d/du log ell = beta / ((e+u) log(e+u)) <= beta / e
                return -math.inf
            target = beta / alpha
            return brentq(lambda v: (math.e + v) * math.log(math.e + v) - target, 0.0, target)
        # d/du sin(sqrt(u)) = cos(sqrt(u)) / (2 sqrt(u)) <= 1/(2 sqrt(u))
        return 1.0 / (4.0 * alpha * alpha)

    def to_json(self) -> dict:
        return {"family": self.family, "params": dict(self.params)}

    @classmethod
    def from_json(cls, obj: dict) -> "SlowlyVaryingSpec":
        if not isinstance(obj, dict) or "family" not in obj:
            raise ValueError("slowly varying spec needs a 'family' field")
        unknown = set(obj) - {"family", "params"}
        if unknown:
            raise ValueError(f"unknown keys in slowly varying spec: {sorted(unknown)}")
        return cls(obj["family"], dict(obj.get("params", {})))


@dataclass(frozen=True)
class DeHaanValue:
    x0: float
    u: float
    value: float
    abs_tol: float


def eval_log(sv, u):
    """``L(e^u)``; works for catalogue specs and tail-induced functions alike."""
    out = sv.ell(u)
    return float(out) if np.ndim(out) == 0 else out


def tilde_log(sv, x0: float, u: float) -> DeHaanValue:
    """De Haan integral ``int_{x0}^{e^u} L(t)/t dt`` computed as ``int_{log x0}^u ell``."""
    if x0 < 0:
        raise ValueError("x0 must be >= 0")
    lower = -math.inf if x0 == 0 else math.log(x0)
    if u < lower:
        raise ValueError(f"need u >= log x0 ({lower}), got {u}")
    value, err = sv.integral(lower, u)
    return DeHaanValue(x0=x0, u=u, value=value, abs_tol=err)


def dehaan_ratio(sv, lam: float, u: float) -> float:
    """``(Ltilde(lam x) - Ltilde(x)) / L(x)`` at ``x = e^u``; tends to ``log lam``."""
    if lam <= 1:
        raise ValueError("lambda must exceed 1")
    num, _ = sv.integral(u, u + math.log(lam))
    return num / float(sv.ell(u))


def karamata_ratio(sv, alpha: float, X: float, u: float) -> float:
    """``int_X^{e^u} t^(alpha-1) L(t) dt`` over ``e^(alpha u) L(e^u) / alpha``; tends to 1."""
    if alpha <= 0 or X <= 0:
        raise ValueError("alpha and X must be positive")
    a = math.log(X)
    if u <= a:
        raise ValueError("need u > log X")
    if getattr(sv, "family", None) == "constant":
        return -math.expm1(alpha * (a - u))
    # rescaled by e^(-alpha u) so nothing overflows
    f = lambda v: np.exp(alpha * (v - u)) * sv.ell(v)
    breaks = sv.breaks() if hasattr(sv, "breaks") else ()
    num, _ = integrate_pieces(f, a, u, breaks)
    return alpha * num / float(sv.ell(u))


@dataclass
class PotterReport:
    delta: float
    A: float
    A_by_width: list[tuple[float, float]]
    growing: bool


def potter_check(sv, delta: float, u_grid: Sequence[float]) -> PotterReport:
    """Smallest ``A >= 1`` with ``L(y)/L(x) <= A max((y/x)^d, (y/x)^-d)`` over grid pairs.

    ``A`` is also reported on the leading quarter, half and full grid so that
    growth with the grid width is visible.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    u = np.sort(np.asarray(u_grid, dtype=float))
    if u.size == 0:
        raise ValueError("empty grid")
    logl = np.log(sv.ell(u))

    def best(m: int) -> float:
        uu, ll = u[:m], logl[:m]
        worst = 0.0
        step = 2048
        for s in range(0, m, step):
            block = ll[s : s + step, None] - ll[None, :] - delta * np.abs(uu[s : s + step, None] - uu[None, :])
            worst = max(worst, float(block.max()))
        return math.exp(worst)

    widths = sorted({max(1, u.size // 4), max(1, u.size // 2), u.size})
    by_width = [(float(u[m - 1] - u[0]), best(m)) for m in widths]
    A = by_width[-1][1]
    growing = any(b[1] > a[1] * (1 + 1e-12) for a, b in zip(by_width, by_width[1:]))
    return PotterReport(delta=delta, A=A, A_by_width=by_width, growing=growing)


def slow_variation_deviation(sv, lam: float, u_grid: Sequence[float]) -> np.ndarray:
    """``|ell(u + log lam)/ell(u) - 1|`` along a grid."""
    u = np.asarray(u_grid, dtype=float)
    return np.abs(sv.ell(u + math.log(lam)) / sv.ell(u) - 1.0)
