"""Acceptance criteria 1-13, one PASS/FAIL line each.

Canonical model: A lognormal(-1, 2), B Pareto(1, 1); alpha = rho = 1,
Z ~ normal(1, 2), Ltilde_B(x) = 1 + log x.  Run alone with
``pytest tests/test_acceptance.py -v``; the lines are repeated in the
terminal summary.
"""
import json
import math
import os
import sys
import time

import numpy as np
import pytest

from prwtail.cli import main as cli_main
from prwtail.model import canonical_model, compute_rho, solve_alpha, truncated_moment_b, two_point_model
from prwtail.model import BoundedPerturbationSpec, FactorLawSpec, ModelSpec, PerturbationTailSpec
from prwtail.prw import curve_counts, fixed_point_distance, min_moment_alpha
from prwtail.renewal import (
    left_tail_check,
    renewal_histogram_mc,
    renewal_interval_mc,
    renewal_lattice_oracle,
    stone_check,
)
from prwtail.sv import SlowlyVaryingSpec
from prwtail.verify import (
    verify_corl,
    verify_goldie_regime,
    verify_lth,
    verify_pert_first,
    verify_pert_second,
    verify_subcritical_regime,
)

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIGS = os.path.join(ROOT, "configs")
SEED = 20261016

pytestmark = pytest.mark.slow
PERT_GRID = [5.0, 6.0, 7.0, 8.0, 9.0, 10.0]
PERT_PATHS = 10_000_000


@pytest.fixture
def check(acceptance_log):
    def _check(cid: str, ok: bool, detail: str, elapsed: float, limit: float):
        in_time = elapsed < limit
        verdict = "PASS" if ok and in_time else "FAIL"
        line = f"[{cid}] {verdict}  {detail}  ({elapsed:.1f}s; limit {limit:g}s)"
        acceptance_log.append(line)
        print(line)
        assert ok, line
        assert in_time, line

    return _check


class Timer:
    def __enter__(self):
        self.t = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t


@pytest.fixture(scope="session")
def canon_counts():
    t = time.perf_counter()
    c = curve_counts(canonical_model(), PERT_GRID, PERT_PATHS, 1e-6, seed=SEED)
    return c, time.perf_counter() - t


@pytest.fixture(scope="session")
def canon_min_moment():
    t = time.perf_counter()
    mm = min_moment_alpha(canonical_model(), 30, 100_000, 1e-6, seed=SEED)
    return mm, time.perf_counter() - t


def test_c01_exact_identities(check):
    with Timer() as t:
        m = canonical_model()
        alpha = solve_alpha(m.a)
        rho = compute_rho(m.a, alpha)
        errs = []
        for u in (1.0, 3.0, 6.0):
            lhs = truncated_moment_b(m, 0.0, math.exp(u))
            rhs = m.alpha * m.tilde_b(u) - float(m.induced_sv().ell(u))
            errs.append(abs(lhs - rhs) / abs(rhs))
    ok = abs(alpha - 1) <= 1e-9 and abs(rho - 1) <= 1e-9 and max(errs) <= 1e-9
    check("1", ok, f"alpha={alpha!r} rho={rho!r} max rel identity error={max(errs):.2e} (tol 1e-9)", t.elapsed, 1)


def test_c02_blackwell(check, canon):
    with Timer() as t:
        est = renewal_interval_mc(canon.tilted(), 30.0, 31.0, 200_000, seed=SEED)
    check("2", abs(est.value - 1.0) <= 0.02, f"H((30,31]) = {est.value:.4f} +- {est.stderr:.4f} (target 1.00 +- 0.02)", t.elapsed, 10)


def test_c03_stone(check, canon):
    with Timer() as t:
        rep = stone_check(canon.tilted(), [10.0, 20.0, 30.0], 500_000, seed=SEED)
    r = rep.remainders[-1]
    check("3", abs(r.value - 1.5) <= 0.05, f"H((-inf,30]) - 30 = {r.value:.4f} +- {r.stderr:.4f} (target 1.5 +- 0.05)", t.elapsed, 10)


def test_c04_left_tail(check, canon):
    with Timer() as t:
        res = left_tail_check(canon.tilted(), canon.a, canon.alpha, 5.0, 1_000_000, seed=SEED)
    check("4", 0.8 <= res.value <= 1.2, f"e^5 H((-inf,-5]) = {res.value:.4f} +- {res.stderr:.4f} (band [0.8, 1.2], limit {res.theory:g})", t.elapsed, 60)


def test_c05_oracle_equivalence(check, canon):
    z = canon.tilted()
    edges = np.arange(-5.0, 31.0)
    with Timer() as t:
        tab = renewal_lattice_oracle(z, 0.01, -30.0, 31.0)
        hist = renewal_histogram_mc(z, edges, 1_000_000, seed=SEED)
    orc = np.array([tab.mass(a, b) for a, b in zip(edges[:-1], edges[1:])])
    use = orc >= 0.1
    rel = np.abs(hist.mass[use] / orc[use] - 1.0)
    check("5", bool(rel.max() <= 0.02), f"max relative gap {rel.max():.4f} over {use.sum()} bins (tol 0.02)", t.elapsed, 60)


def test_c06_corl(check, canon):
    z = canon.tilted()
    with Timer() as t:
        const = verify_corl(z, SlowlyVaryingSpec("constant"), 1.0, [50, 100, 200], 100_000, seed=SEED)
        osc = verify_corl(z, SlowlyVaryingSpec("oscillating"), 1.0, [100, 200, 400], 100_000, seed=SEED)
    a, b = const.statistics["terminal_ratio"], osc.statistics["terminal_ratio"]
    ok = 0.98 <= a <= 1.02 and 0.9 <= b <= 1.1
    check("6", ok, f"L=1 ratio at u=200: {a:.4f} (band [0.98,1.02]); oscillating at u=400: {b:.4f} (band [0.9,1.1])", t.elapsed, 60)


def test_c07_lth(check, canon):
    with Timer() as t:
        rep = verify_lth(canon, list(range(50, 401, 50)), 100_000, seed=SEED)
    s = rep.statistics
    ok = s["max_abs_d_over_ell"] <= 10 and abs(s["slope"]) <= 0.02
    check("7", ok, f"max |D|/ell = {s['max_abs_d_over_ell']:.3f} (<= 10); slope = {s['slope']:.2e} (|.| <= 0.02)", t.elapsed, 60)


def test_c08_pert_first(check, canon_counts, two_point):
    counts, t_counts = canon_counts
    with Timer() as t:
        rc = verify_pert_first(canonical_model(), PERT_GRID, PERT_PATHS, counts=counts)
        rt = verify_pert_first(two_point, PERT_GRID, PERT_PATHS, seed=SEED)
    sc, st = rc.statistics, rt.statistics
    detail = (
        f"canonical: slope {sc['slope']:.4f}, spearman {sc['spearman']:.3f}, terminal {sc['terminal_ratio']:.4f}; "
        f"two-point: slope {st['slope']:.4f}, spearman {st['spearman']:.3f}, terminal {st['terminal_ratio']:.4f} "
        "(slope [0.9,1.1], spearman > 0, terminal [0.6,1.1])"
    )
    check("8", rc.passed and rt.passed, detail, t.elapsed + t_counts, 180)


@pytest.fixture(scope="module")
def pert2_reports(canon_counts, canon_min_moment):
    counts, t1 = canon_counts
    mm, t2 = canon_min_moment
    t = time.perf_counter()
    rep = verify_pert_second(canonical_model(), PERT_GRID, PERT_PATHS, seed=SEED, counts=counts, min_moment=mm)
    return rep, time.perf_counter() - t + t2


def test_c09a_pert_second_slope(check, pert2_reports):
    rep, el = pert2_reports
    c = rep.criterion("slope")
    check("9a", c.passed, f"remainder slope {c.observed:.4f} (|.| <= 0.1)", el, 180)


def test_c09b_pert_second_constant(check, pert2_reports):
    # stated form: top-half mean of e^u p_hat - (1+u) against -E min(AR,B)^alpha.
    # The leading renewal sum carries its own O(1) offset (about 1.5 here), so
    # this is expected to fail; see 9c for the offset-corrected form.
    rep, el = pert2_reports
    s = rep.statistics
    c = rep.criterion("constant")
    detail = (
        f"top-half mean remainder {s['remainder_top_mean']:.3f} vs target {s['target']:.3f}; "
        f"|gap| {abs(c.observed):.3f} vs 3 sigma {c.bound:.3f}"
    )
    check("9b", c.passed, detail, el, 180)


def test_c09c_pert_second_decomposed(check, pert2_reports):
    rep, el = pert2_reports
    s = rep.statistics
    c = rep.criterion("constant_decomposed")
    detail = (
        f"remainder minus renewal offset {s['decomposed_top_mean']:.3f} (offset {s['renewal_offset_top_mean']:.3f}) "
        f"vs target {s['target']:.3f}; |gap| {abs(c.observed):.3f} vs 3 sigma {c.bound:.3f}; coupled shift mismatch "
        f"{rep.criterion('coupled_shift').observed}"
    )
    check("9c", c.passed and rep.criterion("coupled_shift").passed, detail, el, 180)


def test_c10_fixed_point(check, canon):
    with Timer() as t:
        res = fixed_point_distance(canon, 100_000, seed=SEED)
    check("10", res.ks <= 0.015, f"KS = {res.ks:.4f} (<= 0.015), p = {res.pvalue:.3f}", t.elapsed, 30)


def test_c11_cross_regimes(check):
    a_crit = FactorLawSpec("lognormal", {"m": -1.0, "s2": 2.0})
    pareto = PerturbationTailSpec(1.0, SlowlyVaryingSpec("constant"), 1.0)
    sub = ModelSpec(FactorLawSpec("lognormal", {"m": -2.0, "s2": 2.0}), pareto)
    gold = ModelSpec(a_crit, BoundedPerturbationSpec("uniform", {"lo": 1.0, "hi": 2.0}))
    with Timer() as t:
        rs = verify_subcritical_regime(sub, [5.0, 7.0, 9.0], PERT_PATHS, seed=SEED)
        rg = verify_goldie_regime(gold, [5.0, 6.0, 7.0], PERT_PATHS, seed=SEED)
    ss, sg = rs.statistics, rg.statistics
    detail = (
        f"subcritical ratio at u=9 {ss['terminal_ratio']:.4f} vs {ss['limit']:.4f} (10%); "
        f"Goldie e^7 p_hat {sg['left']:.4f} +- {sg['left_stderr']:.4f} vs plug-in {sg['right']:.4f} +- {sg['right_stderr']:.4f} (3 sigma)"
    )
    check("11", rs.passed and rg.passed, detail, t.elapsed, 180)


def test_c12_negative_controls(check, tmp_path):
    neg = os.path.join(CONFIGS, "negative")
    codes = {}
    with Timer() as t:
        for name in sorted(os.listdir(neg)):
            codes[name] = cli_main(["verify", "--config", os.path.join(neg, name), "--seed", str(SEED), "--out", str(tmp_path / name)])
    ok = all(c == 1 for c in codes.values())
    check("12", ok, "exit codes " + ", ".join(f"{k}={v}" for k, v in codes.items()) + " (all must be 1)", t.elapsed, 300)


def test_c13_determinism(check, tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "model": os.path.join(CONFIGS, "models", "canonical.json"),
        "theorem": "pert1", "u_grid": [5, 6, 7, 8], "n_paths": 1_000_000,
    }))
    outs = {}
    with Timer() as t:
        for w in (1, 8, 1):
            key = f"w{w}_{len(outs)}"
            cli_main(["verify", "--config", str(cfg), "--seed", "7", "--workers", str(w),
                      "--out", str(tmp_path / f"{key}.json"), "--csv", str(tmp_path / f"{key}.csv")])
            cli_main(["tail", "--model", os.path.join(CONFIGS, "models", "canonical.json"), "--u", "5,6,7",
                      "--paths", "500000", "--seed", "7", "--blocks", "10", "--block-size", "20000",
                      "--workers", str(w), "--out", str(tmp_path / f"{key}_tail.csv")])
            outs[key] = [(tmp_path / f"{key}{s}").read_bytes() for s in (".json", ".csv", "_tail.csv", "_tail.csv.meta.json")]
    first, *rest = outs.values()
    ok = all(r == first for r in rest)
    check("13", ok, f"{len(outs)} runs (workers 1, 8, 1): JSON, CSV and sidecars byte-identical = {ok}", t.elapsed, 120)


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
