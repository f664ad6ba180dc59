"""Acceptance suite: one test per criterion, each reporting PASS/FAIL.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines
appear under "acceptance criteria" at the end of the session.  The sweep
criteria use the fast protocol (100 drops, 200 fading trials per drop).
"""

import math

import numpy as np
import pytest
from scipy import integrate, special

from ldsnoma.allocator import (Fragment, brute_force_partition, dense_spreading,
                               graham_bound, greedy_assign, regular_spreading)
from ldsnoma.detequiv import (certificate, det_emi, solve_fixed_point, solve_r_star)
from ldsnoma.harness import (ExperimentConfig, relative_gain, run_epsilon, run_sweep_d,
                             summarize, write_csv)
from ldsnoma.model import RandomStream, Scenario, SpreadingMatrix, make_drop
from ldsnoma.montecarlo import mc_emi

SEED = 20240607
LN2 = math.log(2)


@pytest.fixture(scope="module")
def load300():
    """100 drops at F=50, K=150 for d in {1, 2}, all four methods."""
    cfg = ExperimentConfig(kind="sweep-d", F=50, K=(150,), d=(1, 2), drops=100,
                           fading_trials=200, seed=SEED)
    rows = run_sweep_d(cfg)
    return rows, summarize(rows)


def _pick(summary, method, d):
    return next(s for s in summary if s["method"] == method and s["d"] == d)


def test_criterion_01_golden_fixed_point(report):
    scn, V = Scenario.symmetric(1, 1, 1), SpreadingMatrix([[1.0]])
    golden = (math.sqrt(5) - 1) / 2
    fp = solve_fixed_point(scn, V)
    r_star = solve_r_star(scn)
    err = max(abs(fp.r[0] - golden), abs(fp.r_tilde[0] - golden), abs(r_star - golden))
    emi = det_emi(scn, V, fp)
    ok = err < 1e-10 and abs(emi - 0.580458) < 1e-6
    assert report(1, "golden fixed point", ok,
                  f"max |r - golden| = {err:.1e}, det_emi = {emi:.7f} nats")


def test_criterion_02_scalar_mc_oracle(report):
    oracle = math.e * special.exp1(1.0)
    quad, _ = integrate.quad(lambda x: math.log1p(x) * math.exp(-x), 0, np.inf)
    est = mc_emi(Scenario.symmetric(1, 1, 1), SpreadingMatrix([[1.0]]), 10**6,
                 RandomStream(SEED))
    ok = abs(oracle - quad) < 1e-10 and abs(est.mean - 0.596347) < 3 * est.stderr
    assert report(2, "scalar MC oracle", ok,
                  f"mc = {est.mean:.6f} +/- {est.stderr:.1e}, oracle = {oracle:.6f}")


def test_criterion_03_certificates(report):
    root = RandomStream(SEED)
    sub = 0.0
    power_exact = True
    for K in (50, 150):
        for i in range(100):
            scn = make_drop(50, K, 2, root.spawn("cert", K, i))
            cert = certificate(scn, dense_spreading(scn))
            sub = max(sub, float(np.max(np.abs(cert.subchannel_residuals))))
            power_exact &= bool(np.all(cert.power_residuals == 0))
    sym_sub = sym_pow = 0.0
    for F, K, d in [(50, 150, 2), (50, 100, 1), (10, 30, 3), (6, 9, 2)]:
        scn = Scenario.symmetric(F, K, d, gain=1e-9, noise_power=1e-12)
        cert = certificate(scn, regular_spreading(scn))
        sym_sub = max(sym_sub, float(np.max(np.abs(cert.subchannel_residuals))))
        sym_pow = max(sym_pow, float(np.max(np.abs(cert.power_residuals))))
    ok = sub < 1e-9 and power_exact and sym_sub < 1e-9 and sym_pow == 0
    assert report(3, "optimality certificates", ok,
                  f"dense sub-channel {sub:.1e}, power exact {power_exact}; "
                  f"regular sub-channel {sym_sub:.1e}, power {sym_pow:.1e}")


def test_criterion_04_common_fixed_point(report):
    root = RandomStream(SEED)
    spread = gap = 0.0
    for K in (50, 150):
        for i in range(10):
            scn = make_drop(50, K, 2, root.spawn("prop", K, i))
            fp = solve_fixed_point(scn, dense_spreading(scn))
            spread = max(spread, float(np.ptp(fp.r)))
            gap = max(gap, float(np.max(np.abs(fp.r - solve_r_star(scn)))))
    ok = spread < 1e-9 and gap < 1e-8
    assert report(4, "dense fixed point equals r*", ok,
                  f"max spread of r_f = {spread:.1e}, max |r_f - r*| = {gap:.1e}")


def test_criterion_05_greedy_guarantee(report):
    rng = np.random.default_rng(SEED)
    worst = 0.0
    violations = 0
    for _ in range(500):
        F = int(rng.integers(2, 5))
        counts, total = [], 0
        while True:
            c = int(rng.integers(1, F + 1))
            if total + c > 14 or len(counts) >= 14:
                break
            counts.append(c)
            total += c
            if rng.random() < 0.12:
                break
        values = rng.exponential(1.0, len(counts)) * 10 ** rng.uniform(-1, 1, len(counts))
        greedy = greedy_assign(values, counts, F).eta.max()
        frags = [Fragment(u, v, 1.0) for u, (v, c) in enumerate(zip(values, counts))
                 for _ in range(c)]
        ratio = greedy / brute_force_partition(frags, F)
        worst = max(worst, ratio / graham_bound(F))
        violations += ratio > graham_bound(F) + 1e-12
    ok = violations == 0
    assert report(5, "greedy within 4/3 - 1/(3F)", ok,
                  f"500 cases, worst ratio/bound = {worst:.4f}, violations = {violations}")


def test_criterion_06_near_optimal(report, load300):
    rows, _ = load300
    g = math.fsum(r.det_emi for r in rows if r.method == "greedy" and r.d == 2) / 100
    dn = math.fsum(r.det_emi for r in rows if r.method == "dense" and r.d == 2) / 100
    ok = g >= 0.995 * dn
    assert report(6, "greedy near dense optimum", ok,
                  f"greedy/dense det_emi = {g / dn:.6f} (need >= 0.995)")


def test_criterion_07_dense_mc_agreement(report):
    scn = make_drop(50, 100, 2, RandomStream(SEED).spawn("dense-mc"))
    V = dense_spreading(scn)
    det = det_emi(scn, V)
    est = mc_emi(scn, V, 1000, RandomStream(SEED).spawn("dense-mc", "fading"))
    tol = max(3 * est.stderr, 0.01 * det)
    ok = abs(est.mean - det) < tol
    assert report(7, "dense MC agrees with deterministic", ok,
                  f"|mc - det| = {abs(est.mean - det):.2e} nats, tolerance {tol:.2e}")


def test_criterion_08_residual_monotone(report):
    cfg = ExperimentConfig(kind="epsilon", F=50, K=(100,), d=(2, 8, 50), matrices=200,
                           fading_trials=500, seed=SEED, methods=("random",))
    rows = {r["d"]: r for r in run_epsilon(cfg)}
    e2, e8, e50 = (rows[d]["mean_eps"] for d in (2, 8, 50))
    se50 = rows[50]["mean_eps_stderr"]
    ok = e2 > e8 > e50 and abs(e50) < 3 * se50
    assert report(8, "residual term shrinks with d", ok,
                  f"eps(2) = {e2:.2e}, eps(8) = {e8:.2e}, eps(50) = {e50:.2e} "
                  f"(se {se50:.1e}) nats")


def test_criterion_09_sparsity_gain(report, load300):
    _, summary = load300
    gain = _pick(summary, "greedy", 2)["sparsity_gain"] / LN2
    ok = 0.10 <= gain <= 0.35
    assert report(9, "sparsity gain at d=2", ok,
                  f"mean mc - det = {gain:.4f} bits/s/Hz (band [0.10, 0.35])")


def test_criterion_10_gain_ratios(report, load300):
    _, summary = load300
    g1 = relative_gain(summary, "greedy", "random", 150, 1)
    g2 = relative_gain(summary, "greedy", "random", 150, 2)
    order = all(_pick(summary, "greedy", d)["mc_emi"] > _pick(summary, "regular", d)["mc_emi"]
                > _pick(summary, "random", d)["mc_emi"] for d in (1, 2))
    ok = abs(g1 - 0.35) <= 0.10 and abs(g2 - 0.11) <= 0.04 and order
    assert report(10, "greedy over random gains", ok,
                  f"d=1: {100 * g1:.1f}%, d=2: {100 * g2:.1f}%, ordering {order}")


def test_criterion_11_reproducible(report):
    base = dict(kind="sweep-d", F=10, K=(30,), d=(1, 2, 3), drops=6, fading_trials=40,
                seed=SEED)
    a = write_csv(run_sweep_d(ExperimentConfig(**base)))
    b = write_csv(run_sweep_d(ExperimentConfig(**base)))
    c = write_csv(run_sweep_d(ExperimentConfig(**base, workers=4)))
    ok = a.encode() == b.encode() == c.encode()
    assert report(11, "byte-identical reruns", ok,
                  f"rerun identical {a == b}, parallel identical {a == c}")
