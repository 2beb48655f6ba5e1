"""Acceptance criteria, one test per criterion.  Each prints one PASS/FAIL
line with the measured value and the pinned tolerance."""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

import oracles as O
from nonadditive.cocycle import CocycleSpec, cocycle_potential, cocycle_pressure
from nonadditive.deviation import (ABS_GAP, CONSISTENT, DeviationQuery, deviation_measure, empirical_rate,
                                   ldp_sandwich)
from nonadditive.measures import Bernoulli, ParryBeta, lebesgue_for
from nonadditive.mistake import ball_log_masses, sqrt_mistakes
from nonadditive.potentials import constant, digit_frequency
from nonadditive.systems import BetaMap, DoublingMap, ShiftSpace
from nonadditive.thermo import BernoulliFamily, gibbs_ball_bound_check, variational_gap, weak_gibbs_check
from nonadditive.verify import run_suite

# pinned tolerances
C1_REL, C1_SECONDS = 1e-10, 1.0
C2_GAP, C2_ARGMAX = 1e-4, 1e-3
C3_RATE, C3_BOUND, C3_SECONDS = 0.015, 1e-4, 5.0
C4_REL, C4_FORMULA = 0.10, 1e-9
C5_SLOPE, C5_EXACT = 0.02, 1e-12      # K_n == 1 up to float roundoff in log space
C6_RATE, C6_SECONDS, C6_SAMPLES = 0.02, 60.0, 10 ** 6
C8_FRACTION = 0.95

SCALAR = CocycleSpec(np.array([[[2.0]], [[3.0]]]))
DIAG = CocycleSpec(np.array([np.diag([2.0, 0.5]), np.diag([3.0, 1 / 3])]))


def test_criterion_1_scalar_cocycle_pressure(report):
    t = time.perf_counter()
    worst = 0.0
    for q in (0.0, 1.0, 2.0):
        vals = cocycle_pressure(SCALAR, q, 20).values
        assert len(vals) == 20
        exact = math.log(2 ** q + 3 ** q)
        worst = max(worst, float(np.max(np.abs(vals - exact) / exact)))
    dt = time.perf_counter() - t
    ok = worst <= C1_REL and dt < C1_SECONDS
    report(ok, f"criterion 1: scalar cocycle P_n(q), max rel err {worst:.1e} (tol {C1_REL:g}), "
               f"{dt:.3f}s (limit {C1_SECONDS:g}s)")
    assert ok


def test_criterion_2_variational_optimum(report):
    r = variational_gap(ShiftSpace(2), cocycle_potential(SCALAR, 1.0), BernoulliFamily(2), math.log(5))
    dp = abs(r.argmax[0] - 0.4)
    ok = abs(r.gap) <= C2_GAP and dp <= C2_ARGMAX
    report(ok, f"criterion 2: variational gap {r.gap:.2e} (tol {C2_GAP:g}), argmax p0={r.argmax[0]:.6f} "
               f"(|p0-2/5| tol {C2_ARGMAX:g})")
    assert ok


def test_criterion_3_ldp_sandwich_doubling(report):
    D = DoublingMap()
    q = DeviationQuery(D, digit_frequency(), lebesgue_for(D), 0.7, ns=range(50, 151, 10))
    t = time.perf_counter()
    rep = ldp_sandwich(q, constant(-math.log(2)), 0.0, BernoulliFamily(2), engine="exact")
    dt = time.perf_counter() - t
    I = rep.fit.rate
    ub, lb = rep.upper.value, rep.lower.value
    target = O.CRAMER_07
    # the sandwich is read up to the rate tolerance: both bounds sit within
    # 1e-6 of each other, so an untoleranced chain would demand a 1e-6 fit
    sandwich = lb - C3_RATE <= -I <= ub + C3_RATE
    ok = (abs(I - target) <= C3_RATE and sandwich and abs(ub + target) <= C3_BOUND
          and abs(lb + target) <= C3_BOUND and dt < C3_SECONDS and rep.verdict == CONSISTENT)
    report(ok, f"criterion 3: I_hat={I:.5f} vs {target:.5f} (tol {C3_RATE:g}); bounds [{lb:.6f}, {ub:.6f}] "
               f"vs {-target:.6f} (tol {C3_BOUND:g}); -I_hat in bounds +-{C3_RATE:g}: {sandwich}, "
               f"without slack: {lb <= -I <= ub}; {dt:.2f}s (limit {C3_SECONDS:g}s)")
    assert ok


@pytest.mark.xfail(strict=True, reason="the cylinder formula at n=400, g=floor(sqrt n) is 0.5005, "
                                       "27.8% below log 2; it is also the exact ball mass only for a "
                                       "one-symbol window (eps > 1/2), not at eps=2^-8")
def test_criterion_4_mistake_katok_at_desk_scale(report):
    n, eps = 400, 2.0 ** -8
    g = sqrt_mistakes()
    formula = math.log(2) - math.log(sum(math.comb(n, j) for j in range(g(n) + 1))) / n
    D = DoublingMap()
    words = np.random.default_rng(0).integers(0, 2, size=(4, n + 20))
    est = -ball_log_masses(D, lebesgue_for(D), g, words, [n], eps)[0][:, 0] / n
    rel = abs(formula - math.log(2)) / math.log(2)
    diff = float(np.max(np.abs(est - formula)))
    ok = rel <= C4_REL and diff <= C4_FORMULA
    report(ok, f"criterion 4: formula rate {formula:.5f}, {100 * rel:.1f}% from log 2 (tol {100 * C4_REL:g}%); "
               f"estimator at eps=2^-8 {est[0]:.5f}, off formula by {diff:.2e} (tol {C4_FORMULA:g}) "
               f"[expected failure]")
    assert ok


def test_criterion_4_companion_window_and_rate(report):
    """What does hold: the estimator equals the formula for a one-symbol
    window, and the true eps=2^-8 ball-mass rate is within 10% of log 2."""
    n = 400
    g = sqrt_mistakes()
    D = DoublingMap()
    words = np.random.default_rng(0).integers(0, 2, size=(4, n + 20))
    one = -ball_log_masses(D, lebesgue_for(D), g, words, [n], 0.75)[0][:, 0] / n
    fine = -ball_log_masses(D, lebesgue_for(D), g, words, [n], 2.0 ** -8)[0][:, 0] / n
    diff = float(np.max(np.abs(one - O.MISTAKE_RATE_400)))
    rel = float(np.max(np.abs(fine - math.log(2)))) / math.log(2)
    ok = diff <= C4_FORMULA and rel <= C4_REL
    report(ok, f"criterion 4 (companion): estimator at eps=3/4 off formula by {diff:.1e} (tol {C4_FORMULA:g}); "
               f"exact rate at eps=2^-8 {fine[0]:.5f}, {100 * rel:.1f}% from log 2 (tol {100 * C4_REL:g}%)")
    assert ok


def test_criterion_5_weak_gibbs(report):
    shift = weak_gibbs_check(ShiftSpace(2), constant(-math.log(2)), Bernoulli([0.5, 0.5]), 0.0, 200,
                             range(1, 26), 0.75)
    worst = float(np.max(np.abs(shift.log_K)))
    K_exact = worst <= C5_EXACT
    b = O.GOLDEN
    gold = weak_gibbs_check(BetaMap(b), constant(-math.log(b)), ParryBeta(b), 0.0, 200, range(5, 26), 0.1)
    ok = K_exact and gold.is_weak_gibbs and abs(gold.trend) <= C5_SLOPE
    report(ok, f"criterion 5: 2-shift max |log K_n| {worst:.1e} for n<=25 (tol {C5_EXACT:g}); golden beta verdict {gold.verdict}, "
               f"slope of (1/n)log K_n {gold.trend:.2e} (tol {C5_SLOPE:g})")
    assert ok


def test_criterion_6_cocycle_deviations(report):
    q = DeviationQuery(ShiftSpace(2), cocycle_potential(DIAG, 1.0), Bernoulli([0.5, 0.5]), 0.15, ABS_GAP,
                       ns=range(20, 101, 10), center=0.5 * math.log(6), center_provenance="closed_form",
                       strict=True)
    t = time.perf_counter()
    series = [deviation_measure(q, n, "importance", samples=C6_SAMPLES, seed=0) for n in q.ns]
    fit = empirical_rate(series)
    dt = time.perf_counter() - t
    ok = abs(fit.rate - O.KL_DIAG_015) <= C6_RATE and dt < C6_SECONDS
    report(ok, f"criterion 6: fitted rate {fit.rate:.5f} vs KL {O.KL_DIAG_015:.5f} (tol {C6_RATE:g}), "
               f"{C6_SAMPLES:.0e} importance samples per n, {dt:.1f}s (limit {C6_SECONDS:g}s)")
    assert ok


def test_criterion_7_invariant_suite(report):
    results = run_suite()
    failed = [r.name for r in results if not r.passed]
    ok = not failed and len(results) == 7
    report(ok, f"criterion 7: invariant suite {len(results) - len(failed)}/{len(results)} checks pass"
               + (f"; failed {failed}" if failed else ""))
    assert ok


def test_criterion_8_gibbs_ball_bound(report):
    site = lambda x: 0.3 * np.cos(2 * np.pi * np.asarray(x))
    rep = gibbs_ball_bound_check(site, sqrt_mistakes(), n_max=30, xi=0.05, samples=500, seed=0)
    ok = rep.fraction >= C8_FRACTION and rep.samples == 500
    report(ok, f"criterion 8: two-sided bound holds at {100 * rep.fraction:.1f}% of 500 points, n<=30, "
               f"xi=0.05, fitted C={rep.C_hat:.3f} (need >= {100 * C8_FRACTION:g}%)")
    assert ok
