from __future__ import annotations

import json
import math

import numpy as np
import pytest

import oracles as O
from nonadditive.deviation import (ABS_GAP, AT_LEAST, CONSISTENT, GREATER_THAN, INCOMPLETE, DeviationQuery,
                                   ball_mass_rate, deviation_measure, empirical_rate, ldp_sandwich,
                                   rate_lower_bound, rate_upper_bound, tilted_proposals)
from nonadditive.errors import ArgumentError, CapabilityError, FitError
from nonadditive.measures import Bernoulli, ParryBeta, lebesgue_for
from nonadditive.mistake import sqrt_mistakes, zero_mistakes
from nonadditive.potentials import birkhoff, constant, digit_frequency, perturbed, symbol_potential
from nonadditive.systems import BetaMap, DoublingMap, ShiftSpace
from nonadditive.thermo import BernoulliFamily

D = DoublingMap()
S2 = ShiftSpace(2)
LEB = lebesgue_for(D)
GIBBS = constant(-O.LOG2)
NS = list(range(50, 151, 10))


def _query(c=0.7, mode=AT_LEAST, ns=NS, **kw):
    return DeviationQuery(D, digit_frequency(), LEB, c, mode, ns, **kw)


def test_exact_binomial_tails():
    assert deviation_measure(_query(), 10).value == pytest.approx(float(O.TAIL_10_7), rel=1e-12)
    assert deviation_measure(_query(), 20).value == pytest.approx(float(O.TAIL_20_14), rel=1e-12)
    # 7/10 sits exactly on the threshold: > excludes it
    strict = deviation_measure(_query(mode=GREATER_THAN), 10).value
    assert strict == pytest.approx(float(O.TAIL_10_7) - math.comb(10, 7) / 1024, rel=1e-12)
    for n in (30, 60):
        assert deviation_measure(_query(), n).value == pytest.approx(float(O.binomial_upper_tail(n, math.ceil(0.7 * n))), rel=1e-10)


def test_exact_engine_on_shift_words():
    q = DeviationQuery(S2, digit_frequency(), Bernoulli([0.5, 0.5]), 0.7, ns=[10])
    assert deviation_measure(q, 10).value == pytest.approx(float(O.TAIL_10_7), rel=1e-12)


def test_measure_monotone_in_c():
    for n in (10, 40):
        vals = [deviation_measure(_query(c), n).value for c in np.linspace(0.5, 1.0, 11)]
        assert all(b <= a for a, b in zip(vals, vals[1:]))


def test_monte_carlo_wilson_interval_contains_exact():
    n = 20
    mc = deviation_measure(_query(), n, engine="monte_carlo", samples=10 ** 6, seed=0)
    assert mc.ci_low <= float(O.TAIL_20_14) <= mc.ci_high
    again = deviation_measure(_query(), n, engine="monte_carlo", samples=10 ** 6, seed=0)
    assert again.value == mc.value


def test_monte_carlo_zero_hits_flagged():
    est = deviation_measure(_query(0.95), 120, engine="monte_carlo", samples=1000)
    assert est.hits == 0 and "rate_unbounded_below_at_this_n" in est.flags
    assert est.log_measure == -math.inf


def test_importance_sampling_matches_exact():
    for n in (40, 100):
        exact = deviation_measure(_query(), n).value
        est = deviation_measure(_query(), n, engine="importance", samples=200_000, seed=3)
        assert est.ci_low <= exact <= est.ci_high
        assert est.value == pytest.approx(exact, rel=0.02)


def test_tilted_proposals():
    props = tilted_proposals(_query())
    assert len(props) == 1 and props[0] == pytest.approx([0.3, 0.7], abs=1e-6)
    two = tilted_proposals(_query(0.2, ABS_GAP, center=0.5, center_provenance="closed_form"))
    assert sorted(p[1] for p in two) == pytest.approx([0.3, 0.7], abs=1e-6)
    with pytest.raises(CapabilityError):
        tilted_proposals(DeviationQuery(BetaMap(O.GOLDEN), digit_frequency(), ParryBeta(O.GOLDEN), 0.7))


def test_empirical_rate_exact_series():
    series = [deviation_measure(_query(), n) for n in NS]
    fit = empirical_rate(series)
    assert fit.kappa == 0.5
    assert abs(fit.rate - O.CRAMER_07) < 0.015
    assert empirical_rate([(n, s.value, "mc") for n, s in zip(NS, series)]).kappa == 0.0


def test_empirical_rate_errors():
    with pytest.raises(FitError):
        empirical_rate([(10, 0.1, "exact"), (20, 0.01, "exact"), (30, 0.0, "exact"), (40, 0.0, "exact")])
    with pytest.raises(ArgumentError):
        empirical_rate([(n, 0.5, "exact") for n in (1, 2, 3, 4)], kappa=1.0)
    fit = empirical_rate([(n, 2.0 ** -n, "mc") for n in (5, 6, 7, 8, 9)] + [(10, 0.0, "mc")])
    assert fit.rate == pytest.approx(O.LOG2) and fit.excluded == [10]


def test_rate_bounds_cramer():
    fam = BernoulliFamily(2)
    ub = rate_upper_bound(_query(), GIBBS, 0.0, fam)
    lb = rate_lower_bound(_query(), GIBBS, 0.0, fam)
    assert ub.value == pytest.approx(-O.CRAMER_07, abs=1e-6)
    assert lb.value <= ub.value + 1e-6 and lb.partial
    assert ub.argmax[1] == pytest.approx(0.7, abs=1e-4)


def test_rate_bounds_infeasible():
    fam = BernoulliFamily(2)
    ub = rate_upper_bound(_query(1.2), GIBBS, 0.0, fam)
    assert ub.minus_infinity and ub.to_dict()["value"] == "minus_infinity"


def test_rate_bound_abs_gap_diag_pair():
    # log norm of diag(2, 1/2), diag(3, 1/3): symbol potential with values log 2, log 3
    obs = symbol_potential([O.LOG2, O.LOG3])
    q = DeviationQuery(S2, obs, Bernoulli([0.5, 0.5]), 0.15, ABS_GAP, [20, 40], center=0.5 * (O.LOG2 + O.LOG3),
                       center_provenance="closed_form")
    ub = rate_upper_bound(q, GIBBS, 0.0, BernoulliFamily(2))
    assert ub.value == pytest.approx(-O.KL_DIAG_015, abs=1e-6)


def test_ldp_sandwich_report():
    rep = ldp_sandwich(_query(), GIBBS, 0.0, BernoulliFamily(2))
    assert rep.verdict == CONSISTENT
    d = json.loads(rep.to_json())
    assert d["verdict"]["status"] == CONSISTENT and "convention" in d
    csv_lines = rep.to_csv().splitlines()
    assert csv_lines[0] == "n,measure,ci_low,ci_high,engine" and len(csv_lines) == len(NS) + 1
    assert rep.plot_data().splitlines()[0] == "n,log_measure"
    assert "I_hat" in rep.summary() and "partial" in rep.summary()


def test_ldp_sandwich_incomplete_on_failure():
    q = DeviationQuery(D, birkhoff(lambda x: x), LEB, 0.7, ns=[10, 20, 30, 40])
    rep = ldp_sandwich(q, GIBBS, 0.0, BernoulliFamily(2))
    assert rep.verdict == INCOMPLETE and rep.failed_stage == "deviation_measure"
    assert json.loads(rep.to_json())["verdict"]["failed_stage"] == "deviation_measure"


def test_rate_invariant_under_perturbed_gibbs_potential():
    fam = BernoulliFamily(2)
    base = ldp_sandwich(_query(), GIBBS, 0.0, fam)
    pert = ldp_sandwich(_query(), perturbed(GIBBS, math.sqrt), 0.0, fam)
    assert pert.fit.rate == pytest.approx(base.fit.rate, abs=1e-9)
    assert pert.upper.value == pytest.approx(base.upper.value, abs=1e-9)


def test_query_validation():
    with pytest.raises(ArgumentError):
        _query(mode="between")
    with pytest.raises(ArgumentError):
        _query(ns=[20, 10])
    with pytest.raises(ArgumentError):
        _query(0.2, ABS_GAP, center=0.5)
    with pytest.raises(ArgumentError):
        _query(-0.1, ABS_GAP, center=0.5, center_provenance="closed_form")
    with pytest.raises(ArgumentError):
        deviation_measure(_query(), 10, engine="quadrature")


def test_ball_mass_rate_cross_entropy():
    rep = ball_mass_rate(S2, zero_mistakes(), Bernoulli([0.2, 0.8]), Bernoulli([0.5, 0.5]), 0.75,
                         [100, 200, 400], seed=0, samples=40)
    assert float(np.mean(rep.rates)) == pytest.approx(O.CROSS_08_05, abs=0.03)
    same = ball_mass_rate(S2, zero_mistakes(), Bernoulli([0.5, 0.5]), Bernoulli([0.5, 0.5]), 0.75, [10, 20])
    assert same.rates == pytest.approx(O.LOG2, abs=1e-12) and same.ess_sup == pytest.approx(O.LOG2)


def test_ball_mass_rate_mistakes_lebesgue():
    rep = ball_mass_rate(D, sqrt_mistakes(), LEB, LEB, 0.75, [100, 200, 400], samples=5)
    assert rep.rates == pytest.approx(O.mistake_ball_rate_lebesgue(400, 20), abs=1e-9)
