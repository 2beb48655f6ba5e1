from __future__ import annotations

import math

import numpy as np
import pytest

import oracles as O
from nonadditive.cocycle import CocycleSpec, cocycle_potential, cocycle_pressure
from nonadditive.combinatorics import all_words
from nonadditive.errors import ArgumentError, BudgetError, CapabilityError
from nonadditive.measures import Bernoulli, BlockMarkov, Markov, ParryBeta, lebesgue_for
from nonadditive.potentials import ADDITIVE, PotentialSequence, birkhoff, constant, neg_log_beta, zero
from nonadditive.systems import BetaMap, DoublingMap, ShiftSpace
from nonadditive.thermo import (EXACT, GIBBS, UPPER, VIOLATED, WEAK_GIBBS, BernoulliFamily, bernoulli_fstar,
                                cylinder_pressure, doubling_gibbs_measure, kingman_functional,
                                orbit_points_from_words, separated_pressure, variational_gap, weak_gibbs_check)

D = DoublingMap()
S2 = ShiftSpace(2)
SCALAR = CocycleSpec(np.array([[[2.0]], [[3.0]]]))
LINEAR = CocycleSpec(np.array([[[2.0, 1.0], [0.0, 3.0]], [[1.0, 0.0], [1.0, 1.0]]]))


def test_kingman_examples():
    est = kingman_functional(birkhoff(lambda x: x), lebesgue_for(D), [1, 2], sys=D)
    assert est.value == pytest.approx(0.5, abs=1e-10) and est.direction == EXACT
    assert kingman_functional(zero(), Bernoulli([0.5, 0.5]), [1, 4]).value == 0.0
    est = kingman_functional(cocycle_potential(SCALAR, 1.0), Bernoulli([0.5, 0.5]), [1, 5, 10])
    assert [v for _, v, _ in est.per_n] == pytest.approx([0.5 * (O.LOG2 + O.LOG3)] * 3, rel=1e-12)


def test_kingman_subadditive_is_upper_bound_and_monotone():
    mu = Markov(np.array([[0.7, 0.3], [0.2, 0.8]]))
    est = kingman_functional(cocycle_potential(LINEAR, 1.0), mu, [1, 2, 4, 8])
    assert est.direction == UPPER
    vals = [v for _, v, _ in est.per_n]
    assert all(b <= a + 1e-12 for a, b in zip(vals, vals[1:]))
    assert est.value == min(vals)


def test_kingman_monte_carlo_and_widening():
    phi = cocycle_potential(LINEAR, 1.0)
    exact = kingman_functional(phi, Bernoulli([0.5, 0.5]), [6]).value
    mc = kingman_functional(phi, Bernoulli([0.5, 0.5]), [6], mode="monte_carlo", samples=20000, seed=4)
    _, v, se = mc.per_n[0]
    assert abs(v - exact) < 5 * se
    assert not mc.widened
    wide = kingman_functional(phi, Bernoulli([0.5, 0.5]), [6], mode="monte_carlo", samples=20, tolerance=1e-9)
    assert wide.widened


def test_kingman_warnings_and_errors():
    with pytest.warns(RuntimeWarning):
        kingman_functional(zero(), Markov(np.array([[0.5, 0.5], [0.5, 0.5]]), pi=[1.0, 0.0]), [2])
    with pytest.raises(ArgumentError):
        kingman_functional(zero(), Bernoulli([0.5, 0.5]), [])
    with pytest.raises(ArgumentError):
        kingman_functional(zero(), Bernoulli([0.5, 0.5]), [2], mode="quadrature")


def test_bernoulli_fstar_closed_form_and_bound():
    v, d = bernoulli_fstar(cocycle_potential(SCALAR, 2.0), [0.3, 0.7])
    assert v == pytest.approx(2 * (0.3 * O.LOG2 + 0.7 * O.LOG3)) and d == EXACT
    v, d = bernoulli_fstar(cocycle_potential(LINEAR, 1.0), [0.5, 0.5])
    assert d == UPPER and math.isfinite(v)


def test_cylinder_pressure_examples():
    assert cylinder_pressure(S2, zero(), 10).values == pytest.approx([O.LOG2] * 10, abs=1e-12)
    assert cylinder_pressure(S2, constant(-O.LOG2), 10).values == pytest.approx([0.0] * 10, abs=1e-12)
    assert cylinder_pressure(S2, cocycle_potential(SCALAR, 1.0), 12).values == pytest.approx(
        [math.log(5)] * 12, rel=1e-12)


def test_cylinder_pressure_agrees_with_cocycle_pressure():
    a = cylinder_pressure(S2, cocycle_potential(LINEAR, 1.3), 9).values
    b = cocycle_pressure(LINEAR, 1.3, 9).values
    assert a == pytest.approx(b, abs=1e-10)


def test_cylinder_pressure_golden_sft():
    golden = ShiftSpace(2, np.array([[1, 1], [1, 0]]))
    est = cylinder_pressure(golden, zero(), 16)
    assert est.values[-1] == pytest.approx(math.log(O.GOLDEN), abs=0.05)
    # (1/n) log Z_n converges like 1/n here, so extrapolation helps only partly
    assert abs(est.extrapolated - math.log(O.GOLDEN)) < abs(est.values[-1] - math.log(O.GOLDEN))
    assert est.extrapolated == pytest.approx(math.log(O.GOLDEN), abs=0.01)


def test_cylinder_pressure_errors():
    with pytest.raises(BudgetError):
        cylinder_pressure(S2, cocycle_potential(LINEAR, 1.0), 12, budget=1000)
    with pytest.raises(CapabilityError):
        cylinder_pressure(D, zero(), 4)


def test_separated_pressure_doubling_zero():
    est = separated_pressure(D, zero(), 10, 2 ** -6, grid_resolution=2 ** -19)
    assert abs(est.extrapolated - O.LOG2) / O.LOG2 <= 0.05
    assert not est.unconverged and est.drift < 0.05


def test_separated_pressure_beta3_and_geometric():
    est = separated_pressure(BetaMap(3.0), zero(), 8, 1 / 8, grid_resolution=3.0 ** -8 / 16)
    assert abs(est.extrapolated - O.LOG3) / O.LOG3 <= 0.05
    geo = separated_pressure(D, neg_log_beta(2.0), 8, 1 / 8, grid_resolution=2 ** -14)
    assert abs(geo.extrapolated) <= 0.05 * O.LOG2


def test_separated_pressure_errors():
    with pytest.raises(ArgumentError):
        separated_pressure(D, zero(), 4, 0.01, grid_resolution=0.02)
    with pytest.raises(CapabilityError):
        separated_pressure(S2, zero(), 4, 0.1)


def test_variational_gap_examples():
    fam = BernoulliFamily(2)
    rep = variational_gap(S2, zero(), fam, O.LOG2)
    assert rep.gap == pytest.approx(0.0, abs=1e-9) and rep.argmax[0] == pytest.approx(0.5, abs=1e-4)
    rep = variational_gap(S2, cocycle_potential(SCALAR, 1.0), fam, math.log(5))
    assert rep.argmax[0] == pytest.approx(0.4, abs=1e-3) and rep.consistent
    restricted = BernoulliFamily(2, upper=(0.1, 1.0))
    rep = variational_gap(S2, zero(), restricted, O.LOG2)
    assert rep.gap == pytest.approx(O.LOG2 - O.binary_entropy(0.1), abs=1e-8)


def test_variational_gap_never_negative_for_cocycle():
    # h + (1/n) int phi_n <= P_n holds at every finite n, and F_* is bounded from phi_16
    P = cocycle_pressure(LINEAR, 1.0, 16).values[-1]
    rep = variational_gap(S2, cocycle_potential(LINEAR, 1.0), BernoulliFamily(2, resolution=40), P)
    assert rep.gap >= -1e-6 and rep.fstar_direction == UPPER


def test_weak_gibbs_full_shift_exact():
    rep = weak_gibbs_check(S2, constant(-O.LOG2), Bernoulli([0.5, 0.5]), 0.0, 50, range(1, 15), 0.75)
    assert rep.verdict == GIBBS and rep.is_weak_gibbs
    assert max(abs(v) for v in rep.log_K) <= 1e-12
    assert rep.excluded == []


def test_weak_gibbs_block_markov_bounded_ratio():
    lw = np.log(np.array([1.0, 2.0, 3.0, 1.5]))
    mu = BlockMarkov(2, 1, lw)
    rep = weak_gibbs_check(S2, _pair_potential(lw), mu, mu.pressure, 100, range(4, 20), 0.75, seed=2)
    assert rep.verdict == GIBBS


def _pair_potential(lw):
    def words_eval(words):
        idx = 2 * words[:, :-1] + words[:, 1:]
        return lw[idx].sum(axis=1)

    def on_points(sys, x, n):
        w = np.array([x.symbol(j) for j in range(n + 1)])[None, :]
        return float(words_eval(w)[0])

    return PotentialSequence(on_points, ADDITIVE, "pair", word_evaluator=lambda w: words_eval(w))


def test_weak_gibbs_detects_violation():
    # nu = Bernoulli(1/2) against phi_n = -n log 3 with P = 0: log K_n grows like n log(3/2)
    rep = weak_gibbs_check(S2, constant(-O.LOG3), Bernoulli([0.5, 0.5]), 0.0, 20, range(2, 20), 0.75)
    assert rep.verdict == VIOLATED and not rep.is_weak_gibbs


def test_weak_gibbs_golden_parry():
    T = BetaMap(O.GOLDEN)
    rep = weak_gibbs_check(T, neg_log_beta(O.GOLDEN), ParryBeta(O.GOLDEN), 0.0, 100, range(5, 21, 3), 0.1)
    assert rep.verdict in (GIBBS, WEAK_GIBBS)
    assert rep.trend <= 0


def test_doubling_gibbs_measure_pressure():
    site = lambda x: 0.3 * np.cos(2 * np.pi * x)
    mu = doubling_gibbs_measure(site, window=6)
    words = all_words(2, 6)
    centers = words @ (2.0 ** -np.arange(1, 7)) + 2.0 ** -7
    assert mu.pressure == pytest.approx(O.transfer_pressure(2, 5, site(centers)), abs=1e-12)
    assert doubling_gibbs_measure(lambda x: np.zeros_like(x), 4).pressure == pytest.approx(O.LOG2)


def test_orbit_points_from_words():
    rng = np.random.default_rng(0)
    words = rng.integers(0, 2, size=(10, 80))
    pts = orbit_points_from_words(words, 5)
    assert np.allclose(pts[:, 1], (2 * pts[:, 0]) % 1.0, atol=1e-12)
    with pytest.raises(ArgumentError):
        orbit_points_from_words(words, 40)
