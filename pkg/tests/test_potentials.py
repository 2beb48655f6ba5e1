from __future__ import annotations

import math

import numpy as np
import pytest

from nonadditive.cocycle import CocycleSpec, cocycle_potential
from nonadditive.errors import ArgumentError, ConfigError, InsufficientProbesError
from nonadditive.potentials import (ADDITIVE, ALMOST_ADDITIVE, ASYMPTOTICALLY_ADDITIVE, CONSISTENT, NOT_CHECKABLE,
                                    SUBADDITIVE, SUPERADDITIVE, VIOLATED, PotentialSequence, added, birkhoff,
                                    birkhoff_sum, classify_sample, constant, declared_verdict, digit_frequency,
                                    evaluate, evaluate_array, perturbed, potential_from_config, scaled, shifted,
                                    variation, variation_profile, zero)
from nonadditive.systems import DoublingMap, ShiftPoint, ShiftSpace

D = DoublingMap()
S2 = ShiftSpace(2)
SCALAR = CocycleSpec(np.array([[[2.0]], [[3.0]]]))
LINEAR = CocycleSpec(np.array([[[2.0, 1.0], [0.0, 3.0]], [[1.0, 0.0], [1.0, 1.0]]]))


def _shift_points(count, seed=0, length=12):
    rng = np.random.default_rng(seed)
    return [ShiftPoint.from_prefix(rng.integers(0, 2, length)) for _ in range(count)]


def test_evaluate_examples():
    assert evaluate(birkhoff(lambda x: x), D, 0.3, 2) == pytest.approx(0.9)
    assert evaluate(zero(), D, 0.77, 9) == 0.0
    assert evaluate(cocycle_potential(SCALAR, 1.0), S2, ShiftPoint.from_prefix([0, 1, 0]), 2) == pytest.approx(
        math.log(6), abs=1e-12)
    with pytest.raises(ArgumentError):
        evaluate(zero(), D, 0.1, 0)


def test_birkhoff_sum_examples():
    assert birkhoff_sum(D, lambda x: 1.0, 0.4, 7) == 7
    assert birkhoff_sum(D, lambda x: x, 0.0, 5) == 0.0
    assert birkhoff_sum(D, lambda x: float(x >= 0.5), 0.3, 2) == 1.0
    assert evaluate(digit_frequency(), D, 0.3, 2) == 1.0


def test_additive_matches_birkhoff_sum():
    rng = np.random.default_rng(2)
    fn = lambda x: np.cos(2 * np.pi * x)
    phi = birkhoff(fn)
    for x in rng.random(50):
        for n in (1, 3, 8):
            a, b = evaluate(phi, D, x, n), birkhoff_sum(D, fn, x, n)
            assert a == pytest.approx(b, rel=1e-12, abs=1e-12)


def test_array_evaluator_agrees_with_scalar():
    phi = birkhoff(lambda x: np.sin(2 * np.pi * x), vectorized=True)
    xs = np.random.default_rng(3).random(20)
    arr = evaluate_array(phi, D, xs, 6)
    assert arr == pytest.approx([evaluate(phi, D, x, 6) for x in xs], abs=1e-12)


def test_classify_norm_cocycle_subadditive():
    phi = cocycle_potential(LINEAR, 1.0)
    rep = classify_sample(phi, S2, _shift_points(20), 4, 4)
    assert rep.verdicts[SUBADDITIVE].status == CONSISTENT
    assert rep.max_subadditive_defect <= 1e-9
    assert declared_verdict(rep, phi).status == CONSISTENT


def test_classify_additive_all_zero():
    rep = classify_sample(birkhoff(lambda x: x), D, list(np.random.default_rng(0).random(10)), 3, 3)
    assert rep.estimated_C == pytest.approx(0.0, abs=1e-12)
    assert all(rep.verdicts[c].status == CONSISTENT for c in (ADDITIVE, SUBADDITIVE, SUPERADDITIVE))
    assert rep.verdicts[ASYMPTOTICALLY_ADDITIVE].status == CONSISTENT


def _almost_additive(C=3.0):
    base = birkhoff(lambda x: x)
    return PotentialSequence(lambda s, x, n: base.evaluator(s, x, n) + math.sin(n), ALMOST_ADDITIVE,
                             "S_n x + sin n", almost_additive_C=C)


def test_shifted_almost_additive_is_subadditive():
    phi = _almost_additive()
    pts = list(np.random.default_rng(1).random(8))
    rep = classify_sample(phi, D, pts, 5, 5)
    assert rep.verdicts[ALMOST_ADDITIVE].status == CONSISTENT
    assert rep.verdicts[SUBADDITIVE].status == VIOLATED
    psi = shifted(phi, 3.0)
    assert psi.declared_class == SUBADDITIVE
    assert declared_verdict(classify_sample(psi, D, pts, 5, 5), psi).status == CONSISTENT


def test_violation_witness_reproduces():
    bad = PotentialSequence(lambda s, x, n: float(n * n), SUBADDITIVE, "n^2")
    rep = classify_sample(bad, D, [0.2], 3, 3)
    v = rep.verdicts[SUBADDITIVE]
    assert v.status == VIOLATED
    assert v.witness.reproduce(bad, D) == pytest.approx(v.witness.defect)
    assert v.witness.defect > 0


def test_asymptotic_not_checkable_without_approximants():
    rep = classify_sample(_almost_additive(), D, [0.1, 0.6], 2, 2)
    assert rep.verdicts[ASYMPTOTICALLY_ADDITIVE].status == NOT_CHECKABLE


def test_classify_errors():
    with pytest.raises(ArgumentError):
        classify_sample(zero(), D, [], 2, 2)
    with pytest.raises(ArgumentError):
        classify_sample(zero(), D, [0.1], 0, 2)


def test_perturbed_is_asymptotically_additive():
    psi = perturbed(digit_frequency(), lambda n: math.sqrt(n))
    assert psi.declared_class == ASYMPTOTICALLY_ADDITIVE
    assert evaluate(psi, D, 0.3, 4) == pytest.approx(evaluate(digit_frequency(), D, 0.3, 4) + 2.0)


def test_scaled_and_added_class_tags():
    phi = cocycle_potential(LINEAR, 1.0)
    assert scaled(phi, 2.0).declared_class == SUBADDITIVE
    with pytest.raises(ArgumentError):
        scaled(phi, -1.0)
    assert added(constant(1.0), phi).declared_class == SUBADDITIVE
    assert added(constant(1.0), constant(2.0)).count_form is not None


def test_variation_cocycle_zero_on_cylinders():
    phi = cocycle_potential(LINEAR, 1.0)
    x = _shift_points(1, seed=4, length=20)[0]
    for n in (1, 4, 8):
        assert variation(phi, S2, x, n, 0.4, 16) == 0.0
    assert variation(zero(), D, 0.3, 5, 0.05, 8) == 0.0


def test_variation_holder_family_decays():
    phi = birkhoff(lambda x: x)
    prof = variation_profile(phi, D, 0.3141, [2, 4, 8, 12, 16], 0.01, 32)
    # gamma_n <= sum_j 2 eps 2^-(n-1-j) <= 4 eps, so gamma_n / n -> 0
    assert max(prof.estimate) <= 4 * 0.01 + 1e-12
    ratios = np.array(prof.estimate) / np.array(prof.n)
    assert ratios[-1] < ratios[0]


def test_variation_errors():
    with pytest.raises(ArgumentError):
        variation(zero(), D, 0.3, 3, 0.0, 8)
    with pytest.raises(ArgumentError):
        variation(zero(), D, 0.3, 3, 0.1, 1)
    err = InsufficientProbesError(5, 0)
    assert "5" in str(err)


def test_potential_from_config():
    phi = potential_from_config({"potential.kind": "birkhoff", "potential.function": "x"}, D)
    assert evaluate(phi, D, 0.3, 2) == pytest.approx(0.9)
    ind = potential_from_config({"potential.kind": "birkhoff", "potential.function": "indicator",
                                 "potential.interval": [0.5, 1.0]}, D)
    assert evaluate(ind, D, 0.3, 2) == 1.0
    assert evaluate(potential_from_config({"potential.kind": "neg_log_beta"}, D), D, 0.2, 3) == pytest.approx(
        -3 * math.log(2))
    with pytest.raises(ConfigError, match="potential.kind"):
        potential_from_config({}, D)
    with pytest.raises(ConfigError, match="potential.function"):
        potential_from_config({"potential.kind": "birkhoff", "potential.function": "tan"}, D)
