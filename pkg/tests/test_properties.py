"""Randomized properties (hypothesis) and the frozen oracle constants."""
from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles as O
from nonadditive.cocycle import CocycleSpec, log_norms, singular_values, word_product
from nonadditive.mistake import good_counts, mistake_ball_cylinder_count
from nonadditive.systems import ShiftSpace

S2 = ShiftSpace(2)
finite = st.floats(-3, 3, allow_nan=False, allow_infinity=False)
matrix2 = st.lists(finite, min_size=4, max_size=4).filter(lambda v: abs(v[0] * v[3] - v[1] * v[2]) > 1e-3)
word = st.lists(st.integers(0, 1), min_size=2, max_size=14)


@settings(max_examples=60, deadline=None)
@given(a=matrix2, b=matrix2, w=word, data=st.data())
def test_norm_cocycle_subadditive(a, b, w, data):
    c = CocycleSpec(np.array([np.reshape(a, (2, 2)), np.reshape(b, (2, 2))]))
    m = data.draw(st.integers(1, len(w) - 1))
    arr = np.array([w])
    whole = log_norms(c, arr)[0]
    assert whole <= log_norms(c, arr[:, :m])[0] + log_norms(c, arr[:, m:])[0] + 1e-9


@settings(max_examples=60, deadline=None)
@given(a=matrix2, b=matrix2, w=word)
def test_singular_values_product_is_abs_determinant(a, b, w):
    c = CocycleSpec(np.array([np.reshape(a, (2, 2)), np.reshape(b, (2, 2))]))
    M = word_product(c, w)
    s = singular_values(M)
    # the small singular value carries relative error ~ machine eps * s0 / s1
    tol = 1e-9 + 1e-13 * s[0] / s[1]
    assert math.log(s[0]) + math.log(s[1]) == pytest.approx(math.log(abs(np.linalg.det(M))), abs=tol)
    assert s[0] >= s[1] >= 0


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 20), g1=st.integers(0, 5), g2=st.integers(0, 5), seed=st.integers(0, 2 ** 32 - 1))
def test_mistake_balls_grow_with_g(n, g1, g2, seed):
    lo, hi = min(g1, g2), max(g1, g2)
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 2, size=(50, n + 4))
    y = np.where(rng.random(x.shape) < 0.2, 1 - x, x)
    for eps in (0.75, 0.25):
        gc = good_counts(S2, x, y, n, eps)
        assert np.all(~(gc >= n - lo) | (gc >= n - hi))
    assert np.all(good_counts(S2, x, y, n, 0.25) <= good_counts(S2, x, y, n, 0.75))


@settings(max_examples=40, deadline=None)
@given(ell=st.integers(2, 4), n=st.integers(1, 30), data=st.data())
def test_cylinder_count_formula(ell, n, data):
    g = data.draw(st.integers(0, n))
    expected = sum(math.comb(n, j) * (ell - 1) ** j for j in range(g + 1))
    assert mistake_ball_cylinder_count(ell, n, g) == expected


def test_frozen_oracle_constants():
    assert O.CRAMER_07 == pytest.approx(O.cramer_rate_half(0.7), rel=1e-14)
    kl, p = O.diag_pair_kl_rate(0.15)
    assert O.KL_DIAG_015 == pytest.approx(kl, rel=1e-12)
    assert O.P_STAR_015 == pytest.approx(p, rel=1e-12)
    assert O.MISTAKE_RATE_400 == pytest.approx(O.mistake_ball_rate_lebesgue(400, 20), rel=1e-14)
    assert O.TAIL_10_7 == O.binomial_upper_tail(10, 7)
    assert O.TAIL_20_14 == O.binomial_upper_tail(20, 14)
    assert O.SIGMA_2_1_0_3 == pytest.approx(O.singular_values_2x2(2, 1, 0, 3), rel=1e-14)
    assert O.CROSS_08_05 == pytest.approx(O.cross_entropy([0.2, 0.8], [0.5, 0.5]), rel=1e-14)


def test_oracles_cross_check():
    # the Parry density integrates to 1 and the 2x2 singular values multiply to |det|
    a = 1 / O.GOLDEN
    assert a * O.golden_parry_density(0.1) + (1 - a) * O.golden_parry_density(0.9) == pytest.approx(1.0)
    s1, s2 = O.singular_values_2x2(2, 1, 0, 3)
    assert s1 * s2 == pytest.approx(6.0)
    assert O.transfer_pressure(2, 1, np.zeros(4)) == pytest.approx(O.LOG2)
