"""Built-in invariant suite: structural properties checked exhaustively or on
seeded random samples, plus closed-form oracle values."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .cocycle import CocycleSpec, cocycle_potential, cocycle_pressure, log_norms, lyapunov, singular_values, word_product
from .combinatorics import all_words
from .measures import Bernoulli, Markov, lebesgue_for
from .mistake import (constant_mistakes, good_counts, greedy_spanning, is_mistake_separated, mistake_ball_contains,
                      mistake_ball_cylinder_count, sqrt_mistakes)
from .potentials import constant, digit_frequency
from .systems import DoublingMap, ShiftSpace
from .thermo import kingman_functional

TEST_COCYCLE = CocycleSpec(np.array([[[2.0, 1.0], [0.0, 3.0]], [[1.0, 0.0], [1.0, 1.0]]]))


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail}"


def check_norm_subadditivity(max_len: int = 12, c: CocycleSpec = TEST_COCYCLE) -> CheckResult:
    """log||M_w|| <= log||M_u|| + log||M_v|| for every split w = uv, |w| <= max_len."""
    worst, pairs = -math.inf, 0
    for L in range(2, max_len + 1):
        words = all_words(c.symbols, L)
        whole = log_norms(c, words)
        for m in range(1, L):
            defect = whole - log_norms(c, words[:, :m]) - log_norms(c, words[:, m:])
            worst = max(worst, float(defect.max()))
            pairs += len(words)
    return CheckResult("norm sub-additivity", worst <= 1e-9, f"{pairs} splits, max defect {worst:.3e}")


def check_ball_monotonicity(pairs: int = 10_000, seed: int = 0) -> CheckResult:
    """Mistake balls grow with g and with eps, on random pairs of 2-shift words."""
    rng = np.random.default_rng(seed)
    n = 24
    x = rng.integers(0, 2, size=(pairs, n + 10))
    # flip a few symbols so that many pairs are close
    flips = rng.random((pairs, n + 10)) < rng.uniform(0.0, 0.3, size=(pairs, 1))
    y = np.where(flips, 1 - x, x)
    sys = ShiftSpace(2)
    bad = 0
    for eps_small, eps_big in ((0.25, 0.5), (0.125, 0.25), (0.5, 0.75)):
        gs = good_counts(sys, x, y, n, eps_small)
        gb = good_counts(sys, x, y, n, eps_big)
        bad += int(np.sum(gb < gs))
        for g_small, g_big in ((0, 1), (1, 3), (2, 5)):
            inside = gs >= n - g_small
            bad += int(np.sum(inside & ~(gs >= n - g_big)))
            bad += int(np.sum(inside & ~(gb >= n - g_small)))
    return CheckResult("mistake-ball monotonicity", bad == 0, f"{pairs} pairs, {bad} violations")


def check_cylinder_counts(n_max: int = 12, g_max: int = 3) -> CheckResult:
    """sum_j C(n, j)(l - 1)^j against direct Hamming-distance enumeration."""
    bad, cases = [], 0
    for l in (2, 3):
        for n in range(1, n_max + 1):
            dist = (all_words(l, n) != 0).sum(axis=1)
            for g in range(0, min(g_max, n) + 1):
                cases += 1
                brute = int(np.sum(dist <= g))
                if brute != mistake_ball_cylinder_count(l, n, g):
                    bad.append((l, n, g))
    return CheckResult("mistake-cylinder counts", not bad, f"{cases} cases, mismatches {bad[:3]}")


def check_separated_spanning(seed: int = 0) -> CheckResult:
    """A maximal (g; n, eps)-separated set spans, and greedy spanning sets
    cover every candidate."""
    rng = np.random.default_rng(seed)
    sys = ShiftSpace(2)
    issues = []
    for g, n, eps in ((constant_mistakes(0), 8, 0.5), (constant_mistakes(1), 10, 0.25), (sqrt_mistakes(), 16, 0.5)):
        words = rng.integers(0, 2, size=(300, n + 4))
        allow = g(n, eps)
        sep = []
        for i in range(len(words)):
            if not sep:
                sep.append(i)
                continue
            far = n - good_counts(sys, np.repeat(words[i:i + 1], len(sep), 0), words[sep], n, eps, strict=False)
            if np.all(far > allow):
                sep.append(i)
        if len(sep) > 1:
            ok, _ = is_mistake_separated(sys, g, [_pt(w) for w in words[sep[:40]]], n, eps)
            if not ok:
                issues.append(("not separated", n))
        for i in range(len(words)):
            near = good_counts(sys, np.repeat(words[i:i + 1], len(sep), 0), words[sep], n, eps, strict=False)
            if not np.any(near >= n - allow):
                issues.append(("separated set does not span", n))
                break
        res = greedy_spanning(sys, g, words, n, eps)
        cov = np.zeros(len(words), dtype=bool)
        for k in res.center_indices:
            cov |= good_counts(sys, np.repeat(words[k:k + 1], len(words), 0), words, n, eps, strict=False) >= n - allow
        if not cov.all():
            issues.append(("spanning set misses points", n))
    spot = [mistake_ball_contains(sys, constant_mistakes(1), _pt([0] * 12), _pt([1] + [0] * 11), 10, 0.5),
            not mistake_ball_contains(sys, constant_mistakes(0), _pt([0] * 12), _pt([1] + [0] * 11), 10, 0.5)]
    if not all(spot):
        issues.append(("membership spot check", 10))
    return CheckResult("separated/spanning duality", not issues, f"issues {issues}" if issues else "3 configurations")


def _pt(word):
    from .systems import ShiftPoint
    return ShiftPoint.from_prefix(list(word))


def check_determinant_identity(samples: int = 2000, seed: int = 0) -> CheckResult:
    """prod of singular values of M_w equals |det M_w|."""
    rng = np.random.default_rng(seed)
    mats = rng.normal(size=(3, 3, 3))
    c = CocycleSpec(mats)
    worst = 0.0
    for _ in range(samples):
        w = rng.integers(0, 3, size=int(rng.integers(1, 9)))
        M = word_product(c, w)
        s = singular_values(M)
        d = abs(np.linalg.det(M))
        worst = max(worst, abs(np.prod(s) - d) / max(d, 1e-300))
    return CheckResult("singular-value determinant identity", worst <= 1e-8, f"{samples} words, max rel err {worst:.2e}")


def check_kingman_monotone(n_max: int = 10) -> CheckResult:
    """a_n = int phi_n dmu is sub-additive for the norm potential under
    invariant Bernoulli and Markov measures."""
    phi = cocycle_potential(TEST_COCYCLE, 1.0)
    worst = -math.inf
    for mu in (Bernoulli([0.3, 0.7]), Markov(np.array([[0.9, 0.1], [0.4, 0.6]]))):
        est = kingman_functional(phi, mu, range(1, n_max + 1))
        a = {n: n * v for n, v, _ in est.per_n}
        for m in range(1, n_max):
            for n in range(1, n_max - m + 1):
                worst = max(worst, a[m + n] - a[m] - a[n])
    return CheckResult("Kingman averages sub-additive", worst <= 1e-9, f"max defect {worst:.3e}")


def check_oracles() -> CheckResult:
    """Closed-form values the modules must reproduce."""
    from .deviation import DeviationQuery, deviation_measure, rate_upper_bound
    from .thermo import BernoulliFamily
    errs = {}
    scal = CocycleSpec(np.array([[[2.0]], [[3.0]]]))
    for q in (0.0, 1.0, 2.0):
        vals = cocycle_pressure(scal, q, 20).values
        errs[f"P(q={q:g})"] = float(np.max(np.abs(vals - math.log(2 ** q + 3 ** q))))
    D = DoublingMap()
    dq = DeviationQuery(D, digit_frequency(), lebesgue_for(D), 0.7)
    errs["binomial tail n=10"] = abs(deviation_measure(dq, 10).value - 176 / 1024)
    H = -(0.7 * math.log(0.7) + 0.3 * math.log(0.3))
    errs["Cramer bound c=0.7"] = abs(rate_upper_bound(dq, constant(-math.log(2)), 0.0, BernoulliFamily(2)).value
                                     - (H - math.log(2)))
    diag = CocycleSpec(np.array([np.diag([2.0, 0.5]), np.diag([3.0, 1 / 3])]))
    errs["Lyapunov diag pair"] = abs(lyapunov(diag, Bernoulli([0.5, 0.5]), n=16).value - 0.5 * math.log(6))
    worst = max(errs.values())
    name = max(errs, key=errs.get)
    return CheckResult("closed-form oracles", worst <= 1e-8, f"{len(errs)} values, worst {name} off by {worst:.2e}")


SUITE: list[Callable[[], CheckResult]] = [
    check_norm_subadditivity,
    check_ball_monotonicity,
    check_cylinder_counts,
    check_separated_spanning,
    check_determinant_identity,
    check_kingman_monotone,
    check_oracles,
]


def run_suite(checks=None) -> list[CheckResult]:
    out = []
    for chk in checks or SUITE:
        t = time.perf_counter()
        try:
            res = chk()
        except Exception as exc:       # a crashing check is a failing check
            res = CheckResult(chk.__name__, False, f"{type(exc).__name__}: {exc}")
        res.seconds = time.perf_counter() - t
        out.append(res)
    return out
