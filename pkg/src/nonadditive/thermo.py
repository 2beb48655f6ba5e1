"""Kingman functionals, pressure (cylinder sums on shifts, separated sets on
interval maps), the variational inequality over Bernoulli families,
weak-Gibbs checks and the mistake-ball bounds for additive Gibbs measures."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numba
import numpy as np
from scipy.integrate import quad
from scipy.special import entr, logsumexp

from .cocycle import DEFAULT_BUDGET, aitken
from .combinatorics import all_words, compositions, log_multinomial
from .errors import ArgumentError, BudgetError, CapabilityError
from .measures import (Bernoulli, BlockMarkov, EmpiricalOrbit, IntervalMeasure,
                       MeasureModel, SymbolicMeasure, symbolic_view, words_to_points)
from .mistake import MistakeFunction, ball_log_masses, zero_mistakes
from .optimize import maximize_on_simplex
from .potentials import (ADDITIVE, SUBADDITIVE, SUPERADDITIVE, PotentialSequence,
                         evaluate, evaluate_array, evaluate_words)
from .systems import BetaMap, DynamicalSystem, IntervalMap, ShiftPoint, ShiftSpace, radius_window

UPPER = "upper_bound_of_F*"
EXACT = "exact"
ESTIMATE = "estimate"
LOWER = "lower_bound_of_limit"


def _cylinder_evaluable(phi: PotentialSequence) -> bool:
    return phi.word_evaluator is not None or phi.count_form is not None


# ---------------------------------------------------------------------------
# Kingman functional
# ---------------------------------------------------------------------------

@dataclass
class KingmanEstimate:
    value: float
    direction: str
    per_n: list            # (n, (1/n) int phi_n dmu, stderr)
    mode: str
    widened: bool = False
    seed: int | None = None


def _integrate_site(site, mu: IntervalMeasure):
    if isinstance(mu, EmpiricalOrbit):
        return float(np.mean([site(x) for x in mu.points]))
    cuts = np.unique(np.concatenate([[0.0, 1.0], mu.breakpoints()]))
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        val, _ = quad(lambda x: float(site(x)) * float(mu.density(x)), a, b, limit=200)
        total += val
    return total


def kingman_functional(phi: PotentialSequence, mu: MeasureModel, n_list: Sequence[int], mode: str = "cylinder_exact",
                       samples: int = 10_000, seed: int = 0, sys: DynamicalSystem | None = None,
                       tolerance: float | None = None, budget: int = DEFAULT_BUDGET) -> KingmanEstimate:
    """(1/n) int phi_n dmu over n_list.  Sub-additive sequences report the
    minimum as an upper bound for F_*(mu, phi); additive ones report the
    smallest-n value, which is exact for invariant mu."""
    ns = sorted(set(int(n) for n in n_list))
    if not ns or ns[0] < 1:
        raise ArgumentError("n_list must hold integers >= 1")
    if not mu.invariant:
        warnings.warn(f"{mu!r} is not flagged invariant; Kingman averages may not be monotone", RuntimeWarning)
    if sys is None:
        if isinstance(mu, SymbolicMeasure):
            sys = ShiftSpace(mu.symbols)
        else:
            raise ArgumentError("interval measures need the system")
    rows = []
    widened = False
    if mode == "cylinder_exact":
        for n in ns:
            rows.append((n, _exact_average(phi, mu, sys, n, budget), 0.0))
    elif mode == "monte_carlo":
        rng = np.random.default_rng(seed)
        for n in ns:
            vals = _sample_values(phi, mu, sys, n, samples, rng) / n
            se = float(vals.std(ddof=1) / math.sqrt(len(vals))) if len(vals) > 1 else math.inf
            if tolerance is not None and se > tolerance:
                widened = True
            rows.append((n, float(vals.mean()), se))
    else:
        raise ArgumentError(f"unknown mode {mode!r}")
    means = [r[1] for r in rows]
    cls = phi.declared_class
    if cls == SUBADDITIVE:
        value, direction = min(means), UPPER
    elif cls == ADDITIVE:
        value = means[0]
        direction = EXACT if (mode == "cylinder_exact" and mu.invariant) else ESTIMATE
    elif cls == SUPERADDITIVE:
        value, direction = max(means), LOWER
    else:
        value, direction = means[-1], ESTIMATE
    return KingmanEstimate(value, direction, rows, mode, widened, seed if mode == "monte_carlo" else None)


def _exact_average(phi, mu, sys, n, budget):
    if isinstance(mu, IntervalMeasure) and isinstance(sys, IntervalMap):
        if phi.declared_class == ADDITIVE and phi.site is not None and mu.invariant:
            site = phi.site
            try:
                site(0.5)
                f = site
            except (TypeError, AttributeError):
                f = lambda x: site(x, sys)
            return _integrate_site(f, mu)
        if not _cylinder_evaluable(phi):
            raise CapabilityError("exact averages on interval maps need additive or cylinder-constant potentials")
    smu = symbolic_view(sys, mu)
    if not _cylinder_evaluable(phi):
        raise CapabilityError(f"{phi.name} is not constant on cylinders; use monte_carlo")
    if isinstance(smu, Bernoulli) and phi.count_form is not None and phi.count_form.symbols in (smu.symbols, 1):
        comp = compositions(n, smu.symbols)
        lm = log_multinomial(comp) + smu.counts_log_mass(comp)
        vals = phi.count_form.value(comp if phi.count_form.symbols == smu.symbols else comp.sum(axis=1, keepdims=True), n)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), lm.shape)
    else:
        if smu.symbols ** n > budget:
            raise BudgetError(smu.symbols ** n, budget)
        words = all_words(smu.symbols, n)
        lm = smu.word_log_mass(words)
        vals = evaluate_words(phi, words)
    keep = lm > -np.inf
    w = np.exp(lm[keep])
    v = vals[keep]
    if np.any(np.isneginf(v)):
        return -math.inf
    return float(np.dot(w, v) / n)


def _sample_values(phi, mu, sys, n, samples, rng):
    if isinstance(mu, IntervalMeasure):
        return evaluate_array(phi, sys, mu.sample_points(rng, samples), n)
    smu = symbolic_view(sys, mu)
    if _cylinder_evaluable(phi):
        return evaluate_words(phi, smu.sample_words(rng, samples, n))
    pts = words_to_points(sys, smu.sample_words(rng, samples, n + 40), rng)
    return np.array([evaluate(phi, sys, p, n) for p in pts])


def bernoulli_fstar(phi: PotentialSequence, p, n_list=(8, 16)) -> tuple[float, str]:
    """F_*(Bernoulli(p), phi): closed form when the potential carries one,
    otherwise the Kingman upper bound from exact cylinder averages."""
    if phi.bernoulli_rate is not None:
        return float(phi.bernoulli_rate(np.asarray(p, dtype=float))), EXACT
    est = kingman_functional(phi, Bernoulli(p), n_list)
    return est.value, est.direction


# ---------------------------------------------------------------------------
# pressure
# ---------------------------------------------------------------------------

@dataclass
class PressureEstimate:
    method: str
    ns: list
    values: list               # (1/n) log Z_n
    log_Z: list
    extrapolated: float | None
    monotone: bool
    definition: str
    flags: list = field(default_factory=list)
    eps: float | None = None
    grid_resolution: float | None = None
    drift: float | None = None
    unconverged: bool = False
    error_bounds: list | None = None

    def csv_rows(self):
        d = "" if self.drift is None else self.drift
        return [(n, v, d) for n, v in zip(self.ns, self.values)]


def _monotone(vals):
    d = np.diff(vals)
    return bool(np.all(d >= -1e-12) or np.all(d <= 1e-12))


def cylinder_pressure(sys: ShiftSpace, phi: PotentialSequence, n_max: int, budget: int = DEFAULT_BUDGET) -> PressureEstimate:
    """P_n = (1/n) log sum over admissible n-words w of exp(phi_n(w)), one point
    per cylinder (a maximal (n, eps)-separated set for eps in (1/2, 1])."""
    if not isinstance(sys, ShiftSpace):
        raise CapabilityError("cylinder pressure needs a shift space")
    if n_max < 1:
        raise ArgumentError("n_max must be >= 1")
    L = sys.symbols
    full = sys.transition is None
    logZ, bounds, flags = [], [], []
    cf = phi.count_form
    for n in range(1, n_max + 1):
        if full and cf is not None and cf.symbols in (L, 1):
            comp = compositions(n, L)
            vals = cf.value(comp if cf.symbols == L else comp.sum(axis=1, keepdims=True), n)
            vals = np.broadcast_to(np.asarray(vals, dtype=float), (len(comp),))
            logZ.append(float(logsumexp(log_multinomial(comp) + vals)))
            bounds.append(0.0)
            continue
        if L ** n > budget:
            raise BudgetError(L ** n, budget)
        words = all_words(L, n)
        if not full:
            words = words[sys.admissible_words(words)]
        if _cylinder_evaluable(phi):
            vals = evaluate_words(phi, words)
            bounds.append(0.0)
        else:
            vals = np.array([evaluate(phi, sys, ShiftPoint.from_prefix(w), n) for w in words])
            b = phi.bowen_bound(n) if phi.bowen_bound else math.inf
            bounds.append(b)
            if not math.isfinite(b):
                flags.append("representative_error_unbounded")
        logZ.append(float(logsumexp(vals)) if len(vals) else -math.inf)
    ns = list(range(1, n_max + 1))
    values = [z / n for z, n in zip(logZ, ns)]
    ext, flag = aitken(values)
    return PressureEstimate("cylinder", ns, values, logZ, ext, _monotone(values),
                            "Z_n = sum over n-cylinders of exp(phi_n)", [flag] + sorted(set(flags)),
                            error_bounds=bounds)


@numba.njit(cache=True)
def _greedy_separated(order, orbits, eps, window):
    """Greedy (n, eps)-separated subset of a sorted grid, visiting candidates
    in ``order``; only grid neighbours within ``window`` can be eps-close.
    Accepted indices are kept sorted so each candidate scans only them,
    nearest first, since a close neighbour is the likeliest conflict."""
    N, n = orbits.shape
    accepted = np.zeros(N, dtype=np.bool_)
    kept = np.empty(N, dtype=np.int64)
    m = 0
    for t in range(N):
        k = order[t]
        lo = np.searchsorted(kept[:m], k - window)
        hi = np.searchsorted(kept[:m], k + window, side="right")
        pos = np.searchsorted(kept[:m], k)
        left, right = pos - 1, pos
        ok = True
        while ok and (left >= lo or right < hi):
            if right >= hi or (left >= lo and k - kept[left] <= kept[right] - k):
                j = kept[left]
                left -= 1
            else:
                j = kept[right]
                right += 1
            sep = False
            for i in range(n):
                if abs(orbits[k, i] - orbits[j, i]) > eps:
                    sep = True
                    break
            if not sep:
                ok = False
        if ok:
            accepted[k] = True
            kept[pos + 1:m + 1] = kept[pos:m].copy()
            kept[pos] = k
            m += 1
    return accepted


def _separated_logZ(sys, phi, n, eps, res):
    N = int(math.ceil(1.0 / res))
    grid = (np.arange(N) + 0.5) / N
    orb = sys.orbit_array(grid, n)
    vals = evaluate_array(phi, sys, grid, n)
    order = np.lexsort((np.arange(N), -vals)).astype(np.int64)   # decreasing phi_n, ties left to right
    window = int(math.ceil(eps * N)) + 1
    acc = _greedy_separated(order, orb, float(eps), window)
    return float(logsumexp(vals[acc])), int(acc.sum())


def separated_pressure(sys: IntervalMap, phi: PotentialSequence, n: int, eps: float,
                       grid_resolution: float | None = None, span: int = 4, max_points: int = 2 ** 22
                       ) -> PressureEstimate:
    """Pressure from Z_k = sum over E_k of exp(phi_k), E_k a maximal
    (k, eps)-separated subset of a uniform grid chosen greedily in decreasing
    phi_k order, for k = n - span + 1 .. n.  The estimate is the slope of
    log Z_k in k (the eps-dependent prefactor cancels); a rerun at half the
    grid resolution gives the recorded drift."""
    if not isinstance(sys, IntervalMap):
        raise CapabilityError("separated pressure needs an interval map")
    if eps <= 0 or n < 1:
        raise ArgumentError("need eps > 0 and n >= 1")
    if grid_resolution is None:
        grid_resolution = max(eps * max(sys.expansion, 2.0) ** -n / 32, 2.0 / max_points)
    if grid_resolution >= eps:
        raise ArgumentError("grid resolution must be finer than eps")
    if 2.0 / grid_resolution > 2 * max_points:
        raise BudgetError(int(2.0 / grid_resolution), 2 * max_points)
    ks = list(range(max(1, n - span + 1), n + 1))

    def run(res):
        return [_separated_logZ(sys, phi, k, eps, res) for k in ks]

    coarse = run(grid_resolution)
    fine = run(grid_resolution / 2)
    logZ = [z for z, _ in fine]
    slope = lambda zs: float(np.polyfit(ks, zs, 1)[0]) if len(ks) > 1 else zs[0] / ks[0]
    P_fine, P_coarse = slope(logZ), slope([z for z, _ in coarse])
    drift = abs(P_fine - P_coarse) / max(abs(P_fine), 1.0)
    values = [z / k for z, k in zip(logZ, ks)]
    flags = ["unconverged"] if drift > 0.05 else []
    return PressureEstimate(
        "separated", ks, values, logZ, P_fine, _monotone(values),
        "Z_n = sum over a greedy maximal (n, eps)-separated grid subset of exp(phi_n); P = slope of log Z_n in n",
        flags, eps, grid_resolution / 2, drift, drift > 0.05,
    )


# ---------------------------------------------------------------------------
# variational principle over Bernoulli families
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BernoulliFamily:
    """Bernoulli measures on ``symbols`` letters with optional coordinate bounds."""

    symbols: int
    lower: tuple | None = None
    upper: tuple | None = None
    resolution: int | None = None

    ergodic = True

    def measure(self, p) -> Bernoulli:
        return Bernoulli(np.asarray(p, dtype=float) / np.sum(p))

    @staticmethod
    def entropy(p) -> float:
        return float(entr(np.asarray(p, dtype=float)).sum())


@dataclass
class GapReport:
    gap: float
    best_value: float
    argmax: np.ndarray | None
    entropy: float
    fstar: float
    fstar_direction: str
    P: float
    tolerance: float
    consistent: bool
    family: str = "bernoulli"
    family_restricted: bool = True
    method: str = ""


def variational_gap(sys: DynamicalSystem, phi: PotentialSequence, family: BernoulliFamily, P: float,
                    tolerance: float = 1e-6) -> GapReport:
    """gap = P - max over the family of h(mu) + F_*(mu, phi)."""
    k = family.symbols
    directions = set()

    def objective(p):
        v, d = bernoulli_fstar(phi, p)
        directions.add(d)
        return family.entropy(p) + v

    res = maximize_on_simplex(objective, k, lower=family.lower, upper=family.upper, resolution=family.resolution)
    if not res.feasible:
        raise ArgumentError("the family is empty")
    fs, d = bernoulli_fstar(phi, res.x)
    gap = P - res.value
    return GapReport(gap, res.value, res.x, family.entropy(res.x), fs, d, P, tolerance,
                     gap >= -tolerance, method=res.method)


# ---------------------------------------------------------------------------
# weak Gibbs checks
# ---------------------------------------------------------------------------

GIBBS = "gibbs"
WEAK_GIBBS = "weak_gibbs"
VIOLATED = "violated"


@dataclass
class GibbsReport:
    ns: list
    K: list                     # K_n
    log_K: list
    normalized: list            # (1/n) log K_n
    growth: float               # least-squares slope of log K_n in n
    trend: float                # least-squares slope of (1/n) log K_n in n
    verdict: str
    K_bound: float | None
    log_ratios: np.ndarray      # (samples, len(ns)) log r_n(x)
    excluded: list              # (sample index, n) with zero ball mass
    samples: int
    seed: int
    eps: float
    geometry: str

    @property
    def is_weak_gibbs(self) -> bool:
        return self.verdict in (GIBBS, WEAK_GIBBS)

    @property
    def coverage(self) -> str:
        return (f"K_n certified over {self.samples - len({i for i, _ in self.excluded})} sampled points only; "
                f"{len(self.excluded)} (point, n) pairs excluded for zero ball mass")

    def csv_rows(self):
        return [(n, k, self.growth) for n, k in zip(self.ns, self.K)]


def weak_gibbs_check(sys: DynamicalSystem, phi: PotentialSequence, nu: MeasureModel, P: float, sample_count: int,
                     n_list: Sequence[int], eps: float, seed: int = 0, slope_tol: float = 0.02,
                     gibbs_drift: float = 0.05, g: MistakeFunction | None = None) -> GibbsReport:
    """r_n(x) = nu(B_n(x, eps)) / exp(-nP + phi_n(x)) on sampled x;
    K_n = max over x of max(r_n, 1/r_n).

    weak_gibbs: |slope of log K_n| <= slope_tol and (1/n) log K_n not
    increasing.  gibbs: additionally log K_n grows by at most gibbs_drift
    between the first and second half of the n range (K = max K_n)."""
    ns = sorted(int(n) for n in n_list)
    g = g or zero_mistakes()
    rng = np.random.default_rng(seed)
    if isinstance(sys, IntervalMap) and isinstance(nu, IntervalMeasure):
        pts = nu.sample_points(rng, sample_count)
        lm, geo = ball_log_masses(sys, nu, g, pts, ns, eps)
        phis = np.stack([evaluate_array(phi, sys, pts, n) for n in ns], axis=1)
    else:
        smu = symbolic_view(sys, nu)
        w = radius_window(eps)
        words = smu.sample_words(rng, sample_count, max(ns) + w + 60)
        lm, geo = ball_log_masses(sys, smu, g, words, ns, eps)
        if _cylinder_evaluable(phi):
            phis = np.stack([evaluate_words(phi, words[:, :n]) for n in ns], axis=1)
        else:
            pts = words_to_points(sys, words, rng)
            phis = np.array([[evaluate(phi, sys, p, n) for n in ns] for p in pts])
    nn = np.array(ns, dtype=float)
    logr = lm + nn[None, :] * P - phis
    bad = ~np.isfinite(logr)
    excluded = [(int(i), ns[int(j)]) for i, j in zip(*np.nonzero(bad))]
    absr = np.where(bad, 0.0, np.abs(logr))
    log_K = absr.max(axis=0)
    normalized = log_K / nn
    growth = float(np.polyfit(nn, log_K, 1)[0]) if len(ns) > 1 else 0.0
    trend = float(np.polyfit(nn, normalized, 1)[0]) if len(ns) > 1 else 0.0
    weak = abs(growth) <= slope_tol and trend <= 1e-12
    half = max(1, len(ns) // 2)
    steady = log_K[half:].max() <= log_K[:half].max() + gibbs_drift if len(ns) > 1 else True
    if weak and steady:
        verdict, Kb = GIBBS, float(np.exp(log_K.max()))
    elif weak:
        verdict, Kb = WEAK_GIBBS, None
    else:
        verdict, Kb = VIOLATED, None
    return GibbsReport(ns, list(np.exp(log_K)), list(log_K), list(normalized), growth, trend, verdict, Kb,
                       logr, excluded, sample_count, seed, eps, geo)


# ---------------------------------------------------------------------------
# mistake-ball bounds for additive Gibbs measures on the doubling map
# ---------------------------------------------------------------------------

def doubling_gibbs_measure(site: Callable, window: int = 10) -> BlockMarkov:
    """Equilibrium state of phi_w(x) = site(center of the window-cylinder of x),
    a locally constant approximation of ``site`` within its modulus of
    continuity at scale 2**-window; ``.pressure`` is P(phi_w)."""
    words = all_words(2, window)
    centers = words @ (2.0 ** -np.arange(1, window + 1)) + 2.0 ** -(window + 1)
    return BlockMarkov(2, window - 1, np.asarray(site(centers), dtype=float))


def orbit_points_from_words(words, n: int, depth: int = 53) -> np.ndarray:
    """f^j x for j < n from the binary digits of x (rows of ``words``)."""
    words = np.asarray(words)
    if words.shape[1] < n + depth:
        raise ArgumentError(f"need {n + depth} digits")
    scale = 2.0 ** -np.arange(1, depth + 1)
    return np.stack([words[:, j:j + depth] @ scale for j in range(n)], axis=1)


@dataclass
class BallBoundReport:
    C_hat: float
    fraction: float
    lower_fraction: float
    upper_fraction: float
    pressure: float
    xi: float
    n_max: int
    eps: float
    calibration: int
    samples: int
    seed: int


def gibbs_ball_bound_check(site: Callable, g: MistakeFunction, eps: float = 0.125, n_max: int = 30, xi: float = 0.05,
                         calibration: int = 100, samples: int = 500, seed: int = 0, window: int = 10) -> BallBoundReport:
    """Check C^-1 exp(-Pn + S_n phi(x)) <= mu(B_n(g; x, eps)) <= C exp(2 xi n - Pn + S_n phi(x))
    for all n <= n_max on sampled x (coding metric on the doubling map).

    C is fitted once on an independent calibration sample as the smallest
    constant making both sides hold there; the lower side needs it because
    balls at a fixed eps are cylinders of length n plus a few symbols."""
    mu = doubling_gibbs_measure(site, window)
    P = mu.pressure
    rng = np.random.default_rng(seed)
    w = radius_window(eps)
    ns = list(range(1, n_max + 1))
    nn = np.array(ns, dtype=float)
    sysd = BetaMap(2.0)

    def draw(count):
        words = mu.sample_words(rng, count, n_max + w + 60)
        lm, _ = ball_log_masses(sysd, mu, g, words, ns, eps, geometry="coding")
        xs = orbit_points_from_words(words, n_max)
        S = np.cumsum(np.asarray(site(xs), dtype=float), axis=1)
        return lm, -P * nn + S

    lm_c, base_c = draw(calibration)
    logC = max(0.0, float(np.max(lm_c - base_c - 2 * xi * nn)), float(np.max(base_c - lm_c)))
    lm, base = draw(samples)
    lower = np.all(lm >= base - logC - 1e-12, axis=1)
    upper = np.all(lm <= base + logC + 2 * xi * nn + 1e-12, axis=1)
    return BallBoundReport(math.exp(logC), float(np.mean(lower & upper)), float(np.mean(lower)),
                          float(np.mean(upper)), P, xi, n_max, eps, calibration, samples, seed)
