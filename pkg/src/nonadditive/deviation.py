"""Measures of deviation sets U_n = {x : (1/n) phi_n(x) vs c}, fitted decay
rates, variational rate bounds over Bernoulli families and the sandwich
report comparing them."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binomtest, norm

from .cocycle import DEFAULT_BUDGET
from .combinatorics import all_words, compositions, log_multinomial
from .errors import ArgumentError, BudgetError, CapabilityError, FitError
from .measures import Bernoulli, IntervalMeasure, MeasureModel, symbolic_view
from .mistake import MistakeFunction, ball_log_masses
from .optimize import maximize_on_simplex
from .potentials import PotentialSequence, evaluate_array, evaluate_words
from .systems import DynamicalSystem, radius_window
from .thermo import EXACT, BernoulliFamily, bernoulli_fstar

AT_LEAST = "at_least"
GREATER_THAN = "greater_than"
ABS_GAP = "abs_gap"
MODES = (AT_LEAST, GREATER_THAN, ABS_GAP)
CENTER_PROVENANCE = ("closed_form", "cylinder_exact")

CONVENTION = ("rates are decay exponents I >= 0 with m(U_n) ~ exp(-I n); "
              "bounds are on (1/n) log m(U_n) and are compared with -I")
MARGINS = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)
# thresholds are compared with this slack so that rational values k/n equal to c count as equal
_SLACK = 1e-12


@dataclass
class DeviationQuery:
    """U_n = {(1/n) phi_n >= c} (at_least), {> c} (greater_than) or
    {|(1/n) phi_n - center| >= c} (abs_gap; > c when ``strict``)."""

    sys: DynamicalSystem
    phi: PotentialSequence
    measure: MeasureModel
    c: float
    mode: str = AT_LEAST
    ns: Sequence[int] = ()
    center: float | None = None
    center_provenance: str | None = None
    strict: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ArgumentError(f"mode must be one of {MODES}")
        self.ns = [int(n) for n in self.ns]
        if any(b <= a for a, b in zip(self.ns, self.ns[1:])) or any(n < 1 for n in self.ns):
            raise ArgumentError("the n schedule must be strictly increasing positive integers")
        if self.mode == ABS_GAP:
            if self.center is None or self.center_provenance not in CENTER_PROVENANCE:
                raise ArgumentError(f"abs_gap needs a center with provenance in {CENTER_PROVENANCE}")
            if self.c < 0:
                raise ArgumentError("the gap must be >= 0")

    def hit(self, values, n):
        """Membership of (1/n) phi_n values in U_n."""
        v = np.asarray(values, dtype=float) / n
        tol = _SLACK * max(1.0, abs(self.c))
        if self.mode == AT_LEAST:
            return v >= self.c - tol
        if self.mode == GREATER_THAN:
            return v > self.c + tol
        gap = np.abs(v - self.center)
        return gap > self.c + tol if self.strict else gap >= self.c - tol

    def describe(self) -> dict:
        return {"system": self.sys.name, "observable": self.phi.name, "measure": repr(self.measure),
                "c": self.c, "mode": self.mode, "ns": list(self.ns), "center": self.center,
                "center_provenance": self.center_provenance, "strict": self.strict}


@dataclass
class DeviationEstimate:
    n: int
    value: float
    engine: str                  # exact | mc | is
    ci_low: float
    ci_high: float
    log_value: float | None = None
    hits: int | None = None
    samples: int | None = None
    flags: list = field(default_factory=list)

    @property
    def log_measure(self) -> float:
        if self.log_value is not None:
            return self.log_value
        return math.log(self.value) if self.value > 0 else -math.inf


def _bernoulli_counts_view(q: DeviationQuery):
    """(Bernoulli, count form) when the query reduces to symbol counts."""
    try:
        smu = symbolic_view(q.sys, q.measure)
    except CapabilityError:
        return None, None
    cf = q.phi.count_form
    if isinstance(smu, Bernoulli) and cf is not None and cf.symbols in (smu.symbols, 1):
        return smu, cf
    return smu, None


def _count_values(cf, counts, n):
    arg = counts if cf.symbols != 1 else counts.sum(axis=-1, keepdims=True)
    return np.broadcast_to(np.asarray(cf.value(arg, n), dtype=float), counts.shape[:-1])


def deviation_measure(q: DeviationQuery, n: int, engine: str = "exact", samples: int = 100_000, seed: int = 0,
                      confidence: float = 0.99, budget: int = DEFAULT_BUDGET, proposal=None) -> DeviationEstimate:
    """m(U_n) by exact cylinder sums, plain Monte Carlo (Wilson interval) or
    importance sampling from tilted Bernoulli measures ("importance").

    Monte Carlo streams use the derived seed (seed, n)."""
    if engine == "exact":
        return _exact_measure(q, n, budget)
    rng = np.random.default_rng([seed, n])
    if engine == "monte_carlo":
        return _mc_measure(q, n, samples, rng, confidence)
    if engine == "importance":
        return _is_measure(q, n, samples, rng, confidence, proposal)
    raise ArgumentError(f"unknown engine {engine!r}")


def _exact_measure(q, n, budget):
    smu, cf = _bernoulli_counts_view(q)
    if smu is None:
        raise CapabilityError(f"no cylinder masses for {q.measure!r} on {q.sys.name}")
    if cf is not None:
        comp = compositions(n, smu.symbols)
        logw = log_multinomial(comp) + smu.counts_log_mass(comp)
        hit = q.hit(_count_values(cf, comp, n), n)
    else:
        if q.phi.word_evaluator is None:
            raise CapabilityError(f"{q.phi.name} is not constant on cylinders; use a Monte Carlo engine")
        if smu.symbols ** n > budget:
            raise BudgetError(smu.symbols ** n, budget)
        words = all_words(smu.symbols, n)
        logw = smu.word_log_mass(words)
        hit = q.hit(evaluate_words(q.phi, words), n)
    lv = float(logsumexp(logw[hit])) if np.any(hit) else -math.inf
    lv = min(lv, 0.0)
    v = math.exp(lv)
    return DeviationEstimate(n, v, "exact", v, v, log_value=lv)


def _sample_hits(q, n, count, rng):
    smu, cf = _bernoulli_counts_view(q)
    if cf is not None:
        counts = rng.multinomial(n, smu.p, size=count)
        return q.hit(_count_values(cf, counts, n), n)
    if isinstance(q.measure, IntervalMeasure) and q.phi.word_evaluator is None:
        return q.hit(evaluate_array(q.phi, q.sys, q.measure.sample_points(rng, count), n), n)
    if smu is None or q.phi.word_evaluator is None:
        raise CapabilityError("Monte Carlo needs a sampleable measure and an evaluable observable")
    return q.hit(evaluate_words(q.phi, smu.sample_words(rng, count, n)), n)


def _mc_measure(q, n, samples, rng, confidence, chunk=100_000):
    hits = 0
    for s in range(0, samples, chunk):
        hits += int(np.count_nonzero(_sample_hits(q, n, min(chunk, samples - s), rng)))
    ci = binomtest(hits, samples).proportion_ci(confidence_level=confidence, method="wilson")
    flags = ["rate_unbounded_below_at_this_n"] if hits == 0 else []
    return DeviationEstimate(n, hits / samples, "mc", float(ci.low), float(ci.high), hits=hits, samples=samples,
                             flags=flags)


def tilted_proposals(q: DeviationQuery) -> list:
    """Bernoulli measures closest in relative entropy to the reference that
    put the observable's mean on each boundary of the deviation set."""
    smu, _ = _bernoulli_counts_view(q)
    if not isinstance(smu, Bernoulli) or q.phi.bernoulli_rate is None:
        raise CapabilityError("tilted proposals need a Bernoulli reference and a closed-form observable mean")
    k = smu.symbols
    lp = np.where(smu.p > 0, smu.logp, 0.0)

    def neg_kl(p):
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(p > 0, p * (np.log(p) - lp), 0.0)
        return -float(t.sum())

    rate = q.phi.bernoulli_rate
    sides = [(1.0, q.c)] if q.mode != ABS_GAP else [(1.0, q.center + q.c), (-1.0, q.center - q.c)]
    out = []
    for sign, t in sides:
        res = maximize_on_simplex(neg_kl, k, constraints=[lambda p, s=sign, t=t: s * (rate(p) - t)],
                                  upper=np.where(smu.p > 0, 1.0, 0.0))
        if res.feasible:
            out.append(np.clip(res.x, 0.0, 1.0) / res.x.sum())
    return out


def _is_measure(q, n, samples, rng, confidence, proposal, chunk=100_000):
    smu, cf = _bernoulli_counts_view(q)
    if not isinstance(smu, Bernoulli):
        raise CapabilityError("importance sampling needs a Bernoulli reference")
    props = tilted_proposals(q) if proposal is None else [np.asarray(p, dtype=float) for p in proposal]
    if not props:
        return DeviationEstimate(n, 0.0, "is", 0.0, 0.0, log_value=-math.inf, hits=0, samples=0,
                                 flags=["empty_deviation_set"])
    J = len(props)
    with np.errstate(divide="ignore"):
        logq = np.stack([np.log(p) for p in props])
    lp = smu.logp
    total = total_sq = 0.0
    hits = 0
    for s in range(0, samples, chunk):
        m = min(chunk, samples - s)
        which = rng.integers(0, J, size=m)
        if cf is not None:
            counts = np.empty((m, smu.symbols), dtype=np.int64)
            for j in range(J):
                sel = which == j
                counts[sel] = rng.multinomial(n, props[j], size=int(sel.sum()))
            vals = _count_values(cf, counts, n)
        else:
            if q.phi.word_evaluator is None:
                raise CapabilityError(f"{q.phi.name} is not constant on cylinders")
            words = np.empty((m, n), dtype=np.int64)
            for j in range(J):
                sel = which == j
                words[sel] = rng.choice(smu.symbols, size=(int(sel.sum()), n), p=props[j])
            counts = np.stack([(words == a).sum(axis=1) for a in range(smu.symbols)], axis=1)
            vals = evaluate_words(q.phi, words)
        with np.errstate(invalid="ignore"):
            log_target = np.where(counts > 0, counts * lp, 0.0).sum(axis=1)
            log_prop = logsumexp(np.where(counts[:, None, :] > 0, counts[:, None, :] * logq[None], 0.0).sum(axis=2),
                                 axis=1) - math.log(J)
        w = np.where(q.hit(vals, n), np.exp(log_target - log_prop), 0.0)
        hits += int(np.count_nonzero(w))
        total += float(w.sum())
        total_sq += float((w * w).sum())
    mean = total / samples
    se = math.sqrt(max(total_sq / samples - mean * mean, 0.0) / samples)
    z = float(norm.ppf(0.5 + confidence / 2))
    flags = ["rate_unbounded_below_at_this_n"] if hits == 0 else []
    return DeviationEstimate(n, min(mean, 1.0), "is", max(mean - z * se, 0.0), min(mean + z * se, 1.0),
                             hits=hits, samples=samples, flags=flags)


# ---------------------------------------------------------------------------
# rate fits
# ---------------------------------------------------------------------------

@dataclass
class RateFit:
    rate: float
    kappa: float
    intercept: float
    residuals: list
    ns: list
    excluded: list

    def to_dict(self):
        return asdict(self)


def empirical_rate(series: Sequence, kappa: float | None = None) -> RateFit:
    """Least-squares fit of log m = -I n - kappa log n + b over (n, m, tag)
    triples (or DeviationEstimate objects).  kappa defaults to 1/2 when every
    point is exact, else 0."""
    rows = []
    for item in series:
        if isinstance(item, DeviationEstimate):
            rows.append((item.n, item.value, item.engine, item.log_measure))
        else:
            n, m, tag = item
            rows.append((n, m, tag, math.log(m) if m > 0 else -math.inf))
    if kappa is None:
        kappa = 0.5 if all(r[2] == "exact" for r in rows) else 0.0
    if kappa not in (0, 0.5):
        raise ArgumentError("kappa must be 0 or 1/2")
    used = [r for r in rows if r[1] > 0 and math.isfinite(r[3])]
    excluded = [r[0] for r in rows if not (r[1] > 0 and math.isfinite(r[3]))]
    if len(used) < 4:
        raise FitError(f"need at least 4 positive measures, got {len(used)}")
    ns = np.array([r[0] for r in used], dtype=float)
    y = np.array([r[3] for r in used]) + kappa * np.log(ns)
    A = np.stack([-ns, np.ones_like(ns)], axis=1)
    (rate, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ np.array([rate, b])
    rate = 0.0 if abs(rate) < 1e-13 else float(rate)
    return RateFit(rate, float(kappa), float(b), resid.tolist(), ns.astype(int).tolist(), excluded)


# ---------------------------------------------------------------------------
# variational bounds
# ---------------------------------------------------------------------------

@dataclass
class RateBound:
    value: float
    argmax: list | None
    minus_infinity: bool
    margin: float | None
    family_restricted: bool = True
    fstar_direction: str = EXACT
    partial: bool = False

    def to_dict(self):
        d = asdict(self)
        d["value"] = "minus_infinity" if self.minus_infinity else self.value
        return d


def _constraint_sides(q: DeviationQuery, margin: float):
    if q.mode == ABS_GAP:
        return [(1.0, q.center + q.c + margin), (-1.0, q.center - q.c - margin)]
    return [(1.0, q.c + margin)]


def _bound(q, gibbs, P, family, margin):
    directions = set()

    def fstar(phi, p):
        v, d = bernoulli_fstar(phi, p)
        directions.add(d)
        return v

    objective = lambda p: -P + family.entropy(p) + fstar(gibbs, p)
    best = None
    for sign, t in _constraint_sides(q, margin):
        con = lambda p, s=sign, t=t: s * (fstar(q.phi, p) - t)
        res = maximize_on_simplex(objective, family.symbols, constraints=[con], lower=family.lower,
                                  upper=family.upper, resolution=family.resolution)
        if res.feasible and (best is None or res.value > best.value):
            best = res
    direction = EXACT if directions <= {EXACT} else "kingman_upper_bound"
    if best is None:
        return RateBound(-math.inf, None, True, margin, fstar_direction=direction)
    return RateBound(float(best.value), best.x.tolist(), False, margin, fstar_direction=direction)


def rate_upper_bound(q: DeviationQuery, gibbs: PotentialSequence, P: float, family: BernoulliFamily) -> RateBound:
    """max of -P + h(eta) + F_*(eta, gibbs) over the family under the closed
    constraint F_*(eta, observable) >= c (both sides of the gap in abs_gap
    mode)."""
    return _bound(q, gibbs, P, family, 0.0)


def rate_lower_bound(q: DeviationQuery, gibbs: PotentialSequence, P: float, family: BernoulliFamily,
                     margins: Sequence[float] = MARGINS) -> RateBound:
    """Same program under the strict constraint, realized as >= c + margin
    and reported as the sup over the margin schedule.  Marked partial: the
    family is a subset of all invariant measures."""
    best = None
    for m in margins:
        b = _bound(q, gibbs, P, family, m)
        if best is None or (not b.minus_infinity and (best.minus_infinity or b.value > best.value)):
            best = b
    best.partial = True
    return best


# ---------------------------------------------------------------------------
# sandwich report
# ---------------------------------------------------------------------------

CONSISTENT = "consistent"
VIOLATED = "violated"
INCOMPLETE = "incomplete"


@dataclass
class DeviationReport:
    query: dict
    series: list
    fit: RateFit | None
    upper: RateBound | None
    lower: RateBound | None
    verdict: str
    margin: float | None = None
    failed_stage: str | None = None
    error: str | None = None
    tolerance: float = 0.015
    convention: str = CONVENTION

    def to_dict(self) -> dict:
        return {
            "convention": self.convention,
            "query": self.query,
            "series": [asdict(s) for s in self.series],
            "fit": None if self.fit is None else self.fit.to_dict(),
            "bounds": {"upper": None if self.upper is None else self.upper.to_dict(),
                       "lower": None if self.lower is None else self.lower.to_dict()},
            "verdict": {"status": self.verdict, "margin": self.margin, "tolerance": self.tolerance,
                        "failed_stage": self.failed_stage, "error": self.error},
        }

    def to_json(self) -> str:
        return json.dumps(_jsonable(self.to_dict()), indent=2, ensure_ascii=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "measure", "ci_low", "ci_high", "engine"])
        for s in self.series:
            w.writerow([s.n, repr(s.value), repr(s.ci_low), repr(s.ci_high), s.engine])
        return buf.getvalue()

    def plot_data(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "log_measure"])
        for s in self.series:
            w.writerow([s.n, repr(s.log_measure)])
        return buf.getvalue()

    def summary(self) -> str:
        lines = [f"# {self.convention}"]
        if self.fit is not None:
            lines.append(f"I_hat = {self.fit.rate:.6f} (kappa = {self.fit.kappa:g})")
        for name, b in (("upper", self.upper), ("lower", self.lower)):
            if b is not None:
                v = "minus_infinity" if b.minus_infinity else f"{b.value:.6f}"
                tag = " [partial: family-restricted]" if b.partial else ""
                lines.append(f"{name}_bound = {v}{tag}")
        stage = f" (failed stage: {self.failed_stage})" if self.failed_stage else ""
        lines.append(f"verdict: {self.verdict}{stage}")
        return "\n".join(lines)


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.floating, float)):
        x = float(x)
        return x if math.isfinite(x) else ("-inf" if x < 0 else ("inf" if x > 0 else "nan"))
    if isinstance(x, np.integer):
        return int(x)
    return x


def ldp_sandwich(q: DeviationQuery, gibbs: PotentialSequence, P: float, family: BernoulliFamily,
                 engine: str = "exact", samples: int = 100_000, seed: int = 0, kappa: float | None = None,
                 tolerance: float = 0.015) -> DeviationReport:
    """Deviation measures over q.ns, the fitted rate and both bounds; the
    verdict is consistent iff lower - tol <= -I <= upper + tol."""
    series, fit, ub, lb = [], None, None, None
    stage = "deviation_measure"
    try:
        series = [deviation_measure(q, n, engine, samples, seed) for n in q.ns]
        stage = "empirical_rate"
        fit = empirical_rate(series, kappa)
        stage = "rate_upper_bound"
        ub = rate_upper_bound(q, gibbs, P, family)
        stage = "rate_lower_bound"
        lb = rate_lower_bound(q, gibbs, P, family)
    except (ArgumentError, CapabilityError, FitError, BudgetError) as exc:
        return DeviationReport(q.describe(), series, fit, ub, lb, INCOMPLETE, failed_stage=stage, error=str(exc),
                               tolerance=tolerance)
    r = -fit.rate
    lo = -math.inf if lb.minus_infinity else lb.value
    hi = -math.inf if ub.minus_infinity else ub.value
    margin = min(r - (lo - tolerance), (hi + tolerance) - r)
    verdict = CONSISTENT if margin >= 0 else VIOLATED
    return DeviationReport(q.describe(), series, fit, ub, lb, verdict,
                           margin=None if not math.isfinite(margin) else margin, tolerance=tolerance)


# ---------------------------------------------------------------------------
# ball-mass rates
# ---------------------------------------------------------------------------

@dataclass
class BallRateReport:
    n_list: list
    rates: np.ndarray            # -(1/n_max) log m(B_n(g; x, eps)) per sampled x
    slopes: np.ndarray           # least-squares slope of -log m(B_n) in n per x
    ess_sup: float
    eps: float
    seed: int
    geometry: str


def ball_mass_rate(sys: DynamicalSystem, g: MistakeFunction, m: MeasureModel, nu: MeasureModel, eps: float,
                   n_list: Sequence[int], seed: int = 0, samples: int = 20) -> BallRateReport:
    """Per-point ball-mass rates of m at nu-sampled points and their sample
    essential sup."""
    ns = sorted(int(n) for n in n_list)
    rng = np.random.default_rng(seed)
    if isinstance(nu, IntervalMeasure):
        pts = nu.sample_points(rng, samples)
    else:
        pts = symbolic_view(sys, nu).sample_words(rng, samples, max(ns) + radius_window(eps) + 60)
    lm, geo = ball_log_masses(sys, m, g, pts, ns, eps)
    nn = np.array(ns, dtype=float)
    rates = -lm[:, -1] / nn[-1]
    slopes = (np.polyfit(nn, -lm.T, 1)[0] if len(ns) > 1 else rates.copy())
    return BallRateReport(ns, rates, np.asarray(slopes), float(np.max(rates)), eps, seed, geo)
