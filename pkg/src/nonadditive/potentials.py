"""Potential sequences phi_n with class tags, sampled class checks and
Bowen-variation diagnostics.

A potential sequence is evaluated as ``evaluate(phi, sys, x, n)``.  Potentials
that only depend on symbol counts of the first n symbols also carry a
``count_form`` so exact engines can sum over count vectors instead of words.
"""
from __future__ import annotations

import inspect
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, ConfigError, InsufficientProbesError
from .systems import (DynamicalSystem, IntervalMap, ShiftPoint, ShiftSpace,
                      bowen_distance, radius_window)

ADDITIVE = "additive"
SUBADDITIVE = "subadditive"
ALMOST_ADDITIVE = "almost_additive"
ASYMPTOTICALLY_ADDITIVE = "asymptotically_additive"
SUPERADDITIVE = "superadditive"
CLASSES = (ADDITIVE, SUBADDITIVE, ALMOST_ADDITIVE, ASYMPTOTICALLY_ADDITIVE, SUPERADDITIVE)

CONSISTENT = "consistent"
VIOLATED = "violated"
NOT_CHECKABLE = "not_checkable"


@dataclass(frozen=True)
class CountForm:
    """phi_n(x) = value(counts, n) where counts[s] is the number of j < n
    with symbol s at position j.  ``value`` is vectorized over rows."""

    symbols: int
    value: Callable[[np.ndarray, int], np.ndarray]


@dataclass
class PotentialSequence:
    evaluator: Callable[[DynamicalSystem, object, int], float]
    declared_class: str
    name: str
    almost_additive_C: float | None = None
    approximants: list = field(default_factory=list)   # [(xi, site function)]
    bowen_bound: Callable[[int], float] | None = None
    site: Callable | None = None                       # phi for Birkhoff sums
    count_form: CountForm | None = None
    word_evaluator: Callable[[np.ndarray], np.ndarray] | None = None  # exact on cylinders
    array_evaluator: Callable[[IntervalMap, np.ndarray, int], np.ndarray] | None = None
    bernoulli_rate: Callable[[np.ndarray], float] | None = None      # F_*(Bernoulli(p), phi) when known

    def __post_init__(self):
        if self.declared_class not in CLASSES:
            raise ArgumentError(f"unknown potential class {self.declared_class!r}")
        if self.declared_class == ALMOST_ADDITIVE and (self.almost_additive_C is None or self.almost_additive_C < 0):
            raise ArgumentError("almost additive potentials need a constant C >= 0")

    def __call__(self, sys, x, n):
        return evaluate(self, sys, x, n)


def evaluate(phi: PotentialSequence, sys: DynamicalSystem, x, n: int) -> float:
    """phi_n(x)."""
    if n < 1:
        raise ArgumentError("potentials are defined for n >= 1")
    sys.validate(x)
    return phi.evaluator(sys, x, n)


def evaluate_array(phi: PotentialSequence, sys: IntervalMap, xs, n: int) -> np.ndarray:
    if n < 1:
        raise ArgumentError("potentials are defined for n >= 1")
    xs = np.asarray(xs, dtype=float)
    if phi.array_evaluator is not None:
        return np.asarray(phi.array_evaluator(sys, xs, n), dtype=float)
    return np.array([phi.evaluator(sys, float(x), n) for x in xs])


def evaluate_words(phi: PotentialSequence, words) -> np.ndarray:
    """phi_n on n-cylinders, for potentials constant on cylinders."""
    words = np.asarray(words, dtype=np.int64)
    if phi.word_evaluator is not None:
        return np.asarray(phi.word_evaluator(words), dtype=float)
    if phi.count_form is not None:
        cf = phi.count_form
        counts = np.stack([(words == s).sum(axis=-1) for s in range(cf.symbols)], axis=-1)
        return np.asarray(cf.value(counts, words.shape[-1]), dtype=float)
    raise ArgumentError(f"{phi.name} is not known to be constant on cylinders")


def birkhoff_sum(sys: DynamicalSystem, site: Callable, x, n: int) -> float:
    """S_n phi(x) = sum_{j<n} phi(f^j x), summed with fsum."""
    if n < 1:
        raise ArgumentError("birkhoff sums need n >= 1")
    sys.validate(x)
    return math.fsum(site(y) for y in sys.orbit(x, n - 1))


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def first_symbol(sys: DynamicalSystem, x) -> int:
    if isinstance(x, ShiftPoint):
        return x.symbol(0)
    return int(sys.branch_index(x))


def _symbol_counts(sys, x, n, k):
    counts = np.zeros(k, dtype=np.int64)
    if isinstance(x, ShiftPoint):
        for j in range(n):
            counts[x.symbol(j)] += 1
    else:
        for d in sys.digits(x, n):
            counts[d] += 1
    return counts


def birkhoff(fn: Callable, name: str = "birkhoff", vectorized: bool = False) -> PotentialSequence:
    """Additive sequence phi_n = S_n fn.  ``vectorized`` marks fn as
    accepting numpy arrays of interval points."""
    def ev(sys, x, n):
        return birkhoff_sum(sys, fn, x, n)

    arr = (lambda sys, xs, n: sys_orbit_sum(sys, fn, xs, n)) if vectorized else None
    return PotentialSequence(ev, ADDITIVE, name, site=fn, array_evaluator=arr,
                             approximants=[(0.0, fn)])


def sys_orbit_sum(sys: IntervalMap, fn, xs, n):
    return fn(sys.orbit_array(xs, n)).sum(axis=-1)


def symbol_potential(values: Sequence[float], name: str = "symbol") -> PotentialSequence:
    """Additive sequence built from phi(x) = values[first symbol of x]
    (branch index on interval maps)."""
    vals = np.asarray(values, dtype=float)
    k = len(vals)

    def ev(sys, x, n):
        return math.fsum(_symbol_counts(sys, x, n, k) * vals)

    def site(x, sys=None):
        return float(vals[x.symbol(0)]) if isinstance(x, ShiftPoint) else float(vals[int(sys.branch_index(x))])

    def arr(sys, xs, n):
        orb = sys.orbit_array(xs, n)
        return vals[sys.branch_index(orb)].sum(axis=-1)

    return PotentialSequence(
        ev, ADDITIVE, name,
        site=site,
        count_form=CountForm(k, lambda c, n: np.asarray(c, dtype=float) @ vals),
        word_evaluator=lambda w: vals[np.asarray(w)].sum(axis=-1),
        array_evaluator=arr,
        approximants=[(0.0, site)],
        bowen_bound=lambda n: 0.0,
        bernoulli_rate=lambda p: float(np.asarray(p) @ vals),
    )


def constant(c: float, name: str | None = None) -> PotentialSequence:
    """phi_n = n c."""
    c = float(c)
    return PotentialSequence(
        lambda sys, x, n: n * c, ADDITIVE, name or f"constant({c:g})",
        site=lambda x: c,
        count_form=CountForm(1, lambda counts, n: np.full(np.shape(counts)[:-1], n * c)),
        word_evaluator=lambda w: np.full(np.shape(w)[:-1], np.shape(w)[-1] * c),
        array_evaluator=lambda sys, xs, n: np.full(np.shape(xs), n * c),
        approximants=[(0.0, lambda x: c)],
        bowen_bound=lambda n: 0.0,
        bernoulli_rate=lambda p: c,
    )


def zero() -> PotentialSequence:
    return constant(0.0, name="zero")


def neg_log_beta(beta: float) -> PotentialSequence:
    """phi_n = -n log beta, the geometric potential of a beta-map."""
    return constant(-math.log(beta), name=f"neg_log_beta({beta:g})")


def digit_frequency(symbol: int = 1, symbols: int = 2) -> PotentialSequence:
    """phi_n(x) = number of j < n whose digit is ``symbol``."""
    vals = np.zeros(symbols)
    vals[symbol] = 1.0
    return symbol_potential(vals, name=f"digit_count({symbol})")


def shifted(phi: PotentialSequence, C: float) -> PotentialSequence:
    """{phi_n + C}; sub-additive whenever phi is almost additive with constant C."""
    C = float(C)
    cls = SUBADDITIVE if (phi.declared_class == ALMOST_ADDITIVE and C >= phi.almost_additive_C) else phi.declared_class
    return _offset(phi, lambda n: C, cls, f"{phi.name}+{C:g}")


def perturbed(phi: PotentialSequence, a: Callable[[int], float], name: str = "a_n") -> PotentialSequence:
    """{phi_n + a(n)} with a(n)/n -> 0: asymptotically additive when phi is additive."""
    cls = ASYMPTOTICALLY_ADDITIVE if phi.declared_class in (ADDITIVE, ASYMPTOTICALLY_ADDITIVE, ALMOST_ADDITIVE) else phi.declared_class
    return _offset(phi, a, cls, f"{phi.name}+{name}")


def _offset(phi, a, cls, name):
    cf = phi.count_form
    return PotentialSequence(
        lambda sys, x, n: phi.evaluator(sys, x, n) + a(n), cls, name,
        almost_additive_C=phi.almost_additive_C if cls == ALMOST_ADDITIVE else None,
        approximants=list(phi.approximants),
        bowen_bound=phi.bowen_bound,
        site=phi.site if cls == ADDITIVE else None,
        count_form=None if cf is None else CountForm(cf.symbols, lambda c, n: cf.value(c, n) + a(n)),
        word_evaluator=None if phi.word_evaluator is None else (lambda w: phi.word_evaluator(w) + a(np.shape(w)[-1])),
        array_evaluator=None if phi.array_evaluator is None else (lambda sys, xs, n: phi.array_evaluator(sys, xs, n) + a(n)),
        bernoulli_rate=phi.bernoulli_rate,   # a(n)/n -> 0 leaves the limit unchanged
    )


def scaled(phi: PotentialSequence, q: float) -> PotentialSequence:
    """{q phi_n}; keeps sub-additivity only for q >= 0."""
    q = float(q)
    cls = phi.declared_class
    if q < 0 and cls == SUBADDITIVE:
        raise ArgumentError("negative multiples of sub-additive sequences are super-additive")
    cf = phi.count_form
    site = phi.site
    return PotentialSequence(
        lambda sys, x, n: q * phi.evaluator(sys, x, n), cls, f"{q:g}*{phi.name}",
        almost_additive_C=None if phi.almost_additive_C is None else abs(q) * phi.almost_additive_C,
        approximants=[(abs(q) * xi, (lambda x, f=f: q * f(x))) for xi, f in phi.approximants],
        site=None if site is None else (lambda x, *a: q * site(x, *a)),
        count_form=None if cf is None else CountForm(cf.symbols, lambda c, n: q * cf.value(c, n)),
        word_evaluator=None if phi.word_evaluator is None else (lambda w: q * phi.word_evaluator(w)),
        array_evaluator=None if phi.array_evaluator is None else (lambda sys, xs, n: q * phi.array_evaluator(sys, xs, n)),
        bernoulli_rate=None if phi.bernoulli_rate is None else (lambda p: q * phi.bernoulli_rate(p)),
    )


def added(phi: PotentialSequence, psi: PotentialSequence) -> PotentialSequence:
    """{phi_n + psi_n}; the class is the weaker of the two."""
    order = {ADDITIVE: 0, ALMOST_ADDITIVE: 1, ASYMPTOTICALLY_ADDITIVE: 2, SUBADDITIVE: 3}
    if {phi.declared_class, psi.declared_class} == {SUBADDITIVE, ASYMPTOTICALLY_ADDITIVE}:
        raise ArgumentError("sum of sub-additive and asymptotically additive sequences has no class tag here")
    cls = max(phi.declared_class, psi.declared_class, key=order.get)
    C = None
    if cls == ALMOST_ADDITIVE:
        C = (phi.almost_additive_C or 0.0) + (psi.almost_additive_C or 0.0)
    both = lambda a, b: None if a is None or b is None else (a, b)
    cf = both(phi.count_form, psi.count_form)
    we = both(phi.word_evaluator, psi.word_evaluator)
    ae = both(phi.array_evaluator, psi.array_evaluator)
    br = both(phi.bernoulli_rate, psi.bernoulli_rate)
    return PotentialSequence(
        lambda sys, x, n: phi.evaluator(sys, x, n) + psi.evaluator(sys, x, n), cls, f"{phi.name}+{psi.name}",
        almost_additive_C=C,
        count_form=None if cf is None or cf[0].symbols != cf[1].symbols else
        CountForm(cf[0].symbols, lambda c, n: cf[0].value(c, n) + cf[1].value(c, n)),
        word_evaluator=None if we is None else (lambda w: we[0](w) + we[1](w)),
        array_evaluator=None if ae is None else (lambda sys, xs, n: ae[0](sys, xs, n) + ae[1](sys, xs, n)),
        bernoulli_rate=None if br is None else (lambda p: br[0](p) + br[1](p)),
    )


# ---------------------------------------------------------------------------
# sampled class checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    """phi_{m+n}(x) - phi_m(x) - phi_n(f^m x) = defect."""

    point: object
    m: int
    n: int
    defect: float

    def reproduce(self, phi: PotentialSequence, sys: DynamicalSystem) -> float:
        return additivity_defect(phi, sys, self.point, self.m, self.n)


@dataclass(frozen=True)
class Verdict:
    status: str
    witness: Witness | None = None
    detail: str = ""


@dataclass
class ClassificationReport:
    max_subadditive_defect: float
    min_superadditive_defect: float
    estimated_C: float
    asymptotic_defect_per_n: list
    verdicts: dict
    grid: tuple
    tolerance: tuple
    sample_size: int


def additivity_defect(phi, sys, x, m, n) -> float:
    y = x
    for _ in range(m):
        y = sys.map(y)
    return evaluate(phi, sys, x, m + n) - evaluate(phi, sys, x, m) - evaluate(phi, sys, y, n)


def classify_sample(phi: PotentialSequence, sys: DynamicalSystem, sample_points, m_max: int, n_max: int,
                    atol: float = 1e-9, rtol: float = 1e-9, approximant_n: Sequence[int] | None = None
                    ) -> ClassificationReport:
    """Evaluate phi_{m+n}(x) - phi_m(x) - phi_n(f^m x) on the grid
    1 <= m <= m_max, 1 <= n <= n_max over the sample and issue verdicts."""
    pts = list(sample_points)
    if not pts:
        raise ArgumentError("classification needs sample points")
    if m_max < 1 or n_max < 1:
        raise ArgumentError("m_max and n_max must be >= 1")
    hi = (-math.inf, None)
    lo = (math.inf, None)
    absmax = (0.0, None)
    worst_excess = (-math.inf, None)
    for x in pts:
        orb = sys.orbit(x, m_max)
        vals = {k: evaluate(phi, sys, x, k) for k in range(1, m_max + n_max + 1)}
        for m in range(1, m_max + 1):
            y = orb[m]
            for n in range(1, n_max + 1):
                pn = evaluate(phi, sys, y, n)
                d = vals[m + n] - vals[m] - pn
                w = Witness(x, m, n, d)
                tol = atol + rtol * (abs(vals[m]) + abs(pn))
                if d > hi[0]:
                    hi = (d, w)
                if d < lo[0]:
                    lo = (d, w)
                if abs(d) > absmax[0]:
                    absmax = (abs(d), w)
                if d - tol > worst_excess[0]:
                    worst_excess = (d - tol, w)

    verdicts = {}
    verdicts[SUBADDITIVE] = (Verdict(CONSISTENT) if worst_excess[0] <= 0
                             else Verdict(VIOLATED, worst_excess[1], "phi_{m+n} exceeds phi_m + phi_n o f^m"))
    verdicts[SUPERADDITIVE] = (Verdict(CONSISTENT) if lo[0] >= -(atol + rtol * abs(lo[0]))
                               else Verdict(VIOLATED, lo[1], "phi_{m+n} below phi_m + phi_n o f^m"))
    verdicts[ADDITIVE] = (Verdict(CONSISTENT) if absmax[0] <= atol + rtol * abs(absmax[0])
                          else Verdict(VIOLATED, absmax[1], "nonzero additivity defect"))
    if phi.almost_additive_C is not None:
        C = phi.almost_additive_C
        verdicts[ALMOST_ADDITIVE] = (Verdict(CONSISTENT, detail=f"C={C:g}") if absmax[0] <= C + atol
                                     else Verdict(VIOLATED, absmax[1], f"|defect| above declared C={C:g}"))
    else:
        verdicts[ALMOST_ADDITIVE] = Verdict(CONSISTENT, detail=f"estimated C={absmax[0]:.6g}")

    asym = []
    if phi.approximants:
        ns = list(approximant_n or sorted({1, max(1, (m_max + n_max) // 2), m_max + n_max}))
        status = Verdict(CONSISTENT)
        for xi, fn in phi.approximants:
            rows = []
            for n in ns:
                gap = max(abs(evaluate(phi, sys, x, n) - birkhoff_sum(sys, _bind(fn, sys), x, n)) for x in pts)
                rows.append((n, gap / n))
            asym.append((xi, rows))
            if rows[-1][1] > xi + atol + rtol * xi and status.status == CONSISTENT:
                status = Verdict(VIOLATED, None, f"gap/n={rows[-1][1]:.3g} above xi={xi:g} at n={rows[-1][0]}")
        verdicts[ASYMPTOTICALLY_ADDITIVE] = status
    else:
        verdicts[ASYMPTOTICALLY_ADDITIVE] = Verdict(NOT_CHECKABLE, detail="no approximants supplied")

    return ClassificationReport(
        max_subadditive_defect=float(hi[0]),
        min_superadditive_defect=float(lo[0]),
        estimated_C=float(absmax[0]),
        asymptotic_defect_per_n=asym,
        verdicts=verdicts,
        grid=(m_max, n_max),
        tolerance=(atol, rtol),
        sample_size=len(pts),
    )


def _bind(fn, sys):
    """Site functions may optionally take the system as second argument."""
    try:
        params = inspect.signature(fn).parameters
    except (TypeError, ValueError):
        return fn
    if len(params) >= 2:
        return lambda x: fn(x, sys)
    return fn


def declared_verdict(report: ClassificationReport, phi: PotentialSequence) -> Verdict:
    return report.verdicts[phi.declared_class]


# ---------------------------------------------------------------------------
# Bowen variation
# ---------------------------------------------------------------------------

def ball_probes(sys: DynamicalSystem, x, n: int, eps: float, count: int, rng: np.random.Generator,
                tail: int = 8) -> list:
    """Random points of B_n(x, eps): uniform on the exact ball on interval
    maps, random continuations of the shared prefix on shifts."""
    if isinstance(sys, IntervalMap):
        ivs = sys.bowen_ball(x, n, eps)
        lens = np.array([b - a for a, b in ivs])
        if lens.sum() <= 0:
            return []
        k = rng.choice(len(ivs), size=count, p=lens / lens.sum())
        u = rng.random(count)
        return [ivs[i][0] + ui * (ivs[i][1] - ivs[i][0]) for i, ui in zip(k, u)]
    if isinstance(sys, ShiftSpace):
        keep = n - 1 + radius_window(eps)
        head = x.prefix(keep)
        out = []
        for _ in range(count):
            word = np.concatenate([head, rng.integers(0, sys.symbols, size=tail)])
            p = ShiftPoint.from_prefix(word)
            if sys.transition is not None and not sys.admissible_words(p.prefix(len(p.word) + p.period + 1)):
                continue
            out.append(p)
        return out
    raise ArgumentError(f"no probe generator for {sys.name}")


def variation(phi: PotentialSequence, sys: DynamicalSystem, x, n: int, eps: float, probe_count: int,
              seed: int = 0) -> float:
    """Lower estimate of gamma_n(phi, eps) = sup |phi_n(y) - phi_n(z)| over
    y, z in B_n(x, eps), from ``probe_count`` random probes plus x itself."""
    if eps <= 0:
        raise ArgumentError("eps must be positive")
    if probe_count < 2:
        raise ArgumentError("need at least two probes")
    rng = np.random.default_rng([seed, n])
    probes = [p for p in ball_probes(sys, x, n, eps, probe_count, rng) if bowen_distance(sys, x, p, n) < eps]
    if not probes:
        raise InsufficientProbesError(probe_count, 0)
    vals = [evaluate(phi, sys, p, n) for p in probes] + [evaluate(phi, sys, x, n)]
    return float(max(vals) - min(vals))


@dataclass
class VariationProfile:
    n: list
    estimate: list
    slope_per_n: float   # least-squares slope of estimate/n against n
    eps: float
    probes: int


def variation_profile(phi, sys, x, n_list, eps, probe_count, seed=0) -> VariationProfile:
    ns = list(n_list)
    est = [variation(phi, sys, x, n, eps, probe_count, seed) for n in ns]
    ratio = np.array(est) / np.array(ns)
    slope = float(np.polyfit(ns, ratio, 1)[0]) if len(ns) >= 2 else 0.0
    return VariationProfile(ns, est, slope, eps, probe_count)


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

_FUNCTIONS = {
    "x": lambda x: x,
    "sin": lambda x: np.sin(2 * np.pi * x),
    "cos": lambda x: np.cos(2 * np.pi * x),
}


def potential_from_config(cfg: Mapping, system: DynamicalSystem, prefix: str = "potential") -> PotentialSequence:
    key = lambda k: f"{prefix}.{k}"
    kind = cfg.get(key("kind"))
    if kind is None:
        raise ConfigError(key("kind"), "missing")
    if kind == "constant":
        return constant(float(cfg.get(key("value"), 0.0)))
    if kind == "digit_frequency":
        k = getattr(system, "coding_symbols", None) or getattr(system, "symbols", 2)
        return digit_frequency(int(cfg.get(key("symbol"), 1)), int(k))
    if kind == "neg_log_beta":
        beta = cfg.get(key("beta"), getattr(system, "beta", None))
        if beta is None:
            raise ConfigError(key("beta"), "required when the system is not a beta-map")
        return neg_log_beta(float(beta))
    if kind == "birkhoff":
        name = cfg.get(key("function"), "x")
        scale = float(cfg.get(key("scale"), 1.0))
        if name == "indicator":
            if key("interval") not in cfg:
                raise ConfigError(key("interval"), "required for the indicator function")
            a, b = (float(v) for v in cfg[key("interval")])
            fn = lambda x, a=a, b=b: scale * ((np.asarray(x) >= a) & (np.asarray(x) < b)).astype(float)
        elif name in _FUNCTIONS:
            f = _FUNCTIONS[name]
            fn = lambda x, f=f: scale * f(x)
        else:
            raise ConfigError(key("function"), f"unknown function {name!r}; use x, sin, cos or indicator")
        if not isinstance(system, IntervalMap):
            raise ConfigError(key("kind"), "birkhoff functions act on interval systems")
        return _vector_birkhoff(fn, name)
    if kind in ("cocycle_norm", "singular_value"):
        from .cocycle import cocycle_potential, spec_from_config
        spec = spec_from_config(cfg)
        q = float(cfg.get(key("q"), cfg.get("cocycle.q", 1.0)))
        if kind == "cocycle_norm":
            return cocycle_potential(spec, q)
        return cocycle_potential(spec, q, kind="singular", index=int(cfg.get(key("index"), 2)) - 1)
    raise ConfigError(key("kind"), f"unknown potential kind {kind!r}")


def _vector_birkhoff(fn, name):
    phi = birkhoff(lambda x: float(fn(x)), name=f"S_n {name}")
    phi.array_evaluator = lambda sys, xs, n: np.asarray(fn(sys.orbit_array(xs, n)), dtype=float).sum(axis=-1)
    return phi
