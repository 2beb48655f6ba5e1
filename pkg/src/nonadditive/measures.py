"""Reference measures: Bernoulli, Markov, Lebesgue, Parry (beta-maps),
empirical orbits, and finite-level cylinder-weight approximations.

Symbolic measures act on integer word arrays of shape ``(count, length)``;
interval measures act on floats in [0, 1).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np
from scipy.special import entr, logsumexp

from .errors import ArgumentError, CapabilityError, ConfigError
from .systems import BetaMap, DynamicalSystem, IntervalMap, ShiftPoint, ShiftSpace


class MeasureModel:
    kind = "measure"
    invariant = True
    ergodic = True
    approximate = False
    entropy: float | None = None


# ---------------------------------------------------------------------------
# symbolic measures
# ---------------------------------------------------------------------------

class SymbolicMeasure(MeasureModel):
    symbols: int

    def word_log_mass(self, words) -> np.ndarray:
        raise NotImplementedError

    def cylinder_mass(self, word) -> float:
        return float(np.exp(self.word_log_mass(np.asarray(word, dtype=np.int64)[None, :])[0]))

    def sample_words(self, rng: np.random.Generator, count: int, length: int) -> np.ndarray:
        raise NotImplementedError

    def markov_form(self):
        """(initial distribution, transition matrix) when the measure is Markov."""
        raise CapabilityError(f"{self.kind} measure has no Markov form")

    def chain_form(self) -> "ChainForm":
        init, P = self.markov_form()
        return ChainForm(1, self.symbols, init, P)


@dataclass(frozen=True)
class ChainForm:
    """Markov chain of order ``order`` on ``symbols`` letters.  States are
    blocks of the last ``order`` symbols indexed lexicographically; appending
    symbol c to block b leads to block (b * symbols + c) % symbols**order
    with probability ``probs[b, c]``.  ``init`` is the law of the first block."""

    order: int
    symbols: int
    init: np.ndarray
    probs: np.ndarray

    @property
    def blocks(self) -> int:
        return self.symbols ** self.order


class Bernoulli(SymbolicMeasure):
    kind = "bernoulli"

    def __init__(self, p):
        p = np.asarray(p, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ArgumentError(f"not a probability vector: {p}")
        self.p = p
        self.symbols = len(p)
        self.entropy = float(entr(p).sum())
        with np.errstate(divide="ignore"):
            self.logp = np.log(p)

    def __repr__(self):
        return f"Bernoulli({self.p.tolist()})"

    def word_log_mass(self, words):
        words = np.asarray(words, dtype=np.int64)
        return self.logp[words].sum(axis=-1)

    def counts_log_mass(self, counts):
        with np.errstate(invalid="ignore"):
            out = np.asarray(counts, dtype=float) @ np.where(self.p > 0, self.logp, 0.0)
        bad = np.any((np.asarray(counts) > 0) & (self.p == 0), axis=-1)
        return np.where(bad, -np.inf, out)

    def sample_words(self, rng, count, length):
        return rng.choice(self.symbols, size=(count, length), p=self.p)

    def markov_form(self):
        return self.p.copy(), np.tile(self.p, (self.symbols, 1))


def stationary_vector(P: np.ndarray) -> np.ndarray:
    k = P.shape[0]
    A = np.vstack([P.T - np.eye(k), np.ones(k)])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return np.clip(pi, 0.0, None) / np.clip(pi, 0.0, None).sum()


class Markov(SymbolicMeasure):
    kind = "markov"

    def __init__(self, P, pi=None):
        P = np.asarray(P, dtype=float)
        if P.ndim != 2 or P.shape[0] != P.shape[1] or np.any(P < 0):
            raise ArgumentError("transition matrix must be square and nonnegative")
        if np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ArgumentError("rows of the transition matrix must sum to 1")
        self.P = P
        self.symbols = P.shape[0]
        self.pi = stationary_vector(P) if pi is None else np.asarray(pi, dtype=float)
        if abs(self.pi.sum() - 1.0) > 1e-12:
            raise ArgumentError("initial vector must sum to 1")
        self.invariant = bool(np.max(np.abs(self.pi @ P - self.pi)) <= 1e-10)
        self.entropy = float(self.pi @ entr(P).sum(axis=1))
        with np.errstate(divide="ignore"):
            self.logP = np.log(P)
            self.logpi = np.log(self.pi)

    def __repr__(self):
        return f"Markov({self.P.tolist()})"

    def word_log_mass(self, words):
        words = np.asarray(words, dtype=np.int64)
        out = self.logpi[words[..., 0]]
        if words.shape[-1] > 1:
            out = out + self.logP[words[..., :-1], words[..., 1:]].sum(axis=-1)
        return out

    def sample_words(self, rng, count, length):
        out = np.empty((count, length), dtype=np.int64)
        out[:, 0] = rng.choice(self.symbols, size=count, p=self.pi)
        cum = np.cumsum(self.P, axis=1)
        for j in range(1, length):
            u = rng.random(count)
            out[:, j] = np.minimum((u[:, None] > cum[out[:, j - 1]]).sum(axis=1), self.symbols - 1)
        return out

    def markov_form(self):
        return self.pi.copy(), self.P.copy()


class CylinderWeights(SymbolicMeasure):
    """Measure on words of length <= ``level`` defined by normalized
    log-weights on level-words; shorter cylinders are marginals.  Not
    invariant in general; flagged as an approximation."""

    kind = "cylinder_weights"
    invariant = False
    approximate = True

    def __init__(self, symbols: int, level: int, log_weights):
        lw = np.asarray(log_weights, dtype=float)
        if lw.shape != (symbols ** level,):
            raise ArgumentError("need one weight per level-word")
        self.symbols, self.level = symbols, level
        self.log_mass = lw - logsumexp(lw)
        self._marginals = {level: self.log_mass}
        p = np.exp(self.log_mass)
        self.entropy = None
        self._probs = p / p.sum()

    def marginal(self, m: int) -> np.ndarray:
        if m > self.level:
            raise CapabilityError(f"cylinder weights only defined up to length {self.level}")
        if m not in self._marginals:
            self._marginals[m] = logsumexp(
                self.log_mass.reshape(self.symbols ** m, self.symbols ** (self.level - m)), axis=1)
        return self._marginals[m]

    def word_log_mass(self, words):
        words = np.asarray(words, dtype=np.int64)
        m = words.shape[-1]
        idx = words @ (self.symbols ** np.arange(m - 1, -1, -1))
        return self.marginal(m)[idx]

    def sample_words(self, rng, count, length):
        if length > self.level:
            raise CapabilityError(f"cannot sample past level {self.level}")
        idx = rng.choice(len(self._probs), size=count, p=self._probs)
        digits = (idx[:, None] // self.symbols ** np.arange(self.level - 1, -1, -1)) % self.symbols
        return digits[:, :length]

    def consistency_defect(self) -> float:
        """max |log mu_m[w] - log sum_s mu_m[ws]| style defect against the
        shift-invariance relation mu[w] = sum_s mu[s w], over m < level."""
        worst = 0.0
        for m in range(1, self.level):
            lm = self.marginal(m)
            prepended = logsumexp(self.marginal(m + 1).reshape(self.symbols, -1), axis=0)
            worst = max(worst, float(np.max(np.abs(lm - prepended))))
        return worst


class BlockMarkov(SymbolicMeasure):
    """Equilibrium state of a potential that depends on the first
    ``order + 1`` symbols, given as log-weights on (order+1)-words.

    It is the Markov chain of the given order with transitions
    exp(psi(b c)) v(b') / (lambda v(b)), where lambda, v are the Perron root
    and right vector of the block transfer matrix; log lambda is the pressure."""

    kind = "block_markov"

    def __init__(self, symbols: int, order: int, log_weights, tol: float = 1e-15, max_iter: int = 100_000):
        k, m = int(symbols), int(order)
        psi = np.asarray(log_weights, dtype=float)
        if m < 1 or psi.shape != (k ** (m + 1),):
            raise ArgumentError("need order >= 1 and one weight per (order+1)-word")
        B = k ** m
        self.symbols, self.order = k, m
        A = np.exp(psi - psi.max()).reshape(B, k)      # A[b, c]: block b then symbol c
        shift = psi.max()

        def right(v):            # (A v)(b) = sum_c A[b, c] v(next(b, c))
            nxt = v.reshape(B // k, k)                    # next(b, c) = (b mod B/k) * k + c
            return (A.reshape(k, B // k, k) * nxt[None]).reshape(B, k).sum(axis=1)

        def left(u):             # (u A)(b') = sum over predecessors
            contrib = (u[:, None] * A).reshape(k, B // k, k).sum(axis=0)
            return contrib.reshape(B)

        v = np.ones(B)
        u = np.ones(B)
        lam = 1.0
        for _ in range(max_iter):
            v2 = right(v)
            lam2 = v2.sum() / v.sum()
            v2 /= v2.sum()
            u2 = left(u)
            u2 /= u2.sum()
            done = np.max(np.abs(v2 - v)) < tol and np.max(np.abs(u2 - u)) < tol
            v, u, lam = v2, u2, lam2
            if done:
                break
        lam = (right(v).sum() / v.sum())
        self.pressure = float(math.log(lam) + shift)
        nxt = v.reshape(B // k, k)
        P = A.reshape(k, B // k, k) * nxt[None] / (lam * v.reshape(k, B // k, 1))
        self.probs = P.reshape(B, k)
        self.probs /= self.probs.sum(axis=1, keepdims=True)
        pi = u * v
        self.pi = pi / pi.sum()
        self.log_weights = psi
        with np.errstate(divide="ignore"):
            self._logprobs = np.log(self.probs)
            self._logpi = np.log(self.pi)
        self.entropy = float(self.pi @ entr(self.probs).sum(axis=1))

    def __repr__(self):
        return f"BlockMarkov(symbols={self.symbols}, order={self.order})"

    def chain_form(self):
        return ChainForm(self.order, self.symbols, self.pi.copy(), self.probs.copy())

    def word_log_mass(self, words):
        words = np.asarray(words, dtype=np.int64)
        k, m = self.symbols, self.order
        n = words.shape[-1]
        if n < m:
            # marginal of the first block
            pad = k ** (m - n)
            first = words @ (k ** np.arange(n - 1, -1, -1))
            lp = self._logpi.reshape(-1, pad)
            return logsumexp(lp, axis=1)[first]
        b = words[..., :m] @ (k ** np.arange(m - 1, -1, -1))
        out = self._logpi[b]
        B = k ** m
        for j in range(m, n):
            c = words[..., j]
            out = out + self._logprobs[b, c]
            b = (b * k + c) % B
        return out

    def sample_words(self, rng, count, length):
        k, m = self.symbols, self.order
        B = k ** m
        b = rng.choice(B, size=count, p=self.pi)
        out = np.empty((count, max(length, m)), dtype=np.int64)
        out[:, :m] = (b[:, None] // k ** np.arange(m - 1, -1, -1)) % k
        cum = np.cumsum(self.probs, axis=1)
        for j in range(m, length):
            u = rng.random(count)
            c = np.minimum((u[:, None] > cum[b]).sum(axis=1), k - 1)
            out[:, j] = c
            b = (b * k + c) % B
        return out[:, :length]


# ---------------------------------------------------------------------------
# interval measures
# ---------------------------------------------------------------------------

class IntervalMeasure(MeasureModel):
    def interval_mass(self, a, b):
        raise NotImplementedError

    def intervals_mass(self, intervals) -> float:
        return float(sum(self.interval_mass(a, b) for a, b in intervals))

    def sample_points(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def breakpoints(self) -> np.ndarray:
        return np.array([])

    def density(self, x):
        raise NotImplementedError


class Lebesgue(IntervalMeasure):
    kind = "lebesgue"

    def __init__(self, entropy: float | None = None, invariant: bool = True):
        self.entropy = entropy
        self.invariant = invariant

    def __repr__(self):
        return "Lebesgue()"

    def interval_mass(self, a, b):
        return np.clip(np.minimum(b, 1.0) - np.maximum(a, 0.0), 0.0, None)

    def sample_points(self, rng, count):
        return rng.random(count)

    def density(self, x):
        return np.ones_like(np.asarray(x, dtype=float))


class ParryBeta(IntervalMeasure):
    """Maximal-entropy measure of the beta-map: density proportional to
    sum_k beta**-k 1[x < T^k(1)], truncated once beta**-k < 1e-14."""

    kind = "parry"

    def __init__(self, beta: float):
        self.beta = float(beta)
        self.truncation = 1e-14
        self.thresholds = np.array(BetaMap(beta).orbit_of_one(self.truncation))
        self.coeffs = self.beta ** -np.arange(len(self.thresholds))
        self.norm = float(self.coeffs @ self.thresholds)
        self.entropy = math.log(self.beta)
        order = np.argsort(self.thresholds)
        xs = np.concatenate([[0.0], self.thresholds[order]])
        self._grid = np.unique(xs)
        self._cdf = np.array([self._cum(x) for x in self._grid])

    def __repr__(self):
        return f"ParryBeta({self.beta})"

    def _cum(self, x):
        return float(self.coeffs @ np.minimum(x, self.thresholds)) / self.norm

    def density(self, x):
        x = np.asarray(x, dtype=float)
        return (self.coeffs * (x[..., None] < self.thresholds)).sum(axis=-1) / self.norm

    def interval_mass(self, a, b):
        a = np.clip(a, 0.0, 1.0)
        b = np.clip(b, 0.0, 1.0)
        ca = (self.coeffs * np.minimum(np.asarray(a)[..., None], self.thresholds)).sum(axis=-1)
        cb = (self.coeffs * np.minimum(np.asarray(b)[..., None], self.thresholds)).sum(axis=-1)
        return np.clip(cb - ca, 0.0, None) / self.norm

    def breakpoints(self):
        return self.thresholds[self.thresholds < 1.0]

    def sample_points(self, rng, count):
        u = rng.random(count)
        return np.minimum(np.interp(u, self._cdf, self._grid), np.nextafter(1.0, 0.0))


class EmpiricalOrbit(IntervalMeasure):
    """Pooled orbit points of an interval map started from Lebesgue points.

    Floats lose one bit per doubling step, so the pool is built from many short
    segments (length ``segment`` after ``burn`` steps) rather than one long orbit.
    """

    kind = "empirical_orbit"
    approximate = True

    def __init__(self, system: IntervalMap, seed: int, size: int = 100_000, burn: int = 5, segment: int = 20):
        rng = np.random.default_rng(seed)
        starts = rng.random(math.ceil(size / segment))
        orb = system.orbit_array(starts, burn + segment)[:, burn:]
        self.points = orb.ravel()[:size]
        self.seed = seed
        self.entropy = None

    def interval_mass(self, a, b):
        return float(np.mean((self.points > a) & (self.points < b)))

    def sample_points(self, rng, count):
        return rng.choice(self.points, size=count)


# ---------------------------------------------------------------------------
# system/measure glue
# ---------------------------------------------------------------------------

def lebesgue_for(system: IntervalMap) -> Lebesgue:
    """Lebesgue measure with invariance and entropy filled in where known."""
    if isinstance(system, BetaMap) and system.is_integer:
        return Lebesgue(entropy=math.log(system.beta), invariant=True)
    return Lebesgue(entropy=None, invariant=False)


def symbolic_view(system: DynamicalSystem, measure: MeasureModel) -> SymbolicMeasure:
    """The measure seen on the symbolic coding of ``system``.

    Integer beta-maps code Lebesgue (and Parry, which coincides with it) as the
    uniform Bernoulli measure on their digits."""
    if isinstance(measure, SymbolicMeasure):
        return measure
    if isinstance(system, BetaMap) and system.is_integer and isinstance(measure, (Lebesgue, ParryBeta)):
        k = system.coding_symbols
        return Bernoulli(np.full(k, 1.0 / k))
    raise CapabilityError(f"no symbolic coding for {measure!r} on {system.name}")


def coding_symbols(system: DynamicalSystem) -> int:
    if isinstance(system, ShiftSpace):
        return system.symbols
    if isinstance(system, IntervalMap) and system.coding_symbols:
        return system.coding_symbols
    raise CapabilityError(f"{system.name} has no finite symbolic coding")


def words_to_points(system: DynamicalSystem, words: np.ndarray, rng: np.random.Generator | None = None):
    """Turn sampled words into system points.  Interval points get a uniform
    tail below the last digit; shift points repeat the word periodically."""
    words = np.asarray(words, dtype=np.int64)
    if isinstance(system, ShiftSpace):
        return [ShiftPoint.from_prefix(w) for w in words]
    k = coding_symbols(system)
    m = words.shape[1]
    scale = float(k) ** -np.arange(1, m + 1)
    x = words @ scale
    if rng is not None:
        x = x + rng.random(len(words)) * float(k) ** -m
    return np.minimum(x, np.nextafter(1.0, 0.0))


def point_words(system: DynamicalSystem, points, length: int) -> np.ndarray:
    """Symbolic prefixes of points (shift points or coded interval points)."""
    if isinstance(system, ShiftSpace):
        return np.array([p.prefix(length) for p in points], dtype=np.int64)
    k = coding_symbols(system)
    xs = np.asarray(points, dtype=float)
    out = np.empty((len(xs), length), dtype=np.int64)
    cur = xs.copy()
    for j in range(length):
        d = np.floor(cur * k)
        out[:, j] = np.clip(d, 0, k - 1)
        cur = cur * k - d
    return out


def measure_from_config(cfg: Mapping, system: DynamicalSystem) -> MeasureModel:
    kind = cfg.get("measure.kind")
    if kind == "bernoulli":
        if "measure.p" not in cfg:
            raise ConfigError("measure.p", "required for measure.kind = bernoulli")
        return Bernoulli(cfg["measure.p"])
    if kind == "markov":
        if "measure.matrix" not in cfg:
            raise ConfigError("measure.matrix", "required for measure.kind = markov")
        return Markov(cfg["measure.matrix"])
    if kind == "lebesgue":
        if not isinstance(system, IntervalMap):
            raise ConfigError("measure.kind", "lebesgue needs an interval system")
        return lebesgue_for(system)
    if kind == "parry":
        if not isinstance(system, BetaMap):
            raise ConfigError("measure.kind", "parry needs a beta system")
        return ParryBeta(system.beta)
    raise ConfigError("measure.kind", f"unknown measure kind {kind!r}")
