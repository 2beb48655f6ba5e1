"""Concrete dynamical systems: expanding interval maps and symbolic shifts.

Interval maps live on [0, 1) with the flat metric |x - y|.  This is not the
circle metric: for non-integer beta the beta-map is discontinuous on the
circle anyway, so one convention is used throughout.  Dynamical balls near the
discontinuities are therefore conservative (they get cut at the jump).

Shift points are a finite word plus a periodic tail (the last ``period``
symbols repeat forever), with metric d(x, y) = 2**-min{j : x_j != y_j}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import ArgumentError, ConfigError, DomainError

SPECIFICATION = "specification"
ALMOST_SPECIFICATION = "almost_specification"
UNKNOWN = "unknown"


# ---------------------------------------------------------------------------
# points and index sets
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ShiftPoint:
    """A one-sided symbol sequence: ``word`` followed by its last ``period``
    symbols repeated forever.  Stored in canonical (shortest) form, so
    dataclass equality is sequence equality."""

    word: tuple
    period: int = 0

    def __post_init__(self):
        word = tuple(int(s) for s in self.word)
        if not word:
            raise DomainError("shift point needs a nonempty word")
        p = self.period or len(word)
        if not 1 <= p <= len(word):
            raise DomainError(f"period {p} not in 1..{len(word)}")
        block = word[len(word) - p:]
        for q in range(1, p + 1):
            if p % q == 0 and block == block[:q] * (p // q):
                p = q
                break
        while len(word) > p and word[-p - 1] == word[-1]:
            word = word[:-1]
        object.__setattr__(self, "word", word)
        object.__setattr__(self, "period", p)

    def symbol(self, j: int) -> int:
        n = len(self.word)
        if j < n:
            return self.word[j]
        return self.word[n - self.period + (j - n) % self.period]

    def prefix(self, m: int) -> np.ndarray:
        return np.array([self.symbol(j) for j in range(m)], dtype=np.int64)

    def shift(self) -> "ShiftPoint":
        if len(self.word) > self.period:
            return ShiftPoint(self.word[1:], self.period)
        return ShiftPoint(self.word[1:] + self.word[:1], self.period)

    @classmethod
    def from_prefix(cls, prefix: Sequence[int], period: int | None = None) -> "ShiftPoint":
        prefix = tuple(int(s) for s in prefix)
        return cls(prefix, period or len(prefix))


@dataclass(frozen=True)
class IndexSet:
    """Sorted distinct indices inside [0, horizon - 1]."""

    indices: tuple
    horizon: int

    def __post_init__(self):
        idx = tuple(sorted(int(i) for i in self.indices))
        if len(set(idx)) != len(idx):
            raise ArgumentError("index set has repeated entries")
        if idx and (idx[0] < 0 or idx[-1] >= self.horizon):
            raise ArgumentError(f"indices must lie in [0, {self.horizon - 1}]")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def full(cls, n: int) -> "IndexSet":
        return cls(tuple(range(n)), n)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)


def radius_window(eps: float, strict: bool = True) -> int:
    """Number of leading symbols two sequences must share to be within
    ``eps`` in the shift metric (``<`` when strict, ``<=`` otherwise)."""
    if eps <= 0:
        raise ArgumentError("radius must be positive")
    j = 0
    while (2.0 ** -j >= eps) if strict else (2.0 ** -j > eps):
        j += 1
    return j


# ---------------------------------------------------------------------------
# systems
# ---------------------------------------------------------------------------

class DynamicalSystem:
    name: str = "system"
    specification_class: str = UNKNOWN
    symbolic: bool = False

    def map(self, x):
        raise NotImplementedError

    def metric(self, x, y) -> float:
        raise NotImplementedError

    def validate(self, x):
        raise NotImplementedError

    def orbit(self, x, n: int) -> list:
        out = [x]
        for _ in range(n):
            x = self.map(x)
            out.append(x)
        return out


@dataclass(frozen=True)
class Branch:
    """Monotone increasing piece ``forward: [lo, hi) -> [0, image_hi)``."""

    lo: float
    hi: float
    image_hi: float
    forward: Callable[[float], float]
    inverse: Callable[[float], float]


class IntervalMap(DynamicalSystem):
    """Piecewise increasing expanding map of [0, 1) given by its branches."""

    expansion: float = 2.0
    affine: bool = True
    coding_symbols: int | None = None

    def __init__(self, name: str, branches: list[Branch], specification_class: str = UNKNOWN):
        self.name = name
        self.branches = branches
        self.specification_class = specification_class
        self._cuts = np.array([b.lo for b in branches[1:]])

    def validate(self, x):
        x = float(x)
        if not (0.0 <= x < 1.0) or math.isnan(x):
            raise DomainError(f"{x!r} is outside [0, 1)")
        return x

    def branch_index(self, x):
        return np.searchsorted(self._cuts, x, side="right")

    def map(self, x):
        x = self.validate(x)
        return self._clip(self.branches[int(self.branch_index(x))].forward(x))

    def map_array(self, xs: np.ndarray) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        out = np.empty_like(xs)
        idx = self.branch_index(xs)
        for k, br in enumerate(self.branches):
            sel = idx == k
            if np.any(sel):
                out[sel] = br.forward(xs[sel])
        return np.clip(out, 0.0, np.nextafter(1.0, 0.0))

    def orbit_array(self, xs: np.ndarray, n: int) -> np.ndarray:
        """Orbit segments as an array of shape ``(len(xs), n)``."""
        xs = np.asarray(xs, dtype=float)
        out = np.empty(xs.shape + (n,))
        cur = xs
        for i in range(n):
            out[..., i] = cur
            if i + 1 < n:
                cur = self.map_array(cur)
        return out

    @staticmethod
    def _clip(y: float) -> float:
        if y >= 1.0:
            return np.nextafter(1.0, 0.0)
        return max(y, 0.0)

    def metric(self, x, y) -> float:
        return abs(self.validate(x) - self.validate(y))

    def preimage(self, intervals: list[tuple[float, float]], window: tuple[float, float] | None = None):
        """Preimage of a union of open intervals, optionally restricted to a
        window; returns a sorted list of disjoint open intervals."""
        out = []
        for br in self.branches:
            if window is not None and (br.hi <= window[0] or br.lo >= window[1]):
                continue
            for a, b in intervals:
                a2, b2 = max(a, 0.0), min(b, br.image_hi)
                if b2 - a2 > 1e-15:
                    out.append((br.inverse(a2), br.inverse(b2) if b2 < br.image_hi else br.hi))
        return _normalize(out)

    def bowen_ball(self, x, n: int, eps: float) -> list[tuple[float, float]]:
        """B_n(x, eps) = {y : |f^i y - f^i x| < eps for i < n} as disjoint
        open intervals, built backwards from the last orbit point."""
        if n < 1:
            raise ArgumentError("n must be >= 1")
        orb = self.orbit(self.validate(x), n - 1)
        cur = [(max(orb[-1] - eps, 0.0), min(orb[-1] + eps, 1.0))]
        for k in range(n - 2, -1, -1):
            win = (max(orb[k] - eps, 0.0), min(orb[k] + eps, 1.0))
            cur = _intersect(self.preimage(cur, win), [win])
        return cur

    def cylinder_intervals(self, n: int) -> list[tuple[float, float]]:
        """The partition of [0, 1) into n-cylinders (intervals of monotonicity of f^n)."""
        cur = [(0.0, 1.0)]
        for _ in range(n):
            nxt = []
            for br in self.branches:
                for a, b in cur:
                    a2, b2 = max(a, 0.0), min(b, br.image_hi)
                    if b2 - a2 > 1e-15:
                        nxt.append((br.inverse(a2), br.inverse(b2) if b2 < br.image_hi else br.hi))
            cur = sorted(nxt)
        return cur

    def digits(self, x, n: int) -> np.ndarray:
        """Branch itinerary of the first n iterates."""
        orb = self.orbit(self.validate(x), n - 1)
        return np.array([int(self.branch_index(o)) for o in orb], dtype=np.int64)


class BetaMap(IntervalMap):
    """T(x) = beta * x mod 1 on [0, 1)."""

    def __init__(self, beta: float, name: str | None = None):
        if beta <= 1:
            raise ArgumentError("beta must exceed 1")
        self.beta = float(beta)
        self.expansion = self.beta
        nb = math.ceil(self.beta - 1e-12)
        branches = []
        for k in range(nb):
            lo, hi = k / self.beta, min((k + 1) / self.beta, 1.0)
            branches.append(Branch(
                lo, hi, min(self.beta * hi - k, 1.0),
                forward=(lambda x, k=k: self.beta * x - k),
                inverse=(lambda y, k=k: (y + k) / self.beta),
            ))
        self.is_integer = abs(self.beta - round(self.beta)) < 1e-12
        self.coding_symbols = int(round(self.beta)) if self.is_integer else None
        spec = SPECIFICATION if self.is_integer else ALMOST_SPECIFICATION
        super().__init__(name or f"beta({self.beta:g})", branches, spec)

    def map(self, x):
        x = self.validate(x)
        return self._clip((self.beta * x) % 1.0)

    def map_array(self, xs):
        return np.clip((self.beta * np.asarray(xs, dtype=float)) % 1.0, 0.0, np.nextafter(1.0, 0.0))

    def orbit_of_one(self, tol: float = 1e-14) -> list[float]:
        """T^k(1) for k >= 0 until beta**-k < tol; values within 1e-12 of an
        integer are snapped to 0 (the orbit has landed on the fixed point)."""
        out, y, k = [1.0], 1.0, 0
        while self.beta ** -(k + 1) >= tol:
            y = self.beta * y
            y -= math.floor(y)
            if y < 1e-12 or y > 1 - 1e-12:
                break
            out.append(y)
            k += 1
        return out


class DoublingMap(BetaMap):
    def __init__(self):
        super().__init__(2.0, name="doubling")


def _bisect_inverse(fwd, lo, hi, target, tol=1e-13, max_iter=200):
    a, b = lo, hi
    for _ in range(max_iter):
        m = 0.5 * (a + b)
        r = fwd(m) - target
        if abs(r) < tol or b - a < 1e-16:
            return m
        if r < 0:
            a = m
        else:
            b = m
    return 0.5 * (a + b)


class MannevillePomeau(IntervalMap):
    """f(x) = x + x**(1 + alpha) mod 1, alpha in (0, 1).  Neutral fixed point at 0."""

    affine = False

    def __init__(self, alpha: float):
        if not 0 < alpha < 1:
            raise ArgumentError("alpha must lie in (0, 1)")
        self.alpha = float(alpha)
        a = self.alpha
        # branch cut: the unique c with c + c**(1 + alpha) = 1
        self.cut = _bisect_inverse(lambda x: x + x ** (1 + a), 0.0, 1.0, 1.0, tol=1e-15)
        left = lambda x: x + x ** (1 + a)
        right = lambda x: x + x ** (1 + a) - 1.0
        branches = [
            Branch(0.0, self.cut, 1.0, left, lambda y: _bisect_inverse(left, 0.0, self.cut, y)),
            Branch(self.cut, 1.0, 1.0, right, lambda y: _bisect_inverse(right, self.cut, 1.0, y)),
        ]
        self.expansion = 1.0
        super().__init__(f"manneville_pomeau({a:g})", branches, SPECIFICATION)

    def map_array(self, xs):
        xs = np.asarray(xs, dtype=float)
        y = xs + xs ** (1 + self.alpha)
        y = np.where(xs >= self.cut, y - 1.0, y)
        return np.clip(y, 0.0, np.nextafter(1.0, 0.0))

    def orbit(self, x, n: int) -> list:
        # two-sum carry keeps increments near the neutral fixed point from being lost
        hi, lo = self.validate(x), 0.0
        out = [hi]
        for _ in range(n):
            wrap = hi >= self.cut
            s, err = _two_sum(hi, hi ** (1 + self.alpha))
            if wrap:
                s -= 1.0
            hi, lo = _two_sum(s, lo + err)
            if not 0.0 <= hi < 1.0:
                hi, lo = self._clip(hi), 0.0
            out.append(hi)
        return out


def _two_sum(a, b):
    s = a + b
    bb = s - a
    return s, (a - (s - bb)) + (b - bb)


class ShiftSpace(DynamicalSystem):
    """One-sided shift on {0, ..., symbols-1}^N, optionally restricted to a
    subshift of finite type by a 0/1 transition matrix."""

    symbolic = True

    def __init__(self, symbols: int, transition: np.ndarray | None = None, name: str | None = None):
        if symbols < 1:
            raise ArgumentError("need at least one symbol")
        self.symbols = int(symbols)
        self.transition = None if transition is None else np.asarray(transition, dtype=np.int64)
        if self.transition is not None and self.transition.shape != (symbols, symbols):
            raise ArgumentError("transition matrix shape must be (symbols, symbols)")
        self.name = name or (f"full_shift({symbols})" if transition is None else f"sft({symbols})")
        self.specification_class = SPECIFICATION if transition is None else UNKNOWN

    def validate(self, x):
        if not isinstance(x, ShiftPoint):
            raise DomainError(f"{x!r} is not a shift point")
        if any(s < 0 or s >= self.symbols for s in x.word):
            raise DomainError(f"symbols of {x!r} outside 0..{self.symbols - 1}")
        if self.transition is not None:
            seq = x.prefix(len(x.word) + x.period + 1)
            if np.any(self.transition[seq[:-1], seq[1:]] == 0):
                raise DomainError(f"{x!r} is not admissible for the transition matrix")
        return x

    def map(self, x):
        return self.validate(x).shift()

    def first_disagreement(self, x: ShiftPoint, y: ShiftPoint) -> int | None:
        horizon = max(len(x.word), len(y.word)) + math.lcm(x.period, y.period)
        for j in range(horizon):
            if x.symbol(j) != y.symbol(j):
                return j
        return None

    def metric(self, x, y) -> float:
        self.validate(x)
        self.validate(y)
        j = self.first_disagreement(x, y)
        return 0.0 if j is None else 2.0 ** -j

    def admissible_words(self, words: np.ndarray) -> np.ndarray:
        words = np.asarray(words)
        if self.transition is None or words.shape[-1] < 2:
            return np.ones(words.shape[:-1], dtype=bool)
        return np.all(self.transition[words[..., :-1], words[..., 1:]] == 1, axis=-1)


# ---------------------------------------------------------------------------
# operations
# ---------------------------------------------------------------------------

def iterate(sys: DynamicalSystem, x, n: int) -> list:
    """Orbit segment [x, f x, ..., f^n x]."""
    if n < 0:
        raise ArgumentError("n must be >= 0")
    sys.validate(x)
    return sys.orbit(x, n)


def index_distances(sys: DynamicalSystem, x, y, n: int) -> list[float]:
    return [sys.metric(a, b) for a, b in zip(sys.orbit(x, n - 1), sys.orbit(y, n - 1))]


def bowen_distance(sys: DynamicalSystem, x, y, n: int) -> float:
    """d_n(x, y) = max_{0 <= i < n} d(f^i x, f^i y)."""
    if n < 1:
        raise ArgumentError("bowen distance needs n >= 1")
    return max(index_distances(sys, x, y, n))


def restricted_distance(sys: DynamicalSystem, x, y, index_set: IndexSet | Iterable[int]) -> float:
    """d_Lambda(x, y) = max over i in Lambda of d(f^i x, f^i y)."""
    if not isinstance(index_set, IndexSet):
        idx = sorted(set(int(i) for i in index_set))
        index_set = IndexSet(tuple(idx), (idx[-1] + 1) if idx else 1)
    if len(index_set) == 0:
        raise ArgumentError("restricted distance needs a nonempty index set")
    d = index_distances(sys, x, y, index_set.indices[-1] + 1)
    return max(d[i] for i in index_set)


# ---------------------------------------------------------------------------
# interval-set helpers
# ---------------------------------------------------------------------------

def _normalize(intervals):
    ivs = sorted((a, b) for a, b in intervals if b > a)
    out = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1] = (out[-1][0], max(out[-1][1], b))
        else:
            out.append((a, b))
    return out


def _intersect(xs, ys):
    out = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        a, b = max(xs[i][0], ys[j][0]), min(xs[i][1], ys[j][1])
        if a < b:
            out.append((a, b))
        if xs[i][1] < ys[j][1]:
            i += 1
        else:
            j += 1
    return out


def total_length(intervals) -> float:
    return float(sum(b - a for a, b in intervals))


# ---------------------------------------------------------------------------
# config
# ---------------------------------------------------------------------------

def system_from_config(cfg: Mapping) -> DynamicalSystem:
    kind = cfg.get("system.kind")
    if kind == "doubling":
        return DoublingMap()
    if kind == "beta":
        if "system.beta" not in cfg:
            raise ConfigError("system.beta", "required for system.kind = beta")
        return BetaMap(float(cfg["system.beta"]))
    if kind == "manneville_pomeau":
        if "system.alpha" not in cfg:
            raise ConfigError("system.alpha", "required for system.kind = manneville_pomeau")
        return MannevillePomeau(float(cfg["system.alpha"]))
    if kind == "full_shift":
        return ShiftSpace(int(cfg.get("system.symbols", 2)))
    if kind == "sft":
        if "system.transition_matrix" not in cfg:
            raise ConfigError("system.transition_matrix", "required for system.kind = sft")
        flat = list(cfg["system.transition_matrix"])
        size = int(cfg.get("system.symbols", round(math.sqrt(len(flat)))))
        if size * size != len(flat) or any(v not in (0, 1) for v in flat):
            raise ConfigError("system.transition_matrix", "expected a row-major 0/1 list of length symbols**2")
        return ShiftSpace(size, np.array(flat).reshape(size, size))
    raise ConfigError("system.kind", f"unknown system kind {kind!r}")
