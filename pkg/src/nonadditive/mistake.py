"""Mistake functions, mistake dynamical balls, separated and spanning sets,
covering numbers and Katok-type entropy estimators.

A point y lies in the mistake ball B_n(g; x, eps) iff at least n - g(n, eps)
indices i < n have d(f^i x, f^i y) < eps (the best index set realizes the
union over index sets).  Separation counts indices with d > eps; spanning
balls use d <= eps.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.special import gammaln, logsumexp

from .errors import ArgumentError, CapabilityError, ConfigError
from .measures import (IntervalMeasure, MeasureModel, SymbolicMeasure,
                       point_words, symbolic_view)
from .systems import (DynamicalSystem, IntervalMap, ShiftSpace,
                      index_distances, radius_window)


# ---------------------------------------------------------------------------
# mistake functions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MistakeFunction:
    """g(n, eps): nondecreasing in n, g(n)/n -> 0.  For eps > eps0 the rule is
    evaluated at eps0."""

    rule: Callable[[int, float], int]
    eps0: float = 1.0
    name: str = "g"

    def __call__(self, n: int, eps: float = 0.0) -> int:
        return int(self.rule(int(n), min(float(eps), self.eps0)))

    @property
    def is_zero(self) -> bool:
        return self.name == "zero"

    def check_contract(self, n_grid: Sequence[int] | None = None, eps: float | None = None) -> list:
        """Sampled contract violations (empty list when the contract holds):
        negativity, decrease in n, and a non-shrinking envelope of g(n)/n."""
        eps = self.eps0 if eps is None else eps
        ns = np.unique(np.geomspace(1, 10 ** 4, 40).astype(int)) if n_grid is None else np.asarray(n_grid)
        vals = np.array([self(int(n), eps) for n in ns])
        out = []
        if np.any(vals < 0):
            out.append(("negative", int(ns[np.argmax(vals < 0)])))
        dec = np.nonzero(np.diff(vals) < 0)[0]
        if len(dec):
            out.append(("decreasing", int(ns[dec[0] + 1])))
        ratio = vals / ns
        env = np.maximum.accumulate(ratio[::-1])[::-1]   # nonincreasing envelope
        if env[0] > 0 and ns[-1] >= 100 * ns[0] and env[-1] > 0.5 * env[0]:
            out.append(("not_sublinear", int(ns[-1])))
        return out


def zero_mistakes() -> MistakeFunction:
    return MistakeFunction(lambda n, e: 0, name="zero")


def constant_mistakes(k: int) -> MistakeFunction:
    if k < 0:
        raise ArgumentError("constant mistake allowance must be >= 0")
    return MistakeFunction(lambda n, e: k, name=f"constant({k})")


def sqrt_mistakes(scale: float = 1.0, eps0: float = 1.0) -> MistakeFunction:
    """g(n) = floor(scale * sqrt(n))."""
    return MistakeFunction(lambda n, e: math.floor(scale * math.sqrt(n) + 1e-12), eps0, name=f"sqrt({scale:g})")


def log_mistakes(scale: float = 1.0, eps0: float = 1.0) -> MistakeFunction:
    """g(n) = floor(scale * log n)."""
    return MistakeFunction(lambda n, e: math.floor(scale * math.log(max(n, 1)) + 1e-12), eps0, name=f"log({scale:g})")


def mistake_from_config(cfg) -> MistakeFunction:
    kind = cfg.get("mistake.kind", "zero")
    scale = float(cfg.get("mistake.scale", 1.0))
    if kind == "zero":
        return zero_mistakes()
    if kind == "constant":
        return constant_mistakes(int(scale))
    if kind == "sqrt":
        return sqrt_mistakes(scale)
    if kind == "log":
        return log_mistakes(scale)
    raise ConfigError("mistake.kind", f"unknown mistake kind {kind!r}")


# ---------------------------------------------------------------------------
# membership and pair tests
# ---------------------------------------------------------------------------

def _check(n, eps):
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if eps <= 0:
        raise ArgumentError("eps must be positive")


def mistake_ball_contains(sys: DynamicalSystem, g: MistakeFunction, x, y, n: int, eps: float) -> bool:
    _check(n, eps)
    need = n - g(n, eps)
    if need <= 0:
        return True
    good = sum(1 for d in index_distances(sys, x, y, n) if d < eps)
    return good >= need


def is_mistake_separated(sys: DynamicalSystem, g: MistakeFunction, points, n: int, eps: float):
    """(True, None) if every pair has more than g(n, eps) indices with
    d > eps, else (False, first violating pair)."""
    _check(n, eps)
    pts = list(points)
    if len(pts) < 2:
        raise ArgumentError("separation needs at least two points")
    allow = g(n, eps)
    for a in range(len(pts)):
        for b in range(a + 1, len(pts)):
            far = sum(1 for d in index_distances(sys, pts[a], pts[b], n) if d > eps)
            if far <= allow:
                return False, (pts[a], pts[b])
    return True, None


def _codes(sys, points, n, eps, strict):
    """Array form of points for batched index tests: orbit segments on
    interval maps, symbol words of length n + w - 1 on shifts."""
    if isinstance(sys, IntervalMap):
        pts = np.asarray(points, dtype=float)
        if isinstance(sys, IntervalMap) and not sys.affine:
            return "flat", np.array([sys.orbit(float(p), n - 1) for p in pts])
        return "flat", sys.orbit_array(pts, n)
    if isinstance(sys, ShiftSpace):
        if isinstance(points, np.ndarray) and points.ndim == 2:
            w = radius_window(eps, strict)
            return "word", points[:, :n + w - 1]
        w = radius_window(eps, strict)
        return "word", point_words(sys, points, n + w - 1)
    raise CapabilityError(f"no batched index test for {sys.name}")


def _good_counts(kind, A, B, n, eps, strict, chunk=256):
    """good[a, b] = #{i < n : d(f^i a, f^i b) < eps} (<= when not strict)."""
    if kind == "word" and len(A) * len(B) > 4096:
        # sampled words repeat heavily; count on distinct rows only
        ua, ia = np.unique(A, axis=0, return_inverse=True)
        ub, ib = np.unique(B, axis=0, return_inverse=True)
        if len(ua) * len(ub) < 0.5 * len(A) * len(B):
            return _good_counts(kind, ua, ub, n, eps, strict, chunk)[ia.reshape(-1)][:, ib.reshape(-1)]
    out = np.empty((len(A), len(B)), dtype=np.int64)
    for s in range(0, len(A), chunk):
        a = A[s:s + chunk]
        if kind == "flat":
            d = np.abs(a[:, None, :] - B[None, :, :])
            good = d < eps if strict else d <= eps
            out[s:s + chunk] = good.sum(axis=-1)
        else:
            w = A.shape[1] - n + 1
            mism = a[:, None, :] != B[None, :, :]
            cs = np.concatenate([np.zeros(mism.shape[:2] + (1,), dtype=np.int64), np.cumsum(mism, axis=-1)], axis=-1)
            bad_window = cs[..., w:w + n] - cs[..., :n]
            out[s:s + chunk] = (bad_window == 0).sum(axis=-1)
    return out


def good_counts(sys, xs, ys, n, eps, strict=True) -> np.ndarray:
    """Paired good-index counts for equal-length batches xs, ys."""
    kind, A = _codes(sys, xs, n, eps, strict)
    _, B = _codes(sys, ys, n, eps, strict)
    if kind == "flat":
        d = np.abs(A - B)
        return ((d < eps) if strict else (d <= eps)).sum(axis=-1)
    w = A.shape[1] - n + 1
    cs = np.concatenate([np.zeros((len(A), 1), dtype=np.int64), np.cumsum(A != B, axis=-1)], axis=-1)
    return ((cs[:, w:w + n] - cs[:, :n]) == 0).sum(axis=-1)


@dataclass
class SpanningResult:
    centers: list
    center_indices: list
    separated_subset_size: int
    covered: int


def greedy_spanning(sys: DynamicalSystem, g: MistakeFunction, candidates, n: int, eps: float) -> SpanningResult:
    """Centers among the candidates whose closed mistake balls cover all
    candidates, picked by largest residual coverage."""
    _check(n, eps)
    pts = candidates if isinstance(candidates, np.ndarray) else list(candidates)
    if len(pts) == 0:
        raise ArgumentError("need at least one candidate")
    need = n - g(n, eps)
    kind, C = _codes(sys, pts, n, eps, strict=False)
    cover = _good_counts(kind, C, C, n, eps, strict=False) >= need
    left = np.ones(len(C), dtype=bool)
    chosen = []
    while left.any():
        gain = (cover & left[None, :]).sum(axis=1)
        k = int(np.argmax(gain))
        chosen.append(k)
        left &= ~cover[k]
    # maximal separated subset of the centers, greedy in selection order
    _, S = _codes(sys, [pts[k] for k in chosen] if not isinstance(pts, np.ndarray) else pts[chosen], n, eps, strict=False)
    far = n - _good_counts(kind, S, S, n, eps, strict=False)   # indices with d > eps
    allow = g(n, eps)
    keep = []
    for i in range(len(chosen)):
        if all(far[i, j] > allow for j in keep):
            keep.append(i)
    centers = [pts[k] for k in chosen]
    return SpanningResult(centers, chosen, len(keep), int(len(C)))


# ---------------------------------------------------------------------------
# covering numbers
# ---------------------------------------------------------------------------

@dataclass
class CoveringEstimate:
    n: int
    eps: float
    delta: float
    count: int
    method: str
    covered_fraction: float
    samples: int | None = None
    seed: int | None = None
    entropy_slope: float | None = None


def covering_number(sys: DynamicalSystem, g: MistakeFunction, sampler: Callable, n: int, eps: float,
                    delta: float = 0.5, samples: int = 2000, seed: int = 0) -> CoveringEstimate:
    """Greedy upper bound on the least number of mistake balls B_n(g; ., eps)
    covering a set of measure larger than delta, estimated on ``samples``
    points drawn by ``sampler(rng, count)``."""
    _check(n, eps)
    if not 0 < delta < 1:
        raise ArgumentError("delta must lie in (0, 1)")
    if delta * samples < 100:
        warnings.warn(f"delta * samples = {delta * samples:g} < 100; covering count is noisy", RuntimeWarning)
    rng = np.random.default_rng([seed, n])
    pts = sampler(rng, samples)
    kind, C = _codes(sys, pts, n, eps, strict=True)
    need = n - g(n, eps)
    cover = _good_counts(kind, C, C, n, eps, strict=True) >= need
    left = np.ones(len(C), dtype=bool)
    gain = cover.sum(axis=1)
    count, covered = 0, 0
    target = delta * len(C)
    while covered <= target:
        k = int(np.argmax(gain))
        if gain[k] == 0:
            break
        newly = np.nonzero(cover[k] & left)[0]
        covered += len(newly)
        left[newly] = False
        gain -= cover[:, newly].sum(axis=1)     # residual coverage of every candidate
        count += 1
    return CoveringEstimate(n, eps, delta, max(count, 1), "greedy_sample", covered / len(C), samples, seed)


def exact_cylinder_covering(mu: SymbolicMeasure, n: int, eps: float, delta: float = 0.5) -> CoveringEstimate:
    """g = 0 on a full shift: (n, eps)-balls are (n + w - 1)-cylinders, so
    the minimum cover takes the heaviest cylinders until mass exceeds delta."""
    from .combinatorics import all_words
    w = radius_window(eps)
    words = all_words(mu.symbols, n + w - 1)
    mass = np.sort(np.exp(mu.word_log_mass(words)))[::-1]
    cum = np.cumsum(mass)
    count = int(np.searchsorted(cum, delta * (1 + 1e-12), side="right")) + 1
    return CoveringEstimate(n, eps, delta, count, "exact_cylinder", float(cum[count - 1]))


def mistake_ball_cylinder_count(symbols: int, n: int, g_value: int) -> int:
    """Number of n-cylinders within Hamming distance g_value of a given
    n-word: sum_{j <= g} C(n, j) (symbols - 1)**j."""
    if not 0 <= g_value <= n:
        raise ArgumentError("need 0 <= g_value <= n")
    return sum(math.comb(n, j) * (symbols - 1) ** j for j in range(g_value + 1))


def log_mistake_ball_cylinder_count(symbols: int, n: int, g_value: int) -> float:
    if not 0 <= g_value <= n:
        raise ArgumentError("need 0 <= g_value <= n")
    j = np.arange(g_value + 1)
    terms = gammaln(n + 1) - gammaln(j + 1) - gammaln(n - j + 1)
    if symbols > 2:
        terms = terms + j * math.log(symbols - 1)
    elif symbols == 1:
        terms = terms[:1]
    return float(logsumexp(terms))


# ---------------------------------------------------------------------------
# ball masses
# ---------------------------------------------------------------------------

def symbolic_ball_masses(mu: SymbolicMeasure, word, n_list: Sequence[int], g: MistakeFunction,
                         eps: float) -> np.ndarray:
    """log mu(B_n(g; x, eps)) for each n in n_list, where ``word`` holds the
    first max(n) + w - 1 symbols of x (w = shared symbols per index)."""
    return symbolic_ball_log_masses(mu, np.asarray(word)[None, :], n_list, g, eps)[0]


def symbolic_ball_log_masses(mu: SymbolicMeasure, words, n_list: Sequence[int], g: MistakeFunction,
                             eps: float) -> np.ndarray:
    """Batched mistake-ball log-masses, shape ``(len(words), len(n_list))``.

    Forward pass over positions for a Markov chain of any order, with state
    (current block, steps since the last mismatch capped at w, bad-index
    count capped at max g + 1); index i is settled once position i + w - 1
    has been read."""
    ns = list(n_list)
    w = radius_window(eps)
    words = np.atleast_2d(np.asarray(words, dtype=np.int64))
    N = len(words)
    L = max(ns) + w - 1
    cf = mu.chain_form()
    k, m, B = cf.symbols, cf.order, cf.blocks
    if words.shape[1] < max(L, m):
        raise ArgumentError(f"need {max(L, m)} symbols of x, got {words.shape[1]}")
    gvals = {n: g(n, eps) for n in ns}
    cap = max(gvals.values()) + 1
    out = np.full((N, len(ns)), -np.inf)

    # first block: mismatch pattern of every block against x_0..x_{m-1}
    bsym = (np.arange(B)[:, None] // k ** np.arange(m - 1, -1, -1)) % k          # (B, m)
    mism = bsym[None, :, :] != words[:, None, :m]                                  # (N, B, m)
    cs = np.concatenate([np.zeros((N, B, 1), dtype=np.int64), np.cumsum(mism, axis=-1)], axis=-1)
    settled = max(0, m - w + 1)                                                    # indices i with i + w - 1 <= m - 1
    bad_idx = (cs[..., w:w + settled] - cs[..., :settled]) > 0 if settled else np.zeros((N, B, 0), bool)
    with np.errstate(divide="ignore"):
        log_init = np.log(cf.init)
    for col, n in enumerate(ns):
        if n + w - 2 <= m - 1:
            ok = bad_idx[..., :n].sum(axis=-1) <= gvals[n]
            out[:, col] = logsumexp(np.where(ok, log_init[None, :], -np.inf), axis=1)
    if L <= m:
        return out
    pos = np.arange(m)
    last = np.where(mism, pos, -1).max(axis=-1)                                     # (N, B)
    s0 = np.where(last < 0, w, np.minimum(m - 1 - last, w))
    b0 = np.minimum(bad_idx.sum(axis=-1), cap)
    state = np.zeros((N, B, w + 1, cap + 1))
    ii, bb = np.meshgrid(np.arange(N), np.arange(B), indexing="ij")
    np.add.at(state, (ii, bb, s0, b0), cf.init[None, :])
    log_scale = np.zeros(N)
    want = {n + w - 2: col for col, n in enumerate(ns) if n + w - 2 > m - 1}
    probs = cf.probs.reshape(k, B // k, k)
    for j in range(m, L):
        x = words[:, j]
        new = np.zeros_like(state)
        nv = new.reshape(N, B // k, k, w + 1, cap + 1)
        st = state.reshape(N, k, B // k, w + 1, cap + 1)
        for c in range(k):
            carried = (st * probs[None, :, :, c, None, None]).sum(axis=1)            # (N, B/k, w+1, cap+1)
            hit = (x == c)[:, None, None, None]
            moved = np.zeros_like(carried)
            moved[:, :, 1:, :] = carried[:, :, :-1, :]
            moved[:, :, w, :] += carried[:, :, w, :]
            miss = np.zeros_like(carried)
            miss[:, :, 0, :] = carried.sum(axis=2)
            nv[:, :, c] = np.where(hit, moved, miss)
        if j - w + 1 >= 0:
            bad = new[:, :, :w, :]
            sh = np.zeros_like(bad)
            sh[..., 1:] = bad[..., :-1]
            sh[..., cap] += bad[..., cap]
            new[:, :, :w, :] = sh
        tot = new.sum(axis=(1, 2, 3))
        safe = np.where(tot > 0, tot, 1.0)
        state = new / safe[:, None, None, None]
        with np.errstate(divide="ignore"):
            log_scale = log_scale + np.log(np.where(tot > 0, tot, 0.0))
        if j in want:
            col = want[j]
            mass = state[..., :gvals[ns[col]] + 1].sum(axis=(1, 2, 3))
            with np.errstate(divide="ignore"):
                out[:, col] = log_scale + np.log(mass)
    return out


def ball_log_masses(sys: DynamicalSystem, mu: MeasureModel, g: MistakeFunction, points, n_list, eps: float,
                    geometry: str | None = None) -> tuple[np.ndarray, str]:
    """log mu(B_n(g; x, eps)) for points x (rows) and n in n_list (columns).

    ``geometry`` is "coding" (shift metric on the symbolic coding) or "flat"
    (|x - y| on [0, 1), exact for g = 0 via interval preimages).  Interval
    maps default to flat when g = 0 and coding otherwise."""
    ns = list(n_list)
    if isinstance(sys, IntervalMap):
        if geometry is None:
            geometry = "flat" if g.is_zero and isinstance(mu, IntervalMeasure) else "coding"
        if geometry == "flat":
            if not g.is_zero:
                raise CapabilityError("flat mistake-ball masses are only exact for g = 0")
            if not isinstance(mu, IntervalMeasure):
                raise CapabilityError(f"{mu!r} has no interval masses")
            out = np.empty((len(points), len(ns)))
            for r, x in enumerate(points):
                for c_, n in enumerate(ns):
                    m = mu.intervals_mass(sys.bowen_ball(float(x), n, eps))
                    out[r, c_] = math.log(m) if m > 0 else -math.inf
            return out, geometry
    elif geometry not in (None, "coding"):
        raise ArgumentError("shift systems only have the coding geometry")
    geometry = "coding"
    smu = symbolic_view(sys, mu)
    w = radius_window(eps)
    if isinstance(points, np.ndarray) and points.ndim == 2:
        words = points
    else:
        words = point_words(sys, points, max(ns) + w - 1)
    if g.is_zero:
        # plain balls are cylinders of length n + w - 1
        return np.stack([smu.word_log_mass(words[:, :n + w - 1]) for n in ns], axis=1), geometry
    out = np.concatenate([symbolic_ball_log_masses(smu, words[s:s + 64], ns, g, eps)
                          for s in range(0, len(words), 64)])
    return out, geometry


# ---------------------------------------------------------------------------
# entropy estimators
# ---------------------------------------------------------------------------

@dataclass
class EntropyEstimate:
    table: list                 # rows (eps, n, covering_slope, ball_rate)
    lower_limit: float
    upper_limit: float
    target: float | None
    per_eps: dict = field(default_factory=dict)   # eps -> (covering_slope, ball_slope)
    trend: str = "flat"
    geometry: str = ""
    samples: int = 0
    seed: int = 0

    @property
    def relative_error(self) -> float | None:
        if self.target is None or self.target == 0:
            return None
        mid = 0.5 * (self.lower_limit + self.upper_limit)
        return abs(mid - self.target) / abs(self.target)


def _sample_points(sys, mu, rng, count, depth=64):
    if isinstance(sys, ShiftSpace):
        from .measures import words_to_points
        return words_to_points(sys, symbolic_view(sys, mu).sample_words(rng, count, depth))
    if isinstance(mu, IntervalMeasure):
        return mu.sample_points(rng, count)
    raise CapabilityError(f"cannot sample {mu!r} on {sys.name}")


def katok_entropy(sys: DynamicalSystem, mu: MeasureModel, g: MistakeFunction, eps_grid, n_grid,
                  delta: float = 0.5, mode: str = "ball_mass", samples: int = 200, seed: int = 0,
                  covering_samples: int = 2000, geometry: str | None = None) -> EntropyEstimate:
    """Entropy from mistake-ball masses (slope of the sample mean of
    -log mu(B_n(g; x, eps)) over n_grid) and/or from greedy covering numbers
    (slope of log N(g; n, eps, delta) over n_grid), per eps."""
    eps_grid = list(eps_grid)
    n_grid = list(n_grid)
    if any(b >= a for a, b in zip(eps_grid, eps_grid[1:])):
        raise ArgumentError("eps_grid must be decreasing")
    if any(b <= a for a, b in zip(n_grid, n_grid[1:])):
        raise ArgumentError("n_grid must be increasing")
    if mode not in ("ball_mass", "covering", "both"):
        raise ArgumentError(f"unknown mode {mode!r}")
    rng = np.random.default_rng(seed)
    table, per_eps, geo = [], {}, ""
    for eps in eps_grid:
        ball = [math.nan] * len(n_grid)
        cover = [math.nan] * len(n_grid)
        if mode in ("ball_mass", "both"):
            pts = _sample_points(sys, mu, rng, samples)
            lm, geo = ball_log_masses(sys, mu, g, pts, n_grid, eps, geometry)
            ball = list(-lm.mean(axis=0))
        if mode in ("covering", "both"):
            sampler = lambda r, k: _sample_points(sys, mu, r, k)
            cover = [math.log(covering_number(sys, g, sampler, n, eps, delta, covering_samples, seed).count)
                     for n in n_grid]
        ball_slope = _slope(n_grid, ball)
        cover_slope = _slope(n_grid, cover)
        per_eps[eps] = (cover_slope, ball_slope)
        for n, cv, b in zip(n_grid, cover, ball):
            table.append((eps, n, cv / n if cv == cv else math.nan, b / n if b == b else math.nan))
    last = [v for v in per_eps[eps_grid[-1]] if v == v]
    first = [v for v in per_eps[eps_grid[0]] if v == v]
    trend = "flat"
    if len(eps_grid) > 1 and last and first:
        diff = np.mean(last) - np.mean(first)
        trend = "increasing" if diff > 1e-3 else ("decreasing" if diff < -1e-3 else "flat")
    target = getattr(mu, "entropy", None)
    return EntropyEstimate(table, min(last), max(last), target, per_eps, trend, geo, samples, seed)


def _slope(ns, vals):
    vals = np.asarray(vals, dtype=float)
    if np.any(np.isnan(vals)) or len(ns) < 2:
        return math.nan
    return float(np.polyfit(np.asarray(ns, dtype=float), vals, 1)[0])
