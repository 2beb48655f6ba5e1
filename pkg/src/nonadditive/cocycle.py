"""Matrix cocycles over full shifts: products M_w = M_{w[-1]} ... M_{w[0]},
norm and singular-value potentials, partition sums, Lyapunov exponents and
an irreducibility test."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.special import logsumexp

from .combinatorics import all_words, compositions, log_multinomial
from .errors import ArgumentError, BudgetError, CapabilityError, ConfigError
from .measures import Bernoulli, CylinderWeights, SymbolicMeasure
from .potentials import (ADDITIVE, SUBADDITIVE, SUPERADDITIVE, CountForm,
                         PotentialSequence, zero)
from .systems import IntervalMap, ShiftPoint

DEFAULT_BUDGET = 2 ** 24


class MinusInfinity(float):
    """-inf returned in place of log 0, tagged with the reason."""

    def __new__(cls, tag="zero_product"):
        obj = super().__new__(cls, -math.inf)
        obj.tag = tag
        return obj

    def __repr__(self):
        return f"MinusInfinity({self.tag!r})"


@dataclass
class CocycleSpec:
    matrices: np.ndarray
    n_check: int = 20

    def __post_init__(self):
        m = np.asarray(self.matrices, dtype=float)
        if m.ndim == 1:
            m = m[:, None, None]
        if m.ndim != 3 or m.shape[1] != m.shape[2] or m.shape[0] < 1 or m.shape[1] < 1:
            raise ArgumentError("matrices must be a nonempty list of square d x d arrays")
        if not np.all(np.isfinite(m)):
            raise ArgumentError("matrix entries must be finite")
        self.matrices = m
        # sum over words of length n of M_w M_w^T is T^n(I) with T(X) = sum_i M_i X M_i^T
        X = np.eye(self.d)
        for n in range(1, self.n_check + 1):
            X = np.einsum("sij,jk,slk->il", m, X, m)
            t = np.trace(X)
            if not t > 0:
                raise ArgumentError(f"every word of length {n} has a zero product")
            X = X / t

    @property
    def symbols(self) -> int:
        return self.matrices.shape[0]

    @property
    def d(self) -> int:
        return self.matrices.shape[1]

    @property
    def diagonal(self) -> bool:
        off = self.matrices * (1 - np.eye(self.d))
        return bool(np.all(off == 0))


def word_product(c: CocycleSpec, word: Sequence[int]) -> np.ndarray:
    word = [int(s) for s in word]
    if not word:
        raise ArgumentError("word must be nonempty")
    if any(s < 0 or s >= c.symbols for s in word):
        raise ArgumentError(f"symbols must lie in 0..{c.symbols - 1}")
    P = c.matrices[word[0]].copy()
    for s in word[1:]:
        P = c.matrices[s] @ P
    return P


def singular_values(m) -> np.ndarray:
    return np.linalg.svd(np.atleast_2d(np.asarray(m, dtype=float)), compute_uv=False)


def operator_norm(m) -> float:
    return float(singular_values(m)[0])


def _batched_singular(P: np.ndarray) -> np.ndarray:
    """Singular values of a stack of matrices, nonincreasing along the last axis."""
    d = P.shape[-1]
    if d == 1:
        return np.abs(P[..., 0, :])
    if d == 2:
        a, b, c_, e = P[..., 0, 0], P[..., 0, 1], P[..., 1, 0], P[..., 1, 1]
        f2 = a * a + b * b + c_ * c_ + e * e
        det = np.abs(a * e - b * c_)
        disc = np.sqrt(np.maximum(f2 * f2 - 4 * det * det, 0.0))
        s1 = np.sqrt(0.5 * (f2 + disc))
        s2 = np.divide(det, s1, out=np.zeros_like(s1), where=s1 > 0)
        return np.stack([s1, s2], axis=-1)
    return np.linalg.svd(P, compute_uv=False)


def _renorm(P, logs):
    f = np.sqrt((P * P).sum(axis=(-2, -1)))
    safe = np.where(f > 0, f, 1.0)
    return P / safe[..., None, None], logs + np.log(safe)


def log_singular(c: CocycleSpec, words, index: int = 0) -> np.ndarray:
    """log sigma_{index+1}(M_w) for a batch of words (rows of ``words``),
    accumulated with periodic renormalization."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim == 1:
        words = words[None, :]
    P = c.matrices[words[:, 0]].copy()
    logs = np.zeros(len(words))
    for j in range(1, words.shape[1]):
        P = c.matrices[words[:, j]] @ P
        if j % 8 == 0:
            P, logs = _renorm(P, logs)
    with np.errstate(divide="ignore"):
        return np.log(_batched_singular(P)[:, index]) + logs


def log_norms(c: CocycleSpec, words) -> np.ndarray:
    return log_singular(c, words, 0)


# ---------------------------------------------------------------------------
# potentials
# ---------------------------------------------------------------------------

def _diag_count_value(c: CocycleSpec, q: float, index: int):
    with np.errstate(divide="ignore"):
        L = np.log(np.abs(np.einsum("sii->si", c.matrices)))   # (symbols, d)

    def value(counts, n):
        counts = np.asarray(counts, dtype=float)
        # 0 * -inf must stay -inf only when the symbol is used
        per = np.where(counts[..., :, None] > 0, counts[..., :, None] * L, 0.0).sum(axis=-2)
        per = -np.sort(-per, axis=-1)
        return q * per[..., index]
    return value


def cocycle_potential(c: CocycleSpec, q: float, kind: str = "norm", index: int = 0) -> PotentialSequence:
    """psi_n(x) = q log ||M_{x_0 ... x_{n-1}}|| (``kind="norm"``), or
    q log sigma_{index+1} of the same product (``kind="singular"``).
    A zero product evaluates to a tagged ``MinusInfinity``."""
    q = float(q)
    if not math.isfinite(q):
        raise ArgumentError("q must be finite")
    if kind == "norm":
        index = 0
    elif kind != "singular":
        raise ArgumentError(f"unknown cocycle potential kind {kind!r}")
    if not 0 <= index < c.d:
        raise ArgumentError(f"singular value index must lie in 0..{c.d - 1}")
    if q == 0:
        return zero()
    if c.d == 1:
        cls = ADDITIVE
    elif index == 0 and q > 0:
        cls = SUBADDITIVE
    elif index == c.d - 1 and q > 0:
        cls = SUPERADDITIVE
    else:
        raise ArgumentError("only q > 0 multiples of the top or bottom singular value carry a class tag")

    def words_of(sys, x, n):
        if isinstance(x, ShiftPoint):
            return x.prefix(n)
        if isinstance(sys, IntervalMap) and sys.coding_symbols == c.symbols:
            return sys.digits(x, n)
        raise CapabilityError(f"cannot read {c.symbols}-symbol words from {x!r}")

    def word_eval(words):
        with np.errstate(invalid="ignore"):
            v = q * log_singular(c, words, index)
        return np.where(np.isnan(v), -np.inf, v)

    def ev(sys, x, n):
        v = float(word_eval(words_of(sys, x, n)[None, :])[0])
        return MinusInfinity() if v == -math.inf else v

    count_form = rate = None
    if c.diagonal:
        count_form = CountForm(c.symbols, _diag_count_value(c, q, index))
        with np.errstate(divide="ignore"):
            L = np.log(np.abs(np.einsum("sii->si", c.matrices)))
        # Lyapunov spectrum of a diagonal cocycle under Bernoulli(p): sorted p @ log|d_j|
        rate = lambda p: float(q * -np.sort(-(np.asarray(p) @ np.where(np.isfinite(L), L, -1e300)))[index])
    name = f"{q:g}*log_norm" if kind == "norm" else f"{q:g}*log_sigma{index + 1}"
    site = None
    if c.d == 1:
        vals = q * np.log(np.abs(c.matrices[:, 0, 0]))
        site = lambda x, sys=None: float(vals[x.symbol(0)]) if isinstance(x, ShiftPoint) else float(vals[int(sys.branch_index(x))])
    return PotentialSequence(
        ev, cls, name,
        site=site,
        count_form=count_form,
        word_evaluator=word_eval,
        bowen_bound=lambda n: 0.0,
        approximants=[(0.0, site)] if site is not None else [],
        bernoulli_rate=rate,
    )


# ---------------------------------------------------------------------------
# pressure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PressureCurvePoint:
    q: float
    n: int
    value: float
    extrapolated: float | None = None


@dataclass
class PressureCurve:
    points: list
    method: str
    flags: list = field(default_factory=list)

    def __iter__(self):
        return iter(self.points)

    def __len__(self):
        return len(self.points)

    def __getitem__(self, k):
        return self.points[k]

    @property
    def values(self) -> np.ndarray:
        return np.array([p.value for p in self.points])

    @property
    def extrapolated(self) -> float | None:
        return self.points[-1].extrapolated if self.points else None

    def csv_rows(self):
        return [(p.q, p.n, p.value, "" if p.extrapolated is None else p.extrapolated) for p in self.points]


def aitken(values: Sequence[float]):
    """Aitken delta-squared on the last three values, used only when the
    last three differences share a sign.  Returns (value or None, flag)."""
    v = list(values)
    if len(v) < 4:
        return None, "no_extrapolation"
    d = np.diff(v[-4:])
    d[np.abs(d) <= 1e-13 * max(1.0, abs(v[-1]))] = 0.0
    if np.all(d == 0):
        return float(v[-1]), "converged"
    if not (np.all(d > 0) or np.all(d < 0)):
        return None, "no_extrapolation"
    d1, d2 = d[-2], d[-1]
    if d2 == d1:
        return None, "no_extrapolation"
    return float(v[-1] - d2 * d2 / (d2 - d1)), "aitken"


def _log_partition_counts(value, symbols, n, weights=None):
    comp = compositions(n, symbols)
    lw = log_multinomial(comp)
    if weights is not None:
        lw = lw + comp @ weights
    return float(logsumexp(lw + value(comp, n)))


def level_sums(c: CocycleSpec, q: float, n_max: int, budget: int = DEFAULT_BUDGET, index: int = 0,
               log_weights: np.ndarray | None = None) -> np.ndarray:
    """log sum_{|w| = n} exp(log_weight(w)) sigma_{index+1}(M_w)**q for n = 1..n_max, by
    enumeration in head-sized blocks reusing prefix products.  ``log_weights``
    are per-symbol additive log weights (e.g. Bernoulli log-probabilities)."""
    L = c.symbols
    if L ** n_max > budget:
        raise BudgetError(L ** n_max, budget)
    lw = np.zeros(L) if log_weights is None else np.asarray(log_weights, dtype=float)
    out = np.full(n_max, -np.inf)
    # head stage: all words up to length h kept in memory
    # subtrees below the head hold at most ~2**18 words each
    sub = int(math.floor(18 * math.log(2) / math.log(L))) if L > 1 else n_max
    h = max(1, n_max - sub)
    P = c.matrices.copy()
    logs = np.zeros(L)
    wts = lw.copy()
    for n in range(1, h + 1):
        if n > 1:
            P = (c.matrices[:, None] @ P[None]).reshape(-1, c.d, c.d)
            logs = np.tile(logs, L)
            wts = (lw[:, None] + wts[None, :]).reshape(-1)
            P, logs = _renorm(P, logs)
        out[n - 1] = _lse_level(P, logs, wts, q, index)
    if n_max == h:
        return out
    heads, head_logs, head_w = P, logs, wts
    for b in range(len(heads)):
        P, logs, wts = heads[b:b + 1], head_logs[b:b + 1], head_w[b:b + 1]
        for n in range(h + 1, n_max + 1):
            P = (c.matrices[:, None] @ P[None]).reshape(-1, c.d, c.d)
            logs = np.tile(logs, L)
            wts = (lw[:, None] + wts[None, :]).reshape(-1)
            if (n - h) % 8 == 0:
                P, logs = _renorm(P, logs)
            out[n - 1] = np.logaddexp(out[n - 1], _lse_level(P, logs, wts, q, index))
    return out


def _lse_level(P, logs, wts, q, index):
    with np.errstate(divide="ignore"):
        ls = np.log(_batched_singular(P)[:, index]) + logs
    if q == 0:
        terms = wts.copy()
    else:
        with np.errstate(invalid="ignore"):
            terms = q * ls + wts
        terms = np.where(np.isnan(terms), -np.inf, terms)
    return float(logsumexp(terms)) if np.any(terms > -np.inf) else -np.inf


def cocycle_pressure(c: CocycleSpec, q: float, n_max: int, budget: int = DEFAULT_BUDGET) -> PressureCurve:
    """P_n(q) = (1/n) log sum_{|w| = n} ||M_w||**q for n = 1..n_max.

    Scalar cocycles use the closed form log sum_i |m_i|**q, diagonal ones sum
    over symbol-count compositions, anything else enumerates words."""
    if n_max < 1:
        raise ArgumentError("n_max must be >= 1")
    q = float(q)
    if c.d == 1:
        with np.errstate(divide="ignore"):
            a = np.abs(c.matrices[:, 0, 0])
            total = float(np.log(np.sum(a ** q))) if q != 0 else math.log(c.symbols)
        vals = [total] * n_max
        method = "closed_form"
    elif c.diagonal:
        value = _diag_count_value(c, q, 0) if q != 0 else (lambda comp, n: np.zeros(len(comp)))
        vals = [_log_partition_counts(value, c.symbols, n) / n for n in range(1, n_max + 1)]
        method = "compositions"
    else:
        sums = level_sums(c, q, n_max, budget)
        vals = [float(s) / n for n, s in enumerate(sums, start=1)]
        method = "enumeration"
    ext, flag = aitken(vals)
    pts = [PressureCurvePoint(q, n, v, None) for n, v in enumerate(vals, start=1)]
    pts[-1] = PressureCurvePoint(q, n_max, vals[-1], ext)
    return PressureCurve(pts, method, [flag])


def equilibrium_weights(c: CocycleSpec, q: float, n: int, budget: int = DEFAULT_BUDGET) -> CylinderWeights:
    """Approximate equilibrium state on n-cylinders: weights proportional to
    ||M_w||**q, i.e. exp(-n P_n(q)) ||M_w||**q normalized."""
    if c.symbols ** n > budget:
        raise BudgetError(c.symbols ** n, budget)
    words = all_words(c.symbols, n)
    with np.errstate(invalid="ignore"):
        lw = q * log_norms(c, words) if q != 0 else np.zeros(len(words))
    lw = np.where(np.isnan(lw), -np.inf, lw)
    return CylinderWeights(c.symbols, n, lw)


# ---------------------------------------------------------------------------
# Lyapunov exponents
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovEstimate:
    value: float
    stderr: float
    mode: str
    n: int
    samples: int | None = None
    skipped: int = 0
    seed: int | None = None

    def __str__(self):
        return f"{self.value:.4f} ± {self.stderr:.4f}"


def lyapunov(c: CocycleSpec, mu: SymbolicMeasure, mode: str = "cylinder_exact", n: int = 12,
             samples: int = 10_000, seed: int = 0, budget: int = DEFAULT_BUDGET) -> LyapunovEstimate:
    """(1/n) sum_w mu[w] log ||M_w|| (cylinder_exact) or the sample mean of
    (1/n) log ||M_{x_0..x_{n-1}}|| under mu (monte_carlo)."""
    if not isinstance(mu, SymbolicMeasure):
        raise CapabilityError("lyapunov needs a measure with cylinder masses")
    if mu.symbols != c.symbols:
        raise ArgumentError("measure and cocycle disagree on the symbol count")
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if mode == "cylinder_exact":
        if isinstance(mu, Bernoulli) and c.diagonal:
            comp = compositions(n, c.symbols)
            lm = log_multinomial(comp) + mu.counts_log_mass(comp)
            vals = _diag_count_value(c, 1.0, 0)(comp, n)
        else:
            if c.symbols ** n > budget:
                raise BudgetError(c.symbols ** n, budget)
            words = all_words(c.symbols, n)
            lm = mu.word_log_mass(words)
            vals = log_norms(c, words)
        keep = lm > -np.inf
        skipped = int(np.sum(~keep & (vals > -np.inf)))
        w = np.exp(lm[keep])
        v = vals[keep]
        if np.any(np.isneginf(v) & (w > 0)):
            return LyapunovEstimate(-math.inf, 0.0, mode, n, skipped=skipped)
        return LyapunovEstimate(float(np.dot(w, v) / n), 0.0, mode, n, skipped=skipped)
    if mode == "monte_carlo":
        rng = np.random.default_rng(seed)
        vals = np.empty(samples)
        chunk = 100_000
        for s in range(0, samples, chunk):
            words = mu.sample_words(rng, min(chunk, samples - s), n)
            vals[s:s + len(words)] = log_norms(c, words) / n
        se = float(vals.std(ddof=1) / math.sqrt(samples)) if samples > 1 else math.inf
        return LyapunovEstimate(float(vals.mean()), se, mode, n, samples=samples, seed=seed)
    raise ArgumentError(f"unknown lyapunov mode {mode!r}")


# ---------------------------------------------------------------------------
# irreducibility
# ---------------------------------------------------------------------------

IRREDUCIBLE = "irreducible"
REDUCIBLE = "common_invariant_subspace"
INCONCLUSIVE = "inconclusive"


@dataclass
class IrreducibilityResult:
    status: str
    basis: np.ndarray | None = None
    detail: str = ""


def _algebra_basis(mats: np.ndarray, tol: float) -> np.ndarray:
    """Orthonormal basis (rows, flattened d x d) of the unital algebra generated by mats."""
    d = mats.shape[1]
    basis = np.zeros((0, d * d))
    frontier = [np.eye(d)]

    def add(M):
        nonlocal basis
        v = M.reshape(-1)
        nv = np.linalg.norm(v)
        if nv == 0:
            return False
        r = v / nv - basis.T @ (basis @ (v / nv)) if len(basis) else v / nv
        if np.linalg.norm(r) > tol:
            basis = np.vstack([basis, r / np.linalg.norm(r)])
            return True
        return False

    add(np.eye(d))
    while frontier and len(basis) < d * d:
        nxt = []
        for A in frontier:
            for M in mats:
                B = M @ A
                if add(B):
                    nxt.append(B / max(np.linalg.norm(B), 1e-300))
        frontier = nxt
    return basis


def _common_eigvec(mats, cand_mats, tol):
    for A in cand_mats:
        _, vecs = np.linalg.eig(A)
        for v in vecs.T:
            v = v / np.linalg.norm(v)
            ok = True
            for M in mats:
                Mv = M @ v
                lam = np.vdot(v, Mv)
                if np.linalg.norm(Mv - lam * v) > tol * max(1.0, np.linalg.norm(M)):
                    ok = False
                    break
            if ok:
                return v
    return None


def irreducible(c: CocycleSpec, trials: int = 32, tolerance: float = 1e-9, seed: int = 0) -> IrreducibilityResult:
    """Decide whether M_1..M_l have a common nontrivial invariant subspace over C^d.

    d <= 3: search for common eigen-lines of the M_i (invariant lines) and of
    the M_i^T (their orthogonal complements are invariant planes), using
    eigenvectors of the generators and of random algebra elements.  d > 3:
    Burnside's theorem, the generated algebra is all of M_d iff irreducible."""
    d = c.d
    mats = c.matrices
    if d == 1:
        return IrreducibilityResult(IRREDUCIBLE, detail="dimension one")
    rng = np.random.default_rng(seed)
    basis = _algebra_basis(mats, 1e-10)
    elements = [m for m in mats] + [
        (rng.standard_normal(len(basis)) @ basis).reshape(d, d) for _ in range(trials)]
    if d <= 3:
        v = _common_eigvec(mats, elements, tolerance)
        if v is not None:
            return IrreducibilityResult(REDUCIBLE, v[:, None], "common invariant line")
        vt = _common_eigvec([m.T for m in mats], [e.T for e in elements], tolerance)
        if vt is not None:
            # the orthogonal complement of a common eigenvector of the adjoints is invariant
            _, _, vh = np.linalg.svd(vt.conj()[None, :])
            return IrreducibilityResult(REDUCIBLE, vh[1:].T, "common invariant hyperplane")
        return IrreducibilityResult(IRREDUCIBLE, detail="no common invariant line or plane")
    if len(basis) == d * d:
        return IrreducibilityResult(IRREDUCIBLE, detail=f"algebra dimension {d * d}")
    # proper algebra: look for a witness span{A v}
    for A in elements:
        _, vecs = np.linalg.eig(A)
        for v in list(vecs.T) + [rng.standard_normal(d)]:
            span = np.array([(b.reshape(d, d) @ v) for b in basis])
            s = np.linalg.svd(span, compute_uv=False)
            rank = int(np.sum(s > tolerance * max(s[0], 1e-300)))
            if 0 < rank < d:
                _, _, vh = np.linalg.svd(span)
                return IrreducibilityResult(REDUCIBLE, vh[:rank].conj().T, f"algebra dimension {len(basis)}")
    return IrreducibilityResult(INCONCLUSIVE, detail=f"algebra dimension {len(basis)} < {d * d}, no witness found")


def spec_from_config(cfg: Mapping) -> CocycleSpec:
    if "cocycle.matrices" not in cfg:
        raise ConfigError("cocycle.matrices", "required")
    blocks = []
    for blk in cfg["cocycle.matrices"]:
        a = np.asarray(blk, dtype=float).reshape(-1)
        d = int(round(math.sqrt(len(a))))
        if d * d != len(a):
            raise ConfigError("cocycle.matrices", "each block must be a row-major d x d list")
        blocks.append(a.reshape(d, d))
    if len({b.shape for b in blocks}) != 1:
        raise ConfigError("cocycle.matrices", "all blocks must share one dimension")
    try:
        return CocycleSpec(np.array(blocks))
    except ArgumentError as exc:
        raise ConfigError("cocycle.matrices", str(exc)) from exc
