"""Derivative-free maximization over the probability simplex: a regular grid
search followed by a local polish (Nelder-Mead on a softmax chart when only
the simplex constrains the search, COBYLA otherwise)."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import minimize


@dataclass
class SimplexResult:
    x: np.ndarray | None
    value: float
    feasible: bool
    evaluations: int
    method: str


def simplex_grid(k: int, resolution: int) -> np.ndarray:
    """All points of the simplex in R^k with coordinates in (1/resolution) Z."""
    if k == 1:
        return np.ones((1, 1))
    rows = []
    for bars in itertools.combinations(range(resolution + k - 1), k - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(resolution + k - 2 - prev)
        rows.append(row)
    return np.array(rows, dtype=float) / resolution


def default_resolution(k: int) -> int:
    return {1: 1, 2: 2000, 3: 120, 4: 30}.get(k, 12)


def maximize_on_simplex(f: Callable[[np.ndarray], float], k: int,
                        constraints: Sequence[Callable[[np.ndarray], float]] = (),
                        lower: Sequence[float] | None = None, upper: Sequence[float] | None = None,
                        resolution: int | None = None, tol: float = 1e-12) -> SimplexResult:
    """max f(p) over p in the simplex with lower <= p <= upper and c(p) >= 0
    for every constraint c.  Infeasible problems return value -inf."""
    lo = np.zeros(k) if lower is None else np.asarray(lower, dtype=float)
    hi = np.ones(k) if upper is None else np.asarray(upper, dtype=float)
    cons = list(constraints)
    grid = simplex_grid(k, resolution or default_resolution(k))

    def feasible(p, slack=1e-12):
        return (np.all(p >= lo - slack) and np.all(p <= hi + slack)
                and all(c(p) >= -slack for c in cons))

    evals = 0
    best_p, best_v = None, -math.inf
    for p in grid:
        if not feasible(p):
            continue
        v = f(p)
        evals += 1
        if v > best_v:
            best_p, best_v = p, v
    if best_p is None:
        # the grid may straddle a thin feasible set; look for any feasible point
        best_p = _find_feasible(k, lo, hi, cons, grid)
        if best_p is None:
            return SimplexResult(None, -math.inf, False, evals, "grid")
        best_v = f(best_p)
        evals += 1

    boxed = np.any(lo > 0) or np.any(hi < 1)
    if k == 1:
        return SimplexResult(best_p, best_v, True, evals, "grid")
    if not cons and not boxed:
        # softmax chart, anchored so the grid optimum is the starting point
        def chart(z):
            e = np.exp(np.concatenate([z, [0.0]]) - max(0.0, z.max()))
            return e / e.sum()
        z0 = np.log(np.clip(best_p[:-1], 1e-300, None)) - math.log(max(best_p[-1], 1e-300))
        z0 = np.clip(z0, -700, 700)
        res = minimize(lambda z: -f(chart(z)), z0, method="Nelder-Mead",
                       options={"xatol": 1e-12, "fatol": tol, "maxiter": 20_000, "maxfev": 40_000})
        evals += res.nfev
        p = chart(res.x)
        v = f(p)
        if v > best_v:
            return SimplexResult(p, v, True, evals, "grid+nelder_mead")
        return SimplexResult(best_p, best_v, True, evals, "grid")

    def full(y):
        return np.concatenate([y, [1.0 - y.sum()]])

    cl = [{"type": "ineq", "fun": (lambda y, i=i: full(y)[i] - lo[i])} for i in range(k)]
    cl += [{"type": "ineq", "fun": (lambda y, i=i: hi[i] - full(y)[i])} for i in range(k)]
    cl += [{"type": "ineq", "fun": (lambda y, c=c: c(np.clip(full(y), 0.0, 1.0)))} for c in cons]
    step = 1.0 / (resolution or default_resolution(k))
    res = minimize(lambda y: -f(np.clip(full(y), 0.0, 1.0)), best_p[:-1], method="COBYLA", constraints=cl,
                   options={"rhobeg": step, "tol": tol, "maxiter": 20_000, "catol": 1e-13})
    evals += res.nfev
    p = np.clip(full(res.x), 0.0, 1.0)
    p = p / p.sum()
    if feasible(p, 1e-10):
        v = f(p)
        if v > best_v:
            return SimplexResult(p, v, True, evals, "grid+cobyla")
    return SimplexResult(best_p, best_v, True, evals, "grid")


def _find_feasible(k, lo, hi, cons, grid):
    if not cons:
        return None
    score = lambda p: min([c(p) for c in cons] + list(p - lo) + list(hi - p))
    vals = np.array([score(p) for p in grid])
    p0 = grid[int(np.argmax(vals))]
    res = minimize(lambda y: -score(np.clip(np.concatenate([y, [1 - y.sum()]]), 0, 1)), p0[:-1],
                   method="Nelder-Mead", options={"xatol": 1e-13, "fatol": 1e-15})
    p = np.clip(np.concatenate([res.x, [1 - res.x.sum()]]), 0, 1)
    p = p / p.sum()
    return p if score(p) >= -1e-12 else None
