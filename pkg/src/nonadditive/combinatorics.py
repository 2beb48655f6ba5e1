"""Word enumeration and symbol-count compositions."""
from __future__ import annotations

import itertools
import math

import numpy as np
from scipy.special import gammaln


def all_words(symbols: int, n: int) -> np.ndarray:
    """All words of length n in lexicographic order (first symbol most
    significant), shape ``(symbols**n, n)``."""
    idx = np.arange(symbols ** n, dtype=np.int64)
    powers = symbols ** np.arange(n - 1, -1, -1, dtype=np.int64)
    return (idx[:, None] // powers) % symbols


def word_index(words, symbols: int) -> np.ndarray:
    words = np.asarray(words, dtype=np.int64)
    n = words.shape[-1]
    return words @ (symbols ** np.arange(n - 1, -1, -1, dtype=np.int64))


def compositions(n: int, k: int) -> np.ndarray:
    """All count vectors (c_0, ..., c_{k-1}) >= 0 summing to n."""
    if k == 1:
        return np.array([[n]], dtype=np.int64)
    rows = []
    for bars in itertools.combinations(range(n + k - 1), k - 1):
        prev, row = -1, []
        for b in bars:
            row.append(b - prev - 1)
            prev = b
        row.append(n + k - 2 - prev)
        rows.append(row)
    return np.array(rows, dtype=np.int64)


def log_multinomial(counts) -> np.ndarray:
    counts = np.asarray(counts)
    n = counts.sum(axis=-1)
    return gammaln(n + 1) - gammaln(counts + 1).sum(axis=-1)


def composition_count(n: int, k: int) -> int:
    return math.comb(n + k - 1, k - 1)
