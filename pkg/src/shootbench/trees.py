"""Rooted trees for Runge-Kutta order theory.

A tree is a nested tuple: ``()`` is the single node, and ``(t1, .., tk)`` is
a root whose children are the canonical subtrees ``t1 <= .. <= tk`` (tuples
compare lexicographically, which makes the representation canonical).
Density and symmetry are computed recursively from the definitions, not
hard-coded, so this module doubles as an independent oracle for the tableau
order conditions.
"""

from __future__ import annotations

from collections import Counter
from functools import lru_cache
from math import factorial

import numpy as np

__all__ = [
    "LEAF", "enumerate_trees", "trees_up_to", "order", "density", "symmetry",
    "level_sequence", "format_tree", "tree_id", "elementary_weight",
]

LEAF = ()

MAX_ORDER = 10  # enumeration guard; the package itself needs <= 6


def order(tree):
    """Number of nodes."""
    return 1 + sum(order(c) for c in tree)


@lru_cache(maxsize=None)
def _forests(total, pool):
    """Multisets (sorted tuples) from ``pool`` whose orders sum to ``total``.

    ``pool`` is a tuple of canonical trees sorted ascending; multisets are
    built with non-decreasing pool indices to avoid duplicates.
    """
    out = []

    def rec(remaining, start, acc):
        if remaining == 0:
            out.append(tuple(acc))
            return
        for i in range(start, len(pool)):
            k = order(pool[i])
            if k > remaining:
                continue
            acc.append(pool[i])
            rec(remaining - k, i, acc)
            acc.pop()

    rec(total, 0, [])
    return out


@lru_cache(maxsize=None)
def enumerate_trees(n):
    """All rooted trees with exactly ``n`` nodes, canonically ordered."""
    if not 1 <= n <= MAX_ORDER:
        raise ValueError(f"tree order must be in [1, {MAX_ORDER}], got {n}")
    if n == 1:
        return (LEAF,)
    pool = tuple(t for m in range(1, n) for t in enumerate_trees(m))
    found = {tuple(sorted(f)) for f in _forests(n - 1, pool)}
    return tuple(sorted(found, key=level_sequence))


def trees_up_to(n):
    """Trees of order 1..n as a flat tuple (ascending order, canonical)."""
    return tuple(t for m in range(1, n + 1) for t in enumerate_trees(m))


def density(tree):
    """gamma(t): order(t) * prod(gamma over children)."""
    g = order(tree)
    for c in tree:
        g *= density(c)
    return g


def symmetry(tree):
    """sigma(t): prod over distinct children classes sigma(c)^m * m!."""
    s = 1
    for child, mult in Counter(tree).items():
        s *= symmetry(child) ** mult * factorial(mult)
    return s


def level_sequence(tree, depth=0):
    """Depth list in DFS order, children visited by descending subsequence."""
    seqs = sorted((level_sequence(c, depth + 1) for c in tree), reverse=True)
    out = [depth]
    for s in seqs:
        out.extend(s)
    return out


def format_tree(tree):
    """Compact bracket rendering: 'o' leaf, '[..]' internal node."""
    if tree == LEAF:
        return "o"
    return "[" + "".join(format_tree(c) for c in tree) + "]"


def tree_id(tree):
    """Stable id '<order>.<index>' within the canonical enumeration."""
    n = order(tree)
    return f"{n}.{enumerate_trees(n).index(tree) + 1}"


def elementary_weight(A, b, tree):
    """Phi(t) = b . phi(t) with phi the stage weight vector of ``tree``."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)

    def phi(t):
        out = np.ones(len(b))
        for c in t:
            out = out * (A @ phi(c))
        return out

    return float(b @ phi(tree))
