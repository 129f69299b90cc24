"""Leading-order local error of one-step methods via rooted-tree series.

The one-step error of a Runge-Kutta map expands over rooted trees: each tree
``t`` contributes ``h^order(t) / symmetry(t) * (weight - 1/density(t))``
times the elementary differential ``F(t)(x)``.  For a fourth-order method
the first surviving layer is the order-5 one, and that layer is what
:func:`principal_error_estimate` assembles.  Elementary differentials come
from nested directional derivatives of the right-hand side, evaluated with
the same jet arithmetic the rest of the package uses.
"""

from __future__ import annotations

import numpy as np

from . import trees as _trees
from .dynamics import scaled_ode
from .errors import NonFiniteDerivativeChain
from .jets import Jet, jet_space
from .trees import (LEAF, density, enumerate_trees, format_tree,
                    level_sequence, order, symmetry, tree_id, trees_up_to)

__all__ = [
    "LEAF", "enumerate_trees", "trees_up_to", "order", "density", "symmetry",
    "tree_id", "format_tree", "level_sequence", "elementary_weight",
    "elementary_differential", "principal_error_estimate",
    "principal_error_breakdown", "PRINCIPAL_ORDER",
]

# the estimate targets the first error layer of classic fourth-order methods
PRINCIPAL_ORDER = 5


def elementary_weight(tableau, tree):
    """Method weight of ``tree``: b-contraction of nested A-products."""
    return _trees.elementary_weight(tableau.A, tableau.b, tree)


def _differential(ode, x, u, tree, memo):
    got = memo.get(tree)
    if got is not None:
        return got
    if tree == LEAF:
        val = np.asarray(ode(x, u), dtype=float).reshape(-1)
    else:
        dirs = [_differential(ode, x, u, child, memo) for child in tree]
        m = len(dirs)
        space = jet_space((1,) * m)
        coeffs = [None] * space.dim
        coeffs[0] = x
        for gen, d in enumerate(dirs):
            seed = tuple(1 if g == gen else 0 for g in range(m))
            coeffs[space.index[seed]] = d
        out = ode(Jet(space, coeffs), u)
        val = out.coeff((1,) * m)
        if val.shape[-1] != ode.n_x:
            # structurally-zero mixed coefficient (e.g. bushy tree, linear field)
            val = np.broadcast_to(val, (ode.n_x,)).copy()
        val = val.reshape(-1)
    if not np.all(np.isfinite(val)):
        raise NonFiniteDerivativeChain(
            f"elementary differential of tree {format_tree(tree)} is non-finite"
        )
    memo[tree] = val
    return val


def elementary_differential(ode, x, u, tree):
    """F(tree)(x): nested directional derivatives of the field at (x, u).

    A leaf is the field value; an internal node with children t1..tm applies
    the m-th derivative of the field to the children's differentials.  The
    mixed derivative is read off one jet evaluation with m nilpotent
    generators seeded by the child vectors.
    """
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return _differential(ode, x, u, tree, {})


def principal_error_breakdown(tableau, ode, x, u, h, s):
    """Per-tree contributions behind :func:`principal_error_estimate`.

    Returns ``(rows, estimate)``; each row is a dict with the tree id and
    shape, symmetry, density, weight, residual, differential norm and the
    norm of the assembled contribution.  The field is dilated by ``s`` so
    the estimate lives on the normalized horizon.
    """
    if tableau.order < 4:
        raise ValueError(
            f"principal error layer is order {PRINCIPAL_ORDER}; a method of "
            f"order {tableau.order} < 4 has surviving lower-order terms"
        )
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    field = scaled_ode(ode, s)
    h_pow = float(h) ** PRINCIPAL_ORDER
    memo = {}
    estimate = np.zeros(ode.n_x)
    rows = []
    for tree in enumerate_trees(PRINCIPAL_ORDER):
        sigma = symmetry(tree)
        gamma = density(tree)
        weight = elementary_weight(tableau, tree)
        residual = weight - 1.0 / gamma
        diff = _differential(field, x, u, tree, memo)
        contribution = (h_pow * residual / sigma) * diff
        estimate += contribution
        rows.append({
            "tree": tree_id(tree),
            "shape": format_tree(tree),
            "sigma": sigma,
            "gamma": gamma,
            "weight": weight,
            "residual": residual,
            "differential_norm": float(np.linalg.norm(diff)),
            "contribution_norm": float(np.linalg.norm(contribution)),
        })
    return rows, estimate


def principal_error_estimate(tableau, ode, x, u, h, s):
    """Leading h^5 term of the one-step error at (x, u) for the dilated field.

    Exact-flow coefficients 1/density enter with a minus sign, so an
    order-5-or-better tableau returns zeros up to roundoff.
    """
    _, estimate = principal_error_breakdown(tableau, ode, x, u, h, s)
    return estimate
