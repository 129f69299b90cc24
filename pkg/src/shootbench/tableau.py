"""Butcher tableaus: registry, algebraic checks, serialization.

The registry holds the eleven one-step tableaus used by the benchmark
(`trapezoidal`, `rk38`, `rk4`, `rk5`, `rk6`, `avf2`, `avf3`, `gl1`, `gl2`,
`lobatto3a`, `gl3`).  Multistep (`bdf4`, `bdf6`) and composite (`trbdf2`)
maps have no single tableau and are rejected with a clear error.

Order conditions are verified against the rooted-tree oracle in
:mod:`shootbench.trees`; symplecticity via the quadratic-invariant residual
S_ij = b_i a_ij + b_j a_ji - b_i b_j.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass

import numpy as np

from . import trees

__all__ = [
    "ButcherTableau", "SymplecticityResidual", "get_tableau", "tableau_names",
    "symplecticity_residual", "is_symplectic", "verify_order_conditions",
    "tableau_to_text", "tableau_from_text", "gauss_legendre_nodes",
]

_CONSISTENCY_TOL = 1e-12


@dataclass(frozen=True)
class ButcherTableau:
    """Coefficients (A, b, c) with advertised order and a display name."""

    name: str
    A: np.ndarray
    b: np.ndarray
    c: np.ndarray
    order: int

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        b = np.array(self.b, dtype=float)
        c = np.array(self.c, dtype=float)
        for arr in (A, b, c):
            arr.setflags(write=False)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        s = len(b)
        if A.shape != (s, s) or c.shape != (s,):
            raise ValueError(f"{self.name}: inconsistent shapes {A.shape}, {b.shape}, {c.shape}")
        if abs(b.sum() - 1.0) > _CONSISTENCY_TOL:
            raise ValueError(f"{self.name}: quadrature weights sum to {b.sum()!r}, not 1")
        rowsum = A.sum(axis=1)
        if np.max(np.abs(rowsum - c)) > _CONSISTENCY_TOL:
            raise ValueError(f"{self.name}: row sums {rowsum} do not match c {c}")
        if not (np.all(c >= -_CONSISTENCY_TOL) and np.all(c <= 1 + _CONSISTENCY_TOL)):
            raise ValueError(f"{self.name}: abscissae outside [0, 1]: {c}")
        if not 1 <= int(self.order) <= 6:
            raise ValueError(f"{self.name}: order {self.order} outside [1, 6]")

    @property
    def stages(self):
        return len(self.b)

    @property
    def explicit(self):
        return bool(np.all(np.triu(self.A) == 0.0))


@dataclass(frozen=True)
class SymplecticityResidual:
    S: np.ndarray
    max_abs: float


def symplecticity_residual(tab):
    """Residual of the quadratic-invariant condition, exactly symmetric."""
    b = tab.b
    BA = b[:, None] * tab.A
    S = BA + BA.T - np.outer(b, b)
    return SymplecticityResidual(S=S, max_abs=float(np.max(np.abs(S))))


def is_symplectic(tab, tol=1e-12):
    return symplecticity_residual(tab).max_abs <= tol


def verify_order_conditions(tab, up_to_order):
    """Residuals Phi(t) - 1/gamma(t) for every tree of order <= up_to_order.

    Returns a list of (tree_id, residual) pairs in canonical tree order.
    """
    if not 1 <= up_to_order <= 7:
        raise ValueError(f"up_to_order must be in [1, 7], got {up_to_order}")
    out = []
    for t in trees.trees_up_to(up_to_order):
        res = trees.elementary_weight(tab.A, tab.b, t) - 1.0 / trees.density(t)
        out.append((trees.tree_id(t), res))
    return out


def empirical_order(tab, tol=1e-11):
    """Largest p <= 7 with all order-<=p residuals below tol."""
    res = verify_order_conditions(tab, 7)
    p = 0
    for n in range(1, 8):
        level = [r for tid, r in res if int(tid.split(".")[0]) == n]
        if max(abs(r) for r in level) > tol:
            break
        p = n
    return p


# -- registry ---------------------------------------------------------------


def gauss_legendre_nodes(m):
    """Gauss-Legendre nodes/weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(m)
    return (x + 1.0) / 2.0, w / 2.0


def _gl1():
    return ButcherTableau("gl1", [[0.5]], [1.0], [0.5], order=2)


def _gl2():
    r = math.sqrt(3.0)
    A = [
        [0.25, (3.0 - 2.0 * r) / 12.0],
        [(3.0 + 2.0 * r) / 12.0, 0.25],
    ]
    c = [0.5 - r / 6.0, 0.5 + r / 6.0]
    return ButcherTableau("gl2", A, [0.5, 0.5], c, order=4)


def _gl3():
    r = math.sqrt(15.0)
    A = [
        [5.0 / 36.0, 2.0 / 9.0 - r / 15.0, 5.0 / 36.0 - r / 30.0],
        [5.0 / 36.0 + r / 24.0, 2.0 / 9.0, 5.0 / 36.0 - r / 24.0],
        [5.0 / 36.0 + r / 30.0, 2.0 / 9.0 + r / 15.0, 5.0 / 36.0],
    ]
    b = [5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0]
    c = [0.5 - r / 10.0, 0.5, 0.5 + r / 10.0]
    return ButcherTableau("gl3", A, b, c, order=6)


def _lobatto3a():
    A = [
        [0.0, 0.0, 0.0],
        [5.0 / 24.0, 1.0 / 3.0, -1.0 / 24.0],
        [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0],
    ]
    return ButcherTableau("lobatto3a", A, [1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0], [0.0, 0.5, 1.0], order=4)


def _trapezoidal():
    A = [[0.0, 0.0], [0.5, 0.5]]
    return ButcherTableau("trapezoidal", A, [0.5, 0.5], [0.0, 1.0], order=2)


def _avf(m):
    # chord-average map with m-point Gauss quadrature, in RK form:
    # stages sit at y_i = (1-c_i) x + c_i x_next, so A = outer(c, w), b = w.
    c, w = gauss_legendre_nodes(m)
    return ButcherTableau(f"avf{m}", np.outer(c, w), w, c, order=2)


def _rk4():
    A = [
        [0.0, 0.0, 0.0, 0.0],
        [0.5, 0.0, 0.0, 0.0],
        [0.0, 0.5, 0.0, 0.0],
        [0.0, 0.0, 1.0, 0.0],
    ]
    return ButcherTableau("rk4", A, [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0.0, 0.5, 0.5, 1.0], order=4)


def _rk38():
    A = [
        [0.0, 0.0, 0.0, 0.0],
        [1 / 3, 0.0, 0.0, 0.0],
        [-1 / 3, 1.0, 0.0, 0.0],
        [1.0, -1.0, 1.0, 0.0],
    ]
    return ButcherTableau("rk38", A, [1 / 8, 3 / 8, 3 / 8, 1 / 8], [0.0, 1 / 3, 2 / 3, 1.0], order=4)


def _rk5():
    # Dormand-Prince 5(4) propagating weights; the 5th-order weight on the
    # seventh (FSAL) stage is zero, so the map truncates to six stages.
    A = np.zeros((6, 6))
    A[1, 0] = 1 / 5
    A[2, :2] = [3 / 40, 9 / 40]
    A[3, :3] = [44 / 45, -56 / 15, 32 / 9]
    A[4, :4] = [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729]
    A[5, :5] = [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]
    b = [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84]
    c = [0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0]
    return ButcherTableau("rk5", A, b, c, order=5)


def _rk6():
    # Luther's 7-stage, order-6 explicit formula (sqrt(21) coefficients).
    q = math.sqrt(21.0)
    A = np.zeros((7, 7))
    A[1, 0] = 1.0
    A[2, :2] = [3 / 8, 1 / 8]
    A[3, :3] = [8 / 27, 2 / 27, 8 / 27]
    A[4, :4] = [
        3 * (3 * q - 7) / 392,
        -8 * (7 - q) / 392,
        48 * (7 - q) / 392,
        -3 * (21 - q) / 392,
    ]
    A[5, :5] = [
        -5 * (231 + 51 * q) / 1960,
        -40 * (7 + q) / 1960,
        -320 * q / 1960,
        3 * (21 + 121 * q) / 1960,
        392 * (6 + q) / 1960,
    ]
    A[6, :6] = [
        15 * (22 + 7 * q) / 180,
        120 / 180,
        40 * (7 * q - 5) / 180,
        -63 * (3 * q - 2) / 180,
        -14 * (49 + 9 * q) / 180,
        70 * (7 - q) / 180,
    ]
    b = [1 / 20, 0.0, 16 / 45, 0.0, 49 / 180, 49 / 180, 1 / 20]
    c = [0.0, 1.0, 1 / 2, 2 / 3, (7 - q) / 14, (7 + q) / 14, 1.0]
    return ButcherTableau("rk6", A, b, c, order=6)


_BUILDERS = {
    "trapezoidal": _trapezoidal,
    "rk38": _rk38,
    "rk4": _rk4,
    "rk5": _rk5,
    "rk6": _rk6,
    "avf2": lambda: _avf(2),
    "avf3": lambda: _avf(3),
    "gl1": _gl1,
    "gl2": _gl2,
    "lobatto3a": _lobatto3a,
    "gl3": _gl3,
}

_NO_TABLEAU = {
    "bdf4": "bdf4 is a linear multistep method; see shootbench.integrators",
    "bdf6": "bdf6 is a linear multistep method; see shootbench.integrators",
    "trbdf2": "trbdf2 is a composite two-substage map; see shootbench.integrators",
}

_REGISTRY = {}


def get_tableau(name):
    """Look up a one-step tableau by its registry name."""
    key = name.lower()
    if key in _NO_TABLEAU:
        raise KeyError(_NO_TABLEAU[key])
    if key not in _BUILDERS:
        raise KeyError(f"unknown tableau {name!r}; known: {sorted(_BUILDERS)}")
    if key not in _REGISTRY:
        _REGISTRY[key] = _BUILDERS[key]()
    return _REGISTRY[key]


def tableau_names():
    return sorted(_BUILDERS)


# -- serialization ----------------------------------------------------------


def _fmt(x):
    return np.format_float_scientific(x, precision=17) if x else "0"


def tableau_to_text(tab):
    """Human-readable key-value rendering, exact to the last bit."""
    buf = io.StringIO()
    print(f"name: {tab.name}", file=buf)
    print(f"order: {tab.order}", file=buf)
    print(f"stages: {tab.stages}", file=buf)
    print("c: " + " ".join(repr(float(x)) for x in tab.c), file=buf)
    print("b: " + " ".join(repr(float(x)) for x in tab.b), file=buf)
    for i, row in enumerate(tab.A):
        print(f"A{i + 1}: " + " ".join(repr(float(x)) for x in row), file=buf)
    return buf.getvalue()


def tableau_from_text(text):
    fields = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(":")
        fields[key.strip()] = rest.strip()
    try:
        name = fields["name"]
        order = int(fields["order"])
        stages = int(fields["stages"])
        c = [float(x) for x in fields["c"].split()]
        b = [float(x) for x in fields["b"].split()]
        A = [[float(x) for x in fields[f"A{i + 1}"].split()] for i in range(stages)]
    except KeyError as exc:
        raise ValueError(f"tableau document missing field {exc}") from exc
    return ButcherTableau(name, A, b, c, order=order)
