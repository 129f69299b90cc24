"""Forward-mode derivatives through truncated polynomial ("jet") arithmetic.

A :class:`JetSpace` fixes nilpotent generators ``e_0 .. e_{g-1}`` with
per-generator degree caps (and an optional total-degree cap); a :class:`Jet`
is an element of ``R[e_0..e_{g-1}] / (e_i^{cap_i+1}, total deg > cap)`` whose
coefficients are numpy arrays.  Three usage patterns cover the package:

* one generator capped at 1, directions batched in a leading coefficient
  axis: plain Jacobians / gradients;
* one generator capped at K: truncated time-Taylor coefficients of an ODE
  flow (derivative chains);
* several generators capped at 1: multilinear derivative contractions
  f^{(k)}(x)[v_1, .., v_k] (coefficient of e_1*..*e_k).

Coefficient arrays broadcast like numpy; by convention the last axis holds
vector components and scalars keep a trailing axis of size 1, so mixed
scalar/vector arithmetic broadcasts without surprises.  The ``a*``-prefixed
helpers at the bottom dispatch on Jet vs ndarray, letting one generic
implementation of a vector field serve plain evaluation and every derivative
mode.
"""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

__all__ = [
    "JetSpace", "Jet", "jet_space",
    "asqrt", "asum", "adot", "anorm", "smooth_norm", "acat", "acomp",
    "amatvec", "across",
]


class JetSpace:
    """Basis, multiplication table and integration tables for one truncation."""

    def __init__(self, caps, total_cap=None):
        caps = tuple(int(c) for c in caps)
        if not caps or any(c < 0 for c in caps):
            raise ValueError(f"invalid generator caps {caps}")
        if total_cap is None:
            total_cap = sum(caps)
        self.caps = caps
        self.total_cap = int(total_cap)
        basis = [
            e
            for e in itertools.product(*(range(c + 1) for c in caps))
            if sum(e) <= self.total_cap
        ]
        basis.sort(key=lambda e: (sum(e), e))
        self.basis = basis
        self.dim = len(basis)
        self.index = {e: i for i, e in enumerate(basis)}
        # max attainable total degree (nilpotency order minus one)
        self.max_degree = max(sum(e) for e in basis)
        table = []
        for i, ea in enumerate(basis):
            for j, eb in enumerate(basis):
                e = tuple(x + y for x, y in zip(ea, eb))
                k = self.index.get(e)
                if k is not None:
                    table.append((i, j, k))
        self._mul_table = table

    @lru_cache(maxsize=None)
    def _integration_table(self, gen):
        """(src, dst, 1/(deg+1)) triples for the antiderivative in ``gen``."""
        out = []
        for i, e in enumerate(self.basis):
            e2 = tuple(d + 1 if g == gen else d for g, d in enumerate(e))
            j = self.index.get(e2)
            if j is not None:
                out.append((i, j, 1.0 / (e[gen] + 1)))
        return tuple(out)

    def __repr__(self):
        return f"JetSpace(caps={self.caps}, total_cap={self.total_cap})"


@lru_cache(maxsize=None)
def jet_space(caps, total_cap=None):
    """Memoized JetSpace constructor."""
    return JetSpace(caps, total_cap)


def _atleast_1d(value):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    return arr


class Jet:
    """Element of a JetSpace with numpy coefficient arrays.

    ``coeffs[i]`` is the coefficient of ``space.basis[i]``; ``None`` marks a
    structural zero.  Construction does not copy arrays.
    """

    __slots__ = ("space", "coeffs")
    __array_priority__ = 1000.0  # make ndarray <op> Jet defer to Jet

    def __init__(self, space, coeffs):
        self.space = space
        self.coeffs = coeffs

    # -- constructors -------------------------------------------------------

    @classmethod
    def const(cls, space, value):
        coeffs = [None] * space.dim
        coeffs[0] = _atleast_1d(value)
        return cls(space, coeffs)

    @classmethod
    def variable(cls, space, value, gen, direction=None):
        """``value + e_gen * direction`` (direction defaults to 1)."""
        coeffs = [None] * space.dim
        coeffs[0] = _atleast_1d(value)
        seed = tuple(1 if g == gen else 0 for g in range(len(space.caps)))
        if direction is None:
            direction = np.ones_like(coeffs[0])
        coeffs[space.index[seed]] = _atleast_1d(direction)
        return cls(space, coeffs)

    # -- accessors ----------------------------------------------------------

    @property
    def value(self):
        c0 = self.coeffs[0]
        return np.zeros(1) if c0 is None else c0

    def coeff(self, exponent):
        c = self.coeffs[self.space.index[tuple(exponent)]]
        return np.zeros(1) if c is None else c

    # -- ring operations ----------------------------------------------------

    def _coerce(self, other):
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError("jets from different spaces")
            return other
        return None

    def __add__(self, other):
        o = self._coerce(other)
        if o is None:
            out = list(self.coeffs)
            out[0] = _atleast_1d(other) if out[0] is None else out[0] + other
            return Jet(self.space, out)
        out = []
        for a, b in zip(self.coeffs, o.coeffs):
            if a is None:
                out.append(b)
            elif b is None:
                out.append(a)
            else:
                out.append(a + b)
        return Jet(self.space, out)

    __radd__ = __add__

    def __neg__(self):
        return Jet(self.space, [None if c is None else -c for c in self.coeffs])

    def __sub__(self, other):
        return self + (-other if isinstance(other, Jet) else -np.asarray(other, dtype=float))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o = self._coerce(other)
        if o is None:
            other = np.asarray(other, dtype=float)
            return Jet(self.space, [None if c is None else c * other for c in self.coeffs])
        out = [None] * self.space.dim
        a, b = self.coeffs, o.coeffs
        for i, j, k in self.space._mul_table:
            if a[i] is None or b[j] is None:
                continue
            term = a[i] * b[j]
            out[k] = term if out[k] is None else out[k] + term
        return Jet(self.space, out)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    # -- analytic scalar functions ------------------------------------------

    def _apply_series(self, phi):
        """sum_d phi[d] * N^d with N = self - value (nilpotent), via Horner."""
        space = self.space
        nil = list(self.coeffs)
        nil[0] = None
        n_jet = Jet(space, nil)
        deg = space.max_degree
        acc = Jet.const(space, phi[deg])
        for d in range(deg - 1, -1, -1):
            acc = acc * n_jet + phi[d]
        return acc

    def reciprocal(self):
        c0 = self.value
        deg = self.space.max_degree
        phi = [1.0 / c0]
        for d in range(deg):
            phi.append(-phi[-1] / c0)
        return self._apply_series(phi)

    def sqrt(self):
        c0 = self.value
        deg = self.space.max_degree
        phi = [np.sqrt(c0)]
        for d in range(deg):
            # d(c^(1/2-d))/dc factor folded into the Taylor coefficient
            phi.append(phi[-1] * (0.5 - d) / ((d + 1) * c0))
        return self._apply_series(phi)

    def __pow__(self, p):
        if isinstance(p, (int, np.integer)):
            if p < 0:
                return self.reciprocal() ** (-p)
            acc = Jet.const(self.space, np.ones(1))
            base = self
            n = int(p)
            while n:
                if n & 1:
                    acc = acc * base
                base = base * base
                n >>= 1
            return acc
        c0 = self.value
        deg = self.space.max_degree
        phi = [c0 ** float(p)]
        for d in range(deg):
            phi.append(phi[-1] * (float(p) - d) / ((d + 1) * c0))
        return self._apply_series(phi)

    # -- array-like structure -----------------------------------------------

    def __getitem__(self, key):
        if isinstance(key, (int, np.integer)):
            key = slice(key, None if key == -1 else key + 1)
        return Jet(self.space, [None if c is None else c[..., key] for c in self.coeffs])

    def sum_components(self):
        return Jet(
            self.space,
            [None if c is None else c.sum(axis=-1, keepdims=True) for c in self.coeffs],
        )

    # -- calculus helpers -----------------------------------------------------

    def integrate(self, gen):
        """Antiderivative in generator ``gen`` (degrees above cap drop off)."""
        out = [None] * self.space.dim
        for src, dst, scale in self.space._integration_table(gen):
            c = self.coeffs[src]
            if c is not None:
                out[dst] = c * scale
        return Jet(self.space, out)

    def __repr__(self):
        live = {self.space.basis[i]: c.shape for i, c in enumerate(self.coeffs) if c is not None}
        return f"Jet({self.space}, nonzero={live})"


# -- generic (Jet | ndarray) helpers ----------------------------------------


def _is_jet(x):
    return isinstance(x, Jet)


def asqrt(x):
    return x.sqrt() if _is_jet(x) else np.sqrt(x)


def asum(x):
    """Sum over the component (last) axis, keeping the axis."""
    if _is_jet(x):
        return x.sum_components()
    return np.sum(x, axis=-1, keepdims=True)


def adot(a, b):
    return asum(a * b)


def anorm(v):
    return asqrt(adot(v, v))


def smooth_norm(v, eps):
    """sqrt(v.v + eps^2) - eps: agrees with |v| to O(eps), smooth at 0."""
    return asqrt(adot(v, v) + eps * eps) - eps


def acomp(x, i):
    """Component i as a size-1 trailing axis (works for Jet and ndarray)."""
    sl = slice(i, None) if i == -1 else slice(i, i + 1)
    return x[..., sl] if not _is_jet(x) else x[sl]


def acat(parts):
    """Concatenate along the component axis; promotes ndarrays to Jets."""
    space = None
    for p in parts:
        if _is_jet(p):
            space = p.space
            break
    if space is None:
        return np.concatenate([_atleast_1d(p) for p in parts], axis=-1)
    jets = [p if _is_jet(p) else Jet.const(space, p) for p in parts]
    widths = []
    for j in jets:
        live = [c for c in j.coeffs if c is not None]
        widths.append(live[0].shape[-1] if live else 1)
    out = []
    for i in range(space.dim):
        cs = [j.coeffs[i] for j in jets]
        if all(c is None for c in cs):
            out.append(None)
            continue
        # golden rule: a None coefficient is a zero of the right shape
        batch = np.broadcast_shapes(*[c.shape[:-1] for c in cs if c is not None])
        filled = [
            np.zeros(batch + (w,)) if c is None else np.broadcast_to(c, batch + (c.shape[-1],))
            for c, w in zip(cs, widths)
        ]
        out.append(np.concatenate(filled, axis=-1))
    return Jet(space, out)


def amatvec(mat, x):
    """Constant-matrix times (possibly jet-valued) vector on the last axis."""
    mat = np.asarray(mat, dtype=float)
    if _is_jet(x):
        return Jet(
            x.space,
            [None if c is None else np.einsum("ij,...j->...i", mat, c) for c in x.coeffs],
        )
    return np.einsum("ij,...j->...i", mat, x)


def across(a, b):
    """Cross product of 3-vectors on the last axis, jet-compatible."""
    a1, a2, a3 = acomp(a, 0), acomp(a, 1), acomp(a, 2)
    b1, b2, b3 = acomp(b, 0), acomp(b, 1), acomp(b, 2)
    return acat([a2 * b3 - a3 * b2, a3 * b1 - a1 * b3, a1 * b2 - a2 * b1])
