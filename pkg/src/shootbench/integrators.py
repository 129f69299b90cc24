"""One-step numerical maps and multistep defects for the 14 benchmark methods.

Explicit Runge-Kutta maps use the closed-form stage recursion; implicit
one-step maps solve their stage system by a damped full Newton iteration with
analytic stage Jacobians (initial guess: current state replicated).  TR-BDF2
composes a trapezoidal substage with a BDF2 substage over one interval; BDF4
and BDF6 are mesh-node multistep relations whose startup intervals reuse the
same-order Gauss-Legendre map.

``irk_step_jet``/``explicit_update_generic`` are jet-generic versions of the
maps used by the transcription layer to differentiate through a step.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from . import dynamics
from .errors import (DegenerateQuaternion, InsufficientHistory,
                     NewtonDivergence, UnsupportedCombination)
from .jets import Jet
from .tableau import get_tableau

__all__ = [
    "StepResult", "IntegratorMethod", "get_method", "method_names",
    "bdf_defect", "avf_step", "step_projected", "project_quaternion",
    "solve_stages", "explicit_update_generic", "irk_step_jet",
    "BDF_COEFFS", "TRBDF2_GAMMA",
]

#: classic BDF-k coefficients: alpha[0] * y_{n+1} + ... + alpha[k] * y_{n+1-k}
#: = h * f(y_{n+1})
BDF_COEFFS = {
    4: np.array([25.0 / 12.0, -4.0, 3.0, -4.0 / 3.0, 1.0 / 4.0]),
    6: np.array([147.0 / 60.0, -6.0, 15.0 / 2.0, -20.0 / 3.0, 15.0 / 4.0,
                 -6.0 / 5.0, 1.0 / 6.0]),
}

TRBDF2_GAMMA = 2.0 - np.sqrt(2.0)


class StepResult(NamedTuple):
    x_next: np.ndarray
    stages: np.ndarray | None
    info: dict


# -- stage solves -------------------------------------------------------------


def _explicit_stages(tab, ode, x, u, hs):
    A, s = tab.A, tab.stages
    Y = np.empty((s, ode.n_x))
    F = np.empty((s, ode.n_x))
    for i in range(s):
        y = x.copy()
        for j in range(i):
            if A[i, j] != 0.0:
                y += (hs * A[i, j]) * F[j]
        Y[i] = y
        F[i] = ode(y, u, check=True)
    return Y, F


def _implicit_stages(tab, ode, x, u, hs, tol, cap):
    """Damped Newton on the stacked stage-value equations."""
    A, m, n = tab.A, tab.stages, ode.n_x
    Ub = np.broadcast_to(u, (m, ode.n_u))
    Y = np.broadcast_to(x, (m, n)).copy()
    eye = np.eye(m * n)

    def residual(Yc):
        F = ode(Yc, Ub)
        return Yc - x - hs * (A @ F), F

    R, F = residual(Y)
    res = float(np.max(np.abs(R)))
    its = 0
    while res > tol:
        if its >= cap or not np.isfinite(res):
            raise NewtonDivergence(
                f"{tab.name}: stage Newton stalled at residual {res:.3e}",
                residual=res, iterations=its)
        fx = ode.jac_x(Y, Ub)  # (m, n, n)
        M = eye.copy()
        for i in range(m):
            for j in range(m):
                if A[i, j] != 0.0:
                    M[i * n:(i + 1) * n, j * n:(j + 1) * n] -= (hs * A[i, j]) * fx[j]
        delta = np.linalg.solve(M, R.reshape(-1)).reshape(m, n)
        step_scale = 1.0
        for _ in range(8):
            Y_try = Y - step_scale * delta
            R_try, F_try = residual(Y_try)
            res_try = float(np.max(np.abs(R_try)))
            if np.isfinite(res_try) and (res_try < res or res_try <= tol):
                break
            step_scale *= 0.5
        Y, R, F, res = Y_try, R_try, F_try, res_try
        its += 1
    return Y, F, its, res


def solve_stages(tab, ode, x, u, hs, tol=1e-12, cap=50):
    """Stage values/derivatives of one RK step; explicit tableaus short-cut
    to forward substitution (the triangular solve)."""
    if tab.explicit:
        Y, F = _explicit_stages(tab, ode, x, u, hs)
        return Y, F, 0, 0.0
    return _implicit_stages(tab, ode, x, u, hs, tol, cap)


# -- jet-generic step kernels --------------------------------------------------


def explicit_update_generic(tab, f, x, u, hs):
    """Explicit RK update and stage values, generic over jets.

    ``hs`` may be a Jet (time dilation as an unknown).  Returns
    (x_next, [stage values], [stage derivatives]).
    """
    A, b = tab.A, tab.b
    stages, derivs = [], []
    for i in range(tab.stages):
        y = x
        for j in range(i):
            if A[i, j] != 0.0:
                y = y + (hs * A[i, j]) * derivs[j]
        stages.append(y)
        derivs.append(f(y, u))
    x_next = x
    for j in range(tab.stages):
        if b[j] != 0.0:
            x_next = x_next + (hs * b[j]) * derivs[j]
    return x_next, stages, derivs


def _amix(mat, x):
    """Constant matrix applied along the stage axis (-2), jet-compatible."""
    if isinstance(x, Jet):
        return Jet(x.space, [
            None if c is None else np.einsum("ij,...jk->...ik", mat, c)
            for c in x.coeffs
        ])
    return np.einsum("ij,...jk->...ik", mat, x)


def irk_step_jet(tab, ode, x, u, hs, tol=1e-12, cap=50):
    """Implicit RK update as a function of jet inputs.

    Solves the real stage system by Newton, then lifts the nilpotent part by
    iterating Newton updates with the frozen real-point stage Jacobian (one
    iteration per total jet degree).  Plain-array inputs give a plain step.
    """
    jet_in = [v for v in (x, u, hs) if isinstance(v, Jet)]
    x0 = x.value[..., :] if isinstance(x, Jet) else np.asarray(x, dtype=float)
    u0 = u.value[..., :] if isinstance(u, Jet) else np.asarray(u, dtype=float)
    hs0 = np.asarray(hs.value if isinstance(hs, Jet) else hs, dtype=float).item()
    if x0.ndim != 1:
        raise ValueError("irk_step_jet expects a single state")

    Y0, F0, its, res = _implicit_stages(tab, ode, x0, u0, hs0, tol, cap)
    if not jet_in:
        x_next = x0 + hs0 * (tab.b @ F0)
        return x_next, Y0, {"newton_iterations": its, "residual": res}

    space = jet_in[0].space
    m, n = tab.stages, ode.n_x
    fx = ode.jac_x(Y0, np.broadcast_to(u0, (m, ode.n_u)))
    M = np.eye(m * n)
    for i in range(m):
        for j in range(m):
            if tab.A[i, j] != 0.0:
                M[i * n:(i + 1) * n, j * n:(j + 1) * n] -= (hs0 * tab.A[i, j]) * fx[j]
    lu = lu_factor(M)

    def stagewise(v):
        """Insert a broadcast stage axis before the component axis of a jet."""
        if not isinstance(v, Jet):
            return v
        out = []
        for c in v.coeffs:
            if c is None:
                out.append(None)
                continue
            target = c.shape[:-1] + (m, c.shape[-1])
            out.append(np.broadcast_to(c[..., None, :], target))
        return Jet(space, out)

    def solve_jet(rhs):
        out = []
        for c in rhs.coeffs:
            if c is None:
                out.append(None)
                continue
            batch = c.shape[:-2]
            sol = lu_solve(lu, c.reshape(-1, m * n).T).T.reshape(*batch, m, n)
            out.append(sol)
        return Jet(rhs.space, out)

    def stage_contract(weights, jet):
        return Jet(space, [
            None if c is None else np.einsum("j,...jk->...k", weights, c)
            for c in jet.coeffs
        ])

    x_st, u_st, hs_st = stagewise(x), stagewise(u), stagewise(hs)
    Yj = Jet.const(space, Y0)
    for _ in range(space.max_degree):
        R = Yj - x_st - hs_st * _amix(tab.A, ode.f(Yj, u_st))
        Yj = Yj - solve_jet(R)
    Fj = ode.f(Yj, u_st)
    x_next = x + hs * stage_contract(tab.b, Fj)
    return x_next, Yj, {"newton_iterations": its, "residual": res}


# -- method descriptors --------------------------------------------------------


class IntegratorMethod:
    """Descriptor + step/propagate implementation for one benchmark method.

    kind: explicit_rk | compact_irk | lifted_irk | trbdf2 | bdf
    """

    def __init__(self, name, kind, order, reported_stages, tableau=None,
                 bdf_order=None, startup=None, implicit=None):
        self.name = name
        self.kind = kind
        self.order = order
        self.reported_stages = reported_stages
        self.tableau = tableau
        self.bdf_order = bdf_order
        self.startup = startup
        self.implicit = (kind != "explicit_rk") if implicit is None else implicit

    @property
    def lifted_stage_count(self):
        return self.tableau.stages if self.kind == "lifted_irk" else 0

    @property
    def extra_node_count(self):
        return 1 if self.kind == "trbdf2" else 0

    @property
    def is_multistep(self):
        return self.kind == "bdf"

    @property
    def symplectic(self):
        from .tableau import is_symplectic
        return self.tableau is not None and is_symplectic(self.tableau)

    # -- stepping -------------------------------------------------------------

    def step(self, ode, x, u, h, s, newton_tol=1e-12, newton_cap=50):
        """One map application over a normalized interval of width h."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        hs = float(h) * float(s)
        if self.kind == "explicit_rk":
            Y, F = _explicit_stages(self.tableau, ode, x, u, hs)
            x_next = x + hs * (self.tableau.b @ F)
            return StepResult(x_next, Y, {"newton_iterations": 0, "residual": 0.0})
        if self.kind in ("compact_irk", "lifted_irk"):
            Y, F, its, res = _implicit_stages(self.tableau, ode, x, u, hs,
                                              newton_tol, newton_cap)
            x_next = x + hs * (self.tableau.b @ F)
            return StepResult(x_next, Y, {"newton_iterations": its, "residual": res})
        if self.kind == "trbdf2":
            return self._step_trbdf2(ode, x, u, hs, newton_tol, newton_cap)
        raise UnsupportedCombination(
            f"{self.name} is a multistep method; use propagate() or bdf_defect()")

    def _step_trbdf2(self, ode, x, u, hs, tol, cap):
        g = TRBDF2_GAMMA
        fx0 = ode(x, u, check=True)

        def newton_scalar(res_fn, jac_fn, guess):
            y = guess.copy()
            r = res_fn(y)
            res = float(np.max(np.abs(r)))
            its = 0
            while res > tol:
                if its >= cap or not np.isfinite(res):
                    raise NewtonDivergence(f"trbdf2 substage stalled at {res:.3e}",
                                           residual=res, iterations=its)
                delta = np.linalg.solve(jac_fn(y), r)
                scale = 1.0
                for _ in range(8):
                    y_try = y - scale * delta
                    r_try = res_fn(y_try)
                    res_try = float(np.max(np.abs(r_try)))
                    if np.isfinite(res_try) and (res_try < res or res_try <= tol):
                        break
                    scale *= 0.5
                y, r, res = y_try, r_try, res_try
                its += 1
            return y, its, res

        eye = np.eye(ode.n_x)
        # trapezoidal substage over [0, gamma*h]
        mid_res = lambda y: y - x - 0.5 * g * hs * (fx0 + ode(y, u))
        mid_jac = lambda y: eye - 0.5 * g * hs * ode.jac_x(y, u)
        x_mid, it1, r1 = newton_scalar(mid_res, mid_jac, x)
        # BDF2 substage over [gamma*h, h] using x and x_mid as history
        c1 = 1.0 / (g * (2.0 - g))
        c2 = (1.0 - g) ** 2 / (g * (2.0 - g))
        c3 = (1.0 - g) / (2.0 - g)
        end_res = lambda y: y - c1 * x_mid + c2 * x - c3 * hs * ode(y, u)
        end_jac = lambda y: eye - c3 * hs * ode.jac_x(y, u)
        x_next, it2, r2 = newton_scalar(end_res, end_jac, x_mid)
        stages = np.stack([x_mid, x_next])
        return StepResult(x_next, stages,
                          {"newton_iterations": it1 + it2, "residual": max(r1, r2)})

    def propagate(self, ode, x0, U, h, s, newton_tol=1e-12, newton_cap=50,
                  project=False):
        """Map iterates over the whole control sequence; returns (N, n_x)."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        n_int = U.shape[0]
        X = np.empty((n_int + 1, ode.n_x))
        X[0] = np.asarray(x0, dtype=float)
        if self.kind != "bdf":
            for k in range(n_int):
                result = self.step(ode, X[k], U[k], h, s, newton_tol, newton_cap)
                X[k + 1] = project_quaternion(ode, result.x_next) if project else result.x_next
            return X
        if project:
            raise UnsupportedCombination("projection of a multistep map is not defined")
        startup = get_method(self.startup)
        k0 = self.bdf_order - 1
        for k in range(min(k0, n_int)):
            X[k + 1] = startup.step(ode, X[k], U[k], h, s, newton_tol, newton_cap).x_next
        alphas = BDF_COEFFS[self.bdf_order]
        hs = float(h) * float(s)
        eye = np.eye(ode.n_x)
        for k in range(k0, n_int):
            history = X[k + 1 - self.bdf_order:k + 1]
            rhs = alphas[1:][::-1] @ history  # alpha_j pairs with X[k+1-j]
            y = X[k].copy()
            res_fn = lambda y: alphas[0] * y + rhs - hs * ode(y, U[k])
            r = res_fn(y)
            res = float(np.max(np.abs(r)))
            its = 0
            while res > newton_tol:
                if its >= newton_cap or not np.isfinite(res):
                    raise NewtonDivergence(f"{self.name} node Newton stalled at {res:.3e}",
                                           residual=res, iterations=its)
                Mj = alphas[0] * eye - hs * ode.jac_x(y, U[k])
                y = y - np.linalg.solve(Mj, r)
                r = res_fn(y)
                res = float(np.max(np.abs(r)))
                its += 1
            X[k + 1] = y
        return X


def project_quaternion(ode, x, tol=1e-8):
    """Renormalize the quaternion block of a state; degenerate norms raise."""
    if ode.n_x == dynamics.STATE_DIM:
        qs = dynamics.QUAT
    elif ode.n_x == 4:
        qs = slice(0, 4)
    else:
        raise UnsupportedCombination(f"no quaternion block in a {ode.n_x}-state ode")
    q = x[qs]
    nrm = float(np.linalg.norm(q))
    if nrm <= tol:
        raise DegenerateQuaternion(f"quaternion norm {nrm:.3e} <= {tol}")
    out = x.copy()
    out[qs] = q / nrm
    return out


def step_projected(method, ode, x, u, h, s, newton_tol=1e-12, newton_cap=50):
    """Map step followed by quaternion renormalization."""
    result = method.step(ode, x, u, h, s, newton_tol, newton_cap)
    return StepResult(project_quaternion(ode, result.x_next), result.stages, result.info)


# -- multistep defect and chord-average step -----------------------------------


def bdf_defect(order, ode, history, u, h, s, x_next):
    """BDF-``order`` relation residual at one mesh node.

    ``history`` holds exactly ``order`` prior node states in ascending time
    order; zero defect means the relation is satisfied.
    """
    if order not in BDF_COEFFS:
        raise UnsupportedCombination(f"BDF order {order} not in {sorted(BDF_COEFFS)}")
    history = np.asarray(history, dtype=float)
    if history.shape != (order, ode.n_x):
        raise InsufficientHistory(
            f"BDF{order} needs {order} prior states, got shape {history.shape}")
    alphas = BDF_COEFFS[order]
    acc = alphas[0] * x_next
    for j in range(1, order + 1):
        acc = acc + alphas[j] * history[order - j]
    return acc - (float(h) * float(s)) * ode(x_next, u)


def avf_step(ode, x, u, h, s, points=2, newton_tol=1e-12, newton_cap=50):
    """Chord-average (Gauss-quadrature averaged field) implicit step."""
    method = get_method(f"avf{points}")
    return method.step(ode, x, u, h, s, newton_tol, newton_cap)


# -- registry -------------------------------------------------------------------


def _build_registry():
    reg = {}

    def add(m):
        reg[m.name] = m

    add(IntegratorMethod("bdf4", "bdf", 4, 1, bdf_order=4, startup="gl2"))
    add(IntegratorMethod("bdf6", "bdf", 6, 1, bdf_order=6, startup="gl3"))
    add(IntegratorMethod("trapezoidal", "compact_irk", 2, 1, get_tableau("trapezoidal")))
    add(IntegratorMethod("rk38", "explicit_rk", 4, 4, get_tableau("rk38")))
    add(IntegratorMethod("rk4", "explicit_rk", 4, 4, get_tableau("rk4")))
    add(IntegratorMethod("rk5", "explicit_rk", 5, 6, get_tableau("rk5")))
    add(IntegratorMethod("rk6", "explicit_rk", 6, 7, get_tableau("rk6")))
    add(IntegratorMethod("avf2", "compact_irk", 2, 2, get_tableau("avf2")))
    add(IntegratorMethod("avf3", "compact_irk", 2, 3, get_tableau("avf3")))
    add(IntegratorMethod("gl1", "compact_irk", 2, 1, get_tableau("gl1")))
    add(IntegratorMethod("trbdf2", "trbdf2", 2, 2))
    add(IntegratorMethod("gl2", "lifted_irk", 4, 2, get_tableau("gl2")))
    add(IntegratorMethod("lobatto3a", "lifted_irk", 4, 3, get_tableau("lobatto3a")))
    add(IntegratorMethod("gl3", "lifted_irk", 6, 3, get_tableau("gl3")))
    return reg


_REGISTRY = _build_registry()


def get_method(name):
    key = str(name).lower()
    if key not in _REGISTRY:
        raise KeyError(f"unknown integrator {name!r}; known: {method_names()}")
    return _REGISTRY[key]


def method_names():
    """All 14 method names in benchmark table order."""
    return ["bdf4", "bdf6", "trapezoidal", "rk38", "rk4", "rk5", "rk6",
            "avf2", "avf3", "gl1", "trbdf2", "gl2", "lobatto3a", "gl3"]
