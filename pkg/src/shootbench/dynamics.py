"""Rigid 6-DOF rocket dynamics with thrust control and body aerodynamics.

State layout (14 components): mass, inertial position (3), inertial velocity
(3), attitude quaternion scalar-last (4), body angular rate (3).  Control is
the body-frame thrust vector (3).  The vector field is written once, in
terms of the jet-generic helpers, so the same code serves plain evaluation,
Jacobians, time-derivative chains and elementary differentials.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteDerivativeChain, NonFiniteState
from .jets import (Jet, acat, acomp, across, adot, amatvec, anorm, asqrt,
                   jet_space)

__all__ = [
    "STATE_DIM", "CONTROL_DIM", "MASS", "POS", "VEL", "QUAT", "RATE",
    "QUAT_IDENTITY", "RocketParams", "RocketState", "ControlledODE",
    "rocket_ode", "scaled_ode", "quat_kinematics_matrix", "quat_multiply",
    "skew", "state_time_derivatives", "flow_jet", "initial_state",
    "terminal_state", "quaternion_ode",
]

STATE_DIM = 14
CONTROL_DIM = 3

MASS = slice(0, 1)
POS = slice(1, 4)
VEL = slice(4, 7)
QUAT = slice(7, 11)
RATE = slice(11, 14)

QUAT_IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])


@dataclass(frozen=True)
class RocketParams:
    """Physical parameters of the landing vehicle (normalized units)."""

    alpha_mdt: float
    beta_mdt: float
    g_I: np.ndarray
    J_B: np.ndarray
    r_TB: np.ndarray
    r_cpB: np.ndarray
    rho: float
    S_A: float
    C_A: np.ndarray

    def __post_init__(self):
        for name in ("g_I", "J_B", "r_TB", "r_cpB", "C_A"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.J_B.shape != (3, 3) or not np.allclose(self.J_B, self.J_B.T):
            raise ValueError("J_B must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(self.J_B) <= 0):
            raise ValueError("J_B must be positive definite")
        inv = np.linalg.inv(self.J_B)
        inv.setflags(write=False)
        object.__setattr__(self, "J_B_inv", inv)

    @classmethod
    def from_config(cls, cfg):
        r = cfg["rocket"]
        return cls(
            alpha_mdt=float(r["alpha_mdt"]), beta_mdt=float(r["beta_mdt"]),
            g_I=r["g_I"], J_B=r["J_B"], r_TB=r["r_TB"], r_cpB=r["r_cpB"],
            rho=float(r["rho"]), S_A=float(r["S_A"]), C_A=r["C_A"],
        )


@dataclass
class RocketState:
    """Structured view of the 14-component state vector."""

    m: float
    r_I: np.ndarray
    v_I: np.ndarray
    q: np.ndarray
    w_B: np.ndarray

    @classmethod
    def from_vector(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(float(x[0]), x[POS].copy(), x[VEL].copy(), x[QUAT].copy(), x[RATE].copy())

    def to_vector(self):
        return np.concatenate([[self.m], self.r_I, self.v_I, self.q, self.w_B])


# -- quaternion algebra -------------------------------------------------------


def skew(w):
    w = np.asarray(w, dtype=float)
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def quat_multiply(p, q):
    """Scalar-last quaternion product p (x) q."""
    pv, pw = np.asarray(p, dtype=float)[:3], float(p[3])
    qv, qw = np.asarray(q, dtype=float)[:3], float(q[3])
    return np.concatenate([pw * qv + qw * pv + np.cross(pv, qv), [pw * qw - pv @ qv]])


def quat_kinematics_matrix(w):
    """4x4 skew-symmetric Omega(w) with qdot = 0.5 * Omega(w) q."""
    out = np.zeros((4, 4))
    out[:3, :3] = -skew(w)
    out[:3, 3] = w
    out[3, :3] = -np.asarray(w, dtype=float)
    return out


def _rotate_to_body(q, vec):
    """Apply the inertial->body DCM of scalar-last q (quadratic, homogeneous)."""
    qv, qw = q[..., 0:3] if isinstance(q, np.ndarray) else q[0:3], acomp(q, 3)
    t = qw * qw - adot(qv, qv)
    return t * vec + 2.0 * adot(qv, vec) * qv - 2.0 * qw * across(qv, vec)


def _rotate_to_inertial(q, vec):
    qv, qw = q[..., 0:3] if isinstance(q, np.ndarray) else q[0:3], acomp(q, 3)
    t = qw * qw - adot(qv, qv)
    return t * vec + 2.0 * adot(qv, vec) * qv + 2.0 * qw * across(qv, vec)


# -- vector fields ------------------------------------------------------------


class ControlledODE:
    """Autonomous controlled field dx = f(x, u) with jet-generic evaluator."""

    def __init__(self, n_x, n_u, f, name=""):
        self.n_x = int(n_x)
        self.n_u = int(n_u)
        self.f = f
        self.name = name

    def __call__(self, x, u, check=False):
        out = self.f(x, u)
        if check and not (isinstance(out, Jet) or np.all(np.isfinite(out))):
            raise NonFiniteState(f"{self.name or 'ode'}: non-finite derivative at x={x}, u={u}")
        return out

    def jacobians(self, x, u):
        """(df/dx, df/du) by forward jets, batched over leading axes of x."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        nb = x.ndim - 1
        ndir = self.n_x + self.n_u
        pad = (1,) * nb
        dirs = np.eye(ndir)
        sp = jet_space((1,))
        xj = Jet(sp, [x, dirs[:, :self.n_x].reshape(ndir, *pad, self.n_x)])
        uj = Jet(sp, [u, dirs[:, self.n_x:].reshape(ndir, *pad, self.n_u)])
        c1 = (self.f(xj, uj)).coeff((1,))
        # a linear field never broadcasts the batch axes into the derivative
        c1 = np.broadcast_to(c1, (ndir,) + x.shape[:-1] + (self.n_x,))
        jac = np.moveaxis(c1, 0, -1)  # (..., n_x, ndir)
        return jac[..., :self.n_x], jac[..., self.n_x:]

    def jac_x(self, x, u):
        return self.jacobians(x, u)[0]

    def jac_u(self, x, u):
        return self.jacobians(x, u)[1]


def rocket_ode(params):
    """The 14-state landing vehicle field as a ControlledODE."""

    g_I = params.g_I
    J = params.J_B
    J_inv = params.J_B_inv
    r_TB = params.r_TB
    r_cpB = params.r_cpB
    C_A = params.C_A
    aero_scale = -0.5 * params.rho * params.S_A
    alpha, beta = params.alpha_mdt, params.beta_mdt

    def f(x, u):
        m = acomp(x, 0)
        v = x[VEL] if isinstance(x, Jet) else x[..., VEL]
        q = x[QUAT] if isinstance(x, Jet) else x[..., QUAT]
        w = x[RATE] if isinstance(x, Jet) else x[..., RATE]

        thrust_mag = anorm(u)
        m_dot = -alpha * thrust_mag - beta

        v_body = _rotate_to_body(q, v)
        aero = (aero_scale * anorm(v)) * amatvec(C_A, v_body)

        force_body = u + aero
        v_dot = _rotate_to_inertial(q, force_body) / m + g_I

        qv, qw = q[0:3] if isinstance(q, Jet) else q[..., 0:3], acomp(q, 3)
        q_dot = 0.5 * acat([qw * w + across(qv, w), -adot(qv, w)])

        torque = across(r_TB, u) + across(r_cpB, aero) - across(w, amatvec(J, w))
        w_dot = amatvec(J_inv, torque)

        return acat([m_dot, v, v_dot, q_dot, w_dot])

    return ControlledODE(STATE_DIM, CONTROL_DIM, f, name="rocket")


def quaternion_ode():
    """Attitude kinematics alone: state q (4), control = body rate (3)."""

    def f(x, u):
        qv, qw = x[0:3] if isinstance(x, Jet) else x[..., 0:3], acomp(x, 3)
        return 0.5 * acat([qw * u + across(qv, u), -adot(qv, u)])

    return ControlledODE(4, 3, f, name="quaternion")


def scaled_ode(ode, s):
    """Time-dilated field s * f for integrating on the normalized horizon."""
    s = float(s)
    if not (s > 0.0 and math.isfinite(s)):
        raise ValueError(f"dilation must be positive and finite, got {s}")
    return ControlledODE(ode.n_x, ode.n_u, lambda x, u: ode.f(x, u) * s,
                         name=f"{ode.name}-dilated" if ode.name else "dilated")


# -- derivative chains --------------------------------------------------------


def flow_jet(f, x, u, s, order, space=None):
    """Truncated time-Taylor jet of the flow of dx/dtau = s * f(x, u).

    ``x``, ``u``, ``s`` may be plain arrays or Jets over ``space`` whose
    generator 0 is time (with vanishing time coefficients); the returned Jet
    carries flow coefficients filled through time-degree ``order``.
    """
    if space is None:
        space = jet_space((int(order),))
    if not isinstance(x, Jet):
        x = Jet.const(space, x)
    if not isinstance(u, Jet):
        u = Jet.const(space, u)
    if not isinstance(s, Jet):
        s = Jet.const(space, s)
    X = x
    for _ in range(int(order)):
        X = x + (s * f(X, u)).integrate(0)
    return X


def state_time_derivatives(ode, x, u, k):
    """Exact Lie-derivative chain x^(1)..x^(k) along dx/dt = f(x, u), ZOH u.

    Returns a list of ``k`` arrays shaped like ``x``.
    """
    if not 1 <= int(k) <= 5:
        raise ValueError(f"derivative order must be in [1, 5], got {k}")
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    X = flow_jet(ode.f, x, u, np.ones(1), int(k))
    out = [math.factorial(j) * X.coeff((j,)) for j in range(1, int(k) + 1)]
    if not all(np.all(np.isfinite(d)) for d in out):
        raise NonFiniteDerivativeChain("derivative chain produced non-finite values")
    return out


# -- boundary data ------------------------------------------------------------


def initial_state(cfg):
    """Fixed initial state: wet mass, configured r/v, identity attitude."""
    b = cfg["boundary"]
    x0 = np.zeros(STATE_DIM)
    x0[MASS] = b["m_wet"]
    x0[POS] = b["r_init"]
    x0[VEL] = b["v_init"]
    x0[QUAT] = QUAT_IDENTITY
    return x0


def terminal_state(cfg, r_target=None):
    """Terminal equality targets (mass stays free): r, v, q, w blocks."""
    b = cfg["boundary"]
    return {
        "r": np.array(b["r_target"] if r_target is None else r_target, dtype=float),
        "v": np.array(b["v_final"], dtype=float),
        "q": QUAT_IDENTITY.copy(),
        "w": np.zeros(3),
    }
