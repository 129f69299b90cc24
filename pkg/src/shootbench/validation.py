"""Replay-based checks of solved trajectories.

Everything here compares a discrete map against a high-accuracy adaptive
reference integration of the same controls: terminal open-loop error,
quaternion norm drift, per-step local truncation error with ground-truth
resets, and a stiffness ratio along the trajectory.
"""

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp

from .bseries import principal_error_estimate
from .config import default_config
from .dynamics import (
    POS,
    QUAT,
    ControlledODE,
    RocketParams,
    rocket_ode,
)
from .errors import ReferenceIntegrationFailure
from .integrators import BDF_COEFFS, get_method
from .jets import Jet, acat, acomp, across, adot, amatvec

__all__ = [
    "OL_THRESHOLD", "ValidationReport", "attitude_drift_fixture",
    "attitude_ode", "isolate_lte", "map_drift_trace", "quaternion_drift",
    "ref_ol_check", "reference_replay", "replay_open_loop", "stiffness_ratio",
    "validate_solution",
]

OL_THRESHOLD = 1e-2


def reference_replay(ode, x0, U, s, h=None, ref_tol=1e-12):
    """Node states of an adaptive piecewise-ZOH integration of s*f.

    Uses an order-8 embedded explicit pair with matching absolute and
    relative tolerances, one integration per control interval.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n_int = U.shape[0]
    if h is None:
        h = 1.0 / n_int
    s = float(s)
    X = np.empty((n_int + 1, ode.n_x))
    X[0] = np.asarray(x0, dtype=float)
    for k in range(n_int):
        if h * s == 0.0:
            X[k + 1] = X[k]
            continue
        u_k = U[k]
        sol = solve_ivp(lambda t, y: s * ode.f(y, u_k), (0.0, h), X[k],
                        method="DOP853", rtol=ref_tol, atol=ref_tol)
        if not sol.success:
            raise ReferenceIntegrationFailure(
                f"reference integration failed on interval {k}: {sol.message}")
        X[k + 1] = sol.y[:, -1]
    return X


def quaternion_drift(X, quat=QUAT):
    """Per-node |  ||q|| - 1 | along a state trajectory."""
    q = np.asarray(X, dtype=float)[:, quat]
    return np.abs(np.linalg.norm(q, axis=1) - 1.0)


def replay_open_loop(result, ode, ref_tol=1e-12):
    """Replay a solve's controls; (terminal state, eps_ol, drift trace).

    eps_ol is the terminal position gap between the replay and the
    discretized trajectory, in normalized length units. The drift trace is
    sampled at mesh nodes of the replay.
    """
    if ref_tol > 1e-10:
        raise ValueError(f"ref_tol must be <= 1e-10, got {ref_tol}")
    U = np.atleast_2d(np.asarray(result.U, dtype=float))
    X_nlp = np.asarray(result.X, dtype=float)
    h = 1.0 / U.shape[0]
    X_ref = reference_replay(ode, X_nlp[0], U, result.s, h=h, ref_tol=ref_tol)
    if ode.n_x == X_nlp.shape[1] and ode.n_x >= POS.stop:
        gap = X_ref[-1, POS] - X_nlp[-1, POS]
    else:
        gap = X_ref[-1] - X_nlp[-1]
    eps_ol = float(np.linalg.norm(gap))
    drift = quaternion_drift(X_ref) if ode.n_x >= QUAT.stop else None
    return X_ref[-1], eps_ol, drift


def map_drift_trace(method, ode, x0, U, s, h=None, quat=QUAT,
                    newton_tol=1e-13, newton_cap=60):
    """Quaternion drift along the map's own iterates (no projection)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if h is None:
        h = 1.0 / U.shape[0]
    X = method.propagate(ode, x0, U, h, s, newton_tol, newton_cap)
    return quaternion_drift(X, quat=quat)


def ref_ol_check(method, reference_controls, ode, x_init, ref_tol=1e-12,
                 newton_tol=1e-12, newton_cap=50):
    """Can the map itself carry the reference controls to the same endpoint?

    Steps the discrete map (not the reference integrator) along the supplied
    controls and compares terminal positions against the reference replay.
    True iff the gap is within the open-loop threshold.
    """
    U, s = reference_controls
    U = np.atleast_2d(np.asarray(U, dtype=float))
    h = 1.0 / U.shape[0]
    X_map = method.propagate(ode, x_init, U, h, s, newton_tol, newton_cap)
    X_ref = reference_replay(ode, x_init, U, s, h=h, ref_tol=ref_tol)
    gap = X_map[-1, POS] - X_ref[-1, POS]
    return float(np.linalg.norm(gap)) <= OL_THRESHOLD


def _bdf_exact_history_step(method, ode, history, u, h, s,
                            newton_tol, newton_cap):
    """One multistep node solve with ground-truth history states."""
    alphas = BDF_COEFFS[method.bdf_order]
    hs = float(h) * float(s)
    eye = np.eye(ode.n_x)
    rhs = alphas[1:][::-1] @ history
    y = history[-1].copy()
    for _ in range(newton_cap):
        r = alphas[0] * y + rhs - hs * ode(y, u)
        if float(np.max(np.abs(r))) <= newton_tol:
            return y
        M = alphas[0] * eye - hs * ode.jac_x(y, u)
        y = y - np.linalg.solve(M, r)
    return y


def isolate_lte(method, ode, trajectory, h=None, newton_tol=1e-12,
                newton_cap=50, with_estimates=True):
    """Per-step defect against ground truth, restarting from truth each step.

    ``trajectory`` is (X_ref, U, s) with X_ref holding reference states at
    the mesh nodes. Multistep relations are fed exact history states; their
    leading startup steps use the startup map, matching what propagation
    actually composes. Returns a dict with ``delta`` (2-norms per step) and
    ``estimate`` (leading-layer error magnitudes, when the method exposes a
    tableau of order >= 4, else None).
    """
    X_ref, U, s = trajectory
    X_ref = np.asarray(X_ref, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n_int = U.shape[0]
    if h is None:
        h = 1.0 / n_int

    delta = np.empty(n_int)
    if method.kind == "bdf":
        startup = get_method(method.startup)
        k0 = method.bdf_order - 1
        for k in range(n_int):
            if k < k0:
                pred = startup.step(ode, X_ref[k], U[k], h, s,
                                    newton_tol, newton_cap).x_next
            else:
                history = X_ref[k - method.bdf_order + 1:k + 1]
                pred = _bdf_exact_history_step(method, ode, history, U[k],
                                               h, s, newton_tol, newton_cap)
            delta[k] = np.linalg.norm(X_ref[k + 1] - pred)
    else:
        for k in range(n_int):
            pred = method.step(ode, X_ref[k], U[k], h, s,
                               newton_tol, newton_cap).x_next
            delta[k] = np.linalg.norm(X_ref[k + 1] - pred)

    estimates = None
    if with_estimates and method.tableau is not None and method.tableau.order >= 4:
        estimates = np.empty(n_int)
        for k in range(n_int):
            est = principal_error_estimate(method.tableau, ode,
                                           X_ref[k], U[k], h, s)
            estimates[k] = np.linalg.norm(est)
    return {"delta": delta, "estimate": estimates}


def stiffness_ratio(ode, X, U, s=None, floor=1e-9, with_flag=False):
    """Largest |Re| eigenvalue spread of the field Jacobian along a trajectory.

    Real parts below ``floor`` in magnitude are dropped before forming the
    ratio, which keeps neutrally stable blocks out of the denominator. If no
    node has two usable eigenvalues the ratio is 0 and the degeneracy flag is
    set. The time dilation cancels out of the ratio, so ``s`` is accepted
    only for signature symmetry and ignored.
    """
    X = np.asarray(X, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n_nodes = X.shape[0]
    worst = 0.0
    any_valid = False
    for k in range(n_nodes):
        u_k = U[min(k, U.shape[0] - 1)]
        A = ode.jac_x(X[k], u_k)
        reals = np.abs(np.real(np.linalg.eigvals(A)))
        reals = reals[reals >= floor]
        if reals.size == 0:
            continue
        any_valid = True
        worst = max(worst, float(np.max(reals) / np.min(reals)))
    ratio = worst if any_valid else 0.0
    if with_flag:
        return ratio, not any_valid
    return ratio


# -- attitude subsystem fixture -------------------------------------------------


def attitude_ode(params):
    """Coupled quaternion and body-rate field, control = body torque."""
    J = params.J_B
    J_inv = params.J_B_inv

    def f(x, u):
        qv = x[0:3] if isinstance(x, Jet) else x[..., 0:3]
        qw = acomp(x, 3)
        w = x[4:7] if isinstance(x, Jet) else x[..., 4:7]
        q_dot = 0.5 * acat([qw * w + across(qv, w), -adot(qv, w)])
        w_dot = amatvec(J_inv, u - across(w, amatvec(J, w)))
        return acat([q_dot, w_dot])

    return ControlledODE(7, 3, f, name="attitude")


@dataclass
class DriftFixture:
    """A torque profile on the attitude subsystem for drift separation runs."""
    ode: ControlledODE
    x0: np.ndarray
    U: np.ndarray
    s: float
    h: float
    omega_max: float
    quat: slice = slice(0, 4)


def attitude_drift_fixture(config=None):
    """Aggressive but admissible torque profile exciting quaternion drift.

    The torque direction rotates every interval and its magnitude stays
    within what the thrust lever arm can produce at the pointing limit,
    scaled down by the configured rate margin. Body rates under this profile
    stay below the rate bound, so the excitation is reachable by an actual
    vehicle trajectory while being strongly nonlinear within each step.
    """
    if config is None:
        config = default_config()
    params = RocketParams.from_config(config)
    ode = attitude_ode(params)

    con = config["constraints"]
    fix = config["drift_fixture"]
    lever = float(np.linalg.norm(params.r_TB))
    tau_cap = lever * float(con["T_max"]) * np.sin(
        np.deg2rad(float(con["delta_max_deg"])))
    amp = float(fix["omega_scale"]) * tau_cap

    n_int = int(config["mesh"]["nodes"]) - 1
    k = np.arange(n_int)
    th = 2.4 * k
    dirs = np.stack([np.sin(th), np.cos(th), np.sin(1.7 * th + 0.5)], axis=1)
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    U = amp * dirs
    x0 = np.array([0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])
    return DriftFixture(ode=ode, x0=x0, U=U, s=float(fix["s"]),
                        h=1.0 / n_int, omega_max=float(con["omega_max"]))


# -- report ---------------------------------------------------------------------


@dataclass
class ValidationReport:
    """Replay outcome for one solved trajectory.

    ``drift_trace`` is sampled on the reference replay; ``map_drift_trace``
    on the discrete map's own iterates under the same controls. Both are
    reported because they answer different questions (integrator truth vs
    map behavior).
    """

    method: str
    eps_ol: float
    ol_pass: bool
    ref_ol_pass: object  # True/False, or None when no reference controls given
    tau: np.ndarray
    drift_trace: np.ndarray
    map_drift_trace: np.ndarray
    lte_trace: np.ndarray
    lte_estimates: object
    stiffness_ratio: float
    stiffness_degenerate: bool

    def __post_init__(self):
        if self.ol_pass != (self.eps_ol <= OL_THRESHOLD):
            raise ValueError("ol_pass must mirror eps_ol <= threshold")

    def to_dict(self):
        return {
            "method": self.method,
            "eps_ol": self.eps_ol,
            "ol_pass": bool(self.ol_pass),
            "ref_ol_pass": self.ref_ol_pass,
            "stiffness_ratio": self.stiffness_ratio,
            "stiffness_degenerate": bool(self.stiffness_degenerate),
            "tau": list(map(float, self.tau)),
            "drift_trace": list(map(float, self.drift_trace)),
            "map_drift_trace": list(map(float, self.map_drift_trace)),
            "lte_trace": list(map(float, self.lte_trace)),
            "lte_estimates": (None if self.lte_estimates is None
                              else list(map(float, self.lte_estimates))),
        }

    def to_json(self, indent=2):
        return json.dumps(self.to_dict(), indent=indent)

    def write_csv(self, path):
        """Flat per-node table with plot-ready columns."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["tau", "drift", "map_drift", "lte",
                             "lte_h5_estimate"])
            for i, t in enumerate(self.tau):
                lte = "" if i == 0 else f"{self.lte_trace[i - 1]:.17g}"
                est = ""
                if i > 0 and self.lte_estimates is not None:
                    est = f"{self.lte_estimates[i - 1]:.17g}"
                writer.writerow([f"{t:.17g}",
                                 f"{self.drift_trace[i]:.17g}",
                                 f"{self.map_drift_trace[i]:.17g}",
                                 lte, est])

    def save(self, directory):
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        (directory / "validation.json").write_text(self.to_json() + "\n")
        self.write_csv(directory / "validation.csv")
        return directory


def validate_solution(result, config, reference_controls=None, ref_tol=None):
    """Full replay validation of one SolveResult under the given config."""
    if ref_tol is None:
        ref_tol = float(config["validation"]["ref_tol"])
    ode = rocket_ode(RocketParams.from_config(config))
    method = get_method(result.method)
    U = np.atleast_2d(np.asarray(result.U, dtype=float))
    h = 1.0 / U.shape[0]
    newton_tol = float(config["solver"]["newton_tol"])
    newton_cap = int(config["solver"]["newton_cap"])

    _, eps_ol, drift = replay_open_loop(result, ode, ref_tol=ref_tol)
    mdrift = map_drift_trace(method, ode, result.X[0], U, result.s, h=h,
                             newton_tol=newton_tol, newton_cap=newton_cap)
    X_ref = reference_replay(ode, result.X[0], U, result.s, h=h,
                             ref_tol=ref_tol)
    lte = isolate_lte(method, ode, (X_ref, U, result.s), h=h,
                      newton_tol=newton_tol, newton_cap=newton_cap)
    stiff, degenerate = stiffness_ratio(ode, result.X, U, with_flag=True)

    ref_ok = None
    if reference_controls is not None:
        ref_ok = ref_ol_check(method, reference_controls, ode, result.X[0],
                              ref_tol=ref_tol, newton_tol=newton_tol,
                              newton_cap=newton_cap)

    return ValidationReport(
        method=method.name,
        eps_ol=eps_ol,
        ol_pass=eps_ol <= OL_THRESHOLD,
        ref_ol_pass=ref_ok,
        tau=np.linspace(0.0, 1.0, U.shape[0] + 1),
        drift_trace=drift,
        map_drift_trace=mdrift,
        lte_trace=lte["delta"],
        lte_estimates=lte["estimate"],
        stiffness_ratio=stiff,
        stiffness_degenerate=degenerate,
    )
