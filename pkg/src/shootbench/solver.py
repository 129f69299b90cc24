"""Baseline NLP solver and problem exchange utilities.

The solver is an augmented Lagrangian loop over the equality rows, with
inequality rows folded in through nonnegative slack variables so the inner
subproblem is a smooth bound-constrained minimization. The inner solves use
scipy's L-BFGS-B. This is deliberately simple and deterministic, and it is
adequate at the problem sizes this package targets; for anything heavier,
export the problem (see docs/nlp-format.md) and bring an external solver.
"""

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.optimize import minimize

from .errors import (
    ConfigError,
    DegenerateQuaternion,
    EvaluationFailure,
    NewtonDivergence,
    NonFiniteState,
)
from .transcription import ObjectiveSpec, build

FORMAT_TAG = "shootbench-nlp/1"

_PENALTY_CAP = 1e12
_MULTIPLIER_CAP = 1e12
_BAD_VALUE = 1e20
_RECOVERY_BUDGET = 40
# Trust-region style cap on a single Gauss-Newton step, relative to the
# iterate scale. A nearly singular damped system can emit astronomically
# long directions whose line search then starves; clipping the length keeps
# every trial point inside the region where evaluations stay finite.
_STEP_CAP = 1e3

# Exceptions that mark a bad trial point rather than a bug. The inner solver
# backtracks past these; anything else propagates.
_RECOVERABLE = (
    NonFiniteState,
    NewtonDivergence,
    DegenerateQuaternion,
    np.linalg.LinAlgError,
    OverflowError,
    ZeroDivisionError,
)


@dataclass
class SolverOptions:
    """Tolerances and budgets for :func:`solve`."""

    feas_tol: float = 1e-8
    opt_tol: float = 1e-6
    max_iter: int = 3000
    inner_max_iter: int = 800
    lbfgs_memory: int = 50
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    outer_cap: int = 60
    keep_history: bool = True

    @classmethod
    def from_config(cls, config, **overrides):
        section = config.get("solver", {})
        kwargs = {}
        for name in ("feas_tol", "opt_tol", "max_iter", "inner_max_iter",
                     "lbfgs_memory", "penalty_init", "penalty_growth"):
            if name in section:
                kwargs[name] = section[name]
        kwargs.update(overrides)
        return cls(**kwargs)


@dataclass
class SolveResult:
    """Outcome of one solve.

    ``iterations`` counts inner quasi-Newton iterations summed over the outer
    loop; that is the number the iteration cap applies to. ``eval_time`` is
    the wall-clock share spent inside objective/constraint/Jacobian
    evaluations, ``solver_time`` is everything else.
    """

    status: str
    z: np.ndarray
    X: np.ndarray
    U: np.ndarray
    s: float
    Y: np.ndarray
    objective: float
    violation: float
    kkt_residual: float
    iterations: int
    outer_iterations: int
    n_evaluations: int
    eval_time: float
    solver_time: float
    multipliers: dict = field(default_factory=dict)
    history: list = field(default_factory=list)
    method: str = None
    objective_kind: str = None

    def summary(self):
        return (f"{self.status}: obj={self.objective:+.6e} "
                f"viol={self.violation:.2e} kkt={self.kkt_residual:.2e} "
                f"iters={self.iterations} "
                f"({self.eval_time:.2f}s eval / {self.solver_time:.2f}s solver)")


def _inf_norm(a):
    return float(np.max(np.abs(a))) if a.size else 0.0


class _AugmentedLagrangian:
    """One solve's worth of state for the outer/inner loop.

    The inner minimization is a projected damped Gauss-Newton iteration on
    the augmented Lagrangian: the slack block is minimized exactly each
    iterate (a projection onto the nonnegative orthant), the remaining step
    solves a first-derivative Hessian model built from the constraint
    Jacobian, and trial points are projected onto the variable box. Problems
    with no constraints fall back to scipy's L-BFGS-B over the box.
    """

    def __init__(self, problem, options):
        self.problem = problem
        self.opts = options
        self.n = problem.n_vars
        self.n_eq = getattr(problem, "n_eq", 0)
        self.n_in = getattr(problem, "n_ineq", 0)
        self.lb, self.ub = problem.variable_bounds()
        self.eval_time = 0.0
        self.n_evaluations = 0
        self._fail_streak = 0
        self._sigma = 1e-3

    def _eval_value(self, z):
        """(f, c) at z, or None when the point is unevaluable."""
        t0 = time.perf_counter()
        try:
            with np.errstate(all="ignore"):
                f = float(self.problem.objective(z))
                c = (np.asarray(self.problem.constraints(z), dtype=float)
                     if self.n_eq + self.n_in else np.zeros(0))
        except _RECOVERABLE:
            self._note_failure()
            return None
        finally:
            self.eval_time += time.perf_counter() - t0
            self.n_evaluations += 1
        if not (np.isfinite(f) and np.all(np.isfinite(c))):
            self._note_failure()
            return None
        self._fail_streak = 0
        return f, c

    def _eval_full(self, z):
        """(f, g, c, J) at z, or None when the point is unevaluable."""
        t0 = time.perf_counter()
        try:
            with np.errstate(all="ignore"):
                f = float(self.problem.objective(z))
                g = np.asarray(self.problem.objective_gradient(z), dtype=float)
                if self.n_eq + self.n_in:
                    c = np.asarray(self.problem.constraints(z), dtype=float)
                    J = np.asarray(self.problem.constraint_jacobian(z), dtype=float)
                else:
                    c = np.zeros(0)
                    J = np.zeros((0, self.n))
        except _RECOVERABLE:
            self._note_failure()
            return None
        finally:
            self.eval_time += time.perf_counter() - t0
            self.n_evaluations += 1
        if not (np.isfinite(f) and np.all(np.isfinite(g))
                and np.all(np.isfinite(c)) and np.all(np.isfinite(J))):
            self._note_failure()
            return None
        self._fail_streak = 0
        return f, g, c, J

    def _note_failure(self):
        self._fail_streak += 1
        if self._fail_streak > _RECOVERY_BUDGET:
            raise EvaluationFailure(
                f"evaluation failed at {self._fail_streak} consecutive trial "
                f"points; giving up on recovery")

    def _al_value(self, f, c, lam, mu, rho):
        """Augmented Lagrangian with the slack block minimized out exactly."""
        c_eq, c_in = c[:self.n_eq], c[self.n_eq:]
        val = f + lam @ c_eq + 0.5 * rho * (c_eq @ c_eq)
        if self.n_in:
            v = np.maximum(c_in, -mu / rho)
            val += mu @ v + 0.5 * rho * (v @ v)
        return val

    def _kkt(self, z, g, J, lam, mu, c_in):
        grad_l = g + J.T @ np.concatenate([lam, mu])
        projected = z - np.clip(z - grad_l, self.lb, self.ub)
        stationarity = _inf_norm(projected)
        complementarity = _inf_norm(np.minimum(mu, -c_in)) if self.n_in else 0.0
        return max(stationarity, complementarity)

    @staticmethod
    def _violation(c_eq, c_in):
        return max(_inf_norm(c_eq),
                   float(np.max(c_in.clip(min=0.0))) if c_in.size else 0.0)

    def _inner_gauss_newton(self, z, ev, lam, mu, rho, omega, budget):
        """Minimize the AL over the box to projected-gradient norm omega.

        Returns (z, ev, pg_norm, iterations). ``ev`` is the full evaluation
        at the returned point, kept so the outer loop never re-evaluates.
        """
        n_eq = self.n_eq
        eye_jitter = np.arange(self.n)
        iters = 0
        f, g, c, J = ev
        while True:
            y_eq = lam + rho * c[:n_eq]
            y_in = np.maximum(0.0, mu + rho * c[n_eq:])
            grad_l = g + J.T @ np.concatenate([y_eq, y_in])
            pg = z - np.clip(z - grad_l, self.lb, self.ub)
            pg_norm = _inf_norm(pg)
            if pg_norm <= omega or iters >= budget:
                return z, (f, g, c, J), pg_norm, iters

            active = np.concatenate([np.ones(n_eq, dtype=bool), y_in > 0.0])
            J_act = J[active]
            H = J_act.T @ J_act
            H *= rho

            al0 = self._al_value(f, c, lam, mu, rho)
            accepted = False
            for _ in range(14):
                H_damped = H.copy()
                H_damped[eye_jitter, eye_jitter] += self._sigma
                try:
                    chol = cho_factor(H_damped, check_finite=False)
                    d = cho_solve(chol, -grad_l, check_finite=False)
                except np.linalg.LinAlgError:
                    self._sigma = min(self._sigma * 10.0, 1e10)
                    continue
                d_norm = _inf_norm(d)
                cap = _STEP_CAP * max(1.0, _inf_norm(z))
                if d_norm > cap:
                    d = d * (cap / d_norm)
                step = 1.0
                for _ in range(30):
                    z_try = np.clip(z + step * d, self.lb, self.ub)
                    slope = grad_l @ (z_try - z)
                    if slope >= 0.0:
                        break
                    trial = self._eval_value(z_try)
                    if trial is not None:
                        f_t, c_t = trial
                        if (self._al_value(f_t, c_t, lam, mu, rho)
                                <= al0 + 1e-4 * slope):
                            accepted = True
                            break
                    step *= 0.5
                if accepted:
                    break
                self._sigma = min(self._sigma * 10.0, 1e10)
            if not accepted:
                return z, (f, g, c, J), pg_norm, iters

            if step == 1.0:
                self._sigma = max(self._sigma / 3.0, 1e-10)
            elif step < 0.25:
                self._sigma = min(self._sigma * 4.0, 1e10)
            z = z_try
            iters += 1
            ev = self._eval_full(z)
            if ev is None:
                raise EvaluationFailure(
                    "derivative evaluation failed at an accepted point")
            f, g, c, J = ev

    def _inner_box_lbfgsb(self, z, omega, budget):
        """Bound-constrained objective-only problems go to L-BFGS-B."""
        opts = self.opts

        def fun(zz):
            ev = self._eval_value(zz)
            if ev is None:
                return _BAD_VALUE, np.zeros_like(zz)
            t0 = time.perf_counter()
            g = np.asarray(self.problem.objective_gradient(zz), dtype=float)
            self.eval_time += time.perf_counter() - t0
            if not np.all(np.isfinite(g)):
                self._note_failure()
                return _BAD_VALUE, np.zeros_like(zz)
            return ev[0], g

        res = minimize(
            fun, z, jac=True, method="L-BFGS-B",
            bounds=list(zip(self.lb, self.ub)),
            options={"maxiter": budget, "maxcor": opts.lbfgs_memory,
                     "ftol": 1e-16, "gtol": omega, "maxls": 60, "iprint": -1})
        z = res.x
        ev = self._eval_full(z)
        if ev is None:
            raise EvaluationFailure(
                "inner minimization returned an unevaluable point")
        f, g, c, J = ev
        pg = z - np.clip(z - g, self.lb, self.ub)
        return z, ev, _inf_norm(pg), int(res.nit)

    def run(self, z0):
        opts = self.opts
        t_start = time.perf_counter()
        z = np.clip(np.asarray(z0, dtype=float), self.lb, self.ub)

        ev = self._eval_full(z)
        if ev is None:
            raise EvaluationFailure("initial point is not evaluable")
        f, g, c, J = ev
        c_eq, c_in = c[:self.n_eq], c[self.n_eq:]

        lam = np.zeros(self.n_eq)
        mu = np.zeros(self.n_in)
        rho = opts.penalty_init
        eta = 1.0 / rho ** 0.1
        omega = 1.0 / rho

        history = []
        total_inner = 0
        outer = 0
        status = None

        viol = self._violation(c_eq, c_in)
        kkt = self._kkt(z, g, J, lam, mu, c_in)
        if viol <= opts.feas_tol and kkt <= opts.opt_tol:
            status = "optimal"

        while status is None and outer < opts.outer_cap:
            remaining = opts.max_iter - total_inner
            if remaining <= 0:
                break
            outer += 1
            budget = min(opts.inner_max_iter, remaining)
            gtol = max(omega, 0.1 * opts.opt_tol)
            if self.n_eq + self.n_in:
                z, ev, pg_norm, nit = self._inner_gauss_newton(
                    z, ev, lam, mu, rho, gtol, budget)
            else:
                z, ev, pg_norm, nit = self._inner_box_lbfgsb(z, gtol, budget)
            total_inner += nit
            f, g, c, J = ev
            c_eq, c_in = c[:self.n_eq], c[self.n_eq:]
            viol = self._violation(c_eq, c_in)

            lam_hat = np.clip(lam + rho * c_eq, -_MULTIPLIER_CAP, _MULTIPLIER_CAP)
            mu_hat = np.clip(mu + rho * c_in, 0.0, _MULTIPLIER_CAP)
            kkt = self._kkt(z, g, J, lam_hat, mu_hat, c_in)

            if opts.keep_history:
                history.append({
                    "outer": outer,
                    "inner_iterations": int(nit),
                    "objective": f,
                    "violation": viol,
                    "kkt": kkt,
                    "penalty": rho,
                    "pg_norm": pg_norm,
                    "z": z.copy(),
                })

            if viol <= opts.feas_tol and kkt <= opts.opt_tol:
                lam, mu = lam_hat, mu_hat
                status = "optimal"
                break

            # the slack-eliminated equality residual: how well the current
            # multipliers explain the constraint activity
            r_in = (np.maximum(c_in, -mu / rho) if self.n_in
                    else np.zeros(0))
            al_residual = max(_inf_norm(c_eq), _inf_norm(r_in))
            if al_residual <= eta:
                lam, mu = lam_hat, mu_hat
                eta = max(eta / rho ** 0.9, 0.1 * opts.feas_tol)
                omega = max(omega / rho, 0.1 * opts.opt_tol)
            else:
                rho *= opts.penalty_growth
                if rho > _PENALTY_CAP:
                    status = "diverged"
                    break
                eta = max(1.0 / rho ** 0.1, 0.1 * opts.feas_tol)
                omega = max(1.0 / rho, 0.1 * opts.opt_tol)

        if status is None:
            if not np.isfinite(viol):
                status = "diverged"
            elif viol <= opts.feas_tol:
                status = "feasible"
            else:
                status = "iteration_cap"

        total = time.perf_counter() - t_start
        try:
            X, U, s, Y = self.problem.unpack(z)
        except AttributeError:
            X = U = s = Y = None
        return SolveResult(
            status=status,
            z=z,
            X=X, U=U, s=s, Y=Y,
            objective=f,
            violation=viol,
            kkt_residual=kkt,
            iterations=total_inner,
            outer_iterations=outer,
            n_evaluations=self.n_evaluations,
            eval_time=self.eval_time,
            solver_time=max(0.0, total - self.eval_time),
            multipliers={"equality": lam, "inequality": mu},
            history=history,
            method=getattr(getattr(self.problem, "method", None), "name", None),
            objective_kind=getattr(
                getattr(self.problem, "objective_spec", None), "kind", None),
        )


def solve(problem, options=None, initial_guess=None):
    """Minimize the problem's objective subject to its constraints.

    ``problem`` is normally a TranscriptionProblem but anything exposing the
    same evaluation surface (n_vars, n_eq, n_ineq, objective,
    objective_gradient, constraints, constraint_jacobian, variable_bounds)
    works; that keeps the solver testable on analytic problems.
    """
    if options is None:
        if hasattr(problem, "config"):
            options = SolverOptions.from_config(problem.config)
        else:
            options = SolverOptions()
    if initial_guess is None:
        initial_guess = problem.initial_guess()
    return _AugmentedLagrangian(problem, options).run(initial_guess)


# -- problem exchange ----------------------------------------------------------


def _fmt(value):
    return repr(float(value))


def write_point_file(path, values):
    """One float per line, shortest round-trip representation."""
    lines = [_fmt(v) for v in np.asarray(values, dtype=float).ravel()]
    Path(path).write_text("\n".join(lines) + "\n")


def read_point_file(path):
    text = Path(path).read_text()
    return np.array([float(tok) for tok in text.split()], dtype=float)


def _write_bounds(path, lower, upper):
    lines = [f"{i} {_fmt(lo)} {_fmt(hi)}"
             for i, (lo, hi) in enumerate(zip(lower, upper))]
    Path(path).write_text("\n".join(lines) + "\n")


def _read_bounds(path, n):
    lower = np.empty(n)
    upper = np.empty(n)
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        idx, lo, hi = line.split()
        lower[int(idx)] = float(lo)
        upper[int(idx)] = float(hi)
    return lower, upper


def _write_pattern(path, rows, cols):
    lines = [f"{r} {c}" for r, c in zip(rows, cols)]
    Path(path).write_text("\n".join(lines) + "\n")


def export_problem(problem, path, point=None):
    """Write the documented text-format description of *problem* to a directory.

    Files written: problem.json (metadata plus the full embedded config),
    variable_bounds.txt, constraint_bounds.txt, jacobian_sparsity.txt,
    hessian_sparsity.txt, row_labels.txt, initial_guess.txt. The grammar is
    documented in docs/nlp-format.md.
    """
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    spec = problem.objective_spec
    meta = {
        "format": FORMAT_TAG,
        "method": problem.method.name,
        "objective": {"kind": spec.kind, "p": spec.p, "r": spec.r},
        "n_variables": int(problem.n_vars),
        "n_equalities": int(problem.n_eq),
        "n_inequalities": int(problem.n_ineq),
        "jacobian_nnz": int(problem.jacobian_nnz),
        "hessian_nnz": int(problem.hessian_nnz),
        "config": problem.config,
    }
    (path / "problem.json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    lb, ub = problem.variable_bounds()
    _write_bounds(path / "variable_bounds.txt", lb, ub)
    clb, cub = problem.constraint_bounds()
    _write_bounds(path / "constraint_bounds.txt", clb, cub)

    rows, cols = problem.jacobian_sparsity()
    _write_pattern(path / "jacobian_sparsity.txt", rows, cols)
    hrows, hcols = problem.hessian_sparsity()
    _write_pattern(path / "hessian_sparsity.txt", hrows, hcols)

    (path / "row_labels.txt").write_text("\n".join(problem.row_labels()) + "\n")

    if point is None:
        point = problem.initial_guess()
    write_point_file(path / "initial_guess.txt", point)
    return path


def import_problem(path):
    """Rebuild (problem, initial_guess) from an exported directory."""
    path = Path(path)
    meta = json.loads((path / "problem.json").read_text())
    if meta.get("format") != FORMAT_TAG:
        raise ConfigError(f"unknown problem format {meta.get('format')!r}")
    obj = meta["objective"]
    spec = ObjectiveSpec(obj["kind"], p=int(obj["p"]), r=float(obj["r"]))
    problem = build(meta["method"], spec, meta["config"])
    if problem.n_vars != meta["n_variables"]:
        raise ConfigError(
            f"rebuilt problem has {problem.n_vars} variables, "
            f"manifest says {meta['n_variables']}")
    point = read_point_file(path / "initial_guess.txt")
    if point.size != problem.n_vars:
        raise ConfigError("initial guess length does not match variable count")
    return problem, point


def answer_evaluation_request(problem, point_path, out_dir):
    """File-based evaluation: read a point, write objective/constraints/Jacobian.

    Writes objective.txt (one value), gradient.txt and constraints.txt (one
    value per line), and jacobian.txt (``row col value`` triplets over the
    declared sparsity pattern). Returns the output directory.
    """
    z = read_point_file(point_path)
    if z.size != problem.n_vars:
        raise ConfigError(
            f"request point has {z.size} entries, problem has "
            f"{problem.n_vars} variables")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "objective.txt").write_text(_fmt(problem.objective(z)) + "\n")
    write_point_file(out / "gradient.txt", problem.objective_gradient(z))
    write_point_file(out / "constraints.txt", problem.constraints(z))
    J = problem.constraint_jacobian(z)
    rows, cols = problem.jacobian_sparsity()
    lines = [f"{r} {c} {_fmt(J[r, c])}" for r, c in zip(rows, cols)]
    (out / "jacobian.txt").write_text("\n".join(lines) + "\n")
    return out
