"""Multiple-shooting NLP assembly for the landing benchmark.

Decision vector: node states, interval controls, the time dilation, then
per-interval auxiliary unknowns (lifted implicit stage states, or the
TR-BDF2 intermediate node).  Equality rows stack the initial-state pin, one
dynamics block per interval (node-advancing rows first, auxiliary rows
after) and the terminal set; inequality rows stack ten path rows per control
node plus state-only rows at the final node.

Dynamics blocks by method family:

* explicit maps: next node minus the closed-form stage recursion;
* single-unknown implicit maps (midpoint, trapezoidal, averaged-field):
  their stage matrix is rank one, so every stage is an affine combination of
  the interval endpoints and the update rule becomes a residual in
  (x_k, x_{k+1}) alone, with no stage unknowns;
* lifted implicit maps: stage-value equations plus the update row, stage
  states as decision variables;
* TR-BDF2: backward-difference closure to the next node plus the trapezoidal
  half-step residual pinning the lifted mid node;
* backward-difference formulas: mesh-node history rows; the first intervals
  are closed by the same-order Gauss map evaluated inside the row.

All rows are written once, generically over jet or ndarray inputs, so the
value and Jacobian paths share the same code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import dynamics
from .config import validate_config
from .dynamics import (CONTROL_DIM, POS, QUAT, RATE, STATE_DIM, VEL,
                       RocketParams, flow_jet, initial_state, rocket_ode,
                       terminal_state)
from .errors import UnsupportedCombination
from .integrators import (BDF_COEFFS, TRBDF2_GAMMA, IntegratorMethod,
                          _implicit_stages, explicit_update_generic,
                          get_method, irk_step_jet)
from .jets import Jet, acomp, jet_space, smooth_norm

__all__ = [
    "ObjectiveSpec", "VariableLayout", "TranscriptionProblem", "build",
    "eval_path_constraints", "lr_norm", "PATH_ROW_NAMES",
    "TERMINAL_ROW_NAMES",
]

OBJECTIVE_KINDS = ("min_fuel", "max_fuel", "adversarial_lr", "feasibility")

#: the ten inequality rows, in the order eval_path_constraints returns them
PATH_ROW_NAMES = (
    "dry_mass", "glide_slope", "tilt", "angular_rate", "upper_thrust",
    "thrust_pointing", "speed", "lower_thrust", "upper_time", "lower_time",
)

#: state-only subset imposed at the final node (same relative order)
TERMINAL_ROW_NAMES = ("dry_mass", "tilt", "angular_rate", "speed")

DERIVATIVE_CAP = 5


@dataclass(frozen=True)
class ObjectiveSpec:
    """Objective selector; p and r only matter for the adversarial kind."""

    kind: str
    p: int = 2
    r: float = 20.0

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"objective kind must be one of {OBJECTIVE_KINDS}, "
                             f"got {self.kind!r}")
        if self.kind == "adversarial_lr":
            if int(self.p) != self.p or not 2 <= self.p <= DERIVATIVE_CAP - 1:
                raise UnsupportedCombination(
                    f"adversarial objective needs integer p with p+1 <= "
                    f"{DERIVATIVE_CAP}, got p={self.p}")
            if not self.r >= 1.0:
                raise ValueError(f"smoothing exponent r must be >= 1, got {self.r}")


@dataclass(frozen=True)
class VariableLayout:
    """Column offsets of the decision vector [X | U | s | aux]."""

    n_nodes: int
    n_x: int
    n_u: int
    aux_per_interval: int

    @property
    def n_intervals(self):
        return self.n_nodes - 1

    @property
    def u_offset(self):
        return self.n_nodes * self.n_x

    @property
    def s_index(self):
        return self.u_offset + self.n_intervals * self.n_u

    @property
    def aux_offset(self):
        return self.s_index + 1

    @property
    def n_vars(self):
        return self.aux_offset + self.n_intervals * self.aux_per_interval

    def x_slice(self, k):
        return slice(k * self.n_x, (k + 1) * self.n_x)

    def u_slice(self, k):
        return slice(self.u_offset + k * self.n_u,
                     self.u_offset + (k + 1) * self.n_u)

    def aux_slice(self, k):
        w = self.aux_per_interval
        return slice(self.aux_offset + k * w, self.aux_offset + (k + 1) * w)

    def unpack(self, z):
        z = np.asarray(z, dtype=float)
        if z.shape != (self.n_vars,):
            raise ValueError(f"expected {self.n_vars} variables, got {z.shape}")
        X = z[:self.u_offset].reshape(self.n_nodes, self.n_x)
        U = z[self.u_offset:self.s_index].reshape(self.n_intervals, self.n_u)
        s = float(z[self.s_index])
        Y = z[self.aux_offset:].reshape(self.n_intervals, self.aux_per_interval)
        return X, U, s, Y

    def pack(self, X, U, s, Y=None):
        z = np.empty(self.n_vars)
        z[:self.u_offset] = np.asarray(X, dtype=float).reshape(-1)
        z[self.u_offset:self.s_index] = np.asarray(U, dtype=float).reshape(-1)
        z[self.s_index] = float(s)
        if self.aux_per_interval:
            if Y is None:
                raise ValueError("layout has auxiliary variables but Y is None")
            z[self.aux_offset:] = np.asarray(Y, dtype=float).reshape(-1)
        return z


class _PathParams:
    """Precomputed constants of the ten path rows."""

    def __init__(self, cfg):
        con = cfg["constraints"]
        self.m_dry = float(con["m_dry"])
        self.tan_gs = math.tan(math.radians(float(con["gamma_gs_deg"])))
        self.sin_half_tilt = math.sin(0.5 * math.radians(float(con["theta_max_deg"])))
        self.omega_max = float(con["omega_max"])
        self.T_max = float(con["T_max"])
        self.T_min = float(con["T_min"])
        self.cos_delta = math.cos(math.radians(float(con["delta_max_deg"])))
        self.v_max = float(con["v_max"])
        self.s_min = float(con["s_min"])
        self.s_max = float(con["s_max"])
        self.eps = float(con["norm_eps"])
        self.r_target = np.asarray(cfg["boundary"]["r_target"], dtype=float)


def _comp(x, sl):
    """Slice the component axis of a Jet or ndarray."""
    return x[sl] if isinstance(x, Jet) else x[..., sl]


def _path_rows(x, u, s, pp):
    """The ten path rows (<= 0 feasible), generic over jets."""
    from .jets import acat

    m = acomp(x, 0)
    r_rel = _comp(x, POS) - pp.r_target
    lateral = _comp(r_rel, slice(1, 3))
    vertical = acomp(r_rel, 0)
    q_lat = _comp(_comp(x, QUAT), slice(1, 3))
    thrust_mag = smooth_norm(u, pp.eps)
    return acat([
        pp.m_dry - m,
        smooth_norm(lateral, pp.eps) - pp.tan_gs * vertical,
        smooth_norm(q_lat, pp.eps) - pp.sin_half_tilt,
        smooth_norm(_comp(x, RATE), pp.eps) - pp.omega_max,
        thrust_mag - pp.T_max,
        pp.cos_delta * thrust_mag - acomp(u, 0),
        smooth_norm(_comp(x, VEL), pp.eps) - pp.v_max,
        pp.T_min - thrust_mag,
        s - pp.s_max,
        pp.s_min - s,
    ])


def _terminal_state_rows(x, pp):
    """State-only rows at the final node (no control, no glide cone)."""
    from .jets import acat

    return acat([
        pp.m_dry - acomp(x, 0),
        smooth_norm(_comp(_comp(x, QUAT), slice(1, 3)), pp.eps) - pp.sin_half_tilt,
        smooth_norm(_comp(x, RATE), pp.eps) - pp.omega_max,
        smooth_norm(_comp(x, VEL), pp.eps) - pp.v_max,
    ])


def eval_path_constraints(x, u, s, config):
    """Ten-row path constraint vector g(x, u, s) <= 0 at one node.

    Row order: dry-mass, glide-slope, tilt, angular-rate, upper-thrust,
    thrust-pointing, speed, lower-thrust, upper-time, lower-time.
    """
    pp = _PathParams(config)
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return _path_rows(x, u, float(s), pp).reshape(-1)


def lr_norm(samples, r):
    """(sum a_i^r)^(1/r) for nonnegative samples, overflow-safe.

    Factoring out the largest sample keeps every power base in [0, 1], so
    exponents like r = 20 cannot overflow no matter the sample scale.
    """
    a = np.asarray(samples, dtype=float)
    if np.any(a < 0.0):
        raise ValueError("lr_norm expects nonnegative samples")
    amax = float(a.max(initial=0.0))
    if amax == 0.0:
        return 0.0
    return amax * float(np.sum((a / amax) ** r)) ** (1.0 / r)


def _lr_norm_with_weights(a, r):
    """(value, d value / d a_i); weights are (a_i / value)^(r-1) in [0, 1]."""
    amax = float(a.max(initial=0.0))
    if amax == 0.0:
        return 0.0, np.zeros_like(a)
    value = amax * float(np.sum((a / amax) ** r)) ** (1.0 / r)
    return value, (a / value) ** (r - 1.0)


def _seeded_jets(space, seed_exp, values):
    """Jets over ``space`` carrying one identity-direction batch.

    ``values`` is a list of 1-d arrays; the direction axis enumerates their
    concatenation, so coefficient ``seed_exp`` of jet i holds rows of the
    identity belonging to block i.
    """
    ndir = sum(v.shape[-1] for v in values)
    seed_idx = space.index[seed_exp]
    jets = []
    offset = 0
    for v in values:
        w = v.shape[-1]
        seed = np.zeros((ndir, w))
        seed[np.arange(offset, offset + w), np.arange(w)] = 1.0
        coeffs = [None] * space.dim
        coeffs[0] = v
        coeffs[seed_idx] = seed
        jets.append(Jet(space, coeffs))
        offset += w
    return jets, ndir


def _row_coeff(row, exp, ndir):
    """Direction-batch coefficient of a row vector, broadcast to full size."""
    c = row.coeff(exp)
    width = row.value.shape[-1]
    return np.broadcast_to(c, (ndir, width))


class TranscriptionProblem:
    """Immutable NLP: evaluators, Jacobians, sparsity and layout metadata."""

    def __init__(self, method, objective, config):
        if isinstance(method, str):
            method = get_method(method)
        if not isinstance(method, IntegratorMethod):
            raise TypeError(f"method must be a name or IntegratorMethod, got {method!r}")
        if isinstance(objective, str):
            objective = ObjectiveSpec(objective)
        validate_config(config)
        self.method = method
        self.objective_spec = objective
        self.config = config
        self.params = RocketParams.from_config(config)
        self.ode = rocket_ode(self.params)
        self.n_x = STATE_DIM
        self.n_u = CONTROL_DIM

        n_nodes = int(config["mesh"]["nodes"])
        if method.kind == "lifted_irk":
            aux = method.tableau.stages * self.n_x
        elif method.kind == "trbdf2":
            aux = self.n_x
        else:
            aux = 0
        self.layout = VariableLayout(n_nodes, self.n_x, self.n_u, aux)
        self.h = 1.0 / (n_nodes - 1)

        if objective.kind == "adversarial_lr" and method.kind not in (
                "explicit_rk", "lifted_irk"):
            raise UnsupportedCombination(
                f"adversarial objective needs recoverable stage states; "
                f"{method.name} ({method.kind}) does not expose them")

        if method.kind == "compact_irk":
            tab = method.tableau
            if not np.allclose(tab.A, np.outer(tab.c, tab.b), atol=1e-14):
                raise UnsupportedCombination(
                    f"{method.name}: compact form needs rank-one stage coupling")

        self.path_params = _PathParams(config)
        self.x_init = initial_state(config)
        self.terminal = terminal_state(config)
        self.newton_tol = float(config["solver"]["newton_tol"])
        self.newton_cap = int(config["solver"]["newton_cap"])
        self.path_at_stages = bool(config["constraints"]["path_at_stages"])

        self._eq_specs = self._build_eq_specs()
        self._ineq_specs = self._build_ineq_specs()
        self.n_eq = sum(spec[3] for spec in self._eq_specs)
        self.n_ineq = sum(spec[3] for spec in self._ineq_specs)
        self._sparsity = None
        self._hessian_sparsity = None

    # -- layout passthroughs ---------------------------------------------------

    @property
    def n_vars(self):
        return self.layout.n_vars

    @property
    def n_nodes(self):
        return self.layout.n_nodes

    @property
    def n_intervals(self):
        return self.layout.n_intervals

    @property
    def n_constraints(self):
        return self.n_eq + self.n_ineq

    def unpack(self, z):
        return self.layout.unpack(z)

    def pack(self, X, U, s, Y=None):
        return self.layout.pack(X, U, s, Y)

    # -- constraint block table --------------------------------------------------

    def _var_cols(self, ref):
        L = self.layout
        kind = ref[0]
        if kind == "x":
            return L.x_slice(ref[1])
        if kind == "u":
            return L.u_slice(ref[1])
        if kind == "s":
            return slice(L.s_index, L.s_index + 1)
        return L.aux_slice(ref[1])

    def _var_value(self, ref, X, U, s, Y):
        kind = ref[0]
        if kind == "x":
            return X[ref[1]]
        if kind == "u":
            return U[ref[1]]
        if kind == "s":
            return np.array([s])
        return Y[ref[1]]

    def _build_eq_specs(self):
        """(label, refs, builder, n_rows) for every equality block."""
        specs = []
        n = self.n_x
        specs.append(("initial", (("x", 0),),
                      lambda v: [v[0] - self.x_init], n))

        method = self.method
        for k in range(self.n_intervals):
            if method.kind == "bdf" and k >= method.bdf_order - 1:
                q = method.bdf_order
                refs = tuple(("x", j) for j in range(k + 1 - q, k + 1))
                refs += (("u", k), ("s",), ("x", k + 1))
                specs.append((f"bdf[{k}]", refs, self._bdf_builder(q), n))
            elif method.kind == "bdf":
                refs = (("x", k), ("u", k), ("s",), ("x", k + 1))
                specs.append((f"startup[{k}]", refs, self._startup_builder(), n))
            else:
                refs = (("x", k), ("u", k), ("s",), ("x", k + 1))
                if self.layout.aux_per_interval:
                    refs += (("aux", k),)
                rows = n * (1 + self.layout.aux_per_interval // n)
                specs.append((f"dynamics[{k}]", refs, self._map_builder(), rows))

        def terminal(v):
            xN = v[0]
            return [xN[POS] - self.terminal["r"], xN[VEL] - self.terminal["v"],
                    xN[QUAT] - self.terminal["q"], xN[RATE] - self.terminal["w"]]

        specs.append(("terminal", (("x", self.n_nodes - 1),), terminal, 13))
        return specs

    def _map_builder(self):
        method, ode, h = self.method, self.ode, self.h
        n = self.n_x

        def build_rows(v):
            xk, uk, s_w, xk1 = v[0], v[1], v[2], v[3]
            hs = h * s_w
            if method.kind == "explicit_rk":
                x_next, _, _ = explicit_update_generic(method.tableau, ode.f, xk, uk, hs)
                return [xk1 - x_next]
            if method.kind == "compact_irk":
                tab = method.tableau
                acc = None
                for l in range(tab.stages):
                    stage = (1.0 - tab.c[l]) * xk + tab.c[l] * xk1
                    term = (hs * tab.b[l]) * ode.f(stage, uk)
                    acc = term if acc is None else acc + term
                return [xk1 - xk - acc]
            if method.kind == "lifted_irk":
                tab = method.tableau
                aux = v[4]
                stages = [_comp(aux, slice(l * n, (l + 1) * n)) for l in range(tab.stages)]
                derivs = [ode.f(stages[l], uk) for l in range(tab.stages)]
                update = xk1 - xk
                for l in range(tab.stages):
                    update = update - (hs * tab.b[l]) * derivs[l]
                rows = [update]
                for i in range(tab.stages):
                    r = stages[i] - xk
                    for j in range(tab.stages):
                        if tab.A[i, j] != 0.0:
                            r = r - (hs * tab.A[i, j]) * derivs[j]
                    rows.append(r)
                return rows
            # trbdf2: closure row to the next node, then the half-step pin
            g = TRBDF2_GAMMA
            c1 = 1.0 / (g * (2.0 - g))
            c2 = (1.0 - g) ** 2 / (g * (2.0 - g))
            c3 = (1.0 - g) / (2.0 - g)
            mid = v[4]
            end = xk1 - c1 * mid + c2 * xk - (c3 * hs) * ode.f(xk1, uk)
            half = mid - xk - (0.5 * g * hs) * (ode.f(xk, uk) + ode.f(mid, uk))
            return [end, half]

        return build_rows

    def _bdf_builder(self, order):
        ode, h = self.ode, self.h
        alphas = BDF_COEFFS[order]

        def build_rows(v):
            history, uk, s_w, xk1 = v[:order], v[order], v[order + 1], v[order + 2]
            acc = alphas[0] * xk1
            for j in range(1, order + 1):
                acc = acc + alphas[j] * history[order - j]
            return [acc - (h * s_w) * ode.f(xk1, uk)]

        return build_rows

    def _startup_builder(self):
        ode, h = self.ode, self.h
        tab = get_method(self.method.startup).tableau
        tol, cap = self.newton_tol, self.newton_cap

        def build_rows(v):
            xk, uk, s_w, xk1 = v
            x_next, _, _ = irk_step_jet(tab, ode, xk, uk, h * s_w, tol=tol, cap=cap)
            return [xk1 - x_next]

        return build_rows

    def _build_ineq_specs(self):
        pp = self.path_params
        specs = []
        for k in range(self.n_intervals):
            refs = (("x", k), ("u", k), ("s",))
            specs.append((f"path[{k}]", refs,
                          (lambda v: [_path_rows(v[0], v[1], v[2], pp)]), 10))
        specs.append((f"path_terminal[{self.n_nodes - 1}]",
                      (("x", self.n_nodes - 1),),
                      (lambda v: [_terminal_state_rows(v[0], pp)]), 4))
        if self.path_at_stages and self.layout.aux_per_interval:
            n = self.n_x
            n_pts = self.layout.aux_per_interval // n
            for k in range(self.n_intervals):
                refs = (("aux", k), ("u", k), ("s",))

                def stage_rows(v, n_pts=n_pts):
                    return [
                        _path_rows(_comp(v[0], slice(i * n, (i + 1) * n)), v[1], v[2], pp)
                        for i in range(n_pts)
                    ]

                specs.append((f"path_stages[{k}]", refs, stage_rows, 10 * n_pts))
        return specs

    # -- evaluators ---------------------------------------------------------------

    def _eval_specs(self, specs, X, U, s, Y):
        out = []
        for _, refs, builder, _ in specs:
            values = [self._var_value(r, X, U, s, Y) for r in refs]
            out.extend(np.asarray(row, dtype=float).reshape(-1)
                       for row in builder(values))
        return np.concatenate(out)

    def equalities(self, z):
        X, U, s, Y = self.unpack(z)
        return self._eval_specs(self._eq_specs, X, U, s, Y)

    def inequalities(self, z):
        X, U, s, Y = self.unpack(z)
        return self._eval_specs(self._ineq_specs, X, U, s, Y)

    def constraints(self, z):
        """Stacked [equalities; inequalities] (equality rows first)."""
        X, U, s, Y = self.unpack(z)
        return np.concatenate([
            self._eval_specs(self._eq_specs, X, U, s, Y),
            self._eval_specs(self._ineq_specs, X, U, s, Y),
        ])

    def eval_defects(self, X, U, s, Y=None):
        """Dynamics rows only (defects plus any stage-equation residuals)."""
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        if Y is None:
            Y = np.zeros((self.n_intervals, self.layout.aux_per_interval))
        else:
            Y = np.asarray(Y, dtype=float).reshape(self.n_intervals, -1)
        dyn_specs = self._eq_specs[1:-1]
        return self._eval_specs(dyn_specs, X, U, float(s), Y)

    def violation(self, z):
        """Infinity norm of constraint violation at z."""
        eq = self.equalities(z)
        ineq = self.inequalities(z)
        worst_eq = float(np.max(np.abs(eq))) if eq.size else 0.0
        worst_ineq = float(np.max(np.maximum(ineq, 0.0))) if ineq.size else 0.0
        return max(worst_eq, worst_ineq)

    def constraint_jacobian(self, z):
        """Dense Jacobian of stacked constraints (rows match constraints())."""
        X, U, s, Y = self.unpack(z)
        J = np.zeros((self.n_constraints, self.n_vars))
        space = jet_space((1,))
        row0 = 0
        for _, refs, builder, n_rows in self._eq_specs + self._ineq_specs:
            values = [self._var_value(r, X, U, s, Y) for r in refs]
            jets, ndir = _seeded_jets(space, (1,), values)
            cols = np.concatenate([
                np.arange(self._var_cols(r).start, self._var_cols(r).stop)
                for r in refs
            ])
            r = row0
            for row in builder(jets):
                width = row.value.shape[-1]
                J[r:r + width, cols] = _row_coeff(row, (1,), ndir).T
                r += width
            row0 += n_rows
        return J

    def jacobian_sparsity(self):
        """Declared (rows, cols) footprint superset of the true Jacobian."""
        if self._sparsity is None:
            rows, cols = [], []
            row0 = 0
            for _, refs, _, n_rows in self._eq_specs + self._ineq_specs:
                block_cols = np.concatenate([
                    np.arange(self._var_cols(r).start, self._var_cols(r).stop)
                    for r in refs
                ])
                rr, cc = np.meshgrid(np.arange(row0, row0 + n_rows), block_cols,
                                     indexing="ij")
                rows.append(rr.reshape(-1))
                cols.append(cc.reshape(-1))
                row0 += n_rows
            self._sparsity = (np.concatenate(rows), np.concatenate(cols))
        return self._sparsity

    @property
    def jacobian_nnz(self):
        return int(self.jacobian_sparsity()[0].size)

    def _objective_cols(self):
        """Variable footprint of the objective, as column index arrays."""
        L = self.layout
        kind = self.objective_spec.kind
        if kind == "feasibility":
            return []
        if kind in ("min_fuel", "max_fuel"):
            return [np.array([L.x_slice(self.n_nodes - 1).start])]
        blocks = []
        for k in range(self.n_intervals):
            pieces = [np.arange(L.u_slice(k).start, L.u_slice(k).stop),
                      np.array([L.s_index])]
            if self.method.kind == "lifted_irk":
                pieces.append(np.arange(L.aux_slice(k).start, L.aux_slice(k).stop))
            else:
                pieces.append(np.arange(L.x_slice(k).start, L.x_slice(k).stop))
            blocks.append(np.concatenate(pieces))
        return blocks

    def hessian_sparsity(self):
        """Superset (rows, cols) pattern of the Lagrangian Hessian."""
        if self._hessian_sparsity is None:
            pairs = set()
            for _, refs, _, _ in self._eq_specs + self._ineq_specs:
                block_cols = np.concatenate([
                    np.arange(self._var_cols(r).start, self._var_cols(r).stop)
                    for r in refs
                ])
                for i in block_cols:
                    pairs.update((int(i), int(j)) for j in block_cols)
            for block_cols in self._objective_cols():
                for i in block_cols:
                    pairs.update((int(i), int(j)) for j in block_cols)
            idx = np.array(sorted(pairs), dtype=int).reshape(-1, 2)
            self._hessian_sparsity = (idx[:, 0], idx[:, 1])
        return self._hessian_sparsity

    @property
    def hessian_nnz(self):
        return int(self.hessian_sparsity()[0].size)

    # -- bounds ---------------------------------------------------------------

    def variable_bounds(self):
        """(lower, upper) box bounds; only the dilation is boxed directly.

        The derivative-chain objective also gets a guard box on every state,
        control, and stage column, inflated to twice the path constraint
        region. That objective grows faster than a quadratic penalty can
        hold, so a soft-constraint solver needs a hard cage to keep iterates
        where the chain evaluates to finite values. The slack keeps the box
        from binding at any path-feasible point, and position columns stay
        free because the dynamics never read position.
        """
        lb = np.full(self.n_vars, -np.inf)
        ub = np.full(self.n_vars, np.inf)
        L = self.layout
        lb[L.s_index] = self.path_params.s_min
        ub[L.s_index] = self.path_params.s_max
        if self.objective_spec.kind != "adversarial_lr":
            return lb, ub

        pp = self.path_params
        slack = 2.0
        state_lb = np.full(self.n_x, -np.inf)
        state_ub = np.full(self.n_x, np.inf)
        state_lb[0] = 0.5 * pp.m_dry
        state_ub[0] = slack * float(self.x_init[0])
        state_lb[VEL], state_ub[VEL] = -slack * pp.v_max, slack * pp.v_max
        state_lb[QUAT], state_ub[QUAT] = -slack, slack
        state_lb[RATE], state_ub[RATE] = -slack * pp.omega_max, slack * pp.omega_max
        for k in range(self.n_nodes):
            lb[L.x_slice(k)], ub[L.x_slice(k)] = state_lb, state_ub
        stages = self.method.tableau.stages
        for k in range(self.n_intervals):
            lb[L.u_slice(k)] = -slack * pp.T_max
            ub[L.u_slice(k)] = slack * pp.T_max
            if L.aux_per_interval:
                sl = L.aux_slice(k)
                lb[sl] = np.tile(state_lb, stages)
                ub[sl] = np.tile(state_ub, stages)
        return lb, ub

    def constraint_bounds(self):
        """(lower, upper) per constraint row: equalities 0, inequalities <= 0."""
        lb = np.concatenate([np.zeros(self.n_eq), np.full(self.n_ineq, -np.inf)])
        ub = np.zeros(self.n_constraints)
        return lb, ub

    def row_labels(self):
        """Block label per constraint row, for exports and reports."""
        labels = []
        for name, _, _, n_rows in self._eq_specs + self._ineq_specs:
            labels.extend(f"{name}.{i}" for i in range(n_rows))
        return labels

    # -- objectives -------------------------------------------------------------

    def objective(self, z):
        """Minimization objective.

        The derivative-chain kind goes through -log1p of the smoothed
        measure: same maximizers, but the value can no longer outrun a
        quadratic constraint penalty, so general-purpose solvers keep a
        bounded merit surface. ``eval_adversarial_objective`` reports the
        untransformed measure.
        """
        X, U, s, Y = self.unpack(z)
        kind = self.objective_spec.kind
        if kind == "feasibility":
            return 0.0
        if kind == "min_fuel":
            return -float(X[-1, 0])
        if kind == "max_fuel":
            return float(X[-1, 0])
        value = self._adversarial(X, U, s, Y, want_grad=False)[0]
        return -math.log1p(value)

    def objective_gradient(self, z):
        X, U, s, Y = self.unpack(z)
        g = np.zeros(self.n_vars)
        kind = self.objective_spec.kind
        if kind == "feasibility":
            return g
        if kind in ("min_fuel", "max_fuel"):
            mass_col = self.layout.x_slice(self.n_nodes - 1).start
            g[mass_col] = -1.0 if kind == "min_fuel" else 1.0
            return g
        value, grad = self._adversarial(X, U, s, Y, want_grad=True)
        return -grad / (1.0 + value)

    def eval_adversarial_objective(self, X, U, s, Y=None):
        """Positive smoothed-max objective value at the given trajectory.

        For lifted maps without a supplied stage block the stages are
        recovered by solving the stage equations at each (x_k, u_k, s).
        """
        X = np.asarray(X, dtype=float)
        U = np.asarray(U, dtype=float)
        if self.objective_spec.kind != "adversarial_lr":
            raise UnsupportedCombination(
                f"problem objective is {self.objective_spec.kind!r}")
        if Y is None and self.method.kind == "lifted_irk":
            tab = self.method.tableau
            hs = self.h * float(s)
            Y = np.empty((self.n_intervals, tab.stages * self.n_x))
            for k in range(self.n_intervals):
                stages, _, _, _ = _implicit_stages(
                    tab, self.ode, X[k], U[k], hs, self.newton_tol, self.newton_cap)
                Y[k] = stages.reshape(-1)
        elif Y is not None:
            Y = np.asarray(Y, dtype=float).reshape(self.n_intervals, -1)
        return self._adversarial(X, U, float(s), Y, want_grad=False)[0]

    def _adversarial(self, X, U, s, Y, want_grad):
        """Sum over intervals of the smoothed max of derivative-norm samples.

        Each sample is the 2-norm of the (p+1)-th time derivative of the
        dilated flow at one stage state.  Gradients ride along on a second
        jet generator: one batched direction per local variable.
        """
        spec = self.objective_spec
        p1 = spec.p + 1
        fact = float(math.factorial(p1))
        eps = self.path_params.eps
        ode, tab, h = self.ode, self.method.tableau, self.h
        lifted = self.method.kind == "lifted_irk"
        n, m = self.n_x, tab.stages
        L = self.layout

        total = 0.0
        grad = np.zeros(self.n_vars) if want_grad else None
        space = jet_space((p1, 1)) if want_grad else None
        seed_exp = (0, 1)
        dir_exp = (p1, 1)
        val_exp = (p1, 0)

        for k in range(self.n_intervals):
            a = np.empty(m)
            a_grads = [None] * m
            if not want_grad:
                if lifted:
                    stages = [Y[k, i * n:(i + 1) * n] for i in range(m)]
                else:
                    _, stages, _ = explicit_update_generic(
                        tab, ode.f, X[k], U[k], h * s)
                for i in range(m):
                    flow = flow_jet(ode.f, stages[i], U[k], np.array([s]), p1)
                    d = fact * flow.coeff((p1,))
                    a[i] = math.sqrt(float(d @ d) + eps * eps) - eps
            elif lifted:
                # directions per stage: its own state block, u_k, s
                for i in range(m):
                    (yj, uj, sj), ndir = _seeded_jets(
                        space, seed_exp, [Y[k, i * n:(i + 1) * n], U[k], np.array([s])])
                    flow = flow_jet(ode.f, yj, uj, sj, p1, space=space)
                    d = fact * flow.coeff(val_exp)
                    D = fact * _row_coeff(flow, dir_exp, ndir)
                    denom = math.sqrt(float(d @ d) + eps * eps)
                    a[i] = denom - eps
                    a_grads[i] = D @ d / denom
            else:
                # one direction batch per interval: x_k, u_k, s
                (xj, uj, sj), ndir = _seeded_jets(
                    space, seed_exp, [X[k], U[k], np.array([s])])
                _, stage_jets, _ = explicit_update_generic(tab, ode.f, xj, uj, h * sj)
                for i in range(m):
                    flow = flow_jet(ode.f, stage_jets[i], uj, sj, p1, space=space)
                    d = fact * flow.coeff(val_exp)
                    D = fact * _row_coeff(flow, dir_exp, ndir)
                    denom = math.sqrt(float(d @ d) + eps * eps)
                    a[i] = denom - eps
                    a_grads[i] = D @ d / denom

            value, weights = _lr_norm_with_weights(a, spec.r)
            total += value
            if not want_grad or value == 0.0:
                continue
            if lifted:
                u_cols = L.u_slice(k)
                for i in range(m):
                    da = weights[i] * a_grads[i]
                    grad[L.aux_slice(k).start + i * n:
                         L.aux_slice(k).start + (i + 1) * n] += da[:n]
                    grad[u_cols] += da[n:n + self.n_u]
                    grad[L.s_index] += da[n + self.n_u]
            else:
                dloc = np.zeros(self.n_x + self.n_u + 1)
                for i in range(m):
                    dloc += weights[i] * a_grads[i]
                grad[L.x_slice(k)] += dloc[:n]
                grad[L.u_slice(k)] += dloc[n:n + self.n_u]
                grad[L.s_index] += dloc[n + self.n_u]
        if want_grad:
            return total, grad
        return total, None

    # -- starting point -----------------------------------------------------------

    def initial_guess(self):
        """Deterministic, method-independent start for every solve."""
        b = self.config["boundary"]
        pp = self.path_params
        N = self.n_nodes
        t = np.linspace(0.0, 1.0, N)
        X = np.zeros((N, self.n_x))
        X[:, 0] = b["m_wet"] + (pp.m_dry - b["m_wet"]) * t
        r0, r1 = self.x_init[POS], self.terminal["r"]
        v0, v1 = self.x_init[VEL], self.terminal["v"]
        X[:, POS] = r0 + np.outer(t, r1 - r0)
        X[:, VEL] = v0 + np.outer(t, v1 - v0)
        X[:, QUAT] = dynamics.QUAT_IDENTITY

        g_I = self.params.g_I
        U = np.empty((self.n_intervals, self.n_u))
        for k in range(self.n_intervals):
            hover = -X[k, 0] * g_I
            mag = float(np.linalg.norm(hover))
            if mag == 0.0:
                hover = np.array([pp.T_min, 0.0, 0.0])
            else:
                hover = hover * (min(max(mag, pp.T_min), pp.T_max) / mag)
            U[k] = hover
        s = 0.5 * (pp.s_min + pp.s_max)

        Y = None
        if self.layout.aux_per_interval:
            Y = np.empty((self.n_intervals, self.layout.aux_per_interval))
            if self.method.kind == "lifted_irk":
                c = self.method.tableau.c
                for k in range(self.n_intervals):
                    chord = X[k + 1] - X[k]
                    Y[k] = np.concatenate([X[k] + ci * chord for ci in c])
            else:
                g = TRBDF2_GAMMA
                for k in range(self.n_intervals):
                    Y[k] = X[k] + g * (X[k + 1] - X[k])
        return self.layout.pack(X, U, s, Y)


def build(method, objective, config):
    """Assemble the NLP for one integration map, objective and config."""
    return TranscriptionProblem(method, objective, config)
