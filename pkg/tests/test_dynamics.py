"""Vehicle vector field, quaternion algebra, and derivative chains."""

import numpy as np
import pytest

from shootbench.config import default_config
from shootbench.dynamics import (CONTROL_DIM, MASS, POS, QUAT, QUAT_IDENTITY,
                                 RATE, STATE_DIM, VEL, ControlledODE,
                                 RocketParams, RocketState, flow_jet,
                                 initial_state, quat_kinematics_matrix,
                                 quat_multiply, quaternion_ode, rocket_ode,
                                 scaled_ode, skew, state_time_derivatives,
                                 terminal_state)
from shootbench.errors import NonFiniteDerivativeChain

from conftest import admissible_control, admissible_state


def quat_to_dcm(q):
    """Inertial->body rotation matrix of a scalar-last unit quaternion."""
    qv, qw = q[:3], q[3]
    return ((qw * qw - qv @ qv) * np.eye(3) + 2.0 * np.outer(qv, qv)
            - 2.0 * qw * skew(qv))


def test_axial_hand_evaluation(config, ode):
    """Identity attitude, zero rate, axial thrust: every block closed-form."""
    p = RocketParams.from_config(config)
    x = initial_state(config)
    u = np.array([2.0, 0.0, 0.0])
    dx = ode(x, u)

    v = x[VEL]
    drag = -0.5 * p.rho * p.S_A * np.linalg.norm(v) * (p.C_A @ v)
    assert np.isclose(dx[0], -p.alpha_mdt * 2.0 - p.beta_mdt)
    assert np.allclose(dx[POS], v)
    assert np.allclose(dx[VEL], (u + drag) / x[0] + p.g_I, atol=1e-14)
    assert np.allclose(dx[QUAT], 0.0)
    # axial thrust through the axial lever arm produces no torque, and the
    # incoming velocity is axial too, so the aero moment also vanishes
    assert np.allclose(dx[RATE], 0.0, atol=1e-14)


def test_jacobians_match_finite_differences(config, ode):
    rng = np.random.default_rng(42)
    eps = 1e-6
    for _ in range(5):
        x = admissible_state(rng, config)
        u = admissible_control(rng, config)
        Jx, Ju = ode.jacobians(x, u)
        for j in range(STATE_DIM):
            e = np.zeros(STATE_DIM)
            e[j] = eps
            fd = (ode(x + e, u) - ode(x - e, u)) / (2 * eps)
            assert np.allclose(Jx[:, j], fd, atol=1e-6), f"state col {j}"
        for j in range(CONTROL_DIM):
            e = np.zeros(CONTROL_DIM)
            e[j] = eps
            fd = (ode(x, u + e) - ode(x, u - e)) / (2 * eps)
            assert np.allclose(Ju[:, j], fd, atol=1e-6), f"control col {j}"


def test_jacobian_batched_equals_loop(config, ode):
    rng = np.random.default_rng(5)
    X = np.stack([admissible_state(rng, config) for _ in range(4)])
    U = np.stack([admissible_control(rng, config) for _ in range(4)])
    # batched call on stacked states must agree with one-at-a-time calls
    Jb = ode.jac_x(X, U)
    for k in range(4):
        assert np.allclose(Jb[k], ode.jac_x(X[k], U[k]), atol=1e-14)


def test_quat_multiply_composes_rotations():
    rng = np.random.default_rng(8)
    p = rng.normal(size=4)
    p /= np.linalg.norm(p)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    left = quat_to_dcm(quat_multiply(p, q))
    right = quat_to_dcm(q) @ quat_to_dcm(p)
    assert np.allclose(left, right, atol=1e-13)


def test_quat_identity_is_neutral():
    rng = np.random.default_rng(9)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    assert np.allclose(quat_multiply(q, QUAT_IDENTITY), q)
    assert np.allclose(quat_multiply(QUAT_IDENTITY, q), q)


def test_kinematics_matrix_antisymmetric_preserves_norm():
    w = np.array([0.3, -1.1, 0.7])
    Om = quat_kinematics_matrix(w)
    assert np.allclose(Om, -Om.T)
    # d/dt (q.q) = q^T Omega q = 0 for any q
    q = np.array([0.1, 0.2, -0.3, 0.9])
    assert abs(q @ Om @ q) < 1e-15


def test_attitude_kinematics_field_matches_matrix_form():
    ode_q = quaternion_ode()
    rng = np.random.default_rng(21)
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w = rng.normal(size=3)
    assert np.allclose(ode_q(q, w), 0.5 * quat_kinematics_matrix(w) @ q,
                       atol=1e-14)


def test_scaled_field_is_plain_multiple(config, ode):
    rng = np.random.default_rng(13)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    assert np.allclose(scaled_ode(ode, 3.5)(x, u), 3.5 * ode(x, u))
    for bad in (0.0, -2.0, np.inf, np.nan):
        with pytest.raises(ValueError):
            scaled_ode(ode, bad)


def test_flow_jet_linear_field_taylor():
    lam = -0.8
    f = lambda x, u: x * lam
    x0 = np.array([2.0])
    s = 1.7
    X = flow_jet(f, x0, np.zeros(1), s, 6)
    fact = 1.0
    for k in range(7):
        if k:
            fact *= k
        assert np.allclose(X.coeff((k,)), x0 * (s * lam) ** k / fact,
                           rtol=1e-12)


def test_state_derivative_chain_first_two_orders(config, ode):
    rng = np.random.default_rng(31)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    chain = state_time_derivatives(ode, x, u, 3)
    f = ode(x, u)
    assert np.allclose(chain[0], f, atol=1e-13)
    # second derivative along the flow is J_f(x) f(x) under constant control
    assert np.allclose(chain[1], ode.jac_x(x, u) @ f, atol=1e-11)
    assert len(chain) == 3


def test_state_derivative_chain_rejects_bad_order(config, ode):
    x = initial_state(config)
    with pytest.raises(ValueError):
        state_time_derivatives(ode, x, np.ones(3), 0)
    with pytest.raises(ValueError):
        state_time_derivatives(ode, x, np.ones(3), 6)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_derivative_chain_flags_non_finite(config, ode):
    x = initial_state(config)
    x[MASS] = 0.0  # division by mass blows up the chain
    with pytest.raises(NonFiniteDerivativeChain):
        state_time_derivatives(ode, x, np.ones(3), 2)


def test_boundary_state_extraction(config):
    x0 = initial_state(config)
    assert x0[0] == config["boundary"]["m_wet"]
    assert np.allclose(x0[POS], config["boundary"]["r_init"])
    assert np.allclose(x0[VEL], config["boundary"]["v_init"])
    assert np.allclose(x0[QUAT], QUAT_IDENTITY)
    assert np.allclose(x0[RATE], 0.0)

    tgt = terminal_state(config)
    assert np.allclose(tgt["r"], config["boundary"]["r_target"])
    assert np.allclose(tgt["q"], QUAT_IDENTITY)
    override = terminal_state(config, r_target=[0.0, 2.5, 0.0])
    assert np.allclose(override["r"], [0.0, 2.5, 0.0])


def test_state_struct_round_trip():
    vec = np.arange(14.0)
    st = RocketState.from_vector(vec)
    assert st.m == 0.0
    assert np.allclose(st.to_vector(), vec)


def test_params_reject_bad_inertia(config):
    bad = dict(config["rocket"])
    bad["J_B"] = [[1.0, 0.5, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]
    cfg = {"rocket": bad}
    with pytest.raises(ValueError, match="symmetric"):
        RocketParams.from_config(cfg)


def test_aero_moment_appears_with_cp_offset(config):
    """A lateral wind with an offset centre of pressure must torque the body."""
    r = dict(config["rocket"])
    r["r_cpB"] = [0.1, 0.0, 0.0]
    p = RocketParams.from_config({"rocket": r})
    ode_cp = rocket_ode(p)
    x = initial_state(config)
    x[VEL] = [0.0, 1.0, 0.0]
    dx = ode_cp(x, np.array([1.0, 0.0, 0.0]))
    assert np.linalg.norm(dx[RATE]) > 1e-3
    # and with the offset removed the same state produces no angular rate
    dx0 = rocket_ode(RocketParams.from_config(config))(
        x, np.array([1.0, 0.0, 0.0]))
    assert np.allclose(dx0[RATE], 0.0, atol=1e-14)
