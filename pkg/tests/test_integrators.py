"""One-step maps, multistep defects, projection, and the method registry."""

import numpy as np
import pytest

from shootbench.dynamics import QUAT, ControlledODE, initial_state
from shootbench.errors import (DegenerateQuaternion, InsufficientHistory,
                               NewtonDivergence, UnsupportedCombination)
from shootbench.integrators import (BDF_COEFFS, TRBDF2_GAMMA, avf_step,
                                    bdf_defect, explicit_update_generic,
                                    get_method, irk_step_jet, method_names,
                                    project_quaternion, solve_stages,
                                    step_projected)
from shootbench.jets import amatvec
from shootbench.tableau import get_tableau

from conftest import admissible_control, admissible_state

ALL_NAMES = ["bdf4", "bdf6", "trapezoidal", "rk38", "rk4", "rk5", "rk6",
             "avf2", "avf3", "gl1", "trbdf2", "gl2", "lobatto3a", "gl3"]

ORDERS = {"bdf4": 4, "bdf6": 6, "trapezoidal": 2, "rk38": 4, "rk4": 4,
          "rk5": 5, "rk6": 6, "avf2": 2, "avf3": 2, "gl1": 2, "trbdf2": 2,
          "gl2": 4, "lobatto3a": 4, "gl3": 6}

ONE_STEP = [n for n in ALL_NAMES if n not in ("bdf4", "bdf6")]


def linear_ode(lam=1.0):
    return ControlledODE(1, 1, lambda x, u: lam * x, name="linear")


ROT90 = np.array([[0.0, 1.0], [-1.0, 0.0]])


def oscillator_ode():
    return ControlledODE(2, 1, lambda x, u: amatvec(ROT90, x), name="osc")


def test_registry_names_in_benchmark_order():
    assert method_names() == ALL_NAMES
    for name in ALL_NAMES:
        assert get_method(name).name == name
    assert get_method("GL2") is get_method("gl2")
    with pytest.raises(KeyError, match="known"):
        get_method("dopri5")


def test_method_metadata():
    for name in ALL_NAMES:
        m = get_method(name)
        assert m.order == ORDERS[name], name
        assert m.is_multistep == (name in ("bdf4", "bdf6"))
        assert m.symplectic == (name in ("gl1", "gl2", "gl3")), name
    assert get_method("gl2").lifted_stage_count == 2
    assert get_method("lobatto3a").lifted_stage_count == 3
    assert get_method("gl3").lifted_stage_count == 3
    assert get_method("rk4").lifted_stage_count == 0
    assert get_method("trbdf2").extra_node_count == 1
    assert get_method("gl1").extra_node_count == 0


@pytest.mark.parametrize("name", ONE_STEP)
def test_one_step_order_on_linear_problem(name):
    """Halving h must shrink the one-step error by about 2^(p+1)."""
    m = get_method(name)
    ode = linear_ode(1.0)
    x0 = np.array([1.0])
    u = np.zeros(1)
    errs = []
    for h in (0.4, 0.2):
        x1 = m.step(ode, x0, u, h, 1.0).x_next
        errs.append(abs(float(x1[0]) - np.exp(h)))
    slope = np.log2(errs[0] / errs[1])
    assert abs(slope - (m.order + 1)) < 0.45, (name, slope, errs)


@pytest.mark.parametrize("name", ["gl1", "gl2", "gl3"])
def test_gauss_maps_preserve_quadratic_invariant(name):
    m = get_method(name)
    ode = oscillator_ode()
    x = np.array([0.8, -0.6])
    for _ in range(20):
        x = m.step(ode, x, np.zeros(1), 0.3, 1.0).x_next
    assert abs(float(x @ x) - 1.0) < 1e-13


def test_explicit_map_dissipates_quadratic_invariant():
    m = get_method("rk4")
    ode = oscillator_ode()
    x = np.array([1.0, 0.0])
    for _ in range(20):
        x = m.step(ode, x, np.zeros(1), 0.5, 1.0).x_next
    assert abs(float(x @ x) - 1.0) > 1e-6


def test_propagate_equals_folded_steps(config, ode):
    m = get_method("rk5")
    x0 = initial_state(config)
    rng = np.random.default_rng(3)
    U = np.stack([admissible_control(rng, config) for _ in range(5)])
    X = m.propagate(ode, x0, U, 1.0 / 14.0, 4.0)
    x = x0
    for k in range(5):
        x = m.step(ode, x, U[k], 1.0 / 14.0, 4.0).x_next
        assert np.allclose(X[k + 1], x, atol=1e-14)


def test_bdf_propagate_satisfies_node_relation():
    ode = linear_ode(-0.7)
    m = get_method("bdf4")
    x0 = np.array([2.0])
    U = np.zeros((8, 1))
    X = m.propagate(ode, x0, U, 0.1, 1.0)
    # startup intervals come from the same-order one-step map
    gl2 = get_method("gl2")
    x = x0
    for k in range(3):
        x = gl2.step(ode, x, U[k], 0.1, 1.0).x_next
        assert np.allclose(X[k + 1], x, atol=1e-12)
    # every later node closes the 4-step relation
    for k in range(3, 8):
        d = bdf_defect(4, ode, X[k - 3:k + 1], U[k], 0.1, 1.0, X[k + 1])
        assert np.max(np.abs(d)) < 1e-10


def test_bdf_coefficient_identities():
    # consistency: coefficients sum to zero, first moment equals one
    for order, a in BDF_COEFFS.items():
        assert abs(a.sum()) < 1e-12
        moment = sum(-j * a[j] for j in range(1, order + 1))
        assert abs(moment - 1.0) < 1e-12


def test_bdf_defect_input_validation():
    ode = linear_ode()
    with pytest.raises(UnsupportedCombination):
        bdf_defect(3, ode, np.zeros((3, 1)), np.zeros(1), 0.1, 1.0, np.zeros(1))
    with pytest.raises(InsufficientHistory):
        bdf_defect(4, ode, np.zeros((2, 1)), np.zeros(1), 0.1, 1.0, np.zeros(1))


def test_multistep_has_no_single_step():
    with pytest.raises(UnsupportedCombination):
        get_method("bdf6").step(linear_ode(), np.ones(1), np.zeros(1), 0.1, 1.0)


def test_trbdf2_matches_closed_form_on_linear_problem():
    lam, h = -1.3, 0.25
    g = TRBDF2_GAMMA
    z = lam * h
    x0 = 1.7
    mid = x0 * (1 + 0.5 * g * z) / (1 - 0.5 * g * z)
    c1 = 1.0 / (g * (2.0 - g))
    c2 = (1.0 - g) ** 2 / (g * (2.0 - g))
    c3 = (1.0 - g) / (2.0 - g)
    expected = (c1 * mid - c2 * x0) / (1.0 - c3 * z)
    got = get_method("trbdf2").step(linear_ode(lam), np.array([x0]),
                                    np.zeros(1), h, 1.0)
    assert abs(float(got.x_next[0]) - expected) < 1e-12
    assert got.stages.shape == (2, 1)
    assert abs(float(got.stages[0, 0]) - mid) < 1e-12


def test_stage_system_closes(config, ode):
    tab = get_tableau("gl2")
    x = initial_state(config)
    u = np.array([2.0, 0.1, -0.1])
    hs = 6.0 / 14.0
    Y, F, its, res = solve_stages(tab, ode, x, u, hs)
    assert res <= 1e-12
    assert its > 0
    recon = x + hs * (tab.A @ F)
    assert np.allclose(Y, recon, atol=1e-11)
    for i in range(tab.stages):
        assert np.allclose(F[i], ode(Y[i], u), atol=1e-13)


def test_stage_newton_budget_enforced(config, ode):
    x = initial_state(config)
    with pytest.raises(NewtonDivergence):
        solve_stages(get_tableau("gl1"), ode, x, np.ones(3), 6.0 / 14.0,
                     tol=1e-15, cap=0)


def test_projection_restores_unit_quaternion(config, ode):
    x = initial_state(config)
    x[QUAT] = np.array([0.2, 0.1, -0.3, 1.4])
    out = project_quaternion(ode, x)
    assert abs(np.linalg.norm(out[QUAT]) - 1.0) < 1e-15
    # direction is kept, only the length changes
    assert np.allclose(out[QUAT] / np.linalg.norm(x[QUAT]),
                       x[QUAT] / np.linalg.norm(x[QUAT]) ** 2)
    bad = x.copy()
    bad[QUAT] = 0.0
    with pytest.raises(DegenerateQuaternion):
        project_quaternion(ode, bad)
    with pytest.raises(UnsupportedCombination):
        project_quaternion(oscillator_ode(), np.ones(2))


def test_projected_step_unit_norm(config, ode):
    rng = np.random.default_rng(77)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    out = step_projected(get_method("rk4"), ode, x, u, 1.0 / 14.0, 9.0)
    assert abs(np.linalg.norm(out.x_next[QUAT]) - 1.0) < 1e-15


def test_avf_dispatch_and_quadrature_flavors(config, ode):
    x = initial_state(config)
    u = np.array([1.8, 0.0, 0.2])
    direct = get_method("avf2").step(ode, x, u, 1.0 / 14.0, 5.0)
    via_helper = avf_step(ode, x, u, 1.0 / 14.0, 5.0, points=2)
    assert np.allclose(direct.x_next, via_helper.x_next, atol=1e-14)
    three = avf_step(ode, x, u, 1.0 / 14.0, 5.0, points=3)
    assert direct.stages.shape[0] == 2
    assert three.stages.shape[0] == 3


def test_jet_step_matches_finite_difference(config, ode):
    from shootbench.jets import Jet, jet_space

    tab = get_tableau("gl2")
    x = initial_state(config)
    u = np.array([2.0, 0.05, 0.0])
    hs = 5.0 / 14.0
    rng = np.random.default_rng(11)
    d = rng.normal(size=x.size)
    sp = jet_space((1,))
    xj = Jet(sp, [x, d.reshape(1, -1)])
    x1j, _, _ = irk_step_jet(tab, ode, xj, u, hs)
    eps = 1e-6
    plus, _, _ = irk_step_jet(tab, ode, x + eps * d, u, hs)
    minus, _, _ = irk_step_jet(tab, ode, x - eps * d, u, hs)
    fd = (plus - minus) / (2 * eps)
    assert np.allclose(x1j.coeff((1,))[0], fd, atol=1e-5)
    assert np.allclose(x1j.value, irk_step_jet(tab, ode, x, u, hs)[0])


def test_explicit_generic_matches_step(config, ode):
    tab = get_tableau("rk4")
    m = get_method("rk4")
    x = initial_state(config)
    u = np.array([2.0, -0.1, 0.3])
    hs = 4.0 / 14.0
    x_generic, stages, derivs = explicit_update_generic(tab, ode.f, x, u, hs)
    ref = m.step(ode, x, u, hs, 1.0)
    assert np.allclose(x_generic, ref.x_next, atol=1e-14)
    assert len(stages) == 4 and len(derivs) == 4
    assert np.allclose(np.stack(stages), ref.stages, atol=1e-14)
