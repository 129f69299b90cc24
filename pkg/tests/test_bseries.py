"""Leading-error assembly over rooted trees."""

import numpy as np
import pytest

from shootbench.bseries import (PRINCIPAL_ORDER, elementary_differential,
                                principal_error_breakdown,
                                principal_error_estimate)
from shootbench.dynamics import ControlledODE, scaled_ode
from shootbench.integrators import get_method
from shootbench.tableau import get_tableau
from shootbench.trees import LEAF, enumerate_trees

from conftest import admissible_control, admissible_state

CHAIN2 = (LEAF,)
CHERRY = (LEAF, LEAF)


def linear_ode(lam):
    return ControlledODE(1, 1, lambda x, u: lam * x, name="linear")


def test_layer_constant():
    assert PRINCIPAL_ORDER == 5
    assert len(enumerate_trees(PRINCIPAL_ORDER)) == 9


def test_differential_on_linear_field():
    lam = -1.3
    ode = linear_ode(lam)
    x = np.array([2.0])
    u = np.zeros(1)
    assert np.allclose(elementary_differential(ode, x, u, LEAF), lam * x)
    assert np.allclose(elementary_differential(ode, x, u, CHAIN2),
                       lam ** 2 * x)
    # second derivative of a linear field vanishes, so the cherry does too
    assert np.allclose(elementary_differential(ode, x, u, CHERRY), 0.0)


def test_differential_on_vehicle_field(config, ode):
    rng = np.random.default_rng(17)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    f = ode(x, u)
    assert np.allclose(elementary_differential(ode, x, u, LEAF), f, atol=1e-13)
    assert np.allclose(elementary_differential(ode, x, u, CHAIN2),
                       ode.jac_x(x, u) @ f, atol=1e-10)


def test_high_order_methods_null_the_layer(config, ode):
    rng = np.random.default_rng(23)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    for name in ("rk5", "rk6", "gl3"):
        est = principal_error_estimate(get_tableau(name), ode, x, u,
                                       1.0 / 14.0, 4.0)
        assert np.linalg.norm(est) < 1e-12, name


def test_low_order_tableau_rejected(config, ode):
    with pytest.raises(ValueError, match="order"):
        principal_error_breakdown(get_tableau("gl1"), ode,
                                  np.zeros(14), np.zeros(3), 0.1, 1.0)


def test_estimate_scales_as_h_to_the_fifth(config, ode):
    rng = np.random.default_rng(29)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    tab = get_tableau("rk4")
    e1 = principal_error_estimate(tab, ode, x, u, 0.05, 4.0)
    e2 = principal_error_estimate(tab, ode, x, u, 0.10, 4.0)
    assert np.allclose(e2, 32.0 * e1, rtol=1e-12)


def test_breakdown_structure(config, ode):
    rng = np.random.default_rng(31)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    rows, est = principal_error_breakdown(get_tableau("rk4"), ode, x, u,
                                          1.0 / 14.0, 4.0)
    assert len(rows) == 9
    assert len({r["tree"] for r in rows}) == 9
    for r in rows:
        assert r["gamma"] >= 1 and r["sigma"] >= 1
        assert np.isfinite(r["weight"])
        assert r["contribution_norm"] >= 0.0
    # the assembled estimate can never exceed the sum of its pieces
    assert np.linalg.norm(est) <= sum(r["contribution_norm"] for r in rows) + 1e-15


def test_estimate_predicts_measured_error_linear():
    lam = 1.0
    ode = linear_ode(lam)
    tab = get_tableau("rk4")
    x = np.array([1.0])
    u = np.zeros(1)
    h = 0.02
    est = principal_error_estimate(tab, ode, x, u, h, 1.0)
    measured = np.exp(lam * h) - float(
        get_method("rk4").step(ode, x, u, h, 1.0).x_next[0])
    ratio = measured / float(est[0]) if est[0] else np.inf
    assert abs(abs(ratio) - 1.0) < 0.05, (est, measured)


def test_estimate_predicts_measured_error_vehicle(config, ode):
    rng = np.random.default_rng(37)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    h, s = 1.0 / 56.0, 3.0
    rk4 = get_method("rk4")
    rk6 = get_method("rk6")
    est = principal_error_estimate(get_tableau("rk4"), ode, x, u, h, s)
    x_ref = x
    for _ in range(64):
        x_ref = rk6.step(ode, x_ref, u, h / 64.0, s).x_next
    measured = rk4.step(ode, x, u, h, s).x_next - x_ref
    ratio = np.linalg.norm(measured) / np.linalg.norm(est)
    assert 0.8 < ratio < 1.2, ratio


def test_dilation_consistency(config, ode):
    """Estimating on the dilated field equals dilating inside the helper."""
    rng = np.random.default_rng(41)
    x = admissible_state(rng, config)
    u = admissible_control(rng, config)
    tab = get_tableau("gl2")
    via_s = principal_error_estimate(tab, ode, x, u, 0.05, 2.5)
    pre_scaled = principal_error_estimate(tab, scaled_ode(ode, 2.5), x, u,
                                          0.05, 1.0)
    assert np.allclose(via_s, pre_scaled, rtol=1e-12)
