"""Replay checks: reference integration, drift, LTE isolation, stiffness."""

import json
from types import SimpleNamespace

import numpy as np
import pytest

from shootbench.dynamics import ControlledODE, initial_state
from shootbench.integrators import get_method
from shootbench.jets import amatvec
from shootbench.validation import (OL_THRESHOLD, ValidationReport,
                                   attitude_drift_fixture, isolate_lte,
                                   map_drift_trace, quaternion_drift,
                                   ref_ol_check, reference_replay,
                                   replay_open_loop, stiffness_ratio,
                                   validate_solution)


def linear_ode(lam):
    return ControlledODE(1, 1, lambda x, u: lam * x, name="linear")


def matrix_ode(A):
    A = np.asarray(A, dtype=float)
    return ControlledODE(A.shape[0], 1, lambda x, u: amatvec(A, x))


def mild_controls(n_int=14):
    return np.tile([2.0, 0.05, -0.03], (n_int, 1))


def tumbling_controls(n_int=14, mag=1.3):
    U = np.empty((n_int, 3))
    for k in range(n_int):
        d = np.array([0.3, np.sin(2.1 * k), np.cos(2.1 * k)])
        U[k] = mag * d / np.linalg.norm(d)
    return U


def test_reference_replay_matches_closed_form():
    lam, s = -0.9, 2.0
    ode = linear_ode(lam)
    U = np.zeros((5, 1))
    X = reference_replay(ode, np.array([3.0]), U, s)
    t = np.linspace(0.0, 1.0, 6)
    assert np.allclose(X[:, 0], 3.0 * np.exp(lam * s * t), atol=1e-10)


def test_reference_replay_zero_horizon():
    ode = linear_ode(1.0)
    X = reference_replay(ode, np.array([2.0]), np.zeros((3, 1)), 0.0)
    assert np.allclose(X, 2.0)


def test_reference_replay_self_consistency(config, ode):
    x0 = initial_state(config)
    U = mild_controls()
    tight = reference_replay(ode, x0, U, 5.0, ref_tol=1e-12)
    loose = reference_replay(ode, x0, U, 5.0, ref_tol=1e-10)
    assert np.max(np.abs(tight - loose)) < 1e-6


def test_quaternion_drift_values():
    X = np.zeros((3, 14))
    X[:, 7:11] = [0.0, 0.0, 0.0, 1.0]
    X[2, 7:11] = [0.0, 0.0, 0.0, 1.5]
    drift = quaternion_drift(X)
    assert np.allclose(drift, [0.0, 0.0, 0.5])


def test_replay_open_loop_accepts_accurate_map(config, ode):
    x0 = initial_state(config)
    U = mild_controls()
    X = get_method("rk6").propagate(ode, x0, U, 1.0 / 14.0, 5.0)
    result = SimpleNamespace(X=X, U=U, s=5.0)
    _, eps_ol, drift = replay_open_loop(result, ode)
    assert eps_ol < OL_THRESHOLD
    assert drift.shape == (15,)
    with pytest.raises(ValueError, match="ref_tol"):
        replay_open_loop(result, ode, ref_tol=1e-8)


def test_ref_ol_check_separates_regimes(config, ode):
    x0 = initial_state(config)
    assert ref_ol_check(get_method("gl2"), (mild_controls(), 5.0), ode, x0)
    assert ref_ol_check(get_method("rk6"), (mild_controls(), 5.0), ode, x0)
    # an aggressive tumbling profile at long flight time defeats the
    # low-order maps: their endpoint drifts past the open-loop threshold
    bad = (tumbling_controls(), 12.0)
    assert not ref_ol_check(get_method("trapezoidal"), bad, ode, x0)
    assert not ref_ol_check(get_method("rk4"), bad, ode, x0)


def test_isolate_lte_truth_reset(config, ode):
    x0 = initial_state(config)
    U = mild_controls()
    s = 5.0
    X_ref = reference_replay(ode, x0, U, s)
    rk4 = get_method("rk4")
    out = isolate_lte(rk4, ode, (X_ref, U, s))
    assert out["delta"].shape == (14,)
    assert out["estimate"].shape == (14,)
    # each entry restarts from the true state, so entry k is exactly the
    # one-step gap at node k
    k = 6
    pred = rk4.step(ode, X_ref[k], U[k], 1.0 / 14.0, s).x_next
    assert np.isclose(out["delta"][k], np.linalg.norm(X_ref[k + 1] - pred))


def test_isolate_lte_estimate_gate(config, ode):
    x0 = initial_state(config)
    U = mild_controls()
    X_ref = reference_replay(ode, x0, U, 5.0)
    traj = (X_ref, U, 5.0)
    assert isolate_lte(get_method("gl1"), ode, traj)["estimate"] is None
    assert isolate_lte(get_method("trbdf2"), ode, traj)["estimate"] is None
    assert isolate_lte(get_method("bdf4"), ode, traj)["estimate"] is None
    assert isolate_lte(get_method("gl2"), ode, traj)["estimate"] is not None
    off = isolate_lte(get_method("gl2"), ode, traj, with_estimates=False)
    assert off["estimate"] is None


def test_isolate_lte_estimate_tracks_measured(config, ode):
    """On a fine mesh the h^5 layer should carry the whole rk4 step error."""
    x0 = initial_state(config)
    n_int = 56
    U = mild_controls(n_int)
    s = 3.0
    X_ref = reference_replay(ode, x0, U, s)
    out = isolate_lte(get_method("rk4"), ode, (X_ref, U, s), h=1.0 / n_int)
    ratio = out["delta"] / out["estimate"]
    assert np.all((0.7 < ratio) & (ratio < 1.3))


def test_isolate_lte_multistep_uses_exact_history(config, ode):
    x0 = initial_state(config)
    U = mild_controls()
    s = 5.0
    X_ref = reference_replay(ode, x0, U, s)
    out = isolate_lte(get_method("bdf4"), ode, (X_ref, U, s))
    assert out["delta"].shape == (14,)
    assert np.all(out["delta"] < 1e-2)
    assert np.all(out["delta"] > 0.0)


def test_stiffness_ratio_diagonal_cases():
    ode = matrix_ode(np.diag([-1.0, -100.0]))
    X = np.zeros((3, 2))
    U = np.zeros((2, 1))
    assert np.isclose(stiffness_ratio(ode, X, U), 100.0)
    assert np.isclose(stiffness_ratio(matrix_ode(np.diag([-1.0, -1.0])), X, U),
                      1.0)


def test_stiffness_ratio_degenerate_rotation():
    ode = matrix_ode([[0.0, 1.0], [-1.0, 0.0]])   # purely imaginary spectrum
    X = np.zeros((3, 2))
    U = np.zeros((2, 1))
    ratio, degenerate = stiffness_ratio(ode, X, U, with_flag=True)
    assert ratio == 0.0
    assert degenerate


def test_stiffness_ratio_floor_drops_near_zero_real_parts():
    ode = matrix_ode(np.diag([-1e-12, -1.0]))
    X = np.zeros((2, 2))
    U = np.zeros((1, 1))
    assert np.isclose(stiffness_ratio(ode, X, U), 1.0)


def test_attitude_fixture_is_admissible(config):
    fix = attitude_drift_fixture(config)
    con = config["constraints"]
    lever = np.linalg.norm(config["rocket"]["r_TB"])
    tau_cap = lever * con["T_max"] * np.sin(np.deg2rad(con["delta_max_deg"]))
    mags = np.linalg.norm(fix.U, axis=1)
    assert np.all(mags <= tau_cap + 1e-12)
    assert np.isclose(np.linalg.norm(fix.x0[0:4]), 1.0)
    # the excited body rates stay inside the vehicle's rate envelope
    X_ref = reference_replay(fix.ode, fix.x0, fix.U, fix.s, h=fix.h)
    rates = np.linalg.norm(X_ref[:, 4:7], axis=1)
    assert np.all(rates < fix.omega_max)


def test_drift_separation_gauss_vs_explicit(config):
    fix = attitude_drift_fixture(config)
    drifts = {}
    for name in ("gl2", "gl3", "rk4", "rk5"):
        trace = map_drift_trace(get_method(name), fix.ode, fix.x0, fix.U,
                                fix.s, h=fix.h, quat=fix.quat)
        drifts[name] = trace.max()
    assert drifts["gl2"] <= 1e-11
    assert drifts["gl3"] <= 1e-11
    gauss = max(drifts["gl2"], drifts["gl3"], 1e-16)
    assert drifts["rk4"] >= 1e3 * gauss
    assert drifts["rk5"] >= 1e3 * gauss


def test_validate_solution_report(config, ode, tmp_path):
    x0 = initial_state(config)
    U = mild_controls()
    X = get_method("gl2").propagate(ode, x0, U, 1.0 / 14.0, 5.0)
    result = SimpleNamespace(X=X, U=U, s=5.0, method="gl2")
    report = validate_solution(result, config,
                               reference_controls=(U, 5.0))
    assert report.method == "gl2"
    assert report.ol_pass == (report.eps_ol <= OL_THRESHOLD)
    assert report.ref_ol_pass is True
    assert report.tau.shape == (15,)
    assert report.lte_trace.shape == (14,)
    assert not report.stiffness_degenerate
    assert report.stiffness_ratio < 100.0

    out = report.save(tmp_path)
    payload = json.loads((out / "validation.json").read_text())
    assert payload["method"] == "gl2"
    assert len(payload["drift_trace"]) == 15
    lines = (out / "validation.csv").read_text().strip().splitlines()
    assert len(lines) == 16
    assert lines[0] == "tau,drift,map_drift,lte,lte_h5_estimate"
    first = lines[1].split(",")
    assert first[3] == "" and first[4] == ""    # no step ends at tau = 0


def test_validate_solution_without_reference_controls(config, ode):
    x0 = initial_state(config)
    U = mild_controls()
    X = get_method("rk4").propagate(ode, x0, U, 1.0 / 14.0, 5.0)
    result = SimpleNamespace(X=X, U=U, s=5.0, method="rk4")
    report = validate_solution(result, config)
    assert report.ref_ol_pass is None
    assert report.lte_estimates is not None


def test_report_flag_consistency_enforced():
    with pytest.raises(ValueError, match="ol_pass"):
        ValidationReport(
            method="rk4", eps_ol=1.0, ol_pass=True, ref_ol_pass=None,
            tau=np.zeros(2), drift_trace=np.zeros(2),
            map_drift_trace=np.zeros(2), lte_trace=np.zeros(1),
            lte_estimates=None, stiffness_ratio=1.0,
            stiffness_degenerate=False)
