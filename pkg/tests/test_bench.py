"""Benchmark harness: reference table, caching, artifacts, error capture."""

import csv
import json
from types import SimpleNamespace

import numpy as np
import pytest

from shootbench.bench import (REFERENCE_OUTCOMES, config_hash, divert_config,
                              read_solution, run_adversarial_comparison,
                              run_divert_sweep, run_integrator_sweep,
                              write_rows_csv, write_rows_json, write_solution)
from shootbench.config import default_config, load_config
from shootbench.integrators import method_names
from shootbench.solver import SolverOptions
from shootbench.transcription import ObjectiveSpec

EXPECTED_VARS = {"trbdf2": 449, "gl2": 645, "lobatto3a": 841, "gl3": 841}


def test_reference_table_integrity():
    assert set(REFERENCE_OUTCOMES) == set(method_names())
    for name, entry in REFERENCE_OUTCOMES.items():
        assert entry["vars"] == EXPECTED_VARS.get(name, 253)
        assert isinstance(entry["nnz"], int) and entry["nnz"] > 0
        assert len(entry["flags"]) == 5
        assert all(f in (0, 1) for f in entry["flags"])
    for name in ("rk6", "gl2", "gl3"):
        assert REFERENCE_OUTCOMES[name]["flags"] == (1, 1, 1, 1, 1)
    # footprints grow with the lifted stage blocks
    assert (REFERENCE_OUTCOMES["gl2"]["nnz"]
            < REFERENCE_OUTCOMES["lobatto3a"]["nnz"]
            < REFERENCE_OUTCOMES["gl3"]["nnz"])


def test_config_hash_canonical():
    cfg = default_config()
    h = config_hash(cfg)
    assert len(h) == 16 and int(h, 16) >= 0
    assert config_hash(default_config()) == h
    reordered = {k: cfg[k] for k in reversed(list(cfg))}
    assert config_hash(reordered) == h
    bumped = load_config(overrides={"constraints": {"v_max": 2.9}})
    assert config_hash(bumped) != h


def test_divert_config_shifts_target_only():
    cfg = default_config()
    shifted = divert_config(cfg, 2.0)
    axis = np.asarray(cfg["divert"]["axis"], dtype=float)
    axis /= np.linalg.norm(axis)
    assert np.allclose(shifted["boundary"]["r_target"], 2.0 * axis)
    # the original document is untouched and everything else is equal
    assert cfg["boundary"]["r_target"] == [0.0, 0.0, 0.0]
    shifted["boundary"]["r_target"] = cfg["boundary"]["r_target"]
    assert config_hash(shifted) == config_hash(cfg)


def test_divert_distances_must_ascend():
    with pytest.raises(ValueError, match="ascending"):
        run_divert_sweep(["gl2"], [2.0, 1.0])
    with pytest.raises(ValueError, match="positive"):
        run_divert_sweep(["gl2"], [0.0, 1.0])


def test_solution_file_round_trip(tmp_path):
    rng = np.random.default_rng(3)
    result = SimpleNamespace(
        method="gl2", objective_kind="min_fuel", status="optimal", s=4.25,
        X=rng.normal(size=(15, 14)), U=rng.normal(size=(14, 3)),
        Y=rng.normal(size=(14, 28)))
    path = write_solution(result, tmp_path / "sol.json",
                          extra={"distance": 1.5})
    back = read_solution(path)
    assert back.method == "gl2"
    assert back.objective_kind == "min_fuel"
    assert back.s == 4.25
    assert np.array_equal(back.X, result.X)
    assert np.array_equal(back.U, result.U)
    assert np.array_equal(back.Y, result.Y)
    assert json.loads(path.read_text())["distance"] == 1.5

    bare = SimpleNamespace(method="rk4", objective_kind="feasibility",
                           status="optimal", s=2.0, X=np.zeros((15, 14)),
                           U=np.zeros((14, 3)), Y=None)
    assert read_solution(write_solution(bare, tmp_path / "bare.json")).Y is None


def test_rows_csv_field_union(tmp_path):
    rows = [
        {"method": "a", "status": "optimal", "_result": object()},
        {"method": "b", "status": "error", "error": "boom"},
    ]
    path = tmp_path / "rows.csv"
    write_rows_csv(rows, path)
    with open(path) as fh:
        parsed = list(csv.DictReader(fh))
    assert [r["method"] for r in parsed] == ["a", "b"]
    assert parsed[0]["error"] == ""          # missing cell left empty
    assert "_result" not in parsed[0]        # private fields never leak

    jpath = tmp_path / "rows.json"
    write_rows_json(rows, jpath)
    payload = json.loads(jpath.read_text())
    assert payload[1]["error"] == "boom"
    assert "_result" not in payload[0]


def test_sweep_error_capture_in_row():
    # the chain objective cannot be posed on a multistep map; the sweep must
    # record that in the row instead of raising
    rows = run_integrator_sweep(ObjectiveSpec("adversarial_lr", p=2),
                                ["bdf4"])
    assert len(rows) == 1
    assert rows[0]["status"] == "error"
    assert "UnsupportedCombination" in rows[0]["error"]
    assert rows[0]["ref_vars"] == 253


def test_sweep_cache_round_trip(tmp_path):
    opts = SolverOptions(max_iter=25, keep_history=False)
    kwargs = dict(config=default_config(), cache_dir=tmp_path, options=opts)
    first = run_integrator_sweep("feasibility", ["gl1"], **kwargs)
    assert len(list(tmp_path.glob("*.json"))) == 1
    second = run_integrator_sweep("feasibility", ["gl1"], **kwargs)
    assert second == first                   # byte-identical, straight from disk

    row = first[0]
    assert row["method"] == "gl1"
    assert row["vars"] == 253 == row["ref_vars"]
    assert row["objective"] == "feasibility"
    assert row["status"] in ("optimal", "feasible", "iteration_cap")
    for key in ("declared_nnz", "iterations", "eps_ol", "ol_pass",
                "config_hash", "s", "terminal_mass", "ref_nnz"):
        assert key in row, key


def test_divert_sweep_rows_and_solutions(tmp_path):
    opts = SolverOptions(max_iter=60, keep_history=False)
    rows = run_divert_sweep(["gl2"], [0.5, 1.0], config=default_config(),
                            options=opts, solutions_dir=tmp_path)
    assert [r["distance"] for r in rows] == [0.5, 1.0]
    assert {p.name for p in tmp_path.iterdir()} == {"gl2-divert-0.5.json",
                                                    "gl2-divert-1.json"}
    sol = read_solution(tmp_path / "gl2-divert-1.json")
    assert sol.X.shape == (15, 14)
    for row in rows:
        assert row["status"] == "optimal"
        assert row["error"] == ""


def test_adversarial_comparison_shape():
    opts = SolverOptions(max_iter=15, keep_history=False)
    rows = run_adversarial_comparison([2], method="gl2",
                                      config=default_config(), options=opts)
    assert len(rows) == 1
    row = rows[0]
    assert row["p"] == 2 and row["method"] == "gl2"
    assert row["r"] == default_config()["adversarial"]["r"]
    # budget-capped solves still report the recovered-fraction columns
    assert "j_best" in row
    assert "max_fuel_ratio" in row and "min_fuel_ratio" in row
