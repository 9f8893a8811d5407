"""
End-to-end checks on every bundled fixture: the viscosity iteration lands on the
unique fixed point of G, and every sampled certificate holds.
"""
import json
from dataclasses import replace

import numpy as np
import pytest

from conftest import CONVERGENCE_FIXTURES, fixture_path, random_certified_operator
from main import EXIT_OK, cmd_verify
from visolve.config import load_config
from visolve.operators import check_expansive, check_forward_step, nonexpansive_factor, step_window
from visolve.oracle import (
    ORACLE_TOL,
    check_G_contraction,
    fixed_point_G,
    remark_bound_check,
    singleton_check,
    stage_triple,
    vi_residual,
    viscosity_vi_value,
)
from visolve.solver import contraction_factor, iterate_once, solve, validate
from visolve.space import HILBERT_K, distance

FIXTURE_CASES = pytest.mark.parametrize("name", CONVERGENCE_FIXTURES)


@pytest.fixture(scope="module")
def solved():
    """fixture name -> (config, oracle p, trace), computed once per module."""
    cache = {}

    def get(name):
        if name not in cache:
            config = load_config(fixture_path(name))
            p = fixed_point_G(config.problem)
            trace = solve(config.problem, config.x1, config.tol, config.max_iter, reference_p=p)
            cache[name] = (config, p, trace)
        return cache[name]
    return get


def test_bundled_fixtures_present():
    assert len(CONVERGENCE_FIXTURES) == 10


@FIXTURE_CASES
def test_fixture_satisfies_hypotheses(name):
    config = load_config(fixture_path(name))
    assert validate(config.problem).ok
    assert contraction_factor(config.problem) < 1


@FIXTURE_CASES
def test_fixed_point_is_a_singleton(name):
    spec = load_config(fixture_path(name)).problem
    report = singleton_check(spec, n_starts=10, seed=0)
    assert report.passed, report


@FIXTURE_CASES
def test_solver_agrees_with_oracle(solved, name):
    config, p, trace = solved(name)
    assert trace.terminated_by == "tolerance"
    assert len(trace) < config.max_iter
    assert np.linalg.norm(trace.final - p) <= 1e-6
    assert np.linalg.norm(trace.final - p) <= 10 * (config.tol + ORACLE_TOL)


@FIXTURE_CASES
def test_oracle_solves_the_vi_system(solved, name):
    config, p, _ = solved(name)
    assert vi_residual(config.problem, *stage_triple(config.problem, p)) <= 1e-9


@FIXTURE_CASES
def test_expansivity_bound_along_trace(solved, name):
    config, p, trace = solved(name)
    report = remark_bound_check(trace, config.problem, p)
    assert report.passed, report


@FIXTURE_CASES
def test_viscosity_vi_at_limit(solved, name):
    config, p, trace = solved(name)
    assert abs(viscosity_vi_value(trace.final, p, config.problem.f)) <= config.tol


@FIXTURE_CASES
def test_verify_passes(tmp_path, name):
    out = tmp_path / "report.json"
    assert cmd_verify(load_config(fixture_path(name)), 300, out) == EXIT_OK
    assert all(entry["passed"] for entry in json.loads(out.read_text()).values())


def test_scalar_box_second_iterate():
    config = load_config(fixture_path("scalar_box.json"))
    step = iterate_once(config.problem, config.x1, 1)
    assert abs(step.x_next[0] - 13 / 24) <= 2 * np.spacing(13 / 24)


def test_endpoint_fixed_point():
    config = load_config(fixture_path("scalar_endpoint.json"))
    p = fixed_point_G(config.problem)
    assert abs(p[0] - 1.0) <= 1e-12


@pytest.mark.parametrize(
    "name, expected",
    [
        ("scalar_box.json", [0.0]),
        ("box_active.json", [1.0, 0.0]),
        ("scalar_halfspace.json", [0.0]),
        ("diag_rotation.json", [0.5, -0.25]),
        ("dim5.json", [0.2, -0.4, 0.6, 0.0, -0.8]),
    ],
)
def test_known_solutions(solved, name, expected):
    _, p, trace = solved(name)
    np.testing.assert_allclose(p, expected, atol=1e-9)
    np.testing.assert_allclose(trace.final, expected, atol=1e-6)


RANDOM_SEEDS = range(20)


@pytest.mark.parametrize("seed", RANDOM_SEEDS)
def test_random_operators_are_expansive(seed):
    A = random_certified_operator(seed)
    report = check_expansive(A, 10_000, seed)
    assert report.passed, report


@pytest.mark.parametrize("seed", RANDOM_SEEDS)
def test_random_operators_forward_step_factor(seed):
    A = random_certified_operator(seed)
    window = step_window(A)
    for lam in np.linspace(window / 11, window * 10 / 11, 10):
        assert nonexpansive_factor(A, lam) < 1
        report = check_forward_step(A, lam, HILBERT_K, 10_000, seed)
        assert report.passed, (lam, report)


@FIXTURE_CASES
def test_G_contraction_factor_on_fixtures(name):
    spec = load_config(fixture_path(name)).problem
    report = check_G_contraction(spec, 1000, seed=0)
    assert report.passed, report


@FIXTURE_CASES
def test_iterates_stay_in_C(solved, name):
    config, _, trace = solved(name)
    C = config.problem.C
    assert all(distance(C, rec.x) <= 1e-10 for rec in trace.iterations)
    assert distance(C, trace.final) <= 1e-10


def test_window_violation_names_the_bound():
    config = load_config(fixture_path("diag_rotation.json"))
    spec = replace(config.problem, lambda3=0.5)
    messages = [str(v) for v in validate(spec).violations]
    assert messages == ["step-size window (A3): step size lambda3 = 0.5 exceeds window (0.3889)"]
