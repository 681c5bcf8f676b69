"""Strong-error Monte Carlo, order regression, and convergence studies.

The geometric-Brownian-motion test is the statistical oracle: the exact
solution is known in closed form, the coarse runs consume coarsened
copies of the same paths, and the observed Euler order must land near
1/2.  Everything runs on fixed seeds, so outcomes are deterministic.
"""

import dataclasses
import json
import math

import numpy as np
import pytest

from spdesplit.analysis import (
    ConvergenceReport,
    RateModel,
    expected_orders,
    l2_distance,
    observed_order,
    run_convergence_study,
    strong_error_mc,
)
from spdesplit.dg_space import DgFunction, DgSpace, project_l2
from spdesplit.mesh import build_uniform_mesh
from spdesplit.noise import QWienerSpec, SeedPolicy, coarsen_path, sample_increments
from spdesplit.operators import SparseOperator
from spdesplit.presets import deterministic_heat_manufactured, experiment1
from spdesplit.schemes import ProblemInstance, SchemeConfig, run_trajectory


# -- order regression ---------------------------------------------------------

def test_observed_order_examples():
    est = observed_order([1e-2, 5e-3], [1 / 8, 1 / 16])
    assert est.local_orders == pytest.approx([1.0], abs=1e-12)
    est = observed_order([1e-2, 2.5e-3], [1 / 8, 1 / 16])
    assert est.local_orders == pytest.approx([2.0], abs=1e-12)


def test_observed_order_exact_power_law():
    params = [0.1 * 2.0**-j for j in range(4)]
    errors = [3.0 * p**1.5 for p in params]
    est = observed_order(errors, params)
    assert est.slope == pytest.approx(1.5, abs=1e-12)
    assert est.local_orders == pytest.approx([1.5, 1.5, 1.5], abs=1e-12)


def test_observed_order_input_validation():
    with pytest.raises(ValueError):
        observed_order([1e-2, 0.0], [0.5, 0.25])
    with pytest.raises(ValueError):
        observed_order([1e-2, -1e-3], [0.5, 0.25])
    with pytest.raises(ValueError):
        observed_order([1e-2, 1e-3], [0.25, 0.5])
    with pytest.raises(ValueError):
        observed_order([1e-2], [0.5, 0.25])


# -- theoretical rates ----------------------------------------------------------

def test_expected_orders_examples():
    m = RateModel(theta_x0=0.9, theta_f=0.49, theta_b=0.49, theta_u=0.49)
    out = expected_orders(m)
    assert out["time_order"] == pytest.approx(0.49)
    assert out["space_order"] == pytest.approx(1.98)

    z = RateModel(theta_x0=0.0, theta_f=0.0, theta_b=0.0, theta_u=0.0)
    out = expected_orders(z)
    assert out["time_order"] == 0.0
    assert out["space_order"] == 1.0


def test_expected_orders_selfadjoint_branch():
    m = RateModel(theta_x0=0.9, theta_f=0.2, theta_b=0.3, theta_u=0.4,
                  selfadjoint_commuting=True)
    assert expected_orders(m)["time_order"] == pytest.approx(0.5)


def test_rate_model_validation():
    with pytest.raises(ValueError):
        RateModel(theta_x0=1.0, theta_f=0.1, theta_b=0.1, theta_u=0.1)
    with pytest.raises(ValueError):
        RateModel(theta_x0=0.5, theta_f=0.6, theta_b=0.1, theta_u=0.1)
    with pytest.raises(ValueError):
        RateModel(theta_x0=0.5, theta_f=0.1, theta_b=0.5, theta_u=0.1)


# -- cross-mesh distance ---------------------------------------------------------

def test_l2_distance_same_space_is_coefficient_norm():
    space = DgSpace(build_uniform_mesh(1, 8))
    a = project_l2(space, lambda p: p[:, 0])
    b = project_l2(space, lambda p: 1.0 - p[:, 0])
    want = np.linalg.norm(a.coefficients - b.coefficients)
    assert l2_distance(a, b) == pytest.approx(want, rel=1e-14)


def test_l2_distance_nested_meshes_exact_for_p1():
    fine = DgSpace(build_uniform_mesh(1, 16))
    coarse = DgSpace(build_uniform_mesh(1, 4))
    f = project_l2(fine, lambda p: 2.0 * p[:, 0] - 0.3)
    c = project_l2(coarse, lambda p: 2.0 * p[:, 0] - 0.3)
    assert l2_distance(f, c) <= 1e-14
    # order does not matter
    assert l2_distance(c, f) <= 1e-14


def test_l2_distance_constant_gap():
    fine = DgSpace(build_uniform_mesh(2, 8))
    coarse = DgSpace(build_uniform_mesh(2, 4))
    f = project_l2(fine, lambda p: np.full(len(p), 3.0))
    c = project_l2(coarse, lambda p: np.full(len(p), 1.0))
    assert l2_distance(f, c) == pytest.approx(2.0, rel=1e-12)


# -- strong error Monte Carlo ------------------------------------------------------

def _scalar_gbm():
    space = DgSpace(build_uniform_mesh(1, 1))
    zero = SparseOperator.from_dense(np.zeros((2, 2)))
    spec = QWienerSpec.experiment2(n_modes=1)
    sqrt2 = math.sqrt(2.0)

    def diffusion(v, inc):
        return DgFunction(space, 0.5 * v.coefficients * (inc[0] * sqrt2))

    problem = ProblemInstance(
        space=space, operator=zero, split_operators=(zero, zero),
        drift=lambda t, v: DgFunction(space, np.zeros(2)),
        diffusion=diffusion,
        initial=DgFunction(space, np.array([1.0, 0.0])))
    return space, spec, problem


def test_identical_runners_zero_error():
    space, spec, problem = _scalar_gbm()
    policy = SeedPolicy(5)
    state = DgFunction(space, np.array([2.0, 0.0]))

    def reference_runner(j):
        return state, sample_increments(spec, 4, 1.0, policy, j)

    def coarse_runner(j, path):
        return state

    error, sem = strong_error_mc(coarse_runner, reference_runner, J=5)
    assert error == 0.0 and sem == 0.0


def test_constant_offset_error():
    space = DgSpace(build_uniform_mesh(1, 4))
    spec = QWienerSpec.experiment2(n_modes=1)
    policy = SeedPolicy(6)
    zero_fn = project_l2(space, lambda p: np.zeros(len(p)))
    c_fn = project_l2(space, lambda p: np.full(len(p), -0.75))

    def reference_runner(j):
        return zero_fn, sample_increments(spec, 2, 1.0, policy, j)

    error, sem = strong_error_mc(lambda j, path: c_fn, reference_runner, J=4)
    assert error == pytest.approx(0.75, rel=1e-13)
    assert sem == pytest.approx(0.0, abs=1e-13)


def test_sample_failure_names_the_sample():
    space, spec, problem = _scalar_gbm()
    policy = SeedPolicy(7)

    def reference_runner(j):
        return problem.initial, sample_increments(spec, 2, 1.0, policy, j)

    def coarse_runner(j, path):
        if j == 3:
            raise RuntimeError("boom")
        return problem.initial

    with pytest.raises(RuntimeError, match="sample 3"):
        strong_error_mc(coarse_runner, reference_runner, J=5)


def test_j_below_two_rejected():
    with pytest.raises(ValueError):
        strong_error_mc(lambda j, p: None, lambda j: (None, None), J=1)


def test_gbm_euler_order_near_half():
    space, spec, problem = _scalar_gbm()
    policy = SeedPolicy(777)
    n_fine = 256

    def reference_runner(j):
        fine = sample_increments(spec, n_fine, 1.0, policy, j)
        w_tf = math.sqrt(2.0) * fine.increments[:, 0].sum()
        exact = math.exp(-0.125 + 0.5 * w_tf)
        return DgFunction(space, np.array([exact, 0.0])), fine

    errors = []
    taus = []
    for j in range(4, 9):
        N = 2**j
        m = n_fine // N

        def coarse_runner(sample, path, N=N, m=m):
            cp = coarsen_path(path, m)
            cfg = SchemeConfig("euler", 1.0 / N, N)
            return run_trajectory(problem, cfg, cp).final

        error, sem = strong_error_mc(coarse_runner, reference_runner,
                                     J=1000, threads=8)
        assert sem < 0.5 * error
        errors.append(error)
        taus.append(2.0**-j)
    est = observed_order(errors, taus)
    assert 0.35 <= est.slope <= 0.65


# -- convergence studies --------------------------------------------------------------

def test_single_level_study_has_no_orders():
    preset = deterministic_heat_manufactured(dim=1, M=32, j_range=(4, 4))
    report = run_convergence_study(preset, axis="time", method="dr")
    assert len(report.rows) == 1
    assert report.rows[0].local_order is None
    assert report.slope is None
    assert report.rows[0].samples == 1
    assert report.rows[0].sem == 0.0


def test_heat_time_study_dr_slope():
    preset = deterministic_heat_manufactured(dim=1, M=128, j_range=(4, 8))
    report = run_convergence_study(preset, axis="time", method="dr")
    errors = [r.error for r in report.rows]
    assert all(a > b for a, b in zip(errors, errors[1:]))  # monotone coupling
    assert report.slope >= 0.9


def test_desk_stochastic_study_determinism_and_csv():
    preset = dataclasses.replace(
        experiment1(),
        time_schedule=(0.1 * 2.0**-2, 0.1 * 2.0**-3),
        time_reference_tau=0.1 * 2.0**-5,
        time_M=8,
        samples=4,
    )
    r1 = run_convergence_study(preset, axis="time", method="dr", base_seed=42,
                               threads=1)
    r2 = run_convergence_study(preset, axis="time", method="dr", base_seed=42,
                               threads=4)
    assert r1.csv_text() == r2.csv_text()
    lines = r1.csv_text().strip().split("\n")
    assert lines[0] == "level,h,tau,samples,error,sem,local_order"
    assert len(lines) == 3
    first = lines[1].split(",")
    assert first[0] == "1" and first[3] == "4" and first[6] == ""
    assert float(first[4]) > 0
    # different seed changes the numbers
    r3 = run_convergence_study(preset, axis="time", method="dr", base_seed=1)
    assert r3.csv_text() != r1.csv_text()


def test_desk_space_study_runs_cross_mesh():
    preset = dataclasses.replace(
        experiment1(),
        space_schedule=(4, 8),
        space_reference_M=16,
        space_tau=0.1 / 8,
        samples=3,
    )
    report = run_convergence_study(preset, axis="space", method="dr",
                                   base_seed=3, threads=2)
    assert [r.h for r in report.rows] == [0.25, 0.125]
    assert all(r.tau == 0.1 / 8 for r in report.rows)
    assert all(np.isfinite(r.error) and r.error > 0 for r in report.rows)
    assert report.rows[1].local_order is not None
    assert report.metadata["axis"] == "space"


def test_study_write_files(tmp_path):
    preset = deterministic_heat_manufactured(dim=1, M=32, j_range=(4, 5))
    report = run_convergence_study(preset, axis="time", method="euler")
    csv_path = tmp_path / "study.csv"
    report.write(csv_path)
    assert csv_path.read_text() == report.csv_text()
    sidecar = json.loads((tmp_path / "study.json").read_text())
    assert sidecar["method"] == "euler"
    assert sidecar["preset"] == "deterministic_heat"
    assert "wall_seconds" in sidecar and "version" in sidecar
    assert sidecar["axis"] == "time"


def test_reference_must_be_finer():
    preset = dataclasses.replace(
        experiment1(),
        time_schedule=(0.1 * 2.0**-2,),
        time_reference_tau=0.1 * 2.0**-2,
        time_M=4,
        samples=2,
    )
    with pytest.raises(ValueError):
        run_convergence_study(preset, axis="time", method="dr")


def test_missing_schedule_rejected():
    preset = deterministic_heat_manufactured(dim=1, M=16)
    with pytest.raises(ValueError):
        run_convergence_study(preset, axis="space", method="dr")


def test_level_subset():
    preset = deterministic_heat_manufactured(dim=1, M=64, j_range=(4, 8))
    report = run_convergence_study(preset, axis="time", method="euler",
                                   levels=[0, 2])
    assert len(report.rows) == 2
    assert report.rows[0].tau == 0.1 * 2.0**-4
    assert report.rows[1].tau == 0.1 * 2.0**-6
