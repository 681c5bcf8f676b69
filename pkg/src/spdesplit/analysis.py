"""Strong-error estimation and convergence-order studies.

The Monte Carlo harness couples every coarse run to a fine reference
through a shared noise path: the reference runner draws (or computes)
the fine path once per sample, and each coarse runner consumes a
coarsened copy of that same path.  Strong errors are then root mean
square L2 distances at the final time, with a delta-method standard
error so slopes can be trusted (or rejected) quantitatively.

Study output is a small CSV table (one row per refinement level) plus a
JSON sidecar with the run configuration.  CSV bytes depend only on the
preset, method, and seed, never on the thread count.
"""

import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from . import __version__
from .dg_space import DgFunction, project_l2
from .noise import coarsen_path, sample_increments, SeedPolicy
from .presets import ExperimentPreset, make_problem
from .schemes import SchemeConfig, run_trajectory


# -- theoretical rates ---------------------------------------------------------

@dataclass(frozen=True)
class RateModel:
    """Regularity exponents of the data entering the error estimates.

    theta_x0 grades the initial value, theta_f the drift, theta_b the
    diffusion coefficient, theta_u the noise covariance.  The drift and
    diffusion exponents stay below 1/2; all live in [0, 1).
    """

    theta_x0: float
    theta_f: float
    theta_b: float
    theta_u: float
    selfadjoint_commuting: bool = False

    def __post_init__(self):
        for label, v in (("theta_x0", self.theta_x0), ("theta_f", self.theta_f),
                         ("theta_b", self.theta_b), ("theta_u", self.theta_u)):
            if not 0.0 <= v < 1.0:
                raise ValueError(f"{label}={v} is outside [0, 1)")
        if self.theta_f >= 0.5:
            raise ValueError(f"theta_f={self.theta_f} must stay below 1/2")
        if self.theta_b >= 0.5:
            raise ValueError(f"theta_b={self.theta_b} must stay below 1/2")


def expected_orders(model: RateModel) -> dict:
    """Predicted strong orders in time and space for the splitting scheme."""
    if model.selfadjoint_commuting:
        time_order = min(model.theta_x0, 0.5)
    else:
        time_order = min(model.theta_x0, model.theta_f, model.theta_b, 0.5)
    space_order = min(2.0 * min(model.theta_b, model.theta_u) + 1.0,
                      2.0 * min(model.theta_x0, model.theta_f) + 1.0)
    return {"time_order": time_order, "space_order": space_order}


# -- order regression ----------------------------------------------------------

class OrderEstimate(NamedTuple):
    local_orders: tuple
    slope: float


def observed_order(errors, params) -> OrderEstimate:
    """Convergence order from an error sequence over decreasing parameters.

    Local orders are pairwise log ratios; the slope is the least-squares
    fit of log(error) against log(param).
    """
    errors = [float(e) for e in errors]
    params = [float(p) for p in params]
    if len(errors) != len(params):
        raise ValueError("errors and params must have equal length")
    if len(errors) < 2:
        raise ValueError("need at least two levels to estimate an order")
    if any(e <= 0.0 for e in errors):
        raise ValueError("errors must be strictly positive")
    if any(b >= a for a, b in zip(params, params[1:])):
        raise ValueError("params must be strictly decreasing")
    local = tuple(
        math.log(ea / eb) / math.log(pa / pb)
        for (ea, pa), (eb, pb) in zip(zip(errors, params),
                                      zip(errors[1:], params[1:]))
    )
    slope = float(np.polyfit(np.log(params), np.log(errors), 1)[0])
    return OrderEstimate(local_orders=local, slope=slope)


# -- L2 distance across meshes ---------------------------------------------------

def l2_distance(a: DgFunction, b: DgFunction) -> float:
    """L2 distance between dG functions, possibly on different meshes.

    On a shared mesh this is the Euclidean coefficient distance
    (orthonormal basis).  Otherwise the coarser function is point
    evaluated at the finer mesh's quadrature points, which is exact
    for nested refinements.
    """
    if a.space.dim != b.space.dim:
        raise ValueError("functions live on meshes of different dimension")
    if a.space is b.space or a.space.mesh.M == b.space.mesh.M:
        return float(np.linalg.norm(a.coefficients - b.coefficients))
    fine, coarse = (a, b) if a.space.mesh.M > b.space.mesh.M else (b, a)
    space = fine.space
    pts = space.quad_points().reshape(-1, space.dim)
    cv = coarse.evaluate(pts).reshape(space.mesh.n_elements, -1)
    fv = space.eval_at_quadrature(fine)
    return math.sqrt(max(space.quad_integrate((fv - cv) ** 2), 0.0))


def _distance_to_function(fn: DgFunction, values_fn) -> float:
    """Quadrature L2 distance from a dG function to a pointwise function."""
    space = fn.space
    pts = space.quad_points().reshape(-1, space.dim)
    want = np.asarray(values_fn(pts), dtype=float).reshape(space.mesh.n_elements, -1)
    have = space.eval_at_quadrature(fn)
    return math.sqrt(max(space.quad_integrate((have - want) ** 2), 0.0))


# -- strong error Monte Carlo ------------------------------------------------------

def strong_error_mc(coarse_runner: Callable, reference_runner: Callable,
                    J: int, threads: int = 1) -> tuple:
    """Coupled strong error sqrt(E |X_coarse - X_ref|^2) over J samples.

    reference_runner(sample_id) returns (reference_final, fine_path);
    coarse_runner(sample_id, fine_path) returns the coarse final state.
    Returns (error, sem) where sem propagates the standard error of the
    mean squared error through the square root.
    """
    if J < 2:
        raise ValueError("strong error needs J >= 2 samples")

    def one(j):
        try:
            ref, fine = reference_runner(j)
            coarse = coarse_runner(j, fine)
            return l2_distance(ref, coarse) ** 2
        except Exception as exc:
            raise RuntimeError(f"sample {j} failed: {exc}") from exc

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            sq = list(pool.map(one, range(J)))
    else:
        sq = [one(j) for j in range(J)]
    sq = np.asarray(sq)
    mean_sq = float(sq.mean())
    error = math.sqrt(max(mean_sq, 0.0))
    if error == 0.0:
        return 0.0, 0.0
    sem = float(sq.std(ddof=1)) / math.sqrt(J) / (2.0 * error)
    return error, sem


# -- study report ----------------------------------------------------------------

@dataclass(frozen=True)
class StudyRow:
    level: int
    h: float
    tau: float
    samples: int
    error: float
    sem: float
    local_order: float | None


@dataclass(frozen=True)
class ConvergenceReport:
    rows: tuple
    metadata: dict = field(compare=False)
    slope: float | None = None

    def csv_text(self) -> str:
        lines = ["level,h,tau,samples,error,sem,local_order"]
        for r in self.rows:
            order = "" if r.local_order is None else repr(float(r.local_order))
            lines.append(f"{r.level},{repr(float(r.h))},{repr(float(r.tau))},"
                         f"{r.samples},{repr(float(r.error))},"
                         f"{repr(float(r.sem))},{order}")
        return "\n".join(lines) + "\n"

    def json_text(self) -> str:
        return json.dumps(self.metadata, indent=2, sort_keys=True) + "\n"

    def write(self, csv_path) -> None:
        csv_path = Path(csv_path)
        csv_path.write_text(self.csv_text())
        csv_path.with_suffix(".json").write_text(self.json_text())


def _steps(t_f: float, tau: float, label: str) -> int:
    n = int(round(t_f / tau))
    if n < 1 or abs(n * tau - t_f) > 1e-9 * t_f:
        raise ValueError(f"{label}={tau} does not divide t_f={t_f}")
    return n


def _select(schedule, levels, label):
    if schedule is None:
        raise ValueError(f"preset has no {label} schedule")
    if levels is None:
        return list(schedule)
    out = []
    for i in levels:
        if not 0 <= i < len(schedule):
            raise ValueError(f"level index {i} outside the {label} schedule")
        out.append(schedule[i])
    return out


def run_convergence_study(preset: ExperimentPreset, axis: str,
                          method: str = "dr", levels=None, samples=None,
                          base_seed: int = 0, threads: int = 1,
                          reference_method: str = "euler") -> ConvergenceReport:
    """Strong-error study along one refinement axis of a preset.

    axis="time" refines the step size on a fixed mesh against a fine
    reference run (or the exact solution when the preset has one and no
    noise); axis="space" refines the mesh at a fixed step size against a
    reference mesh, truncating each level's noise expansion to its own
    mode count.  Every level of every sample reuses the same fine path,
    and sample results are aggregated in sample order, so the report is
    a deterministic function of (preset, method, base_seed).
    """
    t_start = time.perf_counter()
    if axis not in ("time", "space"):
        raise ValueError(f"unknown axis {axis!r}")
    t_f = preset.t_f
    meta = {
        "preset": preset.name,
        "axis": axis,
        "method": method,
        "reference_method": reference_method,
        "base_seed": base_seed,
        "version": __version__,
    }

    if axis == "time":
        taus = _select(preset.time_schedule, levels, "time")
        M = preset.time_M
        if M is None:
            raise ValueError("preset has no mesh size for time studies")
        bundle = make_problem(preset, M)
        h = bundle.space.h
        Ns = [_steps(t_f, tau, "tau") for tau in taus]
        spec = bundle.noise_spec

        if spec is None and preset.exact_solution is not None:
            target = project_l2(bundle.space,
                                lambda p: preset.exact_solution(t_f, p))
            data = []
            for tau, N in zip(taus, Ns):
                final = run_trajectory(bundle.problem,
                                       SchemeConfig(method, tau, N)).final
                data.append((tau, h, tau, l2_distance(final, target), 0.0))
            rows, slope = _rows_from(data, samples_per_row=1)
            meta.update(samples=1, reference="exact_solution")
            return _finish(meta, rows, slope, t_start)

        tau_ref = preset.time_reference_tau
        if tau_ref is None:
            raise ValueError("preset has no reference step size")
        if tau_ref >= min(taus):
            raise ValueError("reference level must be strictly finer "
                             "than every study level")
        N_ref = _steps(t_f, tau_ref, "reference tau")
        factors = []
        for tau, N in zip(taus, Ns):
            m = N_ref // N
            if m * N != N_ref or (m & (m - 1)) != 0:
                raise ValueError(f"tau={tau} is not a dyadic multiple of "
                                 f"the reference step {tau_ref}")
            factors.append(m)

        cfg_ref = SchemeConfig(reference_method, tau_ref, N_ref)

        if spec is None:
            ref = run_trajectory(bundle.problem, cfg_ref).final
            data = []
            for tau, N in zip(taus, Ns):
                final = run_trajectory(bundle.problem,
                                       SchemeConfig(method, tau, N)).final
                data.append((tau, h, tau, l2_distance(final, ref), 0.0))
            rows, slope = _rows_from(data, samples_per_row=1)
            meta.update(samples=1, reference_tau=tau_ref)
            return _finish(meta, rows, slope, t_start)

        J = int(samples if samples is not None else preset.samples)
        policy = SeedPolicy(base_seed)
        memo: dict = {}
        lock = threading.Lock()

        def reference_runner(j):
            with lock:
                hit = memo.get(j)
            if hit is None:
                fine = sample_increments(spec, N_ref, t_f, policy, j)
                final = run_trajectory(bundle.problem, cfg_ref, fine).final
                hit = (final, fine)
                with lock:
                    memo[j] = hit
            return hit

        data = []
        for tau, N, m in zip(taus, Ns, factors):
            cfg = SchemeConfig(method, tau, N)

            def coarse_runner(j, path, cfg=cfg, m=m):
                return run_trajectory(bundle.problem, cfg,
                                      coarsen_path(path, m)).final

            error, sem = strong_error_mc(coarse_runner, reference_runner,
                                         J, threads=threads)
            data.append((tau, h, tau, error, sem))
        rows, slope = _rows_from(data, samples_per_row=J)
        meta.update(samples=J, reference_tau=tau_ref)
        return _finish(meta, rows, slope, t_start)

    # axis == "space"
    Ms = _select(preset.space_schedule, levels, "space")
    tau = preset.space_tau
    if tau is None:
        raise ValueError("preset has no step size for space studies")
    N = _steps(t_f, tau, "space tau")
    cfg = SchemeConfig(method, tau, N)
    bundles = [make_problem(preset, M) for M in Ms]

    if preset.noise_kind is None and preset.exact_solution is not None:
        data = []
        for M, bundle in zip(Ms, bundles):
            final = run_trajectory(bundle.problem, cfg).final
            err = _distance_to_function(final,
                                        lambda p: preset.exact_solution(t_f, p))
            data.append((1.0 / M, 1.0 / M, tau, err, 0.0))
        rows, slope = _rows_from(data, samples_per_row=1)
        meta.update(samples=1, reference="exact_solution")
        return _finish(meta, rows, slope, t_start)

    M_ref = preset.space_reference_M
    if M_ref is None:
        raise ValueError("preset has no reference mesh size")
    if M_ref <= max(Ms):
        raise ValueError("reference mesh must be strictly finer "
                         "than every study level")
    bundle_ref = make_problem(preset, M_ref)
    spec_ref = bundle_ref.noise_spec
    if spec_ref is None:
        raise ValueError("space studies without noise need an exact solution")
    cfg_ref = SchemeConfig(reference_method, tau, N)

    J = int(samples if samples is not None else preset.samples)
    policy = SeedPolicy(base_seed)
    memo = {}
    lock = threading.Lock()

    def reference_runner(j):
        with lock:
            hit = memo.get(j)
        if hit is None:
            fine = sample_increments(spec_ref, N, t_f, policy, j)
            final = run_trajectory(bundle_ref.problem, cfg_ref, fine).final
            hit = (final, fine)
            with lock:
                memo[j] = hit
        return hit

    data = []
    for M, bundle in zip(Ms, bundles):
        n_modes = preset.n_modes(M)

        def coarse_runner(j, path, bundle=bundle, n_modes=n_modes):
            cp = coarsen_path(path, 1, n_modes=n_modes)
            return run_trajectory(bundle.problem, cfg, cp).final

        error, sem = strong_error_mc(coarse_runner, reference_runner,
                                     J, threads=threads)
        data.append((1.0 / M, 1.0 / M, tau, error, sem))
    rows, slope = _rows_from(data, samples_per_row=J)
    meta.update(samples=J, reference_M=M_ref)
    return _finish(meta, rows, slope, t_start)


def _rows_from(data: list, samples_per_row: int) -> tuple:
    """Turn (param, h, tau, error, sem) tuples into numbered study rows."""
    errors = [e for (_, _, _, e, _) in data]
    params = [p for (p, _, _, _, _) in data]
    est = None
    if len(data) >= 2 and all(e > 0 for e in errors):
        est = observed_order(errors, params)
    rows = []
    for i, (_, h, tau, error, sem) in enumerate(data):
        local = est.local_orders[i - 1] if (est and i > 0) else None
        rows.append(StudyRow(level=i + 1, h=h, tau=tau,
                             samples=samples_per_row, error=error, sem=sem,
                             local_order=local))
    return tuple(rows), (est.slope if est else None)


def _finish(meta: dict, rows: tuple, slope, t_start: float) -> ConvergenceReport:
    meta["slope"] = slope
    meta["wall_seconds"] = round(time.perf_counter() - t_start, 6)
    return ConvergenceReport(rows=rows, metadata=meta, slope=slope)
