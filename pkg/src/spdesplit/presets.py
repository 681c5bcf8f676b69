"""Ready-made problem configurations and their assembly into ProblemInstances.

Two stochastic benchmarks and one deterministic manufactured-solution
problem.  Presets are plain frozen values: pointwise callables plus the
mesh/step/sample schedules the convergence studies consume.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .dg_space import DgSpace, DgFunction, project_l2
from .mesh import build_uniform_mesh
from .noise import QWienerSpec, apply_diffusion
from .operators import (
    AssemblyConfig,
    DiffusionTensor,
    assemble_siph,
    assemble_split,
    chi_pair,
)
from .schemes import ProblemInstance


@dataclass(frozen=True)
class ExperimentPreset:
    """One complete problem description plus its study schedules."""

    name: str
    dim: int
    domain: str
    t_f: float
    sigma: float
    delta: float
    include_symmetry_term: bool
    diffusion_scale: float
    noise_kind: str | None
    samples: int
    initial_values: Callable
    drift_values: Callable | None = None
    exact_solution: Callable | None = None
    nonlinearity_name: str | None = None
    n_modes_rule: Callable | None = None
    space_schedule: tuple | None = None
    space_tau: float | None = None
    space_reference_M: int | None = None
    time_schedule: tuple | None = None
    time_M: int | None = None
    time_reference_tau: float | None = None

    def n_modes(self, M: int) -> int:
        if self.n_modes_rule is None:
            raise ValueError(f"preset {self.name} has no noise expansion")
        return int(self.n_modes_rule(M))

    def noise_spec(self, M: int) -> QWienerSpec | None:
        if self.noise_kind is None:
            return None
        maker = getattr(QWienerSpec, self.noise_kind)
        return maker(self.n_modes(M))

    def diffusion_tensor(self) -> DiffusionTensor:
        return DiffusionTensor.identity(self.dim)

    def chi(self):
        return chi_pair(self.delta)

    def nonlinearity(self):
        if self.nonlinearity_name is None:
            return None
        if self.nonlinearity_name == "quartic":
            return (lambda u: u**4, lambda u: 4.0 * u**3)
        raise ValueError(f"unknown nonlinearity {self.nonlinearity_name!r}")


def experiment1() -> ExperimentPreset:
    """Stochastic heat equation on (0,1)^2 with multiplicative noise."""

    def initial(pts):
        return np.sin(np.pi * pts[:, 0]) * np.sin(np.pi * pts[:, 1])

    def drift(t, pts, v):
        return np.pi**2 * (1.0 + v) * np.sin(np.pi * pts[:, 0]) \
            * np.sin(np.pi * pts[:, 1])

    return ExperimentPreset(
        name="experiment1",
        dim=2,
        domain="(0,1)^2",
        t_f=0.1,
        sigma=3.0,
        delta=0.1,
        include_symmetry_term=True,
        diffusion_scale=10.0,
        noise_kind="experiment1",
        samples=50,
        initial_values=initial,
        drift_values=drift,
        n_modes_rule=lambda M: math.floor(M ** (4.0 / 3.0)),
        space_schedule=tuple(5 * 2**j for j in range(1, 6)),
        space_tau=1e-4,
        space_reference_M=5 * 2**7,
        time_schedule=tuple(0.1 * 2.0**-j for j in range(2, 8)),
        time_M=200,
        time_reference_tau=0.1 * 2.0**-9,
    )


def experiment2() -> ExperimentPreset:
    """Stochastic porous-medium equation on (0,1), quartic nonlinearity."""
    s = 0.02

    def initial(pts):
        x = pts[:, 0]
        profile = s**-0.2 * (0.1 - 0.075 * 4.0 * (x - 0.5) ** 2 / s**0.4)
        return np.maximum(profile, 0.0)  # clamped Barenblatt-type support

    return ExperimentPreset(
        name="experiment2",
        dim=1,
        domain="(0,1)",
        t_f=0.01,
        sigma=3.0,
        delta=0.1,
        include_symmetry_term=False,
        diffusion_scale=1.0,
        noise_kind="experiment2",
        samples=50,
        initial_values=initial,
        nonlinearity_name="quartic",
        n_modes_rule=lambda M: M,
        time_schedule=tuple(1e-4 * 2.0**-j for j in range(4, 11)),
        time_M=200,
        time_reference_tau=1e-4 * 2.0**-14,
    )


def deterministic_heat_manufactured(dim: int = 1, M: int = 256,
                                    j_range: tuple = (4, 9)) -> ExperimentPreset:
    """Heat equation with exact solution exp(-dim pi^2 t) prod sin(pi x_i)."""
    rate = dim * math.pi**2

    def initial(pts):
        out = np.sin(np.pi * pts[:, 0])
        for d in range(1, pts.shape[1]):
            out = out * np.sin(np.pi * pts[:, d])
        return out

    def exact(t, pts):
        return math.exp(-rate * t) * initial(pts)

    lo, hi = j_range
    return ExperimentPreset(
        name="deterministic_heat",
        dim=dim,
        domain="(0,1)" if dim == 1 else "(0,1)^2",
        t_f=0.1,
        sigma=3.0,
        delta=0.1,
        include_symmetry_term=True,
        diffusion_scale=0.0,
        noise_kind=None,
        samples=1,
        initial_values=initial,
        exact_solution=exact,
        time_schedule=tuple(0.1 * 2.0**-j for j in range(lo, hi + 1)),
        time_M=M,
    )


_REGISTRY = {
    "experiment1": experiment1,
    "experiment2": experiment2,
    "deterministic_heat": deterministic_heat_manufactured,
}


def list_presets() -> list:
    return sorted(_REGISTRY)


def get_preset(name: str) -> ExperimentPreset:
    try:
        return _REGISTRY[name]()
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; available: {list_presets()}")


@dataclass(frozen=True)
class AssembledProblem:
    problem: ProblemInstance
    space: DgSpace
    noise_spec: QWienerSpec | None


def make_problem(preset: ExperimentPreset, M: int) -> AssembledProblem:
    """Assemble operators and wrap the preset callables for one mesh size."""
    space = DgSpace(build_uniform_mesh(preset.dim, M))
    K = preset.diffusion_tensor()
    cfg = AssemblyConfig(sigma=preset.sigma,
                         include_symmetry_term=preset.include_symmetry_term)
    A = assemble_siph(space, K, cfg)
    c1, c2 = preset.chi()
    A1 = assemble_split(space, K, c1, cfg)
    A2 = assemble_split(space, K, c2, cfg)

    initial = project_l2(space, preset.initial_values)

    if preset.drift_values is None:
        zero = np.zeros(space.total_dofs)

        def drift(t, v):
            return DgFunction(space, zero.copy())
    else:
        pts = space.quad_points().reshape(-1, preset.dim)

        def drift(t, v):
            vals = space.eval_at_quadrature(v)
            f = preset.drift_values(t, pts, vals.ravel()).reshape(vals.shape)
            return space.project_values(f)

    spec = preset.noise_spec(M)
    if spec is None or preset.diffusion_scale == 0.0:
        spec_out = spec if preset.diffusion_scale != 0.0 else None
        diffusion = None
    else:
        spec_out = spec
        scale = preset.diffusion_scale

        def diffusion(v, increments):
            return apply_diffusion(space, v, spec, increments, scale)

    problem = ProblemInstance(
        space=space,
        operator=A,
        split_operators=(A1, A2),
        drift=drift,
        diffusion=diffusion,
        initial=initial,
        nonlinearity=preset.nonlinearity(),
    )
    return AssembledProblem(problem=problem, space=space, noise_spec=spec_out)
