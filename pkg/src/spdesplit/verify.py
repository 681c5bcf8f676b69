"""Numeric spot checks of the analytic lemmas behind the time stepping.

Each check recomputes one inequality directly (singular Riemann sums,
the discrete Gronwall bound, a scalar decay-gap estimate, and the
contractivity of the splitting propagator) and reports whether it holds
with an explicit margin.  run_all sweeps the standard parameter grids
and feeds the CLI's pass/fail table.
"""

import math
from dataclasses import dataclass

import numpy as np

from .linalg import solve_shifted
from .operators import SparseOperator, power_norm


def check_riemann_sums(N: int, t_f: float, zeta: float) -> dict:
    """Left Riemann sum of t^(-zeta) over (0, t_f] against its bound.

    For zeta=1 the sum telescopes to the harmonic number and is compared
    with 1 + ln(N); for zeta=0 it equals t_f exactly.  For intermediate
    exponents no sharp constant exists, so boundedness is checked by
    doubling the resolution and requiring the value to move by less than
    itself.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    if t_f <= 0:
        raise ValueError("t_f must be positive")
    if not 0.0 <= zeta <= 1.0:
        raise ValueError("zeta must lie in [0, 1]")

    def riemann(n):
        tau = t_f / n
        k = np.arange(1, n + 1)
        return tau * float(np.sum((k * tau) ** -zeta))

    total = riemann(N)
    if zeta == 1.0:
        bound = 1.0 + math.log(N)
    elif zeta == 0.0:
        bound = t_f
    else:
        refined = riemann(2 * N)
        bound = 2.0 * total
        holds = abs(refined - total) < total
        return {"sum": total, "bound": bound, "holds": bool(holds)}
    holds = total <= bound + 1e-12 * max(1.0, bound)
    return {"sum": total, "bound": bound, "holds": bool(holds)}


def check_gronwall(a: float, b: float, N: int) -> bool:
    """Extremal sequence u_n = a + b * sum(u_k) against a * exp(n b).

    The recursion is evaluated literally, compared with its closed form
    a (1+b)^n, and bounded by the exponential for every n <= N.
    """
    if a < 0 or b < 0:
        raise ValueError("a and b must be non-negative")
    if N < 1:
        raise ValueError("N must be >= 1")
    u = a
    running = a
    for n in range(1, N + 1):
        u = a + b * running
        running += u
        closed = a * (1.0 + b) ** n
        if abs(u - closed) > 1e-9 * max(1.0, closed):
            return False
        if u > a * math.exp(n * b) * (1.0 + 1e-12):
            return False
    return True


def check_appendix_d_bound(n: int, grid_points: int = 100000) -> dict:
    """Sup of |exp(-(n-1)(1-x)) - x^(n-1)| on [0,1] against 1/(n-1).

    Grid search with an explicit resolution slack of 10/grid_points; the
    maximiser solves a transcendental equation, so no root finding.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    lam = np.linspace(0.0, 1.0, grid_points)
    g = np.exp(-(n - 1) * (1.0 - lam)) - lam ** (n - 1)
    sup = float(np.max(np.abs(g)))
    bound = 1.0 / (n - 1) + 10.0 / grid_points
    return {"sup": sup, "bound": bound, "holds": bool(sup <= bound)}


def check_contraction(A1: SparseOperator, A2: SparseOperator,
                      tau: float, n: int) -> dict:
    """Spectral norm of the n-step splitting propagator times R2.

    One sweep of the propagator maps u to R1 (2 R2 - I) u + (I - R2) u
    with resolvents R_l = (I + tau A_l)^(-1); the lemma asserts the
    composition with a trailing R2 stays a contraction.  The norm comes
    from power iteration; non-convergence sets the inconclusive flag.
    """
    if A1.shape != A2.shape or A1.shape[0] != A1.shape[1]:
        raise ValueError("operators must be square and equally sized")
    if tau <= 0:
        raise ValueError("tau must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    A1t = A1.transpose()
    A2t = A2.transpose()
    size = A1.shape[0]

    def forward(v):
        v = solve_shifted(A2, tau, v)
        for _ in range(n):
            r2 = solve_shifted(A2, tau, v)
            v = solve_shifted(A1, tau, 2.0 * r2 - v) + v - r2
        return v

    # (S^n R2)^T = R2^T (S^T)^n with S^T = (2 R2^T - I) R1^T + I - R2^T
    def adjoint(v):
        for _ in range(n):
            r1 = solve_shifted(A1t, tau, v)
            v = solve_shifted(A2t, tau, 2.0 * r1 - v) + v - r1
        return solve_shifted(A2t, tau, v)

    est = power_norm(forward, adjoint, size, tol=1e-10, max_iter=2000)
    return {
        "norm": est.value,
        "holds": bool(est.converged and est.value <= 1.0 + 1e-8),
        "inconclusive": bool(not est.converged),
    }


@dataclass(frozen=True)
class CheckRow:
    name: str
    passed: bool
    cases: int
    detail: str


def run_all() -> list:
    """Run every lemma check over its standard sweep; one row per lemma."""
    from .dg_space import DgSpace
    from .mesh import build_uniform_mesh
    from .operators import AssemblyConfig, DiffusionTensor, assemble_split, chi_pair

    rows = []

    cases = 0
    worst = 0.0
    ok = True
    for n in (1, 10, 100, 1000):
        for zeta in (0.0, 0.5, 1.0):
            out = check_riemann_sums(n, 1.0, zeta)
            ok &= out["holds"]
            worst = max(worst, out["sum"] / out["bound"])
            cases += 1
    rows.append(CheckRow("riemann_sums", ok, cases,
                         f"max sum/bound {worst:.6f}"))

    cases = 0
    ok = True
    for a in (0.0, 1.0, 2.5):
        for b in (0.0, 0.1, 1.0):
            ok &= check_gronwall(a, b, 100)
            cases += 1
    rows.append(CheckRow("gronwall", ok, cases, "u_n = a(1+b)^n <= a e^(nb)"))

    cases = 0
    worst = 0.0
    ok = True
    for n in (2, 11, 101, 1001):
        out = check_appendix_d_bound(n, grid_points=100000)
        ok &= out["holds"]
        worst = max(worst, out["sup"] / out["bound"])
        cases += 1
    rows.append(CheckRow("appendix_d", ok, cases,
                         f"max sup/bound {worst:.6f}"))

    cases = 0
    worst = 0.0
    ok = True
    K = DiffusionTensor.identity(1)
    cfg = AssemblyConfig(sigma=3.0)
    c1, c2 = chi_pair(0.1)
    for M in (8, 16):
        space = DgSpace(build_uniform_mesh(1, M))
        A1 = assemble_split(space, K, c1, cfg)
        A2 = assemble_split(space, K, c2, cfg)
        for tau in (1e-3, 1e-1):
            for n in (1, 10, 100):
                out = check_contraction(A1, A2, tau=tau, n=n)
                ok &= out["holds"] and not out["inconclusive"]
                worst = max(worst, out["norm"])
                cases += 1
    rows.append(CheckRow("contraction", ok, cases, f"max norm {worst:.12f}"))
    return rows
