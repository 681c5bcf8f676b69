"""Time steppers for the split semi-linear problem.

The two-operator scheme never forms the quadratic tau^2 A1 A2 product.
It advances the auxiliary recursion

    Y^1 = (I+tau A1)^-1 (X^0 + G^0)
    Y^n = (I+tau A1)^-1 [(2(I+tau A2)^-1 - I) Y^{n-1} + G^{n-1}]
          + (I - (I+tau A2)^-1) Y^{n-1}
    X^n = (I+tau A2)^-1 Y^n

with G^{n-1} = tau f_h(t_{n-1}, X^{n-1}) + B_h(X^{n-1}) dW_n, which is
algebraically identical to composing (I+tau A2)^-1 (I+tau A1)^-1
(I + tau^2 A1 A2) step by step.  Drift and noise are evaluated at
X^{n-1} = (I+tau A2)^-1 Y^{n-1}, and the first step omits the quadratic
term entirely.

In quasi-linear mode every resolvent application becomes the nonlinear
solve v + tau A_l P_h(phi(v)) = rhs, handled by damped Newton with the
exact per-element Jacobian of the projected nonlinearity.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse
import scipy.sparse.linalg

from .dg_space import DgFunction, DgSpace, dump_coefficients
from .linalg import solve_shifted
from .operators import SparseOperator

_METHODS = ("dr", "lie", "euler")


class StepError(RuntimeError):
    """A time step failed; carries the 1-based step index."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


@dataclass(frozen=True)
class ProblemInstance:
    """Spatially discrete problem: operators, forcing, initial state.

    drift(t, v) must already include the projection into the dG space;
    diffusion(v, increments) is one multiplicative-noise application (or
    None for deterministic problems).  nonlinearity, when set, is the
    pair (phi, phi_prime) of vectorized pointwise maps and switches every
    implicit solve into quasi-linear mode.
    """

    space: DgSpace
    operator: SparseOperator
    split_operators: tuple[SparseOperator, SparseOperator]
    drift: object
    diffusion: object
    initial: DgFunction
    nonlinearity: tuple | None = None

    def __post_init__(self):
        A = self.operator.matrix
        A1, A2 = (op.matrix for op in self.split_operators)
        if not (A.shape == A1.shape == A2.shape):
            raise ValueError("operator shapes disagree")
        gap = A1 + A2 - A
        scale = max(1.0, np.max(np.abs(A.data)) if A.nnz else 0.0)
        if gap.nnz and np.max(np.abs(gap.data)) > 1e-12 * scale:
            raise ValueError("split operators do not sum to the full operator")
        if self.initial.coefficients.shape != (A.shape[0],):
            raise ValueError("initial state does not match the operators")


@dataclass(frozen=True)
class SchemeConfig:
    method: str
    tau: float
    N: int
    store_trajectory: bool = False

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"method must be one of {_METHODS}")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.N < 1:
            raise ValueError("N must be >= 1")


@dataclass(frozen=True)
class TrajectoryResult:
    final: DgFunction
    states: list | None = None


# -- implicit sub-steps --------------------------------------------------------


def _newton_solve(problem: ProblemInstance, A: SparseOperator, tau: float,
                  rhs: np.ndarray) -> np.ndarray:
    """Solve v + tau A P_h(phi(v)) = rhs by damped Newton."""
    space = problem.space
    phi, dphi = problem.nonlinearity
    basis = space.basis_ref
    wq = space.ref_weights
    hd = space.h ** space.dim
    n_el = space.mesh.n_elements
    n_loc = space.n_loc
    n = n_el * n_loc
    eye = scipy.sparse.identity(n, format="csr")
    block_ptr = (np.arange(n_el), np.arange(n_el + 1))

    def residual(vec):
        vals = vec.reshape(n_el, n_loc) @ basis
        proj = hd * ((phi(vals) * wq) @ basis.T)
        return vec + tau * A.apply(proj.ravel()) - rhs, vals

    v = rhs.copy()
    F, vals = residual(v)
    fnorm = np.linalg.norm(F)
    tol = 1e-10 * max(1.0, np.linalg.norm(rhs))
    for _ in range(50):
        if fnorm <= tol:
            return v
        blocks = hd * np.einsum("iq,nq,jq->nij", basis, dphi(vals) * wq, basis)
        B = scipy.sparse.bsr_matrix((blocks, *block_ptr), shape=(n, n))
        J = eye + tau * (A.matrix @ B.tocsr())
        try:
            delta = scipy.sparse.linalg.splu(J.tocsc()).solve(-F)
        except RuntimeError as exc:
            raise RuntimeError(f"newton jacobian solve failed: {exc}") from exc
        alpha = 1.0
        while True:
            trial = v + alpha * delta
            Ft, vals_t = residual(trial)
            ft = np.linalg.norm(Ft)
            if np.isfinite(ft) and (ft < fnorm or ft <= tol):
                v, F, vals, fnorm = trial, Ft, vals_t, ft
                break
            alpha *= 0.5
            if alpha < 1e-6:
                raise RuntimeError("newton line search stalled")
    if fnorm <= tol:
        return v
    raise RuntimeError("newton did not converge within 50 iterations")


def _implicit(problem: ProblemInstance, A: SparseOperator, tau: float,
              rhs: np.ndarray) -> np.ndarray:
    if tau == 0.0:
        return rhs.copy()
    if problem.nonlinearity is None:
        return solve_shifted(A, tau, rhs)
    return _newton_solve(problem, A, tau, rhs)


def _source(problem: ProblemInstance, tau: float, t: float, x: DgFunction,
            dW) -> np.ndarray:
    g = tau * problem.drift(t, x).coefficients
    if problem.diffusion is not None and dW is not None:
        g = g + problem.diffusion(x, dW).coefficients
    return g


# -- steps ----------------------------------------------------------------------


def _dr_first(problem: ProblemInstance, tau: float, dW):
    A1, A2 = problem.split_operators
    x0 = problem.initial
    rhs = x0.coefficients + _source(problem, tau, 0.0, x0, dW)
    y1 = _implicit(problem, A1, tau, rhs)
    x1 = _implicit(problem, A2, tau, y1)
    return (DgFunction(problem.space, y1), DgFunction(problem.space, x1))


def dr_first_step(problem: ProblemInstance, tau: float, dW) -> DgFunction:
    """X^1 = (I+tau A2)^-1 (I+tau A1)^-1 (X^0 + G^0), no quadratic term."""
    return _dr_first(problem, tau, dW)[1]


def dr_step(problem: ProblemInstance, tau: float, y_prev: DgFunction, dW,
            t_prev: float, x_prev: DgFunction | None = None):
    """One Y-recursion step; returns (Y^n, X^n).

    x_prev, when provided, must equal (I+tau A2)^-1 y_prev; the driver
    passes the value it already computed for the previous step.
    """
    A1, A2 = problem.split_operators
    if x_prev is None:
        x_prev = DgFunction(problem.space,
                            _implicit(problem, A2, tau, y_prev.coefficients))
    g = _source(problem, tau, t_prev, x_prev, dW)
    z = 2.0 * x_prev.coefficients - y_prev.coefficients + g
    w = _implicit(problem, A1, tau, z)
    y_next = w + (y_prev.coefficients - x_prev.coefficients)
    x_next = _implicit(problem, A2, tau, y_next)
    return (DgFunction(problem.space, y_next),
            DgFunction(problem.space, x_next))


def lie_step(problem: ProblemInstance, tau: float, x_prev: DgFunction, dW,
             t_prev: float) -> DgFunction:
    """X^n = (I+tau A2)^-1 (I+tau A1)^-1 (X^{n-1} + G^{n-1})."""
    A1, A2 = problem.split_operators
    z = x_prev.coefficients + _source(problem, tau, t_prev, x_prev, dW)
    w = _implicit(problem, A1, tau, z)
    return DgFunction(problem.space, _implicit(problem, A2, tau, w))


def euler_step(problem: ProblemInstance, tau: float, x_prev: DgFunction, dW,
               t_prev: float) -> DgFunction:
    """Semi-implicit step with the unsplit operator."""
    z = x_prev.coefficients + _source(problem, tau, t_prev, x_prev, dW)
    return DgFunction(problem.space, _implicit(problem, problem.operator,
                                               tau, z))


# -- trajectory driver ------------------------------------------------------------


def run_trajectory(problem: ProblemInstance, cfg: SchemeConfig, path=None,
                   store_trajectory: bool | None = None,
                   snapshot_every: int | None = None,
                   snapshot_dir=None) -> TrajectoryResult:
    """Advance N steps of the configured method along one noise path.

    The result is a deterministic function of (problem, cfg, path); step
    n consumes only increment row n-1.  Failures raise StepError with the
    1-based step index.
    """
    if path is not None:
        if path.N != cfg.N:
            raise ValueError(f"path has {path.N} steps, config wants {cfg.N}")
        if abs(path.tau - cfg.tau) > 1e-12 * max(path.tau, cfg.tau):
            raise ValueError("path step size disagrees with the config")
    elif problem.diffusion is not None:
        raise ValueError("problem has a diffusion term but no path was given")

    keep = cfg.store_trajectory if store_trajectory is None else store_trajectory
    states = [problem.initial.copy()] if keep else None

    def snapshot(n, state):
        if snapshot_every and snapshot_dir is not None and n % snapshot_every == 0:
            dump_coefficients(state, f"{snapshot_dir}/state_{n:06d}.bin")

    snapshot(0, problem.initial)
    tau = cfg.tau
    x = problem.initial
    y = None
    for n in range(1, cfg.N + 1):
        dW = path.increments[n - 1] if path is not None else None
        try:
            if cfg.method == "dr":
                if n == 1:
                    y, x = _dr_first(problem, tau, dW)
                else:
                    y, x = dr_step(problem, tau, y, dW, (n - 1) * tau, x_prev=x)
            elif cfg.method == "lie":
                x = lie_step(problem, tau, x, dW, (n - 1) * tau)
            else:
                x = euler_step(problem, tau, x, dW, (n - 1) * tau)
        except RuntimeError as exc:
            raise StepError(f"step {n} failed: {exc}", step=n) from exc
        if keep:
            states.append(x.copy())
        snapshot(n, x)
    return TrajectoryResult(final=x, states=states)
