"""Interior-penalty dG assembly and the partition-of-unity split operators.

The bilinear form has four ingredients: the volume diffusion term, the
consistency and symmetry face terms built from averages of normal fluxes,
and the penalty term sigma/h_e acting on jumps (boundary faces use the
one-sided trace for both jump and average).  The split forms carry the
same four terms, each weighted by the piecewise-linear partition-of-unity
factor chi_l; weighting the penalty as well keeps A_1 + A_2 = A exact.

Quadrature subdivides x-integrals at the chi breakpoints so every
integrand stays polynomial per panel and the assembly is exact up to
rounding.  In 1-D a "face integral" is a point evaluation with weight 1,
matching the jump-seminorm convention in dg_space.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
import scipy.io
import scipy.sparse

from .dg_space import DgSpace


class InvalidWeightError(ValueError):
    """A weight function left [0,1] at a quadrature point."""


@dataclass(frozen=True)
class DiffusionTensor:
    """Pointwise symmetric diffusion tensor with eigenvalue bounds [k0, k1]."""

    evaluate: Callable[[np.ndarray], np.ndarray]  # (n, dim) -> (n, dim, dim)
    k0: float
    k1: float

    @staticmethod
    def identity(dim: int) -> "DiffusionTensor":
        eye = np.eye(dim)

        def evaluate(pts: np.ndarray) -> np.ndarray:
            return np.broadcast_to(eye, (len(pts), dim, dim))

        return DiffusionTensor(evaluate, k0=1.0, k1=1.0)


@dataclass(frozen=True)
class WeightFunction:
    """One member chi_l of a partition of unity, with its partner."""

    evaluate: Callable[[np.ndarray], np.ndarray]  # (n, dim) -> (n,)
    partner: Callable[[np.ndarray], np.ndarray]
    delta: float
    breakpoints: tuple[float, ...]  # x-coordinates where the slope changes


def chi_pair(delta: float = 0.1) -> tuple[WeightFunction, WeightFunction]:
    """The overlapping two-subdomain weights: 1 left of x=1/2-delta, linear
    ramp across the overlap, 0 right of x=1/2+delta (and its complement).
    Functions of x only; constant in y."""
    if delta <= 0:
        raise ValueError("delta must be positive")

    def c1(pts: np.ndarray) -> np.ndarray:
        return np.clip((0.5 + delta - pts[:, 0]) / (2.0 * delta), 0.0, 1.0)

    def c2(pts: np.ndarray) -> np.ndarray:
        return np.clip((pts[:, 0] - 0.5 + delta) / (2.0 * delta), 0.0, 1.0)

    bp = (0.5 - delta, 0.5 + delta)
    return (
        WeightFunction(c1, c2, delta, bp),
        WeightFunction(c2, c1, delta, bp),
    )


@dataclass(frozen=True)
class AssemblyConfig:
    sigma: float = 3.0
    include_symmetry_term: bool = True
    n_quad: int = 4

    def __post_init__(self):
        if self.sigma <= 0:
            raise ValueError("penalty sigma must be positive")


class SparseOperator:
    """Assembled bilinear form in CSR layout (thin wrapper over scipy CSR)."""

    def __init__(self, matrix: scipy.sparse.csr_matrix):
        self.matrix = matrix.tocsr()

    @property
    def shape(self) -> tuple[int, int]:
        return self.matrix.shape

    @property
    def row_pointers(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def values(self) -> np.ndarray:
        return self.matrix.data

    def apply(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v)
        if v.shape != (self.shape[1],):
            raise ValueError(f"vector shape {v.shape} does not match {self.shape}")
        return self.matrix @ v

    def transpose(self) -> "SparseOperator":
        return SparseOperator(self.matrix.T.tocsr())

    def to_dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @classmethod
    def from_dense(cls, arr: np.ndarray) -> "SparseOperator":
        return cls(scipy.sparse.csr_matrix(np.asarray(arr, dtype=float)))


class NormEstimate(NamedTuple):
    value: float
    converged: bool
    iterations: int


def export_matrix_market(op: SparseOperator, path) -> None:
    """Write the operator in MatrixMarket coordinate text format."""
    scipy.io.mmwrite(path, op.matrix.tocoo())


# ---------------------------------------------------------------------------
# assembly


def _split_interval(a: float, b: float, cuts) -> list[tuple[float, float]]:
    inner = sorted(c for c in cuts if a < c < b)
    pts = [a] + inner + [b]
    return list(zip(pts[:-1], pts[1:]))


def _gauss(n: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (x + 1.0), 0.5 * w  # nodes in [0,1], weights sum to 1


def _panel_rule(a, b, cuts, q1, w1):
    """Composite Gauss rule on [a,b] split at the cut points."""
    nodes, weights = [], []
    for lo, hi in _split_interval(a, b, cuts):
        nodes.append(lo + (hi - lo) * q1)
        weights.append((hi - lo) * w1)
    return np.concatenate(nodes), np.concatenate(weights)


def _volume_rule(space: DgSpace, e: int, cuts, q1, w1):
    """Quadrature points/weights on element e with x-panels at the cuts."""
    lo = space.mesh.elements[e].lower
    h = space.h
    xs, wx = _panel_rule(lo[0], lo[0] + h, cuts, q1, w1)
    if space.dim == 1:
        return xs[:, None], wx
    ys = lo[1] + h * q1
    wy = h * w1
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    pts = np.column_stack([X.ravel(), Y.ravel()])
    w = np.outer(wx, wy).ravel()
    return pts, w


def _face_rule(space: DgSpace, face, cuts, q1, w1):
    """Quadrature points/weights on a face (a single unit-weight point in 1-D).

    Horizontal faces (normal along y) run along x, so they get x-panels;
    chi is constant along vertical faces.
    """
    if space.dim == 1:
        return np.array([[face.coordinate]]), np.array([1.0])
    lo, hi = face.span
    tangent = 1 - face.axis
    if tangent == 0:
        t, w = _panel_rule(lo, hi, cuts, q1, w1)
    else:
        t = lo + (hi - lo) * q1
        w = (hi - lo) * w1
    pts = np.empty((len(t), 2))
    pts[:, face.axis] = face.coordinate
    pts[:, tangent] = t
    return pts, w


def _check_weight(chi_vals: np.ndarray) -> None:
    if np.any(chi_vals < -1e-14) or np.any(chi_vals > 1.0 + 1e-14):
        raise InvalidWeightError(
            f"weight values outside [0,1]: range "
            f"[{chi_vals.min():.3g}, {chi_vals.max():.3g}]"
        )


def _assemble(space: DgSpace, K: DiffusionTensor, cfg: AssemblyConfig,
              chi: WeightFunction | None) -> SparseOperator:
    n_loc = space.n_loc
    n = space.total_dofs
    q1, w1 = _gauss(cfg.n_quad)
    cuts = chi.breakpoints if chi is not None else ()
    grad = space.grad_basis  # (n_loc, dim), identical on every element

    rows: list[np.ndarray] = []
    cols: list[np.ndarray] = []
    vals: list[np.ndarray] = []
    loc_i, loc_j = np.meshgrid(np.arange(n_loc), np.arange(n_loc), indexing="ij")

    def add_block(row0: int, col0: int, block: np.ndarray) -> None:
        rows.append((row0 + loc_i).ravel())
        cols.append((col0 + loc_j).ravel())
        vals.append(block.ravel())

    # volume term: sum_T int chi * (K grad v . grad w)
    for e in range(space.mesh.n_elements):
        pts, w = _volume_rule(space, e, cuts, q1, w1)
        Kv = K.evaluate(pts)
        weight = w
        if chi is not None:
            cv = chi.evaluate(pts)
            _check_weight(cv)
            weight = w * cv
        gkg = np.einsum("id,pdc,jc->pij", grad, Kv, grad)
        block = np.einsum("p,pij->ij", weight, gkg)
        add_block(e * n_loc, e * n_loc, block)

    # face terms: consistency, symmetry, penalty
    for face in space.mesh.faces:
        pts, w = _face_rule(space, face, cuts, q1, w1)
        Kv = K.evaluate(pts)
        if chi is not None:
            cv = chi.evaluate(pts)
            _check_weight(cv)
            w_chi = w * cv
        else:
            w_chi = w
        normal = face.normal
        if face.kind == "interior":
            sides = ((face.plus_element, 1.0), (face.minus_element, -1.0))
            avg = 0.5
        else:
            sides = ((face.plus_element, 1.0),)
            avg = 1.0

        traces = {}
        fluxes = {}
        for elem, _ in sides:
            traces[elem] = space.basis_values_on_element(elem, pts)  # (n_loc, p)
            # K grad(phi_i) . n at the face points, shape (p, n_loc)
            fluxes[elem] = np.einsum("d,pdc,ic->pi", normal, Kv, grad)

        pen = cfg.sigma / face.h_e
        for elem_a, sign_a in sides:          # test side
            phi_a = traces[elem_a]
            flux_a = fluxes[elem_a]
            for elem_b, sign_b in sides:      # trial side
                phi_b = traces[elem_b]
                flux_b = fluxes[elem_b]
                block = -avg * sign_a * np.einsum("ip,p,pj->ij", phi_a, w_chi, flux_b)
                if cfg.include_symmetry_term:
                    block += -avg * sign_b * np.einsum("pi,p,jp->ij",
                                                       flux_a, w_chi, phi_b)
                block += pen * sign_a * sign_b * np.einsum("ip,p,jp->ij",
                                                           phi_a, w_chi, phi_b)
                add_block(elem_a * n_loc, elem_b * n_loc, block)

    coo = scipy.sparse.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return SparseOperator(coo.tocsr())


def assemble_siph(space: DgSpace, K: DiffusionTensor,
                  cfg: AssemblyConfig) -> SparseOperator:
    """Assemble the full interior-penalty operator A_h."""
    return _assemble(space, K, cfg, chi=None)


def assemble_split(space: DgSpace, K: DiffusionTensor, chi: WeightFunction,
                   cfg: AssemblyConfig) -> SparseOperator:
    """Assemble one split operator A_{h,l} (every term weighted by chi_l)."""
    return _assemble(space, K, cfg, chi=chi)


# ---------------------------------------------------------------------------
# operator norms


def power_norm(matvec, rmatvec, n: int, tol: float = 1e-8,
               max_iter: int = 10000) -> NormEstimate:
    """Largest singular value by power iteration on A^T A.

    Deterministic start vector; returns the last iterate with
    converged=False if the tolerance is not met.
    """
    rng = np.random.default_rng(0xD1CE)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for it in range(1, max_iter + 1):
        w = matvec(v)
        new_estimate = float(np.linalg.norm(w))
        if new_estimate == 0.0:
            return NormEstimate(0.0, True, it)
        u = rmatvec(w)
        nu = np.linalg.norm(u)
        if nu == 0.0:
            return NormEstimate(new_estimate, True, it)
        v = u / nu
        if abs(new_estimate - estimate) <= tol * max(new_estimate, 1e-300):
            return NormEstimate(new_estimate, True, it)
        estimate = new_estimate
    return NormEstimate(estimate, False, max_iter)


def operator_norm_estimate(op: SparseOperator, space: DgSpace | None = None,
                           tol: float = 1e-8,
                           max_iter: int = 10000) -> NormEstimate:
    """L2 operator norm of an assembled operator.

    With the orthonormal basis this is the Euclidean spectral norm, so
    the space argument only documents intent.
    """
    mat = op.matrix
    mat_t = mat.T.tocsr()
    return power_norm(lambda v: mat @ v, lambda v: mat_t @ v,
                      op.shape[1], tol=tol, max_iter=max_iter)
