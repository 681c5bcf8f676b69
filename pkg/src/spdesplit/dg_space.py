"""Piecewise-P1 discontinuous space, L2 projection, and broken norms.

The per-element basis is L2-orthonormalized, so the mass matrix is the
identity and the L2 norm of a function equals the Euclidean norm of its
coefficient vector.  Coefficients are stored element-major, basis-minor:
global dof = element * n_loc + local.

Quadrature is Gauss-Legendre with n_quad points per axis (default 4),
exact for every polynomial integrand that appears in the P1 assembly with
piecewise-linear weight functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import CartesianMesh

_SQRT3 = np.sqrt(3.0)


class DgSpace:
    """P1 dG space over a uniform Cartesian mesh.

    Immutable and shareable between threads; all derived arrays are
    precomputed at construction.
    """

    def __init__(self, mesh: CartesianMesh, n_quad: int = 4):
        self.mesh = mesh
        self.dim = mesh.dim
        self.h = mesh.h
        self.n_quad = n_quad
        self.n_loc = 1 + self.dim
        self.total_dofs = mesh.n_elements * self.n_loc

        # reference Gauss rule on [0,1], nodes ascending, weights sum to 1
        x, w = np.polynomial.legendre.leggauss(n_quad)
        self._q1 = 0.5 * (x + 1.0)
        self._w1 = 0.5 * w

        if self.dim == 1:
            self.ref_points = self._q1[:, None]
            self.ref_weights = self._w1.copy()
        else:
            # local index q = qy * n_quad + qx (qx fastest)
            qx, qy = np.meshgrid(self._q1, self._q1, indexing="xy")
            self.ref_points = np.column_stack([qx.ravel(), qy.ravel()])
            wx, wy = np.meshgrid(self._w1, self._w1, indexing="xy")
            self.ref_weights = (wx * wy).ravel()
        self.n_q = len(self.ref_weights)

        # basis values at the reference points; identical on every element
        self.basis_ref = self._basis_at_ref(self.ref_points)
        # constant basis gradients, shape (n_loc, dim)
        h = self.h
        if self.dim == 1:
            self.grad_basis = np.array([[0.0], [2.0 * _SQRT3 * h ** -1.5]])
        else:
            g = 2.0 * _SQRT3 / h ** 2
            self.grad_basis = np.array([[0.0, 0.0], [g, 0.0], [0.0, g]])

        self._lower = mesh.lower_corners  # (n_el, dim)
        self._quad_points = (
            self._lower[:, None, :] + self.h * self.ref_points[None, :, :]
        )

    # -- basis -------------------------------------------------------------

    def _basis_at_ref(self, ref: np.ndarray) -> np.ndarray:
        """Basis values at reference coordinates, shape (n_loc, n_pts)."""
        h = self.h
        if self.dim == 1:
            xi = ref[:, 0]
            return np.vstack([
                np.full_like(xi, h ** -0.5),
                np.sqrt(3.0 / h) * (2.0 * xi - 1.0),
            ])
        xi, eta = ref[:, 0], ref[:, 1]
        return np.vstack([
            np.full_like(xi, 1.0 / h),
            (_SQRT3 / h) * (2.0 * xi - 1.0),
            (_SQRT3 / h) * (2.0 * eta - 1.0),
        ])

    def basis_values_on_element(self, e: int, points: np.ndarray) -> np.ndarray:
        """Basis values of element e at global points, shape (n_loc, n_pts)."""
        ref = (points - self._lower[e]) / self.h
        return self._basis_at_ref(ref)

    # -- quadrature layout ---------------------------------------------------

    def quad_points(self) -> np.ndarray:
        """Global quadrature points, shape (n_el, n_q, dim)."""
        return self._quad_points

    def axis_quad_points(self) -> np.ndarray:
        """All 1-D quadrature coordinates along one axis, ascending (M*n_quad,)."""
        M = self.mesh.M
        return (np.arange(M)[:, None] * self.h + self.h * self._q1[None, :]).ravel()

    def grid_to_elements(self, grid: np.ndarray) -> np.ndarray:
        """Reorder tensor-grid point values into the (n_el, n_q) layout."""
        M, nq = self.mesh.M, self.n_quad
        if self.dim == 1:
            return grid.reshape(M, nq)
        # grid[gx, gy] with gx = ix*nq+qx, gy = iy*nq+qy
        v = grid.reshape(M, nq, M, nq)          # (ix, qx, iy, qy)
        v = np.transpose(v, (2, 0, 3, 1))       # (iy, ix, qy, qx)
        return v.reshape(M * M, nq * nq)

    # -- projection and evaluation -------------------------------------------

    def eval_at_quadrature(self, fn: "DgFunction") -> np.ndarray:
        """Point values at the quadrature points, shape (n_el, n_q)."""
        coeffs = fn.coefficients.reshape(-1, self.n_loc)
        return coeffs @ self.basis_ref

    def project_values(self, values: np.ndarray) -> "DgFunction":
        """L2-project point values given at the quadrature points."""
        jac = self.h ** self.dim
        coeffs = jac * (values * self.ref_weights) @ self.basis_ref.T
        return DgFunction(self, coeffs.ravel())

    def quad_integrate(self, values: np.ndarray) -> float:
        """Integrate point values given at the quadrature points."""
        return self.h ** self.dim * float(np.sum(values * self.ref_weights))


@dataclass
class DgFunction:
    """A dG function as a coefficient vector over the orthonormal basis."""

    space: DgSpace
    coefficients: np.ndarray

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=float)
        if self.coefficients.shape != (self.space.total_dofs,):
            raise ValueError(
                f"coefficient length {self.coefficients.shape} does not match "
                f"space with {self.space.total_dofs} dofs"
            )

    def copy(self) -> "DgFunction":
        return DgFunction(self.space, self.coefficients.copy())

    def l2_norm(self) -> float:
        # Parseval: the basis is orthonormal per element
        return float(np.linalg.norm(self.coefficients))

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Point evaluation at arbitrary points, shape (n, dim) -> (n,)."""
        space = self.space
        points = np.atleast_2d(points)
        M = space.mesh.M
        idx = np.clip(np.floor(points * M).astype(int), 0, M - 1)
        ref = points * M - idx
        c = self.coefficients.reshape(-1, space.n_loc)
        if space.dim == 1:
            e = idx[:, 0]
            return (
                c[e, 0] * space.h ** -0.5
                + c[e, 1] * np.sqrt(3.0 / space.h) * (2.0 * ref[:, 0] - 1.0)
            )
        e = idx[:, 0] + M * idx[:, 1]
        return (
            c[e, 0] / space.h
            + (_SQRT3 / space.h)
            * (c[e, 1] * (2.0 * ref[:, 0] - 1.0) + c[e, 2] * (2.0 * ref[:, 1] - 1.0))
        )


def project_l2(space: DgSpace, f) -> DgFunction:
    """L2 projection of a pointwise function onto the dG space.

    f must accept an (n, dim) array of points and return n values.
    """
    pts = space.quad_points().reshape(-1, space.dim)
    values = np.asarray(f(pts), dtype=float)
    if not np.all(np.isfinite(values)):
        raise ValueError("function returned non-finite values at quadrature points")
    return space.project_values(values.reshape(space.mesh.n_elements, space.n_q))


def _face_jump_values(fn: DgFunction, face) -> np.ndarray:
    """Values of [v] at the face quadrature points (a single point in 1-D)."""
    space = fn.space
    c = fn.coefficients.reshape(-1, space.n_loc)
    pts = face_quad_points(space, face)
    plus = space.basis_values_on_element(face.plus_element, pts)
    vals = c[face.plus_element] @ plus
    if face.minus_element is not None:
        minus = space.basis_values_on_element(face.minus_element, pts)
        vals = vals - c[face.minus_element] @ minus
    return vals


def face_quad_points(space: DgSpace, face) -> np.ndarray:
    """Quadrature points on a face: (n_quad, dim) in 2-D, one point in 1-D."""
    if space.dim == 1:
        return np.array([[face.coordinate]])
    lo, hi = face.span
    t = lo + (hi - lo) * space._q1
    pts = np.empty((space.n_quad, 2))
    pts[:, face.axis] = face.coordinate
    pts[:, 1 - face.axis] = t
    return pts


def face_quad_weights(space: DgSpace, face) -> np.ndarray:
    """Quadrature weights matching face_quad_points (weight 1 in 1-D)."""
    if space.dim == 1:
        return np.array([1.0])
    return face.measure * space._w1


def broken_norms(v: DgFunction) -> dict:
    """Broken H1 norm, jump seminorm (boundary faces included), and their sum."""
    space = v.space
    vals = space.eval_at_quadrature(v)
    l2_sq = space.h ** space.dim * float(np.sum(vals ** 2 * space.ref_weights))

    c = v.coefficients.reshape(-1, space.n_loc)
    grads = c @ space.grad_basis  # (n_el, dim), constant per element
    grad_sq = space.h ** space.dim * float(np.sum(grads ** 2))

    jump_sq = 0.0
    for face in space.mesh.faces:
        jumps = _face_jump_values(v, face)
        w = face_quad_weights(space, face)
        jump_sq += float(np.sum(w * jumps ** 2)) / face.h_e

    broken_h1_sq = l2_sq + grad_sq
    return {
        "l2": np.sqrt(l2_sq),
        "broken_h1": np.sqrt(broken_h1_sq),
        "jump_seminorm": np.sqrt(jump_sq),
        "v_h_norm": np.sqrt(broken_h1_sq + jump_sq),
    }


def dump_coefficients(fn: DgFunction, path, fmt: str = "binary") -> None:
    """Write the coefficient vector (element-major, basis-minor order)."""
    if fmt == "binary":
        fn.coefficients.astype("<f8").tofile(path)
    elif fmt == "csv":
        np.savetxt(path, fn.coefficients, fmt="%.17g")
    else:
        raise ValueError(f"unknown dump format {fmt!r}")


def load_coefficients(space: DgSpace, path, fmt: str = "binary") -> DgFunction:
    if fmt == "binary":
        coeffs = np.fromfile(path, dtype="<f8")
    elif fmt == "csv":
        coeffs = np.loadtxt(path, dtype=float)
    else:
        raise ValueError(f"unknown dump format {fmt!r}")
    return DgFunction(space, coeffs)
