"""Uniform Cartesian meshes of (0,1)^dim with face connectivity.

Elements are axis-aligned cells of size h = 1/M.  In 2-D the element with
grid coordinates (ix, iy) has linear index ix + M*iy.  Faces are axis
aligned; for interior faces the "plus" side is the incident element with
the smaller linear index and the unit normal points out of it.  Meshes are
immutable after construction and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Element:
    index: int
    lower: np.ndarray  # lower corner, shape (dim,)
    h: float


@dataclass(frozen=True)
class Face:
    kind: str                      # "interior" or "boundary"
    plus_element: int
    minus_element: int | None
    normal: np.ndarray             # unit vector, out of the plus element
    axis: int                      # axis the normal is parallel to
    coordinate: float              # position of the face along that axis
    span: tuple[float, float] | None  # tangential extent (2-D), None in 1-D
    measure: float                 # length of e in 2-D, 1 for point faces
    h_e: float


@dataclass(frozen=True)
class CartesianMesh:
    dim: int
    M: int
    h: float
    elements: tuple[Element, ...]
    faces: tuple[Face, ...]
    element_faces: tuple[tuple[int, ...], ...] = field(repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n0(self) -> int:
        """Maximal number of faces per element (2*dim on Cartesian cells)."""
        return 2 * self.dim

    @property
    def lower_corners(self) -> np.ndarray:
        return np.array([e.lower for e in self.elements])


def _normal(dim: int, axis: int, sign: float) -> np.ndarray:
    n = np.zeros(dim)
    n[axis] = sign
    return n


def build_uniform_mesh(dim: int, M: int) -> CartesianMesh:
    """Build the uniform M^dim Cartesian mesh of the unit interval/square."""
    if dim not in (1, 2):
        raise ValueError(f"dim must be 1 or 2, got {dim}")
    if M < 1:
        raise ValueError(f"M must be a positive integer, got {M}")
    h = 1.0 / M

    if dim == 1:
        elements = tuple(
            Element(index=i, lower=np.array([i * h]), h=h) for i in range(M)
        )
    else:
        elements = tuple(
            Element(index=ix + M * iy, lower=np.array([ix * h, iy * h]), h=h)
            for iy in range(M)
            for ix in range(M)
        )

    faces: list[Face] = []
    element_faces: list[list[int]] = [[] for _ in range(M ** dim)]

    def add_face(face: Face) -> None:
        idx = len(faces)
        faces.append(face)
        element_faces[face.plus_element].append(idx)
        if face.minus_element is not None:
            element_faces[face.minus_element].append(idx)

    if dim == 1:
        for i in range(M + 1):
            x = i * h
            if i == 0:
                add_face(Face("boundary", 0, None, _normal(1, 0, -1.0),
                              0, x, None, 1.0, h))
            elif i == M:
                add_face(Face("boundary", M - 1, None, _normal(1, 0, 1.0),
                              0, x, None, 1.0, h))
            else:
                # plus side is element i-1 (smaller index, left of the face)
                add_face(Face("interior", i - 1, i, _normal(1, 0, 1.0),
                              0, x, None, 1.0, h))
    else:
        # faces with normal along x
        for iy in range(M):
            span = (iy * h, (iy + 1) * h)
            for ix in range(M + 1):
                x = ix * h
                if ix == 0:
                    add_face(Face("boundary", M * iy, None,
                                  _normal(2, 0, -1.0), 0, x, span, h, h))
                elif ix == M:
                    add_face(Face("boundary", (M - 1) + M * iy, None,
                                  _normal(2, 0, 1.0), 0, x, span, h, h))
                else:
                    left = (ix - 1) + M * iy
                    right = ix + M * iy
                    add_face(Face("interior", left, right,
                                  _normal(2, 0, 1.0), 0, x, span, h, h))
        # faces with normal along y
        for ix in range(M):
            span = (ix * h, (ix + 1) * h)
            for iy in range(M + 1):
                y = iy * h
                if iy == 0:
                    add_face(Face("boundary", ix, None,
                                  _normal(2, 1, -1.0), 1, y, span, h, h))
                elif iy == M:
                    add_face(Face("boundary", ix + M * (M - 1), None,
                                  _normal(2, 1, 1.0), 1, y, span, h, h))
                else:
                    below = ix + M * (iy - 1)
                    above = ix + M * iy
                    add_face(Face("interior", below, above,
                                  _normal(2, 1, 1.0), 1, y, span, h, h))

    return CartesianMesh(
        dim=dim,
        M=M,
        h=h,
        elements=elements,
        faces=tuple(faces),
        element_faces=tuple(tuple(fs) for fs in element_faces),
    )
