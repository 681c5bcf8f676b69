"""Q-Wiener increments via a truncated sine expansion.

Each retained mode carries an amplitude from the experiment's eigenvalue
rule; the simulated series is exactly amplitude x sin-product x Brownian
increment.  For reporting we normalize the eigenfunctions to unit L2 norm
(factor 2^(dim/2)), so the stored increments have variance q_k tau with
q_k = amplitude^2 * 2^(-dim), and the product q_k^(1/2) e_k reproduces the
unnormalized series verbatim.

Draws come from per-(sample, mode) counter-seeded Philox streams, so path
generation is bit-reproducible no matter how samples are scheduled across
threads, and a longer mode list extends a shorter one without changing
the shared columns.  Coarsening by a dyadic factor sums fine increments
pairwise per halving, which makes repeated coarsening associative down to
the bit level.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, replace

import numpy as np

from .dg_space import DgFunction, DgSpace

_HEADER = struct.Struct("<qqdQ")  # steps, modes, tau, base_seed


def mode_index(k: int) -> tuple[int, int]:
    """Anti-diagonal enumeration of N^2: 1 -> (1,1), 2 -> (1,2), 3 -> (2,1)."""
    if k < 1:
        raise ValueError("mode index must be >= 1")
    h = (3 + math.isqrt(8 * k - 7)) // 2
    g1 = k - (h - 1) * (h - 2) // 2
    return g1, h - g1


@dataclass(frozen=True)
class QWienerSpec:
    """Truncated diagonal covariance: dimension, mode count, amplitude rule."""

    dim: int
    n_modes: int
    kind: str
    eps: float

    def __post_init__(self):
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    @staticmethod
    def experiment1(n_modes: int) -> "QWienerSpec":
        """2-D spectrum (g1^2+g2^2)^(-2-eps/2) over the anti-diagonal modes."""
        return QWienerSpec(dim=2, n_modes=n_modes, kind="experiment1", eps=2e-5)

    @staticmethod
    def experiment2(n_modes: int) -> "QWienerSpec":
        """1-D spectrum k^(-5/2-2eps)."""
        return QWienerSpec(dim=1, n_modes=n_modes, kind="experiment2", eps=1e-5)

    def mode_frequencies(self) -> np.ndarray:
        """Sine frequencies per mode, shape (n_modes, dim)."""
        if self.dim == 1:
            return np.arange(1, self.n_modes + 1, dtype=np.int64)[:, None]
        return np.array([mode_index(k) for k in range(1, self.n_modes + 1)],
                        dtype=np.int64)

    def amplitudes(self) -> np.ndarray:
        freq = self.mode_frequencies()
        if self.kind == "experiment1":
            norms = (freq.astype(float) ** 2).sum(axis=1)
            return norms ** (-2.0 - self.eps / 2.0)
        if self.kind == "experiment2":
            ks = freq[:, 0].astype(float)
            return ks ** (-2.5 - 2.0 * self.eps)
        raise ValueError(f"unknown spectrum kind {self.kind!r}")

    def q(self) -> np.ndarray:
        """Mode variances under unit-norm eigenfunctions."""
        return self.amplitudes() ** 2 * 2.0 ** (-self.dim)


@dataclass(frozen=True)
class SeedPolicy:
    """Counter-based stream derivation from one 64-bit base seed."""

    base_seed: int

    def __post_init__(self):
        if not 0 <= self.base_seed < 2**64:
            raise ValueError("base_seed must be a 64-bit unsigned integer")

    def generator(self, sample_id: int, mode: int) -> np.random.Generator:
        seq = np.random.SeedSequence([self.base_seed, sample_id, mode])
        return np.random.Generator(np.random.Philox(seq))


@dataclass(frozen=True)
class QWienerPath:
    """Increment table of one path: row n holds step n's scaled draws."""

    spec: QWienerSpec
    tau: float
    N: int
    increments: np.ndarray  # (N, n_modes), mode-k column ~ N(0, q_k tau)
    base_seed: int = 0
    level: int = 0

    @property
    def t_f(self) -> float:
        return self.tau * self.N


def sample_increments(spec: QWienerSpec, N: int, t_f: float,
                      policy: SeedPolicy, sample_id: int) -> QWienerPath:
    """Draw one path of N increments over [0, t_f], variance q_k tau per mode."""
    if N < 1:
        raise ValueError("N must be >= 1")
    if t_f <= 0:
        raise ValueError("t_f must be positive")
    tau = t_f / N
    scales = np.sqrt(spec.q() * tau)
    cols = np.empty((N, spec.n_modes))
    for k in range(1, spec.n_modes + 1):
        cols[:, k - 1] = scales[k - 1] * \
            policy.generator(sample_id, k).standard_normal(N)
    return QWienerPath(spec=spec, tau=tau, N=N, increments=cols,
                       base_seed=policy.base_seed)


def coarsen_path(path: QWienerPath, m: int,
                 n_modes: int | None = None) -> QWienerPath:
    """Sum groups of m consecutive increments (m a power of two dividing N).

    Optionally truncates the mode list to the first n_modes columns so a
    coarse run with a smaller expansion consumes the shared prefix.
    """
    if m < 1 or (m & (m - 1)) != 0:
        raise ValueError(f"coarsening factor {m} is not a power of two")
    if path.N % m != 0:
        raise ValueError(f"factor {m} does not divide {path.N} steps")
    inc = path.increments
    halvings = m.bit_length() - 1
    for _ in range(halvings):
        paired = inc.reshape(inc.shape[0] // 2, 2, inc.shape[1])
        inc = paired[:, 0, :] + paired[:, 1, :]
    spec = path.spec
    if n_modes is not None:
        if not 1 <= n_modes <= spec.n_modes:
            raise ValueError("n_modes must be within the path's mode count")
        inc = inc[:, :n_modes]
        spec = replace(spec, n_modes=n_modes)
    return QWienerPath(spec=spec, tau=path.tau * m, N=path.N // m,
                       increments=np.ascontiguousarray(inc),
                       base_seed=path.base_seed, level=path.level + halvings)


# -- evaluation of the noise field on quadrature grids ------------------------

# keyed by (id(space), id(spec)); strong references keep the ids valid
_sin_cache: dict = {}


def _sin_tables(space: DgSpace, spec: QWienerSpec):
    key = (id(space), id(spec))
    hit = _sin_cache.get(key)
    if hit is not None:
        return hit[2]
    axis = space.axis_quad_points()
    freq = spec.mode_frequencies()
    if spec.dim == 1:
        gmax = int(freq[:, 0].max())
        table = np.sin(np.arange(1, gmax + 1)[:, None] * np.pi * axis[None, :])
        tables = (freq[:, 0], table)
    else:
        g1max = int(freq[:, 0].max())
        g2max = int(freq[:, 1].max())
        s1 = np.sin(np.arange(1, g1max + 1)[:, None] * np.pi * axis[None, :])
        s2 = np.sin(np.arange(1, g2max + 1)[:, None] * np.pi * axis[None, :])
        tables = (freq, s1, s2)
    _sin_cache[key] = (space, spec, tables)
    return tables


def _field_on_elements(space: DgSpace, spec: QWienerSpec,
                       increments: np.ndarray) -> np.ndarray:
    """Sum_k w_k e_k at the quadrature points, shape (n_el, n_q)."""
    if spec.dim == 1:
        ks, table = _sin_tables(space, spec)
        weights = np.zeros(table.shape[0])
        weights[ks - 1] = math.sqrt(2.0) * increments
        grid = weights @ table
    else:
        freq, s1, s2 = _sin_tables(space, spec)
        what = np.zeros((s1.shape[0], s2.shape[0]))
        what[freq[:, 0] - 1, freq[:, 1] - 1] = 2.0 * increments
        grid = s1.T @ what @ s2
    return space.grid_to_elements(grid)


def apply_diffusion(space: DgSpace, v: DgFunction, spec: QWienerSpec,
                    increments: np.ndarray, scale: float) -> DgFunction:
    """Project scale * v(x) * sum_k w_k e_k(x): one multiplicative-noise term."""
    increments = np.asarray(increments, dtype=float)
    if increments.shape != (spec.n_modes,):
        raise ValueError(
            f"expected {spec.n_modes} increments, got shape {increments.shape}")
    if spec.dim != space.dim:
        raise ValueError("spec dimension does not match the space")
    field = _field_on_elements(space, spec, increments)
    values = scale * space.eval_at_quadrature(v) * field
    return space.project_values(values)


# -- binary path exchange ------------------------------------------------------

def dump_path(path: QWienerPath, file) -> None:
    """Write steps, modes, tau, base_seed, then increments as LE doubles."""
    with open(file, "wb") as fh:
        fh.write(_HEADER.pack(path.N, path.spec.n_modes, path.tau,
                              path.base_seed))
        fh.write(np.ascontiguousarray(path.increments, dtype="<f8").tobytes())


def load_path(file, spec: QWienerSpec) -> QWienerPath:
    """Read a dumped path; the given QWienerSpec must match the stored mode count."""
    with open(file, "rb") as fh:
        n, modes, tau, base_seed = _HEADER.unpack(fh.read(_HEADER.size))
        if modes != spec.n_modes:
            raise ValueError(
                f"file has {modes} modes, spec expects {spec.n_modes}")
        data = np.frombuffer(fh.read(), dtype="<f8").reshape(n, modes)
    return QWienerPath(spec=spec, tau=tau, N=n, increments=data.copy(),
                       base_seed=base_seed)
