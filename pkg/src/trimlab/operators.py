"""Assembly of finite-volume trimmed Hamiltonians and related operators.

The restriction convention is literal coordinate projection P_B H P_B*:
the diagonal keeps the full-lattice value 2d + V0 + gV, only hopping
entries leaving the region are dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .lattice import (
    FullMask,
    LatticeBox,
    Site,
    SublatticeMask,
    graph_distance,
)

DENSE_LIMIT = 6000


@dataclass(frozen=True)
class HamiltonianMatrix:
    """Real-symmetric P_B H(g) P_B* with its generating data attached."""

    box: LatticeBox
    matrix: np.ndarray
    mask: SublatticeMask
    g: float
    v0: np.ndarray  # background potential per site
    v: np.ndarray  # realized random potential per site (zero off Gamma)
    #: subset of box sites the matrix acts on, in index order (None = all)
    sites: tuple[Site, ...] | None = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def site_list(self) -> tuple[Site, ...]:
        if self.sites is not None:
            return self.sites
        return tuple(self.box.sites())

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.matrix)


def _resolve_v0(v0, sites: Sequence[Site]) -> np.ndarray:
    if v0 is None:
        return np.zeros(len(sites))
    if callable(v0):
        return np.array([float(v0(s)) for s in sites])
    arr = np.asarray(v0, dtype=float)
    if arr.ndim == 0:
        return np.full(len(sites), float(arr))
    if arr.shape != (len(sites),):
        raise ValueError("v0 vector length does not match site count")
    return arr


def laplacian_matrix(box: LatticeBox) -> np.ndarray:
    """-Delta restricted to the box, full-lattice diagonal 2d kept."""
    n = box.size
    if n > DENSE_LIMIT:
        raise ValueError(f"box size {n} exceeds dense limit {DENSE_LIMIT}")
    d = box.dim
    h = np.zeros((n, n))
    np.fill_diagonal(h, 2.0 * d)
    for i, x in enumerate(box.sites()):
        for k in range(d):
            y = list(x)
            y[k] += 1
            y = tuple(y)
            if y in box:
                j = box.index(y)
                h[i, j] = -1.0
                h[j, i] = -1.0
    return h


def assemble(
    box: LatticeBox,
    mask: SublatticeMask,
    v0=None,
    g: float = 1.0,
    v: np.ndarray | None = None,
) -> HamiltonianMatrix:
    """H(g)|_B = (-Delta + V0 + gV)|_B with V supported on Gamma."""
    sites = tuple(box.sites())
    v0_vec = _resolve_v0(v0, sites)
    if v is None:
        v_vec = np.zeros(box.size)
    else:
        v_vec = np.asarray(v, dtype=float)
        if v_vec.shape != (box.size,):
            raise ValueError("potential vector length does not match box")
        bad = [
            s for i, s in enumerate(sites) if v_vec[i] != 0.0 and s not in mask
        ]
        if bad:
            raise ValueError(f"potential nonzero off Gamma at {bad[0]}")
    h = laplacian_matrix(box)
    h[np.diag_indices_from(h)] += v0_vec + g * v_vec
    return HamiltonianMatrix(box, h, mask, float(g), v0_vec, v_vec)


def restrict(ham: HamiltonianMatrix, sites: Sequence[Site]) -> HamiltonianMatrix:
    """Coordinate-projection restriction to a subset of box sites."""
    sites = tuple(sorted(sites))
    idx = [ham.box.index(s) for s in sites]
    sub = ham.matrix[np.ix_(idx, idx)]
    return HamiltonianMatrix(
        ham.box,
        sub,
        ham.mask,
        ham.g,
        ham.v0[idx],
        ham.v[idx],
        sites=sites,
    )


def trimmed_restriction(ham: HamiltonianMatrix) -> HamiltonianMatrix:
    """H_Gamma = P_{Gamma^c} H P_{Gamma^c}* on the disorder-free sites."""
    comp = [s for s in ham.site_list() if s not in ham.mask]
    if not comp:
        raise ValueError("empty complement: Gamma covers the whole region")
    return restrict(ham, comp)


@dataclass(frozen=True)
class AdjacencyOperator:
    """T_X(x, y) = 1 for x ~ y, rows on X, columns on X^c (within a box)."""

    rows: tuple[Site, ...]
    cols: tuple[Site, ...]
    matrix: np.ndarray


def adjacency_operator(
    x_sites: Sequence[Site], box: LatticeBox
) -> AdjacencyOperator:
    rows = tuple(sorted(x_sites))
    inside = set(rows)
    for s in rows:
        if s not in box:
            raise ValueError(f"site {s} outside the ambient box")
    cols = tuple(s for s in box.sites() if s not in inside)
    t = np.zeros((len(rows), len(cols)))
    col_index = {s: j for j, s in enumerate(cols)}
    for i, s in enumerate(rows):
        for d in range(box.dim):
            for step in (-1, 1):
                y = list(s)
                y[d] += step
                y = tuple(y)
                if y in col_index:
                    t[i, col_index[y]] = 1.0
    return AdjacencyOperator(rows, cols, t)


# ---------------------------------------------------------------------------
# Hedgehog construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HedgehogOperator:
    """Block operator [[U, -1], [-1, H(0)]] on Lambda x {1, 0}.

    Index order: the N pendant sites (Lambda x {1}) first, then the N
    base sites (Lambda x {0}).
    """

    base: HamiltonianMatrix
    u: np.ndarray
    matrix: np.ndarray

    @property
    def n_base(self) -> int:
        return self.base.n

    def pendant_slice(self) -> slice:
        return slice(0, self.n_base)

    def base_slice(self) -> slice:
        return slice(self.n_base, 2 * self.n_base)


def hedgehog_assemble(h0: HamiltonianMatrix, u: np.ndarray) -> HedgehogOperator:
    u = np.asarray(u)
    n = h0.n
    if u.shape != (n,):
        raise ValueError(f"potential length {u.shape} does not match base size {n}")
    dtype = complex if np.iscomplexobj(u) else float
    m = np.zeros((2 * n, 2 * n), dtype=dtype)
    m[:n, :n] = np.diag(u)
    m[:n, n:] = -np.eye(n)
    m[n:, :n] = -np.eye(n)
    m[n:, n:] = h0.matrix
    return HedgehogOperator(h0, u, m)
