"""Dense spectral machinery: eigendecomposition, Green functions, Schur
complements, resolvent-identity residuals, projections and decay fits.

Green functions are computed by pivoted complex LU solves, independent of
the eigendecomposition, so the two routes cross-validate each other.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg as sla

from .lattice import LatticeBox, Site, graph_distance
from .operators import HamiltonianMatrix, restrict

EIG_TOL = 1e-10


class SpectralParameterOnSpectrum(ValueError):
    """Raised when a real spectral parameter collides with an eigenvalue."""


def _matrix(h) -> np.ndarray:
    return h.matrix if isinstance(h, HamiltonianMatrix) else np.asarray(h)


@dataclass(frozen=True)
class SpectralData:
    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # orthonormal columns
    source: object = None

    @property
    def n(self) -> int:
        return len(self.eigenvalues)


def eigendecompose(h) -> SpectralData:
    m = _matrix(h)
    if not np.array_equal(m, m.T):
        raise ValueError("matrix is not exactly symmetric")
    vals, vecs = sla.eigh(m)
    return SpectralData(vals, vecs, source=h)


@dataclass(frozen=True)
class GreenMatrix:
    z: complex
    entries: np.ndarray
    source: object = None


def green(h, z: complex) -> GreenMatrix:
    """G_z = (H - z)^-1 by direct complex linear solve."""
    m = _matrix(h)
    z = complex(z)
    if z.imag == 0.0:
        vals = np.linalg.eigvalsh(m)
        scale = max(np.max(np.abs(vals)), 1.0)
        if np.min(np.abs(vals - z.real)) <= 1e-12 * scale:
            raise SpectralParameterOnSpectrum(
                f"z = {z} lies on the spectrum (within 1e-12 * ||H||)"
            )
    a = m.astype(complex) - z * np.eye(m.shape[0])
    g = sla.lu_solve(sla.lu_factor(a), np.eye(m.shape[0], dtype=complex))
    return GreenMatrix(z, g, source=h)


def _index_split(ham: HamiltonianMatrix, x_sites: Sequence[Site]):
    sites = ham.site_list()
    pos = {s: i for i, s in enumerate(sites)}
    xs = sorted(set(x_sites))
    for s in xs:
        if s not in pos:
            raise ValueError(f"site {s} not in the operator's region")
    inside = set(xs)
    ix = [pos[s] for s in xs]
    xc = [s for s in sites if s not in inside]
    ixc = [pos[s] for s in xc]
    return xs, ix, xc, ixc


def schur_green(ham: HamiltonianMatrix, x_sites: Sequence[Site], z: complex):
    """P_X G_z P_X* via the Schur-Banachiewicz complement of the X^c block."""
    m = _matrix(ham)
    z = complex(z)
    xs, ix, xc, ixc = _index_split(ham, x_sites)
    a = m.astype(complex) - z * np.eye(m.shape[0])
    axx = a[np.ix_(ix, ix)]
    if not ixc:
        return xs, np.linalg.inv(axx)
    axc = a[np.ix_(ix, ixc)]
    acx = a[np.ix_(ixc, ix)]
    acc = a[np.ix_(ixc, ixc)]
    inner = sla.lu_solve(sla.lu_factor(acc), acx)
    comp = axx - axc @ inner
    return xs, np.linalg.inv(comp)


def resolvent_identity_residual(
    ham: HamiltonianMatrix,
    x_sites: Sequence[Site],
    z: complex,
    case: str,
) -> float:
    """Max deviation from the boundary-sum resolvent identity.

    A_X denotes the restriction of the operator off X (to X^c), with the
    same diagonal convention as the assembly.  The out-out case carries
    the free G_z[A_X](x, y) term in addition to the double boundary sum.
    """
    z = complex(z)
    xs, ix, xc, ixc = _index_split(ham, x_sites)
    g = green(ham, z).entries
    sites = ham.site_list()
    pos = {s: i for i, s in enumerate(sites)}
    if xc:
        sub = restrict(ham, xc)
        gx_full = green(sub, z).entries
        pos_x = {s: i for i, s in enumerate(sub.site_list())}
    else:
        gx_full = np.zeros((0, 0), dtype=complex)
        pos_x = {}
    # boundary pairs (u' in X) ~ (u in X^c)
    pairs = [
        (up, u)
        for up in xs
        for u in xc
        if graph_distance(up, u) == 1
    ]
    worst = 0.0
    if case == "in-out":
        for x in xs:
            for y in xc:
                total = sum(
                    g[pos[x], pos[up]] * gx_full[pos_x[u], pos_x[y]]
                    for up, u in pairs
                )
                worst = max(worst, abs(g[pos[x], pos[y]] - total))
    elif case == "out-in":
        for x in xc:
            for y in xs:
                total = sum(
                    gx_full[pos_x[x], pos_x[u]] * g[pos[up], pos[y]]
                    for up, u in pairs
                )
                worst = max(worst, abs(g[pos[x], pos[y]] - total))
    elif case == "out-out":
        for x in xc:
            for y in xc:
                total = gx_full[pos_x[x], pos_x[y]]
                total += sum(
                    gx_full[pos_x[x], pos_x[u]]
                    * g[pos[up], pos[vp]]
                    * gx_full[pos_x[v], pos_x[y]]
                    for up, u in pairs
                    for vp, v in pairs
                )
                worst = max(worst, abs(g[pos[x], pos[y]] - total))
    else:
        raise ValueError(f"unknown case {case!r}")
    return worst


@dataclass(frozen=True)
class ProjectionPair:
    p: np.ndarray
    q: np.ndarray
    rank: int


def spectral_projection(
    sd: SpectralData, lo: float, hi: float
) -> ProjectionPair:
    """P = sum over eigenvalues in [lo, hi] of the eigenprojections."""
    sel = (sd.eigenvalues >= lo) & (sd.eigenvalues <= hi)
    vecs = sd.eigenvectors[:, sel]
    p = vecs @ vecs.T
    return ProjectionPair(p, np.eye(sd.n) - p, int(np.sum(sel)))


def point_projection(
    sd: SpectralData, lam: float, cluster_tol: float | None = None
) -> ProjectionPair:
    tol = _cluster_tol(sd, cluster_tol)
    return spectral_projection(sd, lam - tol, lam + tol)


def _cluster_tol(sd: SpectralData, cluster_tol: float | None) -> float:
    if cluster_tol is not None:
        return cluster_tol
    scale = max(np.max(np.abs(sd.eigenvalues)), 1.0)
    return max(1e-9, 1e-12 * scale)


def gap_and_mult(
    sd: SpectralData, lam: float, cluster_tol: float | None = None
) -> dict:
    """Multiplicity of lam (within cluster_tol) and distance to the rest."""
    tol = _cluster_tol(sd, cluster_tol)
    dists = np.abs(sd.eigenvalues - lam)
    inside = dists <= tol
    mult = int(np.sum(inside))
    if mult == sd.n:
        raise ValueError("all eigenvalues inside the cluster; gap undefined")
    gap = float(np.min(dists[~inside]))
    return {"mult": mult, "gap": gap, "cluster_tol": tol}


def combes_thomas_rate(ham: HamiltonianMatrix, z: complex, x0: Site) -> dict:
    """Least-squares exponential decay rate of |G_z(x0, .)|.

    Sites closer than distance 2 to x0 or to the box boundary are
    excluded; boundary effects contaminate the asymptotic rate there.
    """
    g = green(ham, z).entries
    sites = ham.site_list()
    pos = {s: i for i, s in enumerate(sites)}
    if x0 not in pos:
        raise ValueError(f"site {x0} not in the operator's region")
    box = ham.box
    lo, hi = box.lo, box.hi
    dists, logs = [], []
    for y in sites:
        dist = graph_distance(x0, y)
        if dist < 2:
            continue
        if any(y[k] - lo[k] < 2 or hi[k] - y[k] < 2 for k in range(box.dim)):
            continue
        val = abs(g[pos[x0], pos[y]])
        if val < 1e-290:
            continue
        dists.append(dist)
        logs.append(math.log(val))
    if len(set(dists)) < 2:
        raise ValueError("insufficient range for fit")
    a = np.vstack([-np.array(dists, dtype=float), np.ones(len(dists))]).T
    coef, *_ = np.linalg.lstsq(a, np.array(logs), rcond=None)
    c_rate, log_c = float(coef[0]), float(coef[1])
    resid = float(np.sqrt(np.mean((a @ coef - logs) ** 2)))
    if c_rate <= 0:
        raise ValueError("fitted rate is not positive")
    return {"rate": c_rate, "prefactor": math.exp(log_c), "rms_residual": resid}
