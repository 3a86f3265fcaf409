"""Fractional-moment machinery: chi functionals, Monte Carlo moment
estimation, the strong-disorder contraction check, the localisation
threshold kernel, and eigenvalue-counting (Wegner) statistics.

All Monte Carlo loops draw disorder through counter-based streams and
reduce in fixed sample order, so estimates are reproducible bit-for-bit
for any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .disorder import DisorderSpec, SampleStream, sample_potential
from .lattice import LatticeBox, Site, SublatticeMask, graph_distance
from .operators import (
    HamiltonianMatrix,
    adjacency_operator,
    assemble,
    laplacian_matrix,
    trimmed_restriction,
)
from .spectral import (
    SpectralParameterOnSpectrum,
    eigendecompose,
    gap_and_mult,
    green,
)


# ---------------------------------------------------------------------------
# Decay metrics and chi functionals
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecayMetric:
    """rho(x, y) = eta * |x - y|_1; norm ||rho|| = eta."""

    eta: float = 0.1

    def __post_init__(self):
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @property
    def norm(self) -> float:
        return self.eta

    def evaluate(self, x: Site, y: Site) -> float:
        return self.eta * graph_distance(x, y)

    def weight_matrix(self, sites: Sequence[Site]) -> np.ndarray:
        n = len(sites)
        w = np.empty((n, n))
        for i, x in enumerate(sites):
            for j, y in enumerate(sites):
                w[i, j] = math.exp(self.eta * graph_distance(x, y))
        return w


@dataclass(frozen=True)
class ChiReport:
    """Value of a chi functional, deterministic or Monte Carlo."""

    value: float
    mode: str  # "deterministic" | "monte-carlo"
    samples: int = 0
    stderr: float = 0.0
    params: dict = field(default_factory=dict)

    @property
    def ci95(self) -> tuple[float, float]:
        half = 1.96 * self.stderr
        return (self.value - half, self.value + half)


def chi_kernel(
    a: np.ndarray, sites: Sequence[Site], rho: DecayMetric, s: float = 1.0
) -> ChiReport:
    """sup_x sum_y e^{rho(y,x)} |A(y,x)|^s, evaluated exactly."""
    if s <= 0:
        raise ValueError("s must be positive")
    a = np.asarray(a)
    if a.shape != (len(sites), len(sites)):
        raise ValueError("kernel shape does not match site list")
    if a.size == 0:
        return ChiReport(0.0, "deterministic", params={"s": s, "eta": rho.eta})
    weighted = rho.weight_matrix(sites) * np.abs(a) ** s
    value = float(np.max(np.sum(weighted, axis=0)))
    return ChiReport(value, "deterministic", params={"s": s, "eta": rho.eta})


# ---------------------------------------------------------------------------
# Disorder ensembles and the Monte Carlo driver
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleSpec:
    """The random operator family H(g)|_B: geometry, disorder and seeds."""

    box: LatticeBox
    mask: SublatticeMask
    dist: DisorderSpec
    g: float
    v0: object = None
    master_seed: int = 0
    samples: int = 100

    def stream(self) -> SampleStream:
        return SampleStream(self.dist, self.master_seed)

    def potential(self, sample_index: int) -> np.ndarray:
        return sample_potential(self.stream(), self.mask, self.box, sample_index)

    def realization(self, sample_index: int) -> HamiltonianMatrix:
        return assemble(
            self.box, self.mask, self.v0, self.g, self.potential(sample_index)
        )

    def deterministic_part(self) -> HamiltonianMatrix:
        return assemble(self.box, self.mask, self.v0, 0.0, None)


class ResampleBudgetExceeded(RuntimeError):
    pass


def mc_map(per_sample: Callable[[int], object], ens: EnsembleSpec, threads: int = 1):
    """Evaluate per_sample(i) for i = 0..samples-1, in index order.

    Samples hitting a spectral collision are deterministically replaced
    by fresh sample indices (i + k * samples); at most 1% of the budget
    may be resampled.  Results are independent of the thread count.
    """
    n = ens.samples
    budget = max(1, n // 100)
    resampled = []

    def attempt(i: int):
        for k in range(budget + 1):
            try:
                return per_sample(i + k * n), k
            except SpectralParameterOnSpectrum:
                continue
        raise ResampleBudgetExceeded(f"sample {i} kept colliding with z")

    if threads <= 1:
        results = [attempt(i) for i in range(n)]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(attempt, range(n)))
    values = [v for v, _ in results]
    n_resampled = sum(k for _, k in results)
    if n_resampled > budget:
        raise ResampleBudgetExceeded(
            f"{n_resampled} resamples exceed the {budget} budget"
        )
    return values, n_resampled


def _mean_stderr(values: np.ndarray) -> tuple[float, float]:
    n = len(values)
    mean = float(np.mean(values))
    if n < 2:
        return mean, float("inf")
    return mean, float(np.std(values, ddof=1) / math.sqrt(n))


def mc_fractional_moment(
    ens: EnsembleSpec,
    z: complex,
    s: float,
    x: Site,
    y: Site,
    threads: int = 1,
) -> dict:
    """Monte Carlo estimate of E |G_z[H(g)|_B](x, y)|^s."""
    if not 0 < s < 1:
        raise ValueError("need 0 < s < 1")
    ix, iy = ens.box.index(x), ens.box.index(y)

    def one(i: int) -> float:
        g = green(ens.realization(i), z).entries
        return abs(g[ix, iy]) ** s

    values, n_resampled = mc_map(one, ens, threads)
    mean, se = _mean_stderr(np.array(values))
    return {
        "estimate": mean,
        "stderr": se,
        "samples": ens.samples,
        "resampled": n_resampled,
        "z": z,
        "s": s,
    }


def mc_chi_green(
    ens: EnsembleSpec,
    z: complex,
    s: float,
    rho: DecayMetric,
    threads: int = 1,
) -> ChiReport:
    """chi_rho(E |G_z[H(g)|_B]|^s) over the box, with a CI at the sup row."""
    if not 0 < s <= 1:
        raise ValueError("need 0 < s <= 1")
    sites = tuple(ens.box.sites())
    w = rho.weight_matrix(sites)

    def one(i: int) -> np.ndarray:
        g = green(ens.realization(i), z).entries
        return np.abs(g) ** s

    values, n_resampled = mc_map(one, ens, threads)
    mean_kernel = np.mean(values, axis=0)
    col_sums = np.sum(w * mean_kernel, axis=0)
    xstar = int(np.argmax(col_sums))
    per_sample_at_xstar = np.array(
        [float(np.sum(w[:, xstar] * v[:, xstar])) for v in values]
    )
    _, se = _mean_stderr(per_sample_at_xstar)
    return ChiReport(
        float(col_sums[xstar]),
        "monte-carlo",
        samples=ens.samples,
        stderr=se,
        params={"s": s, "eta": rho.eta, "z": z, "resampled": n_resampled},
    )


# ---------------------------------------------------------------------------
# Strong-disorder contraction (Aizenman--Molchanov)
# ---------------------------------------------------------------------------


def am_contraction_check(
    ens: EnsembleSpec,
    z: complex,
    s: float,
    rho: DecayMetric,
    c_s: float,
    threads: int = 1,
) -> dict:
    """Check chi_rho(E|G_z|^s) against C_s / (g^s - C_s chi(|A^off|^s)).

    A is the deterministic part of the operator.  The denominator uses
    the off-diagonal chi, which is what the contraction argument yields
    and the only form its own applicability condition keeps positive.
    Requires full potential support (every box site random).
    """
    sites = tuple(ens.box.sites())
    if any(site not in ens.mask for site in sites):
        raise ValueError("contraction check requires Gamma = Full on the box")
    a = ens.deterministic_part().matrix
    a_off = a - np.diag(np.diag(a))
    chi_off = chi_kernel(a_off, sites, rho, s).value
    gs = ens.g**s
    threshold = c_s * chi_off
    if gs <= threshold:
        return {
            "applicable": False,
            "reason": f"g^s = {gs:.6g} <= C_s chi(|A^off|^s) = {threshold:.6g}",
            "chi_off": chi_off,
            "c_s": c_s,
        }
    rhs = c_s / (gs - threshold)
    lhs = mc_chi_green(ens, z, s, rho, threads)
    holds = lhs.value <= rhs + 3 * lhs.stderr
    return {
        "applicable": True,
        "lhs": lhs.value,
        "lhs_stderr": lhs.stderr,
        "rhs": rhs,
        "margin": rhs - lhs.value,
        "holds": holds,
        "chi_off": chi_off,
        "c_s": c_s,
        "samples": ens.samples,
    }


# ---------------------------------------------------------------------------
# chi-inequalities implied by the resolvent identity
# ---------------------------------------------------------------------------


def chi_resolvent_inequalities(
    ham: HamiltonianMatrix,
    x_sites: Sequence[Site],
    z: complex,
    rho: DecayMetric,
    s: float = 1.0,
) -> dict:
    """Evaluate both sides of the two chi bounds for a given X split."""
    sites = ham.site_list()
    pos = {site: i for i, site in enumerate(sites)}
    xs = tuple(sorted(set(x_sites)))
    xc = tuple(site for site in sites if site not in set(xs))
    kappa = 2 * ham.box.dim
    enorm = math.exp(rho.norm)
    g = green(ham, z).entries
    chi_g = chi_kernel(g, sites, rho, s).value
    ix = [pos[site] for site in xs]
    ixc = [pos[site] for site in xc]
    chi_pgp_x = chi_kernel(g[np.ix_(ix, ix)], xs, rho, s).value
    chi_pgp_xc = chi_kernel(g[np.ix_(ixc, ixc)], xc, rho, s).value
    if xc:
        from .operators import restrict

        gx = green(restrict(ham, xc), z).entries
        chi_gx = chi_kernel(gx, xc, rho, s).value
    else:
        chi_gx = 0.0
    star_lhs = chi_pgp_xc
    star_rhs = kappa**2 * enorm**2 * chi_gx**2 * chi_pgp_x
    chain_lhs = chi_g
    chain_rhs = kappa * enorm * chi_gx * (1.0 + kappa * enorm * chi_gx * chi_pgp_x)
    degenerate = len(xc) == 0
    return {
        "res_chi_star": {
            "lhs": star_lhs,
            "rhs": star_rhs,
            "holds": degenerate or star_lhs <= star_rhs * (1 + 1e-12),
        },
        "res_chi": {
            "lhs": chain_lhs,
            "rhs": chain_rhs,
            "holds": degenerate or chain_lhs <= chain_rhs * (1 + 1e-12),
        },
        "degenerate": degenerate,
        "kappa": kappa,
    }


# ---------------------------------------------------------------------------
# The localisation-threshold kernel
# ---------------------------------------------------------------------------


def kernel_K(
    mask: SublatticeMask,
    box: LatticeBox,
    v0,
    z: complex,
) -> dict:
    """Kernel K and diagonal D of the Schur complement on Gamma.

    D + K is the diagonal/off-diagonal split of
    P_G Delta P_G* - V0|_G + T_G G_z[H_G] T_G*, so that
    P_G G_z[H] P_G* = G_z[gV|_G - D - K] exactly in finite volume.
    """
    h0 = assemble(box, mask, v0, 0.0, None)
    gamma_sites = tuple(s for s in box.sites() if s in mask)
    if not gamma_sites:
        raise ValueError("Gamma does not meet the box")
    idx = [box.index(s) for s in gamma_sites]
    delta = -laplacian_matrix(box)  # diagonal -2d, +1 on internal edges
    m = delta[np.ix_(idx, idx)].astype(complex)
    m -= np.diag(h0.v0[idx])
    comp_sites = tuple(s for s in box.sites() if s not in mask)
    if comp_sites:
        h_gamma = trimmed_restriction(h0)
        vals = np.linalg.eigvalsh(h_gamma.matrix)
        zc = complex(z)
        if zc.imag == 0 and np.min(np.abs(vals - zc.real)) <= 1e-10:
            raise SpectralParameterOnSpectrum(
                f"z = {z} lies on the spectrum of the trimmed restriction"
            )
        t = adjacency_operator(gamma_sites, box)
        g_gamma = green(h_gamma, z).entries
        m += t.matrix @ g_gamma @ t.matrix.T
        spectrum = vals
    else:
        spectrum = np.array([])
    d = np.diag(m).copy()
    k = m - np.diag(d)
    return {
        "K": k,
        "D": d,
        "sites": gamma_sites,
        "trimmed_spectrum": spectrum,
    }


def kernel_identity_residual(
    ens: EnsembleSpec, z: complex, sample_index: int
) -> float:
    """Max-norm residual of P_G G_z[H] P_G* - G_z[gV|_G - D - K]."""
    kd = kernel_K(ens.mask, ens.box, ens.v0, z)
    ham = ens.realization(sample_index)
    idx = [ens.box.index(s) for s in kd["sites"]]
    g_full = green(ham, z).entries
    lhs = g_full[np.ix_(idx, idx)]
    gv = ens.g * ham.v[idx]
    op = np.diag(gv.astype(complex)) - np.diag(kd["D"]) - kd["K"]
    rhs = np.linalg.inv(op - complex(z) * np.eye(len(idx)))
    return float(np.max(np.abs(lhs - rhs)))


def loc1_threshold(
    mask: SublatticeMask,
    box: LatticeBox,
    v0,
    lam: float,
    s: float,
    rho: DecayMetric,
    c_s: float,
    margin: float = 1e-6,
) -> dict:
    """Finite-volume proxy of the K-kernel localisation threshold.

    Returns chi_rho(|K|^s) at z = lam and g0 = (C_s chi)^{1/s}; reported
    inapplicable when lam sits within `margin` of the trimmed spectrum.
    """
    comp_sites = tuple(s_ for s_ in box.sites() if s_ not in mask)
    if comp_sites:
        h0 = assemble(box, mask, v0, 0.0, None)
        vals = np.linalg.eigvalsh(trimmed_restriction(h0).matrix)
        dist = float(np.min(np.abs(vals - lam)))
        if dist <= margin:
            return {
                "applicable": False,
                "reason": f"lambda within {dist:.3g} of sigma(H_Gamma)",
                "trimmed_spectrum_distance": dist,
            }
    kd = kernel_K(mask, box, v0, lam)
    chi = chi_kernel(kd["K"], kd["sites"], rho, s).value
    return {
        "applicable": True,
        "chi_K": chi,
        "g0": (c_s * chi) ** (1.0 / s),
        "s": s,
        "c_s": c_s,
    }


# ---------------------------------------------------------------------------
# Wegner-type statistics
# ---------------------------------------------------------------------------


def eigenvector_gamma_mass(
    phi: np.ndarray, mask: SublatticeMask, sites: Sequence[Site]
) -> float:
    """l^2 mass of a vector on the Gamma sites of its region."""
    phi = np.asarray(phi)
    sel = np.fromiter((s in mask for s in sites), dtype=bool, count=len(sites))
    return float(np.linalg.norm(phi[sel]))


def _lambda_kernel_basis(
    h0: HamiltonianMatrix, lam: float, cluster_tol: float
) -> np.ndarray:
    sd = eigendecompose(h0)
    sel = np.abs(sd.eigenvalues - lam) <= cluster_tol
    return sd.eigenvectors[:, sel]


def wegner_count(
    ens: EnsembleSpec,
    lam: float,
    eps: float,
    cluster_tol: float = 1e-9,
    threads: int = 1,
) -> dict:
    """Excess eigenvalue counts N in (lam-eps, lam+eps) over the ensemble.

    Requires every lam-eigenvector of H(0)|_B to vanish on Gamma (the
    counting bound's hypothesis); refuses otherwise.  Also audits the
    deterministic eigenvector-mass bound on every qualifying eigenvector.
    """
    h0 = ens.deterministic_part()
    sites = h0.site_list()
    gm = gap_and_mult(eigendecompose(h0), lam, cluster_tol)
    mult, gap = gm["mult"], gm["gap"]
    if mult == 0:
        raise ValueError(f"lambda = {lam} is not in sigma(H(0)|_B)")
    if eps > gap / 3:
        raise ValueError(f"eps = {eps} exceeds gap/3 = {gap / 3:.6g}")
    ker = _lambda_kernel_basis(h0, lam, cluster_tol)
    for j in range(ker.shape[1]):
        mass = eigenvector_gamma_mass(ker[:, j], ens.mask, sites)
        if mass > 1e-8:
            raise ValueError(
                "support precondition fails: a lambda-eigenvector of "
                f"H(0)|_B has Gamma mass {mass:.3g}"
            )
    n_gamma = sum(1 for s in sites if s in ens.mask)

    def one(i: int):
        ham = ens.realization(i)
        sd = eigendecompose(ham)
        inside = np.abs(sd.eigenvalues - lam) < eps
        n_excess = int(np.sum(inside)) - mult
        # eigenvector-mass audit over the gap/3 window
        vmax = float(np.max(np.abs(ham.v))) if np.any(ham.v) else 0.0
        checks = []
        if vmax > 0:
            bound = gap / (3.0 * ens.g * vmax)
            window = np.abs(sd.eigenvalues - lam) <= gap / 3
            for j in np.nonzero(window)[0]:
                phi = sd.eigenvectors[:, j]
                if ker.size and np.linalg.norm(ker.T @ phi) > 1e-8:
                    continue  # not orthogonal to Ker(H(0)|_B - lam)
                mass = eigenvector_gamma_mass(phi, ens.mask, sites)
                checks.append(bool(mass >= bound - 1e-12))
        return n_excess, checks

    values, _ = mc_map(one, ens, threads)
    counts = np.array([n for n, _ in values])
    all_checks = [c for _, cs in values for c in cs]
    hist: dict[int, int] = {}
    for n in counts:
        hist[int(n)] = hist.get(int(n), 0) + 1
    s = 0.5  # reporting exponent for the comparison scaling
    return {
        "p_excess": float(np.mean(counts >= 1)),
        "histogram": dict(sorted(hist.items())),
        "mult": mult,
        "gap": gap,
        "eps": eps,
        "bound_scale": eps**s * ens.g**s / gap ** (2 * s) * n_gamma**2,
        "mass_bound_checked": len(all_checks),
        "mass_bound_holds": all(all_checks) if all_checks else True,
        "samples": ens.samples,
    }


def wegner_uniform_bound_probe(
    ens: EnsembleSpec,
    lam_grid: Sequence[float],
    eps_grid: Sequence[float],
    s: float,
    threads: int = 1,
) -> dict:
    """Table of E ||G_{lam+i eps}||^s over a (lambda, eps) grid.

    Requires the inner box boundary to lie in Gamma; boundedness of the
    table as eps decreases is the content of the first Wegner estimate.
    """
    sites = tuple(ens.box.sites())
    inner_boundary = [s_ for s_ in sites if ens.box.is_boundary_site(s_)]
    offenders = [s_ for s_ in inner_boundary if s_ not in ens.mask]
    if offenders:
        raise ValueError(
            f"inner boundary site {offenders[0]} is outside Gamma"
        )
    rows = []
    for lam in lam_grid:
        for eps in eps_grid:
            z = complex(lam, eps)

            def one(i: int) -> float:
                ham = ens.realization(i)
                a = ham.matrix.astype(complex) - z * np.eye(ham.n)
                smin = np.min(np.linalg.svd(a, compute_uv=False))
                return (1.0 / smin) ** s

            values, _ = mc_map(one, ens, threads)
            mean, se = _mean_stderr(np.array(values))
            rows.append(
                {"lam": lam, "eps": eps, "estimate": mean, "stderr": se}
            )
    return {"rows": rows, "s": s, "samples": ens.samples}


def g_scaling_exponent(
    ens: EnsembleSpec,
    z: complex,
    s: float,
    x: Site,
    g_values: Sequence[float],
    threads: int = 1,
) -> dict:
    """Fit the slope of log E|G(x,x)|^s against log g (expected ~ -s)."""
    if x not in ens.mask:
        raise ValueError("the scaling site must carry disorder (x in Gamma)")
    from dataclasses import replace

    points = []
    for g in g_values:
        res = mc_fractional_moment(replace(ens, g=float(g)), z, s, x, x, threads)
        points.append({"g": g, **res})
    logs_g = np.log([p["g"] for p in points])
    logs_e = np.log([p["estimate"] for p in points])
    a = np.vstack([logs_g, np.ones(len(points))]).T
    coef, *_ = np.linalg.lstsq(a, logs_e, rcond=None)
    return {"slope": float(coef[0]), "points": points, "s": s}
