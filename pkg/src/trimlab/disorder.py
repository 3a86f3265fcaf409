"""Random potential distributions, seeded sampling and decoupling checks.

Sampling is counter-based: every draw is a pure function of
(distribution, master seed, site index, sample index), so ensemble
averages are reproducible under any scheduling of the work.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import integrate

from .lattice import LatticeBox, SublatticeMask

QUAD_TOL = 1e-9


# ---------------------------------------------------------------------------
# Distribution families
# ---------------------------------------------------------------------------


class DisorderSpec:
    """A distribution mu with declared regularity constants.

    Subclasses provide the density on a finite union of intervals, the
    map from uniform variates to samples, and declared alpha / q values.
    """

    declared_alpha: float
    declared_q: float

    #: number of uniforms consumed per sample
    draws_per_sample: int = 1

    #: intervals covering the support, as (lo, hi) pairs
    support: tuple[tuple[float, float], ...]

    def pdf(self, v: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (n, draws_per_sample) to n samples."""
        raise NotImplementedError

    def descriptor(self) -> str:
        raise NotImplementedError

    @property
    def moment_Mq(self) -> float:
        """Declared-q absolute moment of mu, by quadrature."""
        return self.expect(lambda v: np.abs(v) ** self.declared_q)

    def expect(self, f, points: Sequence[float] = ()) -> float:
        """Integral of f against mu over the support intervals."""
        total = 0.0
        for lo, hi in self.support:
            pts = sorted(p for p in points if lo < p < hi)
            val, _ = integrate.quad(
                lambda v: f(v) * self.pdf(v),
                lo,
                hi,
                points=pts or None,
                epsabs=QUAD_TOL,
                epsrel=QUAD_TOL,
                limit=400,
            )
            total += val
        return total


@dataclass(frozen=True)
class Uniform(DisorderSpec):
    """Uniform(a, b): 1-regular with C = 2/(b-a), all moments finite."""

    a: float = 0.0
    b: float = 1.0
    declared_q: float = 2.0

    def __post_init__(self):
        if not self.b > self.a:
            raise ValueError("need b > a")

    declared_alpha = 1.0
    draws_per_sample = 1

    @property
    def regularity_C(self) -> float:
        return 2.0 / (self.b - self.a)

    @property
    def support(self):
        return ((self.a, self.b),)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        return np.where((v >= self.a) & (v <= self.b), 1.0 / (self.b - self.a), 0.0)

    def from_uniform(self, u):
        return self.a + (self.b - self.a) * u[..., 0]

    def descriptor(self):
        return f"uniform:{self.a},{self.b}"


@dataclass(frozen=True)
class BernoulliMixture(DisorderSpec):
    """Atoms at 0 and 1 (weight p on 1) smoothed by a uniform of width w."""

    p: float = 0.5
    w: float = 0.1
    declared_q: float = 2.0

    def __post_init__(self):
        if not 0 < self.p < 1:
            raise ValueError("need 0 < p < 1")
        if not 0 < self.w <= 1:
            raise ValueError("need 0 < w <= 1")

    declared_alpha = 1.0
    draws_per_sample = 2

    @property
    def regularity_C(self) -> float:
        # density is at most max(p, 1-p)/w (atoms separated when w < 2)
        return 2.0 * max(self.p, 1.0 - self.p) / self.w

    @property
    def support(self):
        h = self.w / 2
        if 1.0 - h <= h:  # overlapping smoothed atoms
            return ((-h, 1.0 + h),)
        return ((-h, h), (1.0 - h, 1.0 + h))

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        h = self.w / 2
        out = np.zeros_like(v)
        out = out + np.where(np.abs(v) <= h, (1.0 - self.p) / self.w, 0.0)
        out = out + np.where(np.abs(v - 1.0) <= h, self.p / self.w, 0.0)
        return out

    def from_uniform(self, u):
        atom = (u[..., 0] < self.p).astype(float)
        return atom + self.w * (u[..., 1] - 0.5)

    def descriptor(self):
        return f"bmix:{self.p},{self.w}"


@dataclass(frozen=True)
class TruncatedCauchy(DisorderSpec):
    """Cauchy of the given scale conditioned on [-cutoff, cutoff].

    Used to exercise the small-q constraint logic; the declared q must be
    below 1 even though the truncated law has all moments.
    """

    scale: float = 1.0
    cutoff: float = 50.0
    declared_q: float = 0.5

    def __post_init__(self):
        if self.scale <= 0 or self.cutoff <= 0:
            raise ValueError("scale and cutoff must be positive")
        if not 0 < self.declared_q < 1:
            raise ValueError("declared_q must lie in (0, 1) for TruncatedCauchy")

    declared_alpha = 1.0
    draws_per_sample = 1

    @property
    def _norm(self) -> float:
        return 2.0 * math.atan(self.cutoff / self.scale)

    @property
    def regularity_C(self) -> float:
        return 2.0 / (self.scale * self._norm)

    @property
    def support(self):
        return ((-self.cutoff, self.cutoff),)

    def pdf(self, v):
        v = np.asarray(v, dtype=float)
        dens = 1.0 / (self.scale * (1.0 + (v / self.scale) ** 2) * self._norm)
        return np.where(np.abs(v) <= self.cutoff, dens, 0.0)

    def from_uniform(self, u):
        theta = (2.0 * u[..., 0] - 1.0) * math.atan(self.cutoff / self.scale)
        return self.scale * np.tan(theta)

    def descriptor(self):
        return f"tcauchy:{self.scale},{self.cutoff}"


def spec_from_descriptor(text: str) -> DisorderSpec:
    parts = text.strip().split(":")
    kind = parts[0].lower()
    args = [float(v) for v in parts[1].split(",")] if len(parts) > 1 else []
    try:
        if kind == "uniform":
            return Uniform(*args) if args else Uniform()
        if kind == "bmix":
            return BernoulliMixture(*args) if args else BernoulliMixture()
        if kind == "tcauchy":
            return TruncatedCauchy(*args) if args else TruncatedCauchy()
    except (TypeError, ValueError) as exc:
        raise ValueError(f"malformed disorder descriptor {text!r}: {exc}") from exc
    raise ValueError(f"unknown disorder family {kind!r}")


# ---------------------------------------------------------------------------
# Counter-based sampling
# ---------------------------------------------------------------------------


def _stream_key(master_seed: int, sample_index: int) -> int:
    h = (master_seed & (1 << 64) - 1) << 64 | (sample_index & (1 << 64) - 1)
    return h ^ 0x9E3779B97F4A7C15_9E3779B97F4A7C15


@dataclass(frozen=True)
class SampleStream:
    """Seeded source of i.i.d. draws indexed by (site index, sample index)."""

    spec: DisorderSpec
    master_seed: int

    def _uniform_block(self, n_sites: int, sample_index: int) -> np.ndarray:
        gen = np.random.Generator(
            np.random.Philox(key=_stream_key(self.master_seed, sample_index))
        )
        k = self.spec.draws_per_sample
        return gen.random(n_sites * k).reshape(n_sites, k)

    def draw_vector(self, n_sites: int, sample_index: int) -> np.ndarray:
        """Draws for site indices 0..n_sites-1 of one disorder realization."""
        return self.spec.from_uniform(self._uniform_block(n_sites, sample_index))

    def draw(self, site_index: int, sample_index: int) -> float:
        """Single draw; identical to draw_vector(...)[site_index]."""
        return float(self.draw_vector(site_index + 1, sample_index)[site_index])


def sample_potential(
    stream: SampleStream,
    mask: SublatticeMask,
    box: LatticeBox,
    sample_index: int,
) -> np.ndarray:
    """Potential vector on the box: mu-distributed on Gamma, zero off it."""
    v = stream.draw_vector(box.size, sample_index)
    keep = np.fromiter((s in mask for s in box.sites()), dtype=bool, count=box.size)
    v[~keep] = 0.0
    return v


# ---------------------------------------------------------------------------
# Regularity diagnostics
# ---------------------------------------------------------------------------


def regularity_check(spec: DisorderSpec, n: int, seed: int) -> dict:
    """Empirical alpha-regularity constant and q-moment with standard errors.

    Scans a (t, eps) grid over the support and reports the largest
    empirical mu[t-eps, t+eps] / eps^alpha.
    """
    if n < 10**4:
        raise ValueError("need at least 1e4 samples")
    v = SampleStream(spec, seed).draw_vector(n, 0)
    alpha = spec.declared_alpha
    lo = min(a for a, _ in spec.support)
    hi = max(b for _, b in spec.support)
    t_grid = np.linspace(lo, hi, 21)
    eps_grid = [0.2, 0.1, 0.05, 0.02, 0.01]
    best = {"C": -np.inf}
    for t in t_grid:
        for eps in eps_grid:
            phat = float(np.mean(np.abs(v - t) <= eps))
            c_emp = phat / eps**alpha
            if c_emp > best["C"]:
                se = math.sqrt(max(phat * (1 - phat), 1.0 / n) / n) / eps**alpha
                best = {"C": c_emp, "t": float(t), "eps": eps, "C_stderr": se}
    mq = np.abs(v) ** spec.declared_q
    return {
        "empirical_C": best["C"],
        "empirical_C_stderr": best["C_stderr"],
        "at_t": best["t"],
        "at_eps": best["eps"],
        "empirical_Mq": float(np.mean(mq)),
        "empirical_Mq_stderr": float(np.std(mq, ddof=1) / math.sqrt(n)),
        "declared_alpha": alpha,
        "declared_q": spec.declared_q,
        "n": n,
    }


def window_mass(spec: DisorderSpec, t: float, eps: float) -> float:
    """Exact mu[t-eps, t+eps] by quadrature (oracle for regularity tests)."""
    return spec.expect(
        lambda v: float(abs(v - t) <= eps), points=(t - eps, t, t + eps)
    )


# ---------------------------------------------------------------------------
# Decoupling inequality of the rational-function lemma
# ---------------------------------------------------------------------------


def _check_offreal(spec: DisorderSpec, b: complex) -> None:
    if b.imag != 0:
        return
    for lo, hi in spec.support:
        if lo <= b.real <= hi:
            raise ValueError(f"pole {b} lies on the support of mu")


def decoupling_ratio(
    spec: DisorderSpec,
    a: Sequence[complex],
    b: Sequence[complex],
    s: float,
    r: float,
) -> dict:
    """Two-sided comparability of a rational moment with its (1+|.|) proxy.

    lhs = int prod|v-a_j|^s / prod|v-b_i|^r dmu(v),
    rhs = prod(1+|a_j|)^s / prod(1+|b_i|)^r.
    """
    a = [complex(v) for v in a]
    b = [complex(v) for v in b]
    l, m = len(a), len(b)
    alpha, q = spec.declared_alpha, spec.declared_q
    if m > 0 and not r * m < alpha:
        raise ValueError(f"constraint rm < alpha violated: {r * m} >= {alpha}")
    if m > 0:
        qmin = (s * l + r * m) * alpha / (alpha - r * m)
        if q < qmin:
            raise ValueError(f"constraint q >= {qmin:.3g} violated (q = {q})")
    for bi in b:
        _check_offreal(spec, bi)

    def integrand(v):
        num = 1.0
        for aj in a:
            num *= abs(v - aj) ** s
        den = 1.0
        for bi in b:
            den *= abs(v - bi) ** r
        return num / den

    points = [c.real for c in a + b]
    lhs = spec.expect(integrand, points=points)
    rhs = 1.0
    for aj in a:
        rhs *= (1.0 + abs(aj)) ** s
    for bi in b:
        rhs /= (1.0 + abs(bi)) ** r
    return {"lhs": lhs, "rhs": rhs, "ratio": lhs / rhs}


def decoupling_pair_ratio(
    spec: DisorderSpec, a: complex, b: complex, s: float
) -> float:
    """E|V-b|^-s divided by E |V-a|^s |V-b|^-s (the decoupling quotient)."""
    _check_offreal(spec, complex(b))
    pts = [complex(a).real, complex(b).real]
    num = spec.expect(lambda v: abs(v - b) ** (-s), points=pts)
    den = spec.expect(
        lambda v: abs(v - a) ** s * abs(v - b) ** (-s), points=pts
    )
    return num / den


def estimate_decoupling_constants(
    spec: DisorderSpec, s: float, trials: int, seed: int
) -> dict:
    """Empirical lower bound on the decoupling constant C_s.

    Maximizes the decoupling quotient over seeded random (a, b) pairs
    drawn from a complex rectangle spanning the support; the true C_s is
    existential, so only this lower envelope is reported.
    """
    if not 0 < s < spec.declared_alpha:
        raise ValueError("need 0 < s < alpha")
    if trials < 1:
        raise ValueError("no trials")
    lo = min(a for a, _ in spec.support)
    hi = max(b for _, b in spec.support)
    span = hi - lo
    gen = np.random.Generator(np.random.Philox(key=_stream_key(seed, 0)))
    best = {"C_s": -np.inf}
    for _ in range(trials):
        re_a, re_b, im_a, im_b, u = gen.random(5)
        a = complex(lo - 0.5 * span + 2.0 * span * re_a, 2.0 * (im_a - 0.5))
        if u < 0.5:  # coincident pair: quotient reduces to E|V-b|^-s
            a = complex(lo + span * re_a, 0.0)
            b = complex(a.real, 0.02 + 0.98 * im_b)
        else:
            b = complex(
                lo - 0.5 * span + 2.0 * span * re_b,
                math.copysign(0.02 + 0.98 * im_b, im_b - 0.5),
            )
        ratio = decoupling_pair_ratio(spec, a, b, s)
        if ratio > best["C_s"]:
            best = {"C_s": ratio, "a": a, "b": b}
    best["s"] = s
    best["trials"] = trials
    return best
