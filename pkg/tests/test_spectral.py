from __future__ import annotations

import math

import numpy as np
import pytest

from trimlab.disorder import SampleStream, Uniform, sample_potential
from trimlab.lattice import FullMask, Gamma1Mask, make_box
from trimlab.operators import assemble
from trimlab.spectral import (
    SpectralParameterOnSpectrum,
    combes_thomas_rate,
    eigendecompose,
    gap_and_mult,
    green,
    point_projection,
    resolvent_identity_residual,
    schur_green,
    spectral_projection,
)


def _random_ham(seed: int, n: int = 4, g: float = 2.0):
    box = make_box(2, (1, 1), (n, n))
    mask = FullMask()
    v = sample_potential(SampleStream(Uniform(), seed), mask, box, 0)
    return assemble(box, mask, None, g, v)


def test_eigendecompose_reconstructs():
    ham = _random_ham(0)
    sd = eigendecompose(ham)
    recon = sd.eigenvectors @ np.diag(sd.eigenvalues) @ sd.eigenvectors.T
    np.testing.assert_allclose(recon, ham.matrix, atol=1e-12)
    assert np.all(np.diff(sd.eigenvalues) >= 0)


def test_eigendecompose_rejects_asymmetric():
    with pytest.raises(ValueError):
        eigendecompose(np.array([[0.0, 1.0], [1.0 + 1e-13, 0.0]]))


def test_green_two_routes_agree():
    # LU solve against the eigen-expansion of the resolvent
    ham = _random_ham(1)
    z = 0.7 + 0.4j
    g_lu = green(ham, z).entries
    sd = eigendecompose(ham)
    g_eig = (sd.eigenvectors / (sd.eigenvalues - z)) @ sd.eigenvectors.T
    np.testing.assert_allclose(g_lu, g_eig, atol=1e-12)


def test_green_collision_raises():
    ham = assemble(make_box(1, (0,), (0,)), FullMask(), 1.0, 0.0, None)
    with pytest.raises(SpectralParameterOnSpectrum):
        green(ham, 3.0)  # H = (3), z exactly on the spectrum
    g = green(ham, 2.0).entries  # off spectrum, real z fine
    assert g[0, 0] == pytest.approx(1.0)


def test_schur_green_matches_direct():
    for seed in range(5):
        ham = _random_ham(seed)
        sites = ham.site_list()
        xs, comp = schur_green(ham, sites[:7], 0.3 + 0.5j)
        g = green(ham, 0.3 + 0.5j).entries
        idx = [ham.box.index(s) for s in xs]
        np.testing.assert_allclose(comp, g[np.ix_(idx, idx)], atol=1e-10)


def test_schur_green_2x2_oracle():
    # H = [[0, -1], [-1, 0]], z = -2: Schur complement 2 - 1/2 inverts to 2/3
    ham = assemble(make_box(1, (0,), (1,)), FullMask(), -2.0, 0.0, None)
    xs, comp = schur_green(ham, [(0,)], -2.0)
    assert comp[0, 0] == pytest.approx(2.0 / 3.0, abs=1e-14)


@pytest.mark.parametrize("case", ["in-out", "out-in", "out-out"])
def test_resolvent_identity_cases(case):
    for seed in range(3):
        ham = _random_ham(seed)
        sites = ham.site_list()
        x_sites = [s for s in sites if s[0] <= 2]
        res = resolvent_identity_residual(ham, x_sites, 0.5 + 0.2j, case)
        assert res <= 1e-10


def test_resolvent_identity_unknown_case():
    ham = _random_ham(0)
    with pytest.raises(ValueError):
        resolvent_identity_residual(ham, [(1, 1)], 1j, "diagonal")


def test_spectral_projection_idempotent():
    ham = _random_ham(2)
    sd = eigendecompose(ham)
    mid = float(np.median(sd.eigenvalues))
    pp = spectral_projection(sd, sd.eigenvalues[0], mid)
    np.testing.assert_allclose(pp.p @ pp.p, pp.p, atol=1e-12)
    np.testing.assert_allclose(pp.p + pp.q, np.eye(sd.n), atol=1e-12)
    assert pp.rank == int(round(np.trace(pp.p)))


def test_point_projection_and_gap():
    box = make_box(2, (1, 1), (3, 3))
    ham = assemble(box, Gamma1Mask(2, 2), None, 0.0, None)
    sd = eigendecompose(ham)
    pp = point_projection(sd, 4.0)
    assert pp.rank == 3  # tensor degeneracy of the 3x3 grid at the middle
    gm = gap_and_mult(sd, 4.0)
    assert gm["mult"] == 3
    assert gm["gap"] == pytest.approx(math.sqrt(2.0), abs=1e-9)
    with pytest.raises(ValueError):
        gap_and_mult(sd, 4.0, cluster_tol=100.0)


def test_combes_thomas_free_chain():
    # free chain at z = -1: rate ln((3+sqrt 5)/2) from the transfer matrix
    box = make_box(1, (0,), (200,))
    ham = assemble(box, FullMask(), None, 0.0, None)
    out = combes_thomas_rate(ham, -1.0, (100,))
    oracle = math.log((3.0 + math.sqrt(5.0)) / 2.0)
    assert out["rate"] == pytest.approx(oracle, rel=0.02)
    assert out["rms_residual"] < 0.1


def test_combes_thomas_insufficient_range():
    ham = assemble(make_box(1, (0,), (4,)), FullMask(), None, 0.0, None)
    with pytest.raises(ValueError, match="insufficient range"):
        combes_thomas_rate(ham, -1.0, (2,))
