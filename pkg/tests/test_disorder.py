from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimlab.disorder import (
    BernoulliMixture,
    SampleStream,
    TruncatedCauchy,
    Uniform,
    decoupling_pair_ratio,
    decoupling_ratio,
    estimate_decoupling_constants,
    regularity_check,
    sample_potential,
    spec_from_descriptor,
    window_mass,
)
from trimlab.lattice import Gamma1Mask, make_box


def test_uniform_normalization_and_moment():
    u = Uniform()
    assert u.expect(lambda v: 1.0) == pytest.approx(1.0, abs=1e-9)
    # E V^2 = 1/3 for Uniform(0,1)
    assert u.moment_Mq == pytest.approx(1.0 / 3.0, abs=1e-9)
    assert u.regularity_C == pytest.approx(2.0)


def test_bmix_normalization_and_support():
    m = BernoulliMixture(0.3, 0.2)
    assert m.expect(lambda v: 1.0) == pytest.approx(1.0, abs=1e-9)
    assert len(m.support) == 2
    # mean = p
    assert m.expect(lambda v: v) == pytest.approx(0.3, abs=1e-9)


def test_tcauchy_normalization():
    t = TruncatedCauchy(1.0, 50.0)
    assert t.expect(lambda v: 1.0) == pytest.approx(1.0, abs=1e-8)
    with pytest.raises(ValueError):
        TruncatedCauchy(1.0, 50.0, declared_q=1.5)


def test_descriptor_roundtrip():
    for text in ("uniform:0.0,1.0", "bmix:0.5,0.1", "tcauchy:1.0,50.0"):
        spec = spec_from_descriptor(text)
        assert spec.descriptor() == text
    with pytest.raises(ValueError):
        spec_from_descriptor("gauss:0,1")


def test_stream_is_pure_and_prefix_consistent():
    stream = SampleStream(Uniform(), 123)
    a = stream.draw_vector(10, 4)
    b = stream.draw_vector(10, 4)
    np.testing.assert_array_equal(a, b)
    # single-site draws are prefix slices of the vector draw
    for i in range(10):
        assert stream.draw(i, 4) == a[i]
    # different samples decorrelate
    c = stream.draw_vector(10, 5)
    assert not np.array_equal(a, c)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32), st.integers(0, 1000))
def test_stream_values_in_support(seed, sample):
    v = SampleStream(Uniform(), seed).draw_vector(5, sample)
    assert np.all((v >= 0.0) & (v <= 1.0))


def test_sample_potential_vanishes_off_gamma():
    box = make_box(2, (1, 1), (5, 5))
    mask = Gamma1Mask(2, 2)
    v = sample_potential(SampleStream(Uniform(), 7), mask, box, 0)
    for i, s in enumerate(box.sites()):
        if s in mask:
            assert v[i] > 0.0
        else:
            assert v[i] == 0.0


def test_window_mass_uniform_oracle():
    u = Uniform()
    assert window_mass(u, 0.5, 0.1) == pytest.approx(0.2, abs=1e-8)
    assert window_mass(u, 0.0, 0.1) == pytest.approx(0.1, abs=1e-8)
    assert window_mass(u, 2.0, 0.1) == pytest.approx(0.0, abs=1e-8)


def test_regularity_check_uniform():
    rep = regularity_check(Uniform(), 20000, 3)
    # empirical window masses stay near the exact density 1 per unit eps;
    # interior windows give C ~ 2 eps / eps = 2 at worst near full windows
    assert rep["empirical_C"] <= 2.0 + 5 * rep["empirical_C_stderr"]
    assert rep["empirical_Mq"] == pytest.approx(1.0 / 3.0, abs=0.02)
    with pytest.raises(ValueError):
        regularity_check(Uniform(), 100, 0)


def test_fractional_inverse_moment_oracle():
    # E|V - i|^{-1/2} for Uniform(0,1): quadrature against a known value
    u = Uniform()
    val = u.expect(lambda v: abs(v - 1j) ** -0.5, points=[0.0, 1.0])
    assert val == pytest.approx(0.93749, abs=5e-4)


def test_decoupling_ratio_constraints():
    u = Uniform()
    out = decoupling_ratio(u, [], [1j], 0.5, 0.5)
    assert out["lhs"] == pytest.approx(0.9375, abs=1e-3)
    assert out["rhs"] == pytest.approx(2.0**-0.5, abs=1e-9)
    with pytest.raises(ValueError):
        decoupling_ratio(u, [], [1j, 2j], 0.5, 0.6)  # rm >= alpha
    with pytest.raises(ValueError):
        decoupling_ratio(u, [], [0.5], 0.5, 0.5)  # pole on the support


def test_decoupling_pair_ratio_basic():
    u = Uniform()
    # coincident a = b.real with b just off the axis: the quotient is
    # E|V-b|^-s / E|V-a|^s|V-b|^-s >= 1 since |v-a| <= max(a, 1-a) <= 1
    r = decoupling_pair_ratio(u, 0.5, 0.5 + 0.05j, 0.5)
    assert r > 1.0


def test_estimate_decoupling_constants_pinned():
    out = estimate_decoupling_constants(Uniform(), 0.5, 200, 0)
    # frozen value for the seeded estimator; the analytic supremum over
    # coincident pairs approaching the axis is 2 sqrt(2) ~ 2.8284
    assert out["C_s"] == pytest.approx(2.4763965796353435, rel=1e-12)
    assert out["C_s"] < 2.0 * np.sqrt(2.0)
    with pytest.raises(ValueError):
        estimate_decoupling_constants(Uniform(), 1.5, 10, 0)
