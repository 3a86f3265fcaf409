from __future__ import annotations

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trimlab.lattice import (
    BernoulliMask,
    FullMask,
    Gamma1Mask,
    Gamma2Mask,
    LatticeBox,
    PeriodicCellMask,
    ball,
    boundary,
    components_of_complement,
    graph_distance,
    is_doubly_insulated,
    make_box,
    mask_from_descriptor,
    neighbors,
    relative_density,
)

sites_2d = st.tuples(st.integers(-50, 50), st.integers(-50, 50))


def test_graph_distance_basic():
    assert graph_distance((0, 0), (3, -4)) == 7
    assert graph_distance((5,), (5,)) == 0
    with pytest.raises(ValueError):
        graph_distance((0, 0), (0,))


@given(sites_2d, sites_2d, sites_2d)
def test_graph_distance_triangle(x, y, z):
    assert graph_distance(x, z) <= graph_distance(x, y) + graph_distance(y, z)


def test_neighbors_and_ball():
    assert len(neighbors((0, 0))) == 4
    assert len(neighbors((1, 2, 3))) == 6
    # |B(x, r)| in d=2 is 2r^2 + 2r + 1
    for r in range(4):
        assert len(ball((7, -2), r)) == 2 * r * r + 2 * r + 1
    assert all(graph_distance((0, 0), y) <= 2 for y in ball((0, 0), 2))


def test_box_basics():
    box = make_box(2, (1, 1), (3, 4))
    assert box.shape == (3, 4)
    assert box.size == 12
    assert (2, 4) in box
    assert (0, 1) not in box
    assert box.is_boundary_site((1, 2))
    assert not box.is_boundary_site((2, 2))
    with pytest.raises(ValueError):
        make_box(2, (3, 3), (1, 1))


@given(st.integers(0, 11))
def test_box_index_roundtrip(idx):
    box = make_box(2, (1, 1), (3, 4))
    assert box.index(box.site(idx)) == idx


def test_box_index_order_is_lexicographic():
    box = make_box(2, (0, 0), (2, 2))
    sites = list(box.sites())
    assert sites == sorted(sites)
    assert [box.index(s) for s in sites] == list(range(9))


def test_gamma1_membership():
    mask = Gamma1Mask(2, 2)
    assert (0, 5) in mask
    assert (5, 0) in mask
    assert (1, 1) not in mask
    assert (3, 7) not in mask
    with pytest.raises(ValueError):
        Gamma1Mask(1, 2)


def test_gamma2_complement_sites_are_isolated():
    # the complement of the skew mask has no nearest-neighbor pairs
    for k in (2, 3, 4, 5):
        mask = Gamma2Mask(k)
        window = make_box(2, (0, 0), (4 * k, 4 * k))
        comps = components_of_complement(mask, window)
        assert comps, f"complement empty for k={k}"
        assert all(len(c) == 1 for c in comps)


def test_gamma2_period_invariance():
    mask = Gamma2Mask(3)
    p = mask.period
    for site in [(1, 0), (2, 1), (4, 5), (0, 0), (7, 2)]:
        shifted = (site[0] + p[0], site[1] + p[1])
        assert (site in mask) == (shifted in mask)


def test_periodic_cell_mask():
    # 2x2 cell keeping only residue (0, 0)
    mask = PeriodicCellMask((2, 2), (True, False, False, False))
    assert (0, 0) in mask
    assert (2, 4) in mask
    assert (1, 0) not in mask
    with pytest.raises(ValueError):
        PeriodicCellMask((2, 2), (True,))


def test_bernoulli_mask_deterministic():
    a = BernoulliMask(0.5, 42)
    b = BernoulliMask(0.5, 42)
    window = make_box(2, (0, 0), (9, 9))
    picks_a = [s for s in window.sites() if s in a]
    picks_b = [s for s in window.sites() if s in b]
    assert picks_a == picks_b
    assert 10 < len(picks_a) < 90  # not degenerate at p = 1/2


def test_mask_descriptor_roundtrip():
    for text in ("full", "gamma1:2,3", "gamma2:4", "bernoulli:0.3:7"):
        mask = mask_from_descriptor(text)
        assert mask_from_descriptor(mask.descriptor()).descriptor() == text
    with pytest.raises(ValueError):
        mask_from_descriptor("gamma1:xx")
    with pytest.raises(ValueError):
        mask_from_descriptor("nope")


def test_boundary_of_box():
    box = make_box(2, (0, 0), (2, 2))
    bd = boundary(list(box.sites()))
    assert len(bd.edges) == 12  # 4 edges per side of the 3x3 square
    assert (0, 0) in bd.inner
    assert (-1, 0) in bd.outer
    assert (1, 1) not in bd.inner


def test_components_sorted_and_disjoint():
    mask = Gamma1Mask(2, 2)
    window = make_box(2, (1, 1), (7, 7))
    comps = components_of_complement(mask, window)
    # odd-odd singletons: 4 x 4 of them
    assert len(comps) == 16
    flat = [s for c in comps for s in c]
    assert len(flat) == len(set(flat))
    assert comps == sorted(comps)


def test_insulation_gamma1_22_false():
    rep = is_doubly_insulated(Gamma1Mask(2, 2), make_box(2, (1, 1), (7, 7)))
    assert not rep.insulated
    assert rep.witness_distance == 2


def test_insulation_sparse_true():
    # keep one site out of a 4x4 cell; complement singletons sit at
    # distance >= ... the kept-out sites are 4 apart
    cell = [False] * 16
    cell[0] = True
    mask = PeriodicCellMask((4, 4), tuple(not b for b in cell))
    rep = is_doubly_insulated(mask, make_box(2, (0, 0), (11, 11)))
    assert rep.insulated
    assert rep.n_components == 9


def test_relative_density_gamma1():
    frac = relative_density(Gamma1Mask(2, 2), 20, (0, 0))
    # density of the grid mask tends to 3/4
    assert abs(float(frac) - 0.75) < 0.02
    assert isinstance(frac, Fraction)


@settings(max_examples=25)
@given(sites_2d)
def test_full_mask_contains_everything(site):
    assert site in FullMask()
