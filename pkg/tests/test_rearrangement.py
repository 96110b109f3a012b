import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracperim.energies import Capped, riesz_interaction, table_for
from fracperim.errors import DomainError, DomainMismatchError, ParameterError
from fracperim.geometry import (Annulus, Ball, DensityGrid, GridDomain, IndicatorGrid,
                                random_density, rasterize)
from fracperim.kernels import KernelParams, build_kernel_table
from fracperim.rearrangement import (annulus_bound_check, annulus_outer_radius, ball_of_mass,
                                     build_plan, first_cells, rearrange)


def square(n, h=0.125, dim=2):
    return GridDomain(dim, (n,) * dim, h, (-(n // 2) * h,) * dim)


def test_plan_is_sorted_bijection():
    dom = square(9)
    plan = build_plan(dom)
    assert sorted(plan.cell_order.tolist()) == list(range(81))
    assert np.all(np.diff(plan.dist2) >= 0)
    assert plan.cell_order[0] == np.ravel_multi_index(dom.center_index, dom.extents)


def test_even_extent_center_convention():
    dom = GridDomain(2, (8, 6), 0.5, (0, 0))
    assert dom.center_index == (4, 3)
    assert build_plan(dom).center == (4, 3)


@settings(max_examples=30)
@given(st.integers(0, 10 ** 6), st.sampled_from([1, 2, 3]), st.integers(2, 6))
def test_rearrangement_invariants(seed, dim, levels):
    n = {1: 40, 2: 12, 3: 6}[dim]
    dom = GridDomain(dim, (n,) * dim, 0.25, (0.0,) * dim)
    plan = build_plan(dom)
    eta = random_density(dom, np.random.default_rng(seed), 1.5, levels=levels)
    star = rearrange(eta, plan)
    assert np.array_equal(np.sort(eta.cells.ravel()), np.sort(star.cells.ravel()))
    assert rearrange(star, plan) == star
    for t in np.unique(eta.cells):
        assert np.count_nonzero(eta.cells > t) == np.count_nonzero(star.cells > t)
    along = star.cells.ravel()[plan.cell_order]
    assert np.all(np.diff(along) <= 0)


@pytest.mark.parametrize("k", [0, 1, 5, 37])
def test_indicator_rearranges_to_nearest_cells(k):
    dom = square(11)
    rng = np.random.default_rng(k)
    flat = np.zeros(121, bool)
    flat[rng.choice(121, size=k, replace=False)] = True
    E = IndicatorGrid(dom, flat.reshape(11, 11))
    star = rearrange(E)
    assert isinstance(star, IndicatorGrid)
    assert star == first_cells(k, dom)


def test_domain_mismatch():
    eta = IndicatorGrid(square(5), np.ones((5, 5), bool))
    with pytest.raises(DomainMismatchError):
        rearrange(eta, build_plan(square(7)))


def test_ball_of_mass():
    dom = square(9)
    one = ball_of_mass(dom.cell_volume, dom)
    assert one.count == 1 and one.cells[dom.center_index]
    small, big = ball_of_mass(0.3, dom), ball_of_mass(0.9, dom)
    assert np.all(big.cells[small.cells])
    assert abs(big.count * dom.cell_volume - 0.9) < dom.cell_volume
    with pytest.raises(DomainError):
        ball_of_mass(100.0, dom)
    with pytest.raises(ParameterError):
        ball_of_mass(0.0, dom)


def test_ball_of_mass_matches_disc():
    h = 0.05
    dom = GridDomain(2, (50, 50), h, (-1.25, -1.25))
    B = ball_of_mass(math.pi, dom)
    disc = rasterize(Ball((0, 0), 1.0), dom)
    assert np.count_nonzero(B.cells ^ disc.cells) <= 0.05 * disc.count


@pytest.mark.parametrize("m,s,dim,expected", [(2.0, 1.0, 1, 2.0), (3 * math.pi, 1.0, 2, 2.0)])
def test_annulus_outer_radius(m, s, dim, expected):
    assert annulus_outer_radius(m, s, dim) == pytest.approx(expected, rel=1e-15)


def test_annulus_outer_radius_small_core():
    assert annulus_outer_radius(math.pi, 1e-9, 2) == pytest.approx(1.0, rel=1e-12)


@pytest.fixture(scope="module")
def grid64():
    dom = square(64, h=1 / 16)
    return dom, build_plan(dom)


@pytest.mark.parametrize("sigma,cap", [(-0.5, None), (0.0, 0.5), (0.5, 0.5)])
def test_annulus_bound_ball_is_equality(grid64, sigma, cap):
    dom, plan = grid64
    table = build_kernel_table(KernelParams(2, sigma, dom.cell_size), 1.5)
    F = first_cells(200, dom, plan)
    lhs, rhs = annulus_bound_check(F, table, 1.5, cap, plan)
    assert lhs == rhs


@pytest.mark.parametrize("sigma,cap", [(-0.5, None), (0.0, 0.5), (0.5, 0.25)])
def test_annulus_bound_strict_for_annulus(grid64, sigma, cap):
    dom, plan = grid64
    table = build_kernel_table(KernelParams(2, sigma, dom.cell_size), 1.5)
    F = rasterize(Annulus((0.03125, 0.03125), 0.5, 1.0), dom)
    lhs, rhs = annulus_bound_check(F, table, 1.5, cap, plan)
    assert lhs > rhs


@settings(max_examples=25)
@given(st.integers(0, 10 ** 6), st.sampled_from([(-0.5, None), (0.0, 0.5), (0.5, 0.5)]))
def test_annulus_bound_random_subsets(seed, case):
    sigma, cap = case
    dom = square(24, h=1 / 8)
    plan = build_plan(dom)
    table = build_kernel_table(KernelParams(2, sigma, dom.cell_size), 1.0)
    ball = plan.dist2 * dom.cell_size ** 2 < 1.0
    k = int(np.count_nonzero(ball))
    rng = np.random.default_rng(seed)
    flat = np.zeros(ball.size, bool)
    flat[plan.cell_order[rng.choice(k, size=int(rng.integers(1, k)), replace=False)]] = True
    lhs, rhs = annulus_bound_check(IndicatorGrid(dom, flat.reshape(dom.extents)), table, 1.0,
                                   cap, plan)
    assert lhs >= rhs - 1e-9 * max(1.0, abs(rhs))


def test_annulus_bound_errors(grid64):
    dom, plan = grid64
    table = build_kernel_table(KernelParams(2, 0.5, dom.cell_size), 1.5)
    F = first_cells(10, dom, plan)
    with pytest.raises(ParameterError):
        annulus_bound_check(F, table, 1.5, None, plan)
    far = np.zeros(dom.extents, bool)
    far[0, 0] = True
    with pytest.raises(DomainError):
        annulus_bound_check(IndicatorGrid(dom, far), table, 1.5, 0.5, plan)


@pytest.mark.parametrize("seed", range(5))
def test_riesz_inequality_random_densities(seed):
    dom = GridDomain(2, (32, 32), 1 / 8, (0, 0))
    plan = build_plan(dom)
    eta = random_density(dom, np.random.default_rng(seed), 2.0, levels=4)
    t = table_for(eta, 0.0, min_reach=1.0)
    star = rearrange(eta, plan)
    a = riesz_interaction(eta, eta, t, Capped(1.0))
    b = riesz_interaction(star, star, t, Capped(1.0))
    assert b >= a - 1e-9 * abs(a)
