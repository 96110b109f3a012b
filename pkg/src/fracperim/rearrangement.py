"""Symmetric decreasing rearrangement on grids and related ball/annulus helpers."""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, DomainMismatchError, ParameterError
from .geometry import DensityGrid, IndicatorGrid
from .kernels import unit_ball_volume


@dataclass(frozen=True, eq=False)
class RearrangementPlan:
    """Cells ordered by distance to ``center`` (ties broken lexicographically)."""
    domain: object
    center: tuple
    cell_order: np.ndarray = field(repr=False)
    dist2: np.ndarray = field(repr=False)  # squared index distance, along cell_order


def build_plan(domain, center=None):
    center = tuple(domain.center_index if center is None else center)
    idx = np.indices(domain.extents).reshape(domain.dim, -1).T
    d2 = np.sum((idx - np.array(center)) ** 2, axis=1)
    flat = np.arange(len(d2))
    order = np.lexsort((flat, d2))
    order.setflags(write=False)
    d2 = d2[order]
    d2.setflags(write=False)
    return RearrangementPlan(domain, center, order, d2)


def _check_plan(grid, plan):
    if grid.domain != plan.domain:
        raise DomainMismatchError("grid and rearrangement plan live on different domains")


def rearrange(eta, plan=None):
    """Values of ``eta`` sorted in decreasing order and laid out along the plan."""
    plan = build_plan(eta.domain) if plan is None else plan
    _check_plan(eta, plan)
    vals = np.sort(eta.cells.ravel())[::-1]
    out = np.empty(vals.shape, dtype=vals.dtype)
    out[plan.cell_order] = vals
    out = out.reshape(eta.domain.extents)
    if isinstance(eta, IndicatorGrid):
        return IndicatorGrid(eta.domain, out)
    return DensityGrid(eta.domain, out)


def first_cells(k, domain, plan=None):
    """Indicator of the first ``k`` cells of the plan."""
    plan = build_plan(domain) if plan is None else plan
    n = int(np.prod(domain.extents))
    if k > n:
        raise DomainError(f"{k} cells requested but the domain only has {n}")
    flat = np.zeros(n, dtype=bool)
    flat[plan.cell_order[:k]] = True
    return IndicatorGrid(domain, flat.reshape(domain.extents))


def ball_of_mass(m, domain, plan=None):
    """The ceil(m / h^d) cells nearest the domain center."""
    if not m > 0:
        raise ParameterError(f"mass must be positive, got {m}")
    k = math.ceil(m / domain.cell_volume - 1e-9)
    return first_cells(k, domain, plan)


def annulus_outer_radius(m, s, dim):
    """Outer radius R with |B_R minus B_s| = m."""
    if not (m > 0 and s > 0):
        raise ParameterError("annulus_outer_radius needs m > 0 and s > 0")
    return (m / unit_ball_volume(dim) + s ** dim) ** (1.0 / dim)


def radial_kernel_values(table, cap_radius=None):
    """Per-offset kernel k(o) = w(o)/h^d, optionally capped at the radius ``cap_radius``.

    Returns ``(offsets, values, self_value)``; ``self_value`` is None when the
    kernel has no finite value at the zero offset.
    """
    h, d, s = table.cell_size, table.dim, table.sigma
    k = table.weights / table.cell_volume
    self_value = None
    if cap_radius is not None:
        cap = h ** d * cap_radius ** (-(d + s))
        k = np.minimum(k, cap)
        self_value = cap
    if table.has_self_weight:
        self_value = k[0]
    return table.offsets, k, self_value


def annulus_bound_check(F, table, R, cap_radius=None, plan=None):
    """Kernel mass of B_R minus F versus B_R minus the ball of F's mass.

    Both sums run over cells relative to the plan's center cell and use the
    table kernel (capped when ``cap_radius`` is given, required for sigma >= 0).
    Returns (lhs, rhs); rearrangement predicts lhs >= rhs.
    """
    if table.sigma >= 0 and cap_radius is None:
        raise ParameterError("sigma >= 0 needs a cap radius for the self cell")
    dom = F.domain
    plan = build_plan(dom) if plan is None else plan
    _check_plan(F, plan)
    h = dom.cell_size
    table.check_reach(R, "ball radius R")
    ball = (plan.dist2 * h * h) < R * R
    flat = F.cells.ravel()[plan.cell_order]
    if np.any(flat & ~ball):
        raise DomainError("F is not contained in the rasterized ball B_R")
    ball_cells = int(np.count_nonzero(ball))
    if np.any(~ball[:ball_cells]):
        raise DomainError("B_R is cut by the domain boundary")
    offs, k, self_value = radial_kernel_values(table, cap_radius)
    lookup = {tuple(o): v for o, v in zip(offs.tolist(), k.tolist())}
    if self_value is not None:
        lookup[(0,) * dom.dim] = self_value
    idx = np.array(np.unravel_index(plan.cell_order[:ball_cells], dom.extents)).T
    rel = idx - np.array(plan.center)
    kvals = np.array([lookup[tuple(o)] for o in rel.tolist()])
    inF = flat[:ball_cells]
    m = int(np.count_nonzero(inF))
    lhs = math.fsum(kvals[~inF])
    rhs = math.fsum(kvals[m:])
    return lhs, rhs
