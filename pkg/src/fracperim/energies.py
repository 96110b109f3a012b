"""Truncated and renormalized nonlocal energies of grid sets and densities.

Two engines share one set of semantics.

``direct``
    Builds the pair-count function C(o) = sum_x E(x) E(x+o) exactly (integer
    arithmetic for indicators), then contracts it against the table weights
    with correctly rounded sums. Energies are therefore independent of term
    order, and the discrete identities hold to the last bit.
``conv``
    Correlates the membership array with a dense windowed weight array by
    FFT and contracts the resulting potential against the membership or
    complement mask. Agrees with ``direct`` to rounding.
"""

import math
import warnings
from collections import OrderedDict
from dataclasses import dataclass, field
import hashlib

import numpy as np
from scipy.signal import fftconvolve

from . import formats, parallel
from ._exact import product_terms
from .errors import (CoverageError, CoverageWarning, DivergenceError,
                     DomainMismatchError, ParameterError)
from .geometry import DensityGrid, IndicatorGrid, bounding_slices, diameter
from .kernels import (KernelParams, RenormMode, discrete_gamma_weights, gamma,
                      gamma_limit, load_or_build_table)

ENGINES = ("direct", "conv")


# -- parameters and reports ---------------------------------------------------

@dataclass(frozen=True)
class Inner:
    """Window |o h| < R used by H-type energies (R may be inf)."""
    R: float

    def __post_init__(self):
        if not self.R > 0:
            raise ParameterError(f"Inner window needs R > 0, got {self.R}")


@dataclass(frozen=True)
class Outer:
    """Window |o h| >= r used by J-type energies."""
    r: float

    def __post_init__(self):
        if not (self.r >= 0 and math.isfinite(self.r)):
            raise ParameterError(f"Outer window needs finite r >= 0, got {self.r}")


@dataclass(frozen=True)
class Capped:
    """Full kernel with weights clipped at the midpoint value of radius r."""
    r: float

    def __post_init__(self):
        if not (self.r > 0 and math.isfinite(self.r)):
            raise ParameterError(f"Capped window needs finite r > 0, got {self.r}")


@dataclass(frozen=True)
class EnergyParams:
    sigma: float
    window: object
    renorm: RenormMode = None


def _num(x):
    return "inf" if isinstance(x, float) and math.isinf(x) else x


@dataclass(frozen=True)
class EnergyReport:
    value: float
    raw_energy: float
    renorm_term: float
    params: EnergyParams
    window_effective: float
    engine: str
    table_fingerprint: str
    grid_fingerprint: str

    def to_dict(self):
        w = self.params.window
        kind, radius = ("R", w.R) if isinstance(w, Inner) else ("r", w.r)
        return {
            "value": self.value,
            "raw_energy": self.raw_energy,
            "renorm_term": self.renorm_term,
            "sigma": self.params.sigma,
            "window_kind": kind,
            "window": _num(float(radius)),
            "window_effective": _num(float(self.window_effective)),
            "renorm_mode": self.params.renorm.value if self.params.renorm else "none",
            "engine": self.engine,
            "table_fingerprint": self.table_fingerprint,
            "grid_fingerprint": self.grid_fingerprint,
        }


# -- pair counts ------------------------------------------------------------------

def _diag_index(n):
    j, k = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    return (k - j + n - 1).ravel()


def _cross2(a, b, idx):
    m = a.T @ b
    return np.bincount(idx, weights=m.ravel(), minlength=2 * a.shape[1] - 1)


def cross_counts(A, B, threads=None):
    """K[o + n - 1] = sum_x A[x] B[x + o] for every offset with |o_i| < n_i.

    Exact for 0/1 inputs (returned as int64); float inputs give float sums.
    """
    A = np.asarray(A)
    B = np.asarray(B)
    if A.shape != B.shape:
        raise ParameterError("cross_counts needs equal shapes")
    exact = A.dtype == bool and B.dtype == bool
    a = A.astype(np.int64 if exact and A.ndim == 1 else np.float64)
    b = B.astype(a.dtype)
    if a.ndim == 1:
        out = np.correlate(b, a, mode="full")
        return out.astype(np.int64) if exact else out
    n0 = a.shape[0]
    idx = _diag_index(a.shape[-1])

    def row(o0):
        lo_a, lo_b = max(0, -o0), max(0, o0)
        k = n0 - abs(o0)
        sa, sb = a[lo_a:lo_a + k], b[lo_b:lo_b + k]
        if a.ndim == 2:
            return _cross2(sa, sb, idx)
        return sum(cross_counts(sa[i], sb[i], threads=1) for i in range(k))

    rows = parallel.ordered_map(row, range(-n0 + 1, n0), threads)
    out = np.stack(rows)
    return np.rint(out).astype(np.int64) if exact else out


@dataclass
class PairCounts:
    """Pair counts of one set aligned with the offsets of one table."""
    counts: np.ndarray       # per table offset, float64 holding exact integers for indicators
    total: float             # N = sum_x E(x)
    dropped: float           # pairs at nonzero offsets beyond the table


_COUNT_CACHE = OrderedDict()
_COUNT_CACHE_SIZE = 32


def _cells_of(E):
    if isinstance(E, IndicatorGrid):
        return E.cells
    if isinstance(E, DensityGrid):
        return E.cells
    raise ParameterError(f"expected IndicatorGrid or DensityGrid, got {type(E).__name__}")


def _align(K, shape, table):
    n = np.array(shape)
    o = table.offsets
    ok = np.all(np.abs(o) <= n - 1, axis=1) if len(o) else np.zeros(0, bool)
    out = np.zeros(len(o))
    idx = tuple((o[ok] + n - 1).T)
    out[ok] = K[idx]
    return out


def _dense_counts(cells, threads):
    key = (cells.dtype.str, cells.shape,
           hashlib.blake2b(np.ascontiguousarray(cells).tobytes(), digest_size=16).digest())
    hit = _COUNT_CACHE.get(key)
    if hit is not None:
        _COUNT_CACHE.move_to_end(key)
        return hit
    sl = bounding_slices(cells)
    if sl is None:
        hit = (None, None, 0.0)
    else:
        crop = cells[sl]
        total = float(np.count_nonzero(crop)) if crop.dtype == bool else math.fsum(crop.ravel())
        hit = (crop.shape, cross_counts(crop, crop, threads), total)
    _COUNT_CACHE[key] = hit
    if len(_COUNT_CACHE) > _COUNT_CACHE_SIZE:
        _COUNT_CACHE.popitem(last=False)
    return hit


def pair_counts(E, table, threads=None):
    """Pair counts of E at every table offset (exact integers for indicator grids)."""
    cells = _cells_of(E)
    if E.domain.dim != table.dim:
        raise DomainMismatchError("grid and table dimensions differ")
    if not math.isclose(E.domain.cell_size, table.cell_size, rel_tol=1e-12):
        raise DomainMismatchError(
            f"grid cell size {E.domain.cell_size} != table cell size {table.cell_size}")
    shape, K, total = _dense_counts(cells, threads)
    if K is None:
        return PairCounts(np.zeros(len(table.weights)), 0.0, 0.0)
    c = _align(K, shape, table)
    dropped = math.fsum(K.ravel()) - math.fsum(c)
    if not table.has_self_weight:
        dropped -= float(K[tuple(np.array(shape) - 1)])
    return PairCounts(c, total, dropped)


# -- engines ------------------------------------------------------------------------

def _inner_mask(table, R):
    return table.shell(0.0, R)


def _outer_mask(table, r):
    return table.shell(r, math.inf)


def _direct_H_terms(pc, table, R):
    m = _inner_mask(table, R)
    return product_terms(table.weights[m], pc.total - pc.counts[m])


def _direct_J_terms(pc, table, r):
    m = _outer_mask(table, r)
    return -product_terms(table.weights[m], pc.counts[m])


def _window_kernel(table, mask, shape):
    """Dense weights restricted to ``mask`` and cropped to offsets reachable inside ``shape``."""
    n = np.array(shape)
    reach = np.all(np.abs(table.offsets) <= n - 1, axis=1)
    sel = mask & reach
    if not np.any(sel):
        return None, 0
    m = np.max(np.abs(table.offsets[sel]), axis=0)
    W = np.zeros(tuple(2 * m + 1))
    W[tuple((table.offsets[sel] + m).T)] = table.weights[sel]
    return W, m


def _conv_J(cells, table, r):
    sl = bounding_slices(cells)
    if sl is None:
        return 0.0
    crop = cells[sl].astype(np.float64)
    W, _ = _window_kernel(table, _outer_mask(table, r), crop.shape)
    if W is None:
        return 0.0
    phi = _conv_same(crop, W)
    return -float(np.sum(crop * phi))


def _conv_same(f, W):
    # potential phi(x) = sum_o W[o] f(x + o) on the support of f (W is symmetric)
    full = fftconvolve(f, W, mode="full")
    m = [(s - 1) // 2 for s in W.shape]
    return full[tuple(slice(mi, mi + n) for mi, n in zip(m, f.shape))]


def _conv_H(cells, table, R):
    sl = bounding_slices(cells)
    if sl is None:
        return 0.0
    crop = cells[sl].astype(np.float64)
    mask = _inner_mask(table, R)
    # complement cells can sit up to the window reach away from the support
    m_all = np.max(np.abs(table.offsets[mask]), axis=0) if np.any(mask) else np.zeros(table.dim, int)
    padded = np.pad(crop, [(int(p), int(p)) for p in m_all])
    W, _ = _window_kernel(table, mask, padded.shape)
    if W is None:
        return 0.0
    phi = _conv_same(1.0 - padded, W)
    return float(np.sum(padded * phi))


# -- helpers ----------------------------------------------------------------------------

def _check_engine(engine):
    if engine not in ENGINES:
        raise ParameterError(f"unknown engine {engine!r}; choose one of {ENGINES}")


def _measure(E):
    cells = _cells_of(E)
    if cells.dtype == bool:
        return np.count_nonzero(cells) * E.domain.cell_volume
    return math.fsum(cells.ravel()) * E.domain.cell_volume


def grid_fingerprint(E):
    return formats.fingerprint(formats.grid_to_bytes(E))


def _finish(raw_terms, renorm_terms, params, window_eff, engine, table, E):
    raw = math.fsum(raw_terms)
    ren = math.fsum(renorm_terms)
    value = math.fsum(np.concatenate([np.ravel(raw_terms), -np.ravel(renorm_terms)]))
    return EnergyReport(value, raw, ren, params, window_eff, engine,
                        table.fingerprint, grid_fingerprint(E))


def _renorm_terms(table, mode, rho, E, total):
    """Pieces whose exact sum is gamma(rho)|E| (or its discrete counterpart)."""
    if mode is None:
        return np.zeros(0)
    if mode is RenormMode.DISCRETE:
        sw = discrete_gamma_weights(table, rho)
        return product_terms(sw, np.full(len(sw), total))
    if rho == 0:
        g = gamma_limit(table.sigma, table.dim)
    else:
        g = gamma(table.sigma, rho, table.dim)
    return np.array([g * _measure(E)])


def _empty_report(params, window_eff, engine, table, E):
    return EnergyReport(0.0, 0.0, 0.0, params, window_eff, engine,
                        table.fingerprint, grid_fingerprint(E))


def _warn_dropped(pc):
    if pc.dropped > 0:
        warnings.warn(
            f"{pc.dropped:.0f} pair interactions lie beyond the table max_offset and were "
            "dropped; rebuild the table with a larger max_offset", CoverageWarning, stacklevel=3)


# -- energies -----------------------------------------------------------------------------

def H_energy(E, table, R=math.inf, renorm=None, engine="direct", threads=None):
    """Interaction of E with its complement inside the window |x - y| < R."""
    _check_engine(engine)
    s = table.sigma
    params = EnergyParams(s, Inner(float(R)), renorm)
    infinite = math.isinf(R)
    if infinite and renorm is None and not 0 < s < 1:
        raise DivergenceError(
            f"H with R=inf diverges for sigma={s} without renormalization (needs 0 < sigma < 1)")
    if _measure(E) == 0:
        return _empty_report(params, R, engine, table, E)
    # beyond diam(E)+h the window only adds complement pairs, whose sum is
    # the kernel integral over an annulus times |E|
    R_eff, tail_to = R, None
    if infinite:
        R_eff = diameter(E) + table.cell_size
        table.check_reach(R_eff, "stabilized window diam(E)+h")
        tail_to = math.inf if renorm is None else None
    elif R > table.max_offset:
        stab = diameter(E) + table.cell_size
        if renorm is RenormMode.DISCRETE or R < stab:
            table.check_reach(R, "window R")
        table.check_reach(stab, "stabilized window diam(E)+h")
        R_eff, tail_to = stab, R
    pc = pair_counts(E, table, threads) if engine == "direct" else None
    if engine == "direct":
        raw = _direct_H_terms(pc, table, R_eff)
    else:
        raw = np.array([_conv_H(_cells_of(E), table, R_eff)])
    if tail_to is not None:
        upper = gamma_limit(s, table.dim) if math.isinf(tail_to) else gamma(s, tail_to, table.dim)
        tail = (upper - gamma(s, R_eff, table.dim)) * _measure(E)
        raw = np.concatenate([raw, [tail]])
    total = pc.total if pc is not None else _total(E)
    rho = R_eff if infinite else R
    return _finish(raw, _renorm_terms(table, renorm, rho, E, total), params,
                   R_eff, engine, table, E)


def _total(E):
    cells = _cells_of(E)
    return float(np.count_nonzero(cells)) if cells.dtype == bool else math.fsum(cells.ravel())


def _check_outer(table, r):
    s, h = table.sigma, table.cell_size
    if r == 0 and s >= 0:
        raise DivergenceError(f"J with r=0 diverges for sigma={s} >= 0")
    if s >= 0 and r < h:
        raise DivergenceError(
            f"core radius r={r} < cell size {h} would need the divergent self weight (sigma={s})")


def J_energy(E, table, r, renorm=None, engine="direct", threads=None):
    """Negative self-interaction of E over pairs with |x - y| >= r."""
    _check_engine(engine)
    _check_outer(table, r)
    params = EnergyParams(table.sigma, Outer(float(r)), renorm)
    if renorm is RenormMode.DISCRETE:
        table.check_reach(max(1.0, r), "core radius r")
    if _measure(E) == 0:
        return _empty_report(params, r, engine, table, E)
    pc = pair_counts(E, table, threads)
    _warn_dropped(pc)
    if engine == "direct":
        raw = _direct_J_terms(pc, table, r)
    else:
        raw = np.array([_conv_J(_cells_of(E), table, r)])
    return _finish(raw, _renorm_terms(table, renorm, r, E, pc.total), params,
                   r, engine, table, E)


def H0_perimeter(E, table, engine="direct", threads=None):
    """0-fractional perimeter as H_1 + J_1 (no renormalization needed)."""
    if table.sigma != 0:
        raise ParameterError(f"H0_perimeter needs a sigma=0 table, got sigma={table.sigma}")
    params = EnergyParams(0.0, Inner(math.inf), RenormMode.DISCRETE)
    if _measure(E) == 0:
        return _empty_report(params, math.inf, engine, table, E)
    diam = diameter(E)
    if diam > table.max_offset:
        raise CoverageError(
            f"set diameter {diam:.6g} exceeds table max_offset {table.max_offset:.6g}; "
            f"rebuild with max_offset >= {diam:.6g}")
    table.check_reach(1.0, "window R")
    if engine == "direct":
        pc = pair_counts(E, table, threads)
        raw = np.concatenate([_direct_H_terms(pc, table, 1.0), _direct_J_terms(pc, table, 1.0)])
    else:
        cells = _cells_of(E)
        raw = np.array([_conv_H(cells, table, 1.0), _conv_J(cells, table, 1.0)])
    return _finish(raw, np.zeros(0), params, 1.0, engine, table, E)


def fon_invariant(E, table, rho, threads=None):
    """H(rho) + J(rho) - discrete_gamma(rho)|E|, correctly rounded (independent of rho)."""
    pc = pair_counts(E, table, threads)
    table.check_reach(max(1.0, rho), "radius rho")
    terms = [_direct_H_terms(pc, table, rho), _direct_J_terms(pc, table, rho)]
    if rho != 1.0:
        sw = discrete_gamma_weights(table, rho)
        terms.append(-product_terms(sw, np.full(len(sw), pc.total)))
    return math.fsum(np.concatenate(terms))


# -- potentials ----------------------------------------------------------------------------

def _dense_full(table):
    cached = getattr(table, "_dense_cache", None)
    if cached is None:
        cached = table.dense()
        table._dense_cache = cached
    return cached


def _gamma_value(table, renorm, r):
    if renorm is None:
        return 0.0
    if renorm is RenormMode.DISCRETE:
        from .kernels import discrete_gamma
        return discrete_gamma(table, r)
    return gamma_limit(table.sigma, table.dim) if r == 0 else gamma(table.sigma, r, table.dim)


def pointwise_potential(x, target, table, r, renorm=RenormMode.DISCRETE):
    """j(x) = -(1/h^d) sum_{|o h| >= r} w(o) target(x + o) - gamma(r)."""
    _check_outer(table, r)
    cells = _cells_of(target).astype(np.float64)
    x = np.asarray(x, dtype=np.int64)
    W, m = _dense_full(table)
    sup = np.argwhere(cells != 0)
    g = _gamma_value(table, renorm, r)
    if len(sup) == 0:
        return -g
    o = sup - x
    n2 = np.sum(o * o, axis=1)
    h = table.cell_size
    keep = n2.astype(np.float64) * h * h >= r * r
    inside = np.all(np.abs(o) <= m, axis=1) & (n2 <= table.norm2.max())
    if np.any(keep & ~inside):
        warnings.warn("target cells beyond the table max_offset were ignored", CoverageWarning,
                      stacklevel=2)
    sel = keep & inside
    vals = W[tuple((o[sel] + m).T)] * cells[tuple(sup[sel].T)]
    return -math.fsum(vals) / table.cell_volume - g


def potential_field(target, table, r, renorm=RenormMode.DISCRETE):
    """j evaluated on every cell of the target's domain."""
    _check_outer(table, r)
    cells = _cells_of(target).astype(np.float64)
    W, _ = _window_kernel(table, _outer_mask(table, r), cells.shape)
    phi = np.zeros_like(cells) if W is None else _conv_same(cells, W)
    return -phi / table.cell_volume - _gamma_value(table, renorm, r)


# -- modified and interaction functionals --------------------------------------------------

def modified_kernel(table, r):
    """Capped-plus-ramp cell weights: w(o) outside r, h^2d (r^-(d+s) + r - |o h|) inside."""
    s, d, h = table.sigma, table.dim, table.cell_size
    dist = np.sqrt(table.dist2)
    inner = table.dist2 < r * r
    k = np.array(table.weights, dtype=np.float64)
    k[inner] = h ** (2 * d) * (r ** (-(d + s)) + r - dist[inner])
    return k


def modified_J(E, table, r, threads=None):
    """Self-interaction of E under the bounded modified kernel, negated."""
    if not r > 0:
        raise ParameterError(f"modified_J needs r > 0, got {r}")
    if not 0 <= table.sigma < 1:
        raise ParameterError(f"modified_J needs 0 <= sigma < 1, got {table.sigma}")
    table.check_reach(r, "core radius r")
    if _measure(E) == 0:
        return 0.0
    pc = pair_counts(E, table, threads)
    _warn_dropped(pc)
    k = modified_kernel(table, r)
    terms = -product_terms(k, pc.counts)
    if not table.has_self_weight:
        h, d, s = table.cell_size, table.dim, table.sigma
        self_w = h ** (2 * d) * (r ** (-(d + s)) + r)
        terms = np.concatenate([terms, -product_terms(np.array([self_w]), np.array([pc.total]))])
    return math.fsum(terms)


def interaction_weights(table, window):
    """Offset weights used by ``riesz_interaction`` for a given window."""
    s, d, h = table.sigma, table.dim, table.cell_size
    if window is None:
        if s >= 0:
            raise DivergenceError(
                f"the full interaction diverges for sigma={s} >= 0; pass Outer(r) or Capped(r)")
        return table.offsets, np.array(table.weights)
    if isinstance(window, Outer):
        _check_outer(table, window.r)
        m = _outer_mask(table, window.r)
        return table.offsets[m], table.weights[m]
    if isinstance(window, Capped):
        cap = h ** (2 * d) * window.r ** (-(d + s))
        w = np.minimum(table.weights, cap)
        offs = table.offsets
        if not table.has_self_weight:
            offs = np.vstack([np.zeros((1, d), np.int64), offs])
            w = np.concatenate([[cap], w])
        return offs, w
    raise ParameterError(f"unsupported interaction window {window!r}")


def riesz_interaction(eta1, eta2, table, window=None, threads=None):
    """sum_{x,o} eta1(x) eta2(x+o) k(o) over the window's weights."""
    if eta1.domain != eta2.domain:
        raise DomainMismatchError("riesz_interaction needs a shared domain")
    offs, w = interaction_weights(table, window)
    a = _cells_of(eta1).astype(np.float64)
    b = _cells_of(eta2).astype(np.float64)
    sl = bounding_slices((a != 0) | (b != 0))
    if sl is None:
        return 0.0
    a, b = a[sl], b[sl]
    K = cross_counts(a, b, threads)
    n = np.array(a.shape)
    ok = np.all(np.abs(offs) <= n - 1, axis=1)
    c = K[tuple((offs[ok] + n - 1).T)]
    return math.fsum(product_terms(w[ok], c))


# -- tables -----------------------------------------------------------------------------------

def table_for(E, sigma, min_reach=0.0, near_field_radius_cells=4, quadrature_tol=1e-10,
              use_cache=False, threads=None):
    """Kernel table covering every pair of E (max_offset = diam(E) + 2h)."""
    h = E.domain.cell_size
    reach = max(min_reach, h)
    if _measure(E) > 0:
        cells = _cells_of(E)
        reach = max(reach, diameter(IndicatorGrid(E.domain, cells != 0)) + 2 * h)
    params = KernelParams(E.domain.dim, sigma, h, near_field_radius_cells, quadrature_tol)
    return load_or_build_table(params, reach, threads=threads, use_cache=use_cache)
