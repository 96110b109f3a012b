"""Lattice discretization of the kernel |z|^-(d+sigma) and renormalization constants."""

import enum
import hashlib
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats, parallel
from .errors import (AccuracyWarning, CoverageError, DivergenceError,
                     ParameterError)
from .quadrature import pair_weight_1d, unit_pair_weight

INTEGRATED = 0
MIDPOINT = 1
INTEGRATED_UNCONVERGED = 2

SERIES_SWITCH = 1e-4


class RenormMode(enum.Enum):
    ANALYTIC = "analytic"
    DISCRETE = "discrete"


def unit_ball_volume(dim):
    """Lebesgue measure of the unit ball, pi^(d/2) / Gamma(d/2 + 1)."""
    return math.pi ** (dim / 2) / math.gamma(dim / 2 + 1)


def _check_sigma(sigma, dim):
    if dim not in (1, 2, 3):
        raise ParameterError(f"dim must be 1, 2 or 3, got {dim}")
    if not -dim < sigma < 1:
        raise ParameterError(f"sigma={sigma} outside (-{dim}, 1)")


def gamma(sigma, rho, dim):
    """Renormalization constant d*omega_d*(1 - rho^-sigma)/sigma.

    Equals d*omega_d*log(rho) at sigma = 0 and is continuous there; for
    |sigma log rho| < 1e-4 a short Taylor series replaces the quotient.
    """
    _check_sigma(sigma, dim)
    if not rho > 0 or math.isinf(rho):
        raise ParameterError(f"rho must be positive and finite, got {rho}")
    log_rho = math.log(rho)
    t = sigma * log_rho
    if abs(t) < SERIES_SWITCH:
        g = 1.0 - t / 2.0 + t * t / 6.0 - t ** 3 / 24.0
    else:
        g = -math.expm1(-t) / t
    return dim * unit_ball_volume(dim) * log_rho * g


def gamma_limit(sigma, dim):
    """d*omega_d/sigma: the rho -> inf (sigma > 0) or rho -> 0 (sigma < 0) limit."""
    _check_sigma(sigma, dim)
    if sigma == 0:
        raise DivergenceError("gamma^0 diverges at both rho -> 0 and rho -> inf")
    return dim * unit_ball_volume(dim) / sigma


def gamma_annulus(sigma, rho1, rho2, dim):
    """Kernel integral over the annulus rho1 <= |z| < rho2."""
    if not 0 < rho1 < rho2:
        raise ParameterError(f"need 0 < rho1 < rho2, got {rho1}, {rho2}")
    return gamma(sigma, rho2, dim) - gamma(sigma, rho1, dim)


@dataclass(frozen=True)
class KernelParams:
    dim: int
    sigma: float
    cell_size: float
    near_field_radius_cells: int = 4
    quadrature_tol: float = 1e-10

    def __post_init__(self):
        _check_sigma(self.sigma, self.dim)
        if not self.cell_size > 0:
            raise ParameterError(f"cell_size must be positive, got {self.cell_size}")
        if self.near_field_radius_cells < 1:
            raise ParameterError("near_field_radius_cells must be >= 1")
        if not self.quadrature_tol > 0:
            raise ParameterError("quadrature_tol must be positive")


@dataclass(eq=False)
class KernelTable:
    """Cell-pair weights w(o) for lattice offsets o, sorted by |o| then lexicographically.

    Offsets with |o|_inf <= near_field_radius_cells carry integrated weights;
    the rest use the midpoint value h^(2d) |o h|^-(d+sigma). The zero offset
    is present only for sigma < 0.
    """

    params: KernelParams
    max_offset: float
    offsets: np.ndarray
    weights: np.ndarray
    accuracy: np.ndarray
    norm2: np.ndarray = field(init=False)
    dist2: np.ndarray = field(init=False)
    _fingerprint: str = field(init=False, default=None)

    def __post_init__(self):
        self.offsets = np.asarray(self.offsets, dtype=np.int64).reshape(-1, self.params.dim)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        self.accuracy = np.asarray(self.accuracy, dtype=np.uint8)
        self.norm2 = np.sum(self.offsets ** 2, axis=1)
        h = self.params.cell_size
        self.dist2 = self.norm2.astype(np.float64) * (h * h)
        for arr in (self.offsets, self.weights, self.accuracy, self.norm2, self.dist2):
            arr.setflags(write=False)
        self._index = None

    @property
    def dim(self):
        return self.params.dim

    @property
    def sigma(self):
        return self.params.sigma

    @property
    def cell_size(self):
        return self.params.cell_size

    @property
    def cell_volume(self):
        return self.params.cell_size ** self.params.dim

    @property
    def has_self_weight(self):
        return bool(len(self.norm2)) and self.norm2[0] == 0

    @property
    def fingerprint(self):
        if self._fingerprint is None:
            self._fingerprint = formats.fingerprint(formats.table_to_bytes(self))
        return self._fingerprint

    def far_field(self, offset):
        """Midpoint weight h^(2d) |o h|^-(d+sigma), valid for any nonzero offset."""
        o = np.asarray(offset, dtype=np.float64)
        n2 = float(np.dot(o, o))
        if n2 == 0:
            raise DivergenceError("midpoint rule is undefined at the zero offset")
        h, d, s = self.cell_size, self.dim, self.sigma
        return h ** (2 * d) * (n2 * h * h) ** (-(d + s) / 2)

    def weight(self, offset):
        """Weight for a single offset; raises for a divergent or uncovered request."""
        key = tuple(int(v) for v in offset)
        if not any(key) and self.sigma >= 0:
            raise DivergenceError(
                f"self-offset weight diverges for sigma={self.sigma} >= 0")
        if self._index is None:
            self._index = {tuple(o): i for i, o in enumerate(self.offsets.tolist())}
        try:
            return float(self.weights[self._index[key]])
        except KeyError:
            raise CoverageError(f"offset {key} lies outside the table") from None

    def shell(self, lo, hi):
        """Mask of offsets with lo <= |o h| < hi (cell-center distance)."""
        mask = self.dist2 < hi * hi if math.isfinite(hi) else np.ones(len(self.dist2), bool)
        if lo > 0:
            mask &= self.dist2 >= lo * lo
        return mask

    def check_reach(self, radius, what="window"):
        if radius > self.max_offset:
            raise CoverageError(
                f"{what} {radius:.6g} exceeds table max_offset {self.max_offset:.6g}; "
                f"rebuild with max_offset >= {radius:.6g}")

    def dense(self, mask=None):
        """Weights on a dense cube [-m, m]^d of offsets (zeros where masked out)."""
        m = int(np.max(np.abs(self.offsets))) if len(self.offsets) else 0
        out = np.zeros((2 * m + 1,) * self.dim)
        sel = slice(None) if mask is None else mask
        idx = tuple((self.offsets[sel] + m).T)
        out[idx] = self.weights[sel]
        return out, m


def _offsets_within(dim, radius_cells):
    m = int(math.floor(radius_cells))
    axes = [np.arange(-m, m + 1)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
    n2 = np.sum(grid ** 2, axis=1)
    return grid[n2 <= radius_cells ** 2 + 1e-9], n2[n2 <= radius_cells ** 2 + 1e-9]


def _unit_weight(rep, sigma, tol):
    return unit_pair_weight(rep, sigma, tol)


def build_kernel_table(params, max_offset, threads=None):
    """Tabulate w(o) for all offsets with |o h| <= max_offset + h sqrt(d).

    Near-field weights are computed once per orbit of the signed permutation
    group, so the table is exactly symmetric.
    """
    h, d, s = params.cell_size, params.dim, params.sigma
    if not max_offset >= h:
        raise ParameterError(f"max_offset={max_offset} must be >= cell_size={h}")
    reach = max_offset / h + math.sqrt(d)
    offs, n2 = _offsets_within(d, reach)
    if s >= 0:
        keep = n2 > 0
        offs, n2 = offs[keep], n2[keep]
    order = np.lexsort(tuple(offs[:, i] for i in reversed(range(d))) + (n2,))
    offs, n2 = offs[order], n2[order]

    weights = np.empty(len(offs))
    accuracy = np.full(len(offs), MIDPOINT, dtype=np.uint8)
    far = np.max(np.abs(offs), axis=1) > params.near_field_radius_cells
    with np.errstate(divide="ignore"):
        weights[far] = h ** (2 * d) * (n2[far] * (h * h)) ** (-(d + s) / 2)

    near_idx = np.flatnonzero(~far)
    reps = [tuple(sorted(np.abs(offs[i]).tolist())) for i in near_idx]
    unique = sorted(set(reps))
    scale = h ** (d - s)
    if d == 1:
        results = [(pair_weight_1d(r[0], s, h), True) for r in unique]
    else:
        n = parallel.resolve_threads(threads)
        if n > 1 and len(unique) > 1:
            with ThreadPoolExecutor(n) as pool:
                unit = list(pool.map(lambda r: _unit_weight(r, s, params.quadrature_tol), unique))
        else:
            unit = [_unit_weight(r, s, params.quadrature_tol) for r in unique]
        results = [(scale * w, ok) for w, ok in unit]
    lookup = dict(zip(unique, results))
    unconverged = False
    for i, r in zip(near_idx, reps):
        w, ok = lookup[r]
        weights[i] = w
        accuracy[i] = INTEGRATED if ok else INTEGRATED_UNCONVERGED
        unconverged |= not ok
    if unconverged:
        warnings.warn("near-field quadrature reached its depth limit", AccuracyWarning)
    return KernelTable(params, float(max_offset), offs, weights, accuracy)


def discrete_gamma_weights(table, rho):
    """Signed weights whose sum is h^d times the discrete constant at ``rho``."""
    if rho < 0 or not math.isfinite(rho):
        raise ParameterError(f"rho must be finite and >= 0, got {rho}")
    table.check_reach(max(1.0, rho), "discrete gamma radius")
    if rho == 0 and not table.has_self_weight:
        raise DivergenceError(
            f"discrete gamma at rho=0 needs the self weight, which diverges for sigma={table.sigma}")
    if rho == 1.0:
        return np.zeros(0)
    lo, hi = min(1.0, rho), max(1.0, rho)
    w = table.weights[table.shell(lo, hi)]
    return w if rho > 1 else -w


def discrete_gamma(table, rho):
    """Table-consistent renormalization constant, zero at rho = 1.

    Sum of w(o)/h^d over offsets whose cell-center distance lies in
    [min(1, rho), max(1, rho)), negated when rho < 1.
    """
    return math.fsum(discrete_gamma_weights(table, rho)) / table.cell_volume


# -- disk cache ---------------------------------------------------------------

def cache_dir():
    env = os.environ.get("FRACPERIM_CACHE")
    return Path(env) if env else Path.home() / ".cache" / "fracperim"


def _cache_key(params, max_offset):
    text = repr((params.dim, float(params.sigma).hex(), float(params.cell_size).hex(),
                 params.near_field_radius_cells, float(params.quadrature_tol).hex(),
                 float(max_offset).hex()))
    return hashlib.sha256(text.encode()).hexdigest()[:24]


def load_or_build_table(params, max_offset, threads=None, use_cache=True, directory=None):
    """Build a table, reusing an FPKT file in the cache directory when present."""
    if not use_cache:
        return build_kernel_table(params, max_offset, threads)
    root = Path(directory) if directory else cache_dir()
    path = root / f"{_cache_key(params, max_offset)}.fpkt"
    if path.exists():
        try:
            table = formats.table_from_bytes(path.read_bytes())
            if table.params == params and table.max_offset == max_offset:
                return table
        except Exception:  # corrupt cache entry, rebuild below
            pass
    table = build_kernel_table(params, max_offset, threads)
    try:
        root.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(formats.table_to_bytes(table))
        tmp.replace(path)
    except OSError:
        pass
    return table
