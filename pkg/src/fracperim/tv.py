"""Layer-cake total variation built from the truncated fractional perimeter."""

import math
from dataclasses import dataclass

import numpy as np

from . import parallel
from ._exact import product_terms
from .energies import H_energy
from .errors import ParameterError
from .geometry import DensityGrid, IndicatorGrid


@dataclass(frozen=True)
class LevelDecomposition:
    domain: object
    thresholds: tuple        # strictly increasing, starts at the background level 0
    superlevel_sets: tuple   # {u > t} for each threshold

    def reconstruct(self):
        """Exact inverse: u(x) is the largest next threshold whose layer contains x."""
        u = np.zeros(self.domain.extents)
        for t_next, S in zip(self.thresholds[1:], self.superlevel_sets):
            u[S.cells] = t_next
        return DensityGrid(self.domain, u)


def _values(u):
    if isinstance(u, IndicatorGrid):
        return u.cells.astype(np.float64)
    if isinstance(u, DensityGrid):
        return np.asarray(u.cells)
    raise ParameterError(f"expected a grid, got {type(u).__name__}")


def decompose(u):
    vals = _values(u)
    if vals.min(initial=0.0) < 0:
        raise ParameterError("layer-cake decomposition needs a nonnegative density")
    ts = np.unique(np.concatenate([[0.0], vals.ravel()]))
    sets = tuple(IndicatorGrid(u.domain, vals > t) for t in ts)
    return LevelDecomposition(u.domain, tuple(float(t) for t in ts), sets)


def tv_energy(u, table, R, engine="direct", threads=None):
    """sum_k (t_{k+1} - t_k) H_R({u > t_k}), summed with a single rounding."""
    dec = decompose(u)
    ts = dec.thresholds
    if len(ts) < 2:
        return 0.0

    def layer(k):
        return H_energy(dec.superlevel_sets[k], table, R, engine=engine).raw_energy

    raws = parallel.ordered_map(layer, range(len(ts) - 1), threads)
    steps = np.diff(np.array(ts))
    return math.fsum(product_terms(steps, np.array(raws)))
