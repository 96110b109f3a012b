"""Rasterized sets and densities on uniform cubic grids."""

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .errors import (DomainError, DomainMismatchError, EmptySetError,
                     ParameterError)


@dataclass(frozen=True)
class GridDomain:
    dim: int
    extents: tuple
    cell_size: float
    origin: tuple

    def __post_init__(self):
        object.__setattr__(self, "extents", tuple(int(e) for e in self.extents))
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))
        object.__setattr__(self, "cell_size", float(self.cell_size))
        if self.dim not in (1, 2, 3):
            raise ParameterError(f"dim must be 1, 2 or 3, got {self.dim}")
        if len(self.extents) != self.dim or len(self.origin) != self.dim:
            raise ParameterError("extents and origin must have dim entries")
        if min(self.extents) < 1:
            raise ParameterError(f"extents must be >= 1, got {self.extents}")
        if not self.cell_size > 0:
            raise ParameterError(f"cell_size must be positive, got {self.cell_size}")

    @classmethod
    def around(cls, low, high, cell_size, pad_cells=2):
        """Smallest domain covering the box [low, high] plus ``pad_cells`` margin."""
        low = np.atleast_1d(np.asarray(low, float))
        high = np.atleast_1d(np.asarray(high, float))
        n = np.ceil((high - low) / cell_size - 1e-9).astype(int) + 2 * pad_cells
        origin = low - pad_cells * cell_size
        return cls(len(low), tuple(n), cell_size, tuple(origin))

    @property
    def cell_volume(self):
        return self.cell_size ** self.dim

    @property
    def upper(self):
        return tuple(o + n * self.cell_size for o, n in zip(self.origin, self.extents))

    @property
    def center_index(self):
        """Cell whose low corner sits at the domain midpoint (the middle cell for odd extents)."""
        return tuple(n // 2 for n in self.extents)

    def axis_centers(self, axis):
        return self.origin[axis] + (np.arange(self.extents[axis]) + 0.5) * self.cell_size

    def cell_center(self, index):
        return np.array([o + (i + 0.5) * self.cell_size for o, i in zip(self.origin, index)])

    def centers(self):
        """Cell-center coordinates, shape extents + (dim,)."""
        axes = [self.axis_centers(a) for a in range(self.dim)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True, eq=False)
class IndicatorGrid:
    domain: GridDomain
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=bool)
        if cells.shape != self.domain.extents:
            raise ParameterError(f"cells shape {cells.shape} != extents {self.domain.extents}")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        return (isinstance(other, IndicatorGrid) and self.domain == other.domain
                and np.array_equal(self.cells, other.cells))

    __hash__ = None

    @property
    def count(self):
        return int(np.count_nonzero(self.cells))

    def as_density(self):
        return DensityGrid(self.domain, self.cells.astype(np.float64))

    def replace(self, cells):
        return IndicatorGrid(self.domain, cells)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    domain: GridDomain
    cells: np.ndarray

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.float64)
        if cells.shape != self.domain.extents:
            raise ParameterError(f"cells shape {cells.shape} != extents {self.domain.extents}")
        if not np.all(np.isfinite(cells)) or cells.min(initial=0) < 0 or cells.max(initial=0) > 1:
            raise ParameterError("density values must lie in [0, 1]")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def __eq__(self, other):
        return (isinstance(other, DensityGrid) and self.domain == other.domain
                and np.array_equal(self.cells, other.cells))

    __hash__ = None

    def mass(self):
        return math.fsum(self.cells.ravel()) * self.domain.cell_volume


# -- shapes -------------------------------------------------------------------

def _vec(v):
    return tuple(float(x) for x in np.atleast_1d(v))


@dataclass(frozen=True)
class Ball:
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not self.radius > 0:
            raise ParameterError("Ball radius must be positive")

    def contains(self, pts):
        return np.sum((pts - np.array(self.center)) ** 2, axis=-1) < self.radius ** 2

    def bounds(self):
        c = np.array(self.center)
        return c - self.radius, c + self.radius


@dataclass(frozen=True)
class Box:
    low: tuple
    high: tuple

    def __post_init__(self):
        object.__setattr__(self, "low", _vec(self.low))
        object.__setattr__(self, "high", _vec(self.high))
        if len(self.low) != len(self.high) or not all(a < b for a, b in zip(self.low, self.high)):
            raise ParameterError("Box needs low < high componentwise")

    def contains(self, pts):
        return np.all((pts > np.array(self.low)) & (pts < np.array(self.high)), axis=-1)

    def bounds(self):
        return np.array(self.low), np.array(self.high)


@dataclass(frozen=True)
class Annulus:
    center: tuple
    inner_radius: float
    outer_radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec(self.center))
        if not 0 < self.inner_radius < self.outer_radius:
            raise ParameterError("Annulus needs 0 < inner_radius < outer_radius")

    def contains(self, pts):
        r2 = np.sum((pts - np.array(self.center)) ** 2, axis=-1)
        return (r2 > self.inner_radius ** 2) & (r2 < self.outer_radius ** 2)

    def bounds(self):
        c = np.array(self.center)
        return c - self.outer_radius, c + self.outer_radius


@dataclass(frozen=True)
class Union:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ParameterError("Union needs at least one part")

    def contains(self, pts):
        return np.logical_or.reduce([p.contains(pts) for p in self.parts])

    def bounds(self):
        bs = [p.bounds() for p in self.parts]
        return np.min([b[0] for b in bs], axis=0), np.max([b[1] for b in bs], axis=0)


@dataclass(frozen=True)
class Intersection:
    parts: tuple

    def __post_init__(self):
        object.__setattr__(self, "parts", tuple(self.parts))
        if not self.parts:
            raise ParameterError("Intersection needs at least one part")

    def contains(self, pts):
        return np.logical_and.reduce([p.contains(pts) for p in self.parts])

    def bounds(self):
        bs = [p.bounds() for p in self.parts]
        lo = np.max([b[0] for b in bs], axis=0)
        return lo, np.maximum(lo, np.min([b[1] for b in bs], axis=0))


@dataclass(frozen=True)
class ComplementInBox:
    shape: object
    box: Box

    def contains(self, pts):
        return self.box.contains(pts) & ~self.shape.contains(pts)

    def bounds(self):
        return self.box.bounds()


@dataclass(frozen=True)
class Translated:
    shape: object
    offset: tuple

    def __post_init__(self):
        object.__setattr__(self, "offset", _vec(self.offset))

    def contains(self, pts):
        return self.shape.contains(pts - np.array(self.offset))

    def bounds(self):
        lo, hi = self.shape.bounds()
        return lo + np.array(self.offset), hi + np.array(self.offset)


_SHAPE_TYPES = {"ball": Ball, "box": Box, "annulus": Annulus, "union": Union,
                "intersection": Intersection, "complement": ComplementInBox,
                "translated": Translated}


def shape_from_dict(spec):
    """Build a shape from a nested mapping such as ``{"type": "ball", "center": [0, 0], "radius": 1}``."""
    if not isinstance(spec, dict) or "type" not in spec:
        raise ParameterError(f"shape spec must be a mapping with a 'type' key, got {spec!r}")
    kind = spec["type"]
    args = {k: v for k, v in spec.items() if k != "type"}
    try:
        if kind in ("union", "intersection"):
            return _SHAPE_TYPES[kind](tuple(shape_from_dict(p) for p in args["parts"]))
        if kind == "complement":
            return ComplementInBox(shape_from_dict(args["shape"]), shape_from_dict(
                dict(args["box"], type="box")))
        if kind == "translated":
            return Translated(shape_from_dict(args["shape"]), args["offset"])
        return _SHAPE_TYPES[kind](**args)
    except KeyError as exc:
        raise ParameterError(f"shape spec {kind!r} is missing or has unknown key {exc}") from None
    except TypeError as exc:
        raise ParameterError(f"bad arguments for shape {kind!r}: {exc}") from None


def shape_to_dict(shape):
    if isinstance(shape, (Union, Intersection)):
        return {"type": type(shape).__name__.lower(), "parts": [shape_to_dict(p) for p in shape.parts]}
    if isinstance(shape, ComplementInBox):
        return {"type": "complement", "shape": shape_to_dict(shape.shape),
                "box": {"low": list(shape.box.low), "high": list(shape.box.high)}}
    if isinstance(shape, Translated):
        return {"type": "translated", "shape": shape_to_dict(shape.shape), "offset": list(shape.offset)}
    name = {Ball: "ball", Box: "box", Annulus: "annulus"}[type(shape)]
    out = {"type": name}
    for key, value in shape.__dict__.items():
        out[key] = list(value) if isinstance(value, tuple) else value
    return out


# -- operations -----------------------------------------------------------------

def _check_fits(shape, domain):
    lo, hi = shape.bounds()
    if len(lo) != domain.dim:
        raise ParameterError(f"shape is {len(lo)}-dimensional, domain is {domain.dim}-dimensional")
    dlo, dhi = np.array(domain.origin), np.array(domain.upper)
    if np.any(lo < dlo) or np.any(hi > dhi):
        raise DomainError(
            f"shape bounding box [{lo.tolist()}, {hi.tolist()}] exceeds domain "
            f"[{dlo.tolist()}, {dhi.tolist()}]")


def rasterize(shape, domain, rule="center"):
    """Indicator of the cells selected by ``shape``.

    ``rule="center"`` sets a cell iff its center lies in the shape;
    ``rule="fraction"`` sets it iff at least half of a 3^d subsample does.
    """
    _check_fits(shape, domain)
    h = domain.cell_size
    if rule == "center":
        subs = np.full((1, domain.dim), 0.5)
    elif rule == "fraction":
        subs = np.array(list(itertools.product((1 / 6, 1 / 2, 5 / 6), repeat=domain.dim)))
    else:
        raise ParameterError(f"unknown rasterization rule {rule!r}")
    need = (len(subs) + 1) // 2
    out = np.zeros(domain.extents, dtype=bool)
    rest = [np.arange(n) for n in domain.extents[1:]]
    origin = np.array(domain.origin)
    for i0 in range(domain.extents[0]):
        # one slab at a time keeps memory flat for 3D
        idx = np.stack(np.meshgrid(np.array([i0]), *rest, indexing="ij"), axis=-1)
        idx = idx.reshape(-1, domain.dim).astype(float)
        pts = origin + (idx[:, None, :] + subs[None, :, :]) * h
        hits = np.count_nonzero(shape.contains(pts), axis=1)
        out[i0] = (hits >= need).reshape(out.shape[1:])
    return IndicatorGrid(domain, out)


def volume(E):
    return E.count * E.domain.cell_volume


def occupied_centers(E):
    idx = np.argwhere(E.cells)
    return np.array(E.domain.origin) + (idx + 0.5) * E.domain.cell_size


def _max_pair_distance(pts):
    best = 0.0
    for start in range(0, len(pts), 2048):
        block = pts[start:start + 2048]
        d2 = np.sum((block[:, None, :] - pts[None, :, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return math.sqrt(best)


def _boundary_cells(cells):
    inner = ndimage.binary_erosion(cells, border_value=0)
    return cells & ~inner


def diameter(E):
    """Certified upper bound on diam(E): max center distance + h sqrt(d)."""
    if E.count == 0:
        raise EmptySetError("diameter of an empty set")
    h, d = E.domain.cell_size, E.domain.dim
    if d == 1:
        idx = np.flatnonzero(E.cells)
        return (idx[-1] - idx[0]) * h + h
    pts = occupied_centers(E) if E.count <= 4096 else occupied_centers(
        E.replace(_boundary_cells(E.cells)))
    if len(pts) > 4096:
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:
            pass
    return _max_pair_distance(pts) + h * math.sqrt(d)


def set_algebra(E1, E2, op):
    if E1.domain != E2.domain:
        raise DomainMismatchError("set algebra needs grids on the same domain")
    if op == "union":
        cells = E1.cells | E2.cells
    elif op == "intersection":
        cells = E1.cells & E2.cells
    elif op == "difference":
        cells = E1.cells & ~E2.cells
    else:
        raise ParameterError(f"unknown set operation {op!r}")
    return IndicatorGrid(E1.domain, cells)


def random_blob(domain, rng, fill=0.3, smoothing=2.0, margin=1):
    """Superlevel set of seeded smoothed noise, kept ``margin`` cells off the edges."""
    noise = ndimage.gaussian_filter(rng.standard_normal(domain.extents), smoothing, mode="wrap")
    interior = np.zeros(domain.extents, dtype=bool)
    interior[tuple(slice(margin, n - margin) for n in domain.extents)] = True
    vals = noise[interior]
    thresh = np.quantile(vals, 1.0 - fill)
    cells = interior & (noise > thresh)
    return IndicatorGrid(domain, cells)


def random_density(domain, rng, smoothing=2.0, levels=None):
    """Smoothed noise mapped into [0, 1]; optionally quantized to ``levels`` values."""
    noise = ndimage.gaussian_filter(rng.standard_normal(domain.extents), smoothing, mode="wrap")
    lo, hi = noise.min(), noise.max()
    vals = (noise - lo) / (hi - lo) if hi > lo else np.zeros_like(noise)
    vals = np.clip(1.5 * vals - 0.5, 0.0, 1.0)  # leaves a zero background
    if levels:
        vals = np.round(vals * (levels - 1)) / (levels - 1)
    return DensityGrid(domain, vals)


def bounding_slices(cells):
    """Slices of the tight bounding box of nonzero cells (None if empty)."""
    nz = np.argwhere(cells)
    if len(nz) == 0:
        return None
    lo, hi = nz.min(axis=0), nz.max(axis=0) + 1
    return tuple(slice(a, b) for a, b in zip(lo, hi))
