"""Parameter sweeps, isoperimetric comparisons and the randomized property suite."""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage

from . import __version__
from ._exact import product_terms
from .energies import (Capped, H0_perimeter, H_energy, J_energy, _direct_H_terms,
                       _direct_J_terms, fon_invariant, pair_counts, potential_field,
                       riesz_interaction, table_for)
from .errors import ParameterError
from .geometry import (Annulus, Ball, Box, DensityGrid, GridDomain, IndicatorGrid, diameter, random_blob,
                       random_density, rasterize, set_algebra, shape_from_dict,
                       shape_to_dict, Union, volume)
from .kernels import (KernelParams, KernelTable, RenormMode, build_kernel_table,
                      discrete_gamma_weights, unit_ball_volume)
from .rearrangement import (annulus_bound_check, ball_of_mass, build_plan,
                            annulus_outer_radius, rearrange)
from .tv import tv_energy


# -- records ------------------------------------------------------------------------

def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if math.isnan(x):
            return "nan"
        return x
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, RenormMode):
        return obj.value
    return obj


@dataclass
class Verdict:
    id: str
    tolerance: float
    checked: int = 0
    violations: int = 0
    worst_margin: float = math.inf

    def record(self, margin):
        """Log one check; a margin below -tolerance is a violation."""
        self.checked += 1
        self.worst_margin = min(self.worst_margin, float(margin))
        if not margin >= -self.tolerance:
            self.violations += 1

    @property
    def passed(self):
        return self.violations == 0

    def to_dict(self):
        return {"id": self.id, "passed": self.passed, "tolerance": self.tolerance,
                "checked": self.checked, "violations": self.violations,
                "worst_margin": self.worst_margin if self.checked else None}


@dataclass
class ExperimentRecord:
    experiment: str
    config: dict
    points: list = field(default_factory=list)
    verdicts: list = field(default_factory=list)
    label: str = ""

    @property
    def passed(self):
        return all(v.passed for v in self.verdicts)

    def verdict(self, vid):
        for v in self.verdicts:
            if v.id == vid:
                return v
        raise KeyError(vid)

    def to_dict(self):
        return _clean({"experiment": self.experiment, "version": __version__,
                       "label": self.label, "config": self.config, "passed": self.passed,
                       "points": self.points,
                       "verdicts": [v.to_dict() for v in self.verdicts]})

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def to_csv(self):
        """One row per sweep point (or per verdict when there are no points)."""
        buf = io.StringIO()
        rows = self.to_dict()["points"] or self.to_dict()["verdicts"]
        if rows:
            keys = sorted({k for row in rows for k in row})
            writer = csv.DictWriter(buf, fieldnames=keys, lineterminator="\n")
            writer.writeheader()
            for row in rows:
                writer.writerow(row)
        return buf.getvalue()


# -- configuration --------------------------------------------------------------------

@dataclass
class SweepConfig:
    shape: dict
    resolutions: list = field(default_factory=lambda: [0.05])
    sigma_grid: list = field(default_factory=lambda: [0.5])
    R_grid: list = field(default_factory=list)
    r_grid: list = field(default_factory=list)
    renorm: str = "discrete"
    engine: str = "direct"
    seed: int = 0
    tolerance: float = 1e-9
    rule: str = "center"
    pad_cells: int = 2
    threads: int = None

    def __post_init__(self):
        if not self.resolutions or not self.sigma_grid:
            raise ParameterError("resolutions and sigma_grid must be nonempty")
        if self.renorm not in ("analytic", "discrete", "none"):
            raise ParameterError(f"renorm must be analytic, discrete or none, got {self.renorm!r}")
        self.R_grid = [float(x) for x in self.R_grid]
        self.r_grid = [float(x) for x in self.r_grid]
        self.sigma_grid = [float(x) for x in self.sigma_grid]
        self.resolutions = [float(x) for x in self.resolutions]

    @property
    def renorm_mode(self):
        return None if self.renorm == "none" else RenormMode(self.renorm)

    def shape_spec(self):
        return shape_from_dict(self.shape) if isinstance(self.shape, dict) else self.shape

    def echo(self):
        d = asdict(self)
        if not isinstance(self.shape, dict):
            d["shape"] = shape_to_dict(self.shape)
        return d


def _domain_for(shape, h, pad_cells=2):
    lo, hi = shape.bounds()
    return GridDomain.around(lo, hi, h, pad_cells)


def boundary_cell_count(E):
    inner = ndimage.binary_erosion(E.cells, border_value=0)
    return int(np.count_nonzero(E.cells & ~inner))


def _rate_slack(E):
    h, d = E.domain.cell_size, E.domain.dim
    return 2 * h * boundary_cell_count(E) * h ** (d - 1)


def _scale(*vals):
    return max([1.0] + [abs(v) for v in vals if math.isfinite(v)])


# -- sweeps ------------------------------------------------------------------------------

def sweep_R_limit(cfg):
    """Renormalized H over an increasing list of R, with monotonicity and rate-bound checks."""
    shape = cfg.shape_spec()
    mode = cfg.renorm_mode
    exact = mode is RenormMode.DISCRETE
    rec = ExperimentRecord("sweep_R_limit", cfg.echo())
    mono = Verdict("R_monotone", 0.0 if exact else cfg.tolerance)
    rate = Verdict("rate_bound", cfg.tolerance)
    stab = Verdict("stabilization", 0.0 if exact else cfg.tolerance)
    Rs = sorted(cfg.R_grid)
    for h in cfg.resolutions:
        E = rasterize(shape, _domain_for(shape, h, cfg.pad_cells), cfg.rule)
        if E.count == 0:
            for R in Rs:
                rec.points.append({"h": h, "sigma": None, "R": R, "value": 0.0, "raw": 0.0,
                                   "renorm": 0.0, "margin": None, "verdict": "pass"})
                mono.record(0.0)
            continue
        diam = diameter(E)
        finite = [R for R in Rs if math.isfinite(R)]
        for s in cfg.sigma_grid:
            table = table_for(E, s, min_reach=max(finite + [1.0]), threads=cfg.threads)
            reps = [H_energy(E, table, R, mode, cfg.engine, cfg.threads) for R in Rs]
            vals = [r.value for r in reps]
            check_rate = s < 0 or 0 < s < 1
            j_lim = None
            if check_rate:
                j_lim = J_energy(E, table, h, mode, cfg.engine, cfg.threads).value
            m2 = volume(E) ** 2
            for i, (R, rep) in enumerate(zip(Rs, reps)):
                ok = True
                margin = None
                if i:
                    m = (vals[i - 1] - vals[i]) / _scale(vals[i - 1], vals[i])
                    mono.record(m)
                    ok &= m >= -mono.tolerance
                    if Rs[i - 1] > diam:
                        d = -abs(vals[i] - vals[i - 1]) / _scale(vals[i])
                        stab.record(d)
                        ok &= d >= -stab.tolerance
                if check_rate and math.isfinite(R) and (s < 0 or R > 1):
                    gap = rep.value - j_lim
                    bound = m2 / R ** (table.dim + s) + _rate_slack(E)
                    sc = _scale(rep.value, j_lim)
                    lower = gap / sc
                    upper = (bound - gap) / sc
                    margin = min(lower, upper)
                    rate.record(margin)
                    ok &= margin >= -rate.tolerance
                rec.points.append({"h": h, "sigma": s, "R": R, "value": rep.value,
                                   "raw": rep.raw_energy, "renorm": rep.renorm_term,
                                   "window_effective": rep.window_effective,
                                   "margin": margin, "verdict": "pass" if ok else "fail"})
    rec.verdicts = [mono, rate, stab]
    return rec


def sweep_r_limit(cfg):
    """Renormalized J over r decreasing toward its limit (r = 0 for sigma < 0, else r = h)."""
    shape = cfg.shape_spec()
    mode = cfg.renorm_mode
    exact = mode is RenormMode.DISCRETE
    rec = ExperimentRecord("sweep_r_limit", cfg.echo())
    mono = Verdict("r_monotone", 0.0 if exact else cfg.tolerance)
    for h in cfg.resolutions:
        E = rasterize(shape, _domain_for(shape, h, cfg.pad_cells), cfg.rule)
        for s in cfg.sigma_grid:
            rs = {r for r in cfg.r_grid if r >= h or (s < 0 and r >= 0)}
            # sigma >= 0 has no r = 0 limit; the smallest admissible core is one cell
            rs = sorted(rs | {h} if s >= 0 or not rs else rs)
            table = table_for(E, s, min_reach=max(rs + [1.0]), threads=cfg.threads)
            reps = [J_energy(E, table, r, mode, cfg.engine, cfg.threads) for r in rs]
            for i, (r, rep) in enumerate(zip(rs, reps)):
                ok = True
                if i:
                    prev = reps[i - 1].value
                    m = (prev - rep.value) / _scale(prev, rep.value)
                    mono.record(m)
                    ok = m >= -mono.tolerance
                rec.points.append({"h": h, "sigma": s, "r": r, "value": rep.value,
                                   "raw": rep.raw_energy, "renorm": rep.renorm_term,
                                   "is_limit": r == rs[0], "margin": None,
                                   "verdict": "pass" if ok else "fail"})
    rec.verdicts = [mono]
    return rec


def renormalized_H(E, table, mode=RenormMode.DISCRETE, engine="direct", threads=None):
    if mode is RenormMode.DISCRETE:
        return H_energy(E, table, math.inf, mode, engine, threads).value
    return H_energy(E, table, math.inf, RenormMode.ANALYTIC, engine, threads).value


def sweep_sigma_continuity(cfg, eps_grid=(0.5, 0.25, 0.125, 0.0625), kmax=8):
    """Renormalized H across sigma: monotone in sigma, continuous through sigma = 0."""
    shape = cfg.shape_spec()
    mode = cfg.renorm_mode or RenormMode.ANALYTIC
    rec = ExperimentRecord("sweep_sigma_continuity", cfg.echo(), label="pointwise evidence")
    mono = Verdict("sigma_monotone", cfg.tolerance)
    bracket = Verdict("bracket_shrinks", 0.0)
    order = Verdict("bracket_order", 0.0)
    joint = Verdict("joint_sigma_R_limit", 0.0)
    tables = {}

    def val(E, s, R=math.inf, m=mode):
        if s not in tables:
            tables[s] = table_for(E, s, min_reach=1.0, threads=cfg.threads)
        if math.isinf(R):
            return renormalized_H(E, tables[s], m, cfg.engine, cfg.threads)
        return H_energy(E, tables[s], R, m, cfg.engine, cfg.threads).value

    for h in cfg.resolutions:
        tables.clear()
        E = rasterize(shape, _domain_for(shape, h, cfg.pad_cells), cfg.rule)
        sig = sorted(cfg.sigma_grid)
        vals = [val(E, s) for s in sig]
        for s, v in zip(sig, vals):
            rec.points.append({"h": h, "kind": "sigma", "sigma": s, "R": math.inf, "value": v})
        for a, b in zip(vals, vals[1:]):
            mono.record((b - a) / _scale(a, b) - 1e-9)
        h0 = val(E, 0.0)
        widths = []
        for eps in eps_grid:
            lo, hi = val(E, -eps), val(E, eps)
            widths.append(hi - lo)
            order.record(min(h0 - lo, hi - h0))
            rec.points.append({"h": h, "kind": "bracket", "sigma": eps, "lower": lo,
                               "center": h0, "upper": hi, "width": hi - lo})
        for a, b in zip(widths, widths[1:]):
            bracket.record(a - b if a != b else -1.0)
        # joint limit along (sigma, R) = (+-2^-k, 2^k) with the analytic constant
        ref = val(E, 0.0, m=RenormMode.ANALYTIC)
        for sign in (1, -1):
            errs = []
            for k in range(1, kmax + 1):
                s, R = sign * 2.0 ** -k, 2.0 ** k
                err = abs(val(E, s, R, RenormMode.ANALYTIC) - ref)
                errs.append(err)
                rec.points.append({"h": h, "kind": "joint", "sigma": s, "R": R, "error": err})
            for a, b in zip(errs, errs[1:]):
                joint.record(a - b if a != b else -1.0)
    rec.verdicts = [mono, order, bracket, joint]
    return rec


# -- isoperimetric ------------------------------------------------------------------------

def _neighbors(cells):
    return ndimage.binary_dilation(cells) & ~cells


def equalize(E, target_count):
    """Trim boundary cells farthest from the centroid, or add outside neighbors nearest to it."""
    cells = np.array(E.cells)
    idx_all = np.indices(cells.shape).reshape(cells.ndim, -1).T
    centroid = np.argwhere(cells).mean(axis=0)
    d2 = np.sum((idx_all - centroid) ** 2, axis=1).reshape(cells.shape)
    flat_ix = np.arange(cells.size).reshape(cells.shape)
    while np.count_nonzero(cells) != target_count:
        n = np.count_nonzero(cells)
        if n > target_count:
            cand = cells & ~ndimage.binary_erosion(cells, border_value=0)
            pick = np.lexsort((flat_ix[cand], -d2[cand]))[: n - target_count]
            coords = np.argwhere(cand)[pick]
            cells[tuple(coords.T)] = False
        else:
            cand = _neighbors(cells)
            pick = np.lexsort((flat_ix[cand], d2[cand]))[: target_count - n]
            coords = np.argwhere(cand)[pick]
            cells[tuple(coords.T)] = True
    return IndicatorGrid(E.domain, cells)


def _perturbed_ball(domain, radius, rng, amplitude=0.12, modes=5):
    pts = domain.centers()
    x, y = pts[..., 0], pts[..., 1]
    theta = np.arctan2(y, x)
    rad = np.ones_like(theta)
    for k in range(2, 2 + modes):
        rad += amplitude / k * rng.uniform(-1, 1) * np.cos(k * theta + rng.uniform(0, 2 * np.pi))
    return IndicatorGrid(domain, x * x + y * y < (radius * rad) ** 2)


def competitor_shapes(domain, radius, rng, names):
    """Named competitor sets of roughly the same area as the disc of ``radius``."""
    area = math.pi * radius ** 2
    out = {}
    for name in names:
        if name == "ball":
            out[name] = rasterize(Ball((0, 0), radius), domain)
        elif name == "square":
            a = math.sqrt(area) / 2
            out[name] = rasterize(Box((-a, -a), (a, a)), domain)
        elif name == "annulus":
            s = radius / 2
            R = annulus_outer_radius(area, s, 2)
            out[name] = rasterize(Annulus((0, 0), s, R), domain)
        elif name == "dumbbell":
            rb = 0.6 * radius
            shape = Union((Ball((-0.8 * radius, 0), rb), Ball((0.8 * radius, 0), rb),
                           Box((-0.8 * radius, -0.1 * radius), (0.8 * radius, 0.1 * radius))))
            out[name] = rasterize(shape, domain)
        elif name == "perturbed":
            out[name] = _perturbed_ball(domain, radius, rng)
        else:
            raise ParameterError(f"unknown competitor {name!r}")
    return out


@dataclass
class IsoConfig:
    cell_size: float = 0.02
    radius: float = 1.0
    sigma_grid: list = field(default_factory=lambda: [0.0, 0.5])
    competitors: list = field(default_factory=lambda: ["square", "annulus", "dumbbell", "perturbed"])
    R_grid: list = field(default_factory=lambda: [0.5])
    small_mass_r: float = 1.0
    seed: int = 0
    engine: str = "direct"
    threads: int = None


def isoperimetric_experiment(cfg):
    """Disc against equal-area competitors for the renormalized and truncated energies."""
    rec = ExperimentRecord("isoperimetric", asdict(cfg))
    rng = np.random.default_rng(cfg.seed)
    h, rho = cfg.cell_size, cfg.radius
    half = 1.6 * rho
    n = int(math.ceil(2 * half / h)) | 1
    dom = GridDomain(2, (n, n), h, (-n * h / 2, -n * h / 2))
    ball = rasterize(Ball((0, 0), rho), dom)
    comps = competitor_shapes(dom, rho, rng, cfg.competitors)
    comps = {k: equalize(v, ball.count) for k, v in comps.items()}
    reach = max([diameter(ball)] + [diameter(c) for c in comps.values()]) + 2 * h
    ren = Verdict("ball_minimizes_renormalized", 0.0)
    trunc = Verdict("ball_minimizes_H_R", 0.0)
    for s in cfg.sigma_grid:
        table = build_kernel_table(KernelParams(2, s, h), max(reach, max(cfg.R_grid + [1.0])),
                                   cfg.threads)

        def renorm_value(E):
            if s == 0:
                return H0_perimeter(E, table, cfg.engine, cfg.threads).value
            return J_energy(E, table, h, RenormMode.DISCRETE, cfg.engine, cfg.threads).value

        vb = renorm_value(ball)
        hb = {R: H_energy(ball, table, R, None, cfg.engine, cfg.threads).raw_energy
              for R in cfg.R_grid}
        for name, E in comps.items():
            same = np.array_equal(E.cells, ball.cells)
            vc = renorm_value(E)
            margin = vc - vb
            ren.record(0.0 if (same and margin == 0) else (margin if margin > 0 else -1.0))
            rec.points.append({"sigma": s, "competitor": name, "functional": "renormalized",
                               "ball": vb, "value": vc, "margin": margin,
                               "cells": E.count, "verdict": "pass" if (margin > 0 or same) else "fail"})
            for R in cfg.R_grid:
                hc = H_energy(E, table, R, None, cfg.engine, cfg.threads).raw_energy
                m = hc - hb[R]
                trunc.record(m / _scale(hb[R], hc))
                rec.points.append({"sigma": s, "competitor": name, "functional": f"H_R={R}",
                                   "ball": hb[R], "value": hc, "margin": m,
                                   "cells": E.count, "verdict": "pass" if m >= 0 else "fail"})
    rec.verdicts = [ren, trunc, small_mass_check(cfg.small_mass_r, h, cfg.sigma_grid,
                                                 cfg.threads, rec.points)]
    return rec


def small_mass_check(r, h, sigmas, threads=None, points=None):
    """Ball of mass omega_2 (0.4 r)^2 has zero truncated energy; two half balls 2r apart do not."""
    v = Verdict("small_mass_ball_maximizes_J", 0.0)
    m = unit_ball_volume(2) * (0.4 * r) ** 2
    n = int(math.ceil(3.2 * r / h)) | 1
    dom = GridDomain(2, (n, n), h, (-n * h / 2, -n * h / 2))
    ball = ball_of_mass(m, dom)
    rh = math.sqrt(m / 2 / math.pi)
    pair = rasterize(Ball((-r, 0), rh), dom)
    pair = set_algebra(pair, rasterize(Ball((r, 0), rh), dom), "union")
    for s in sigmas:
        table = build_kernel_table(KernelParams(2, s, h), diameter(pair) + 2 * h, threads)
        jb = J_energy(ball, table, r).raw_energy
        jp = J_energy(pair, table, r).raw_energy
        ok = jb == 0.0 and jp < 0.0
        v.record(0.0 if ok else -1.0)
        if points is not None:
            points.append({"sigma": s, "competitor": "split_pair", "functional": f"J_raw_r={r}",
                           "ball": jb, "value": jp, "margin": jb - jp,
                           "cells": pair.count, "verdict": "pass" if ok else "fail"})
    return v


# -- property suite -------------------------------------------------------------------------

SUITE_SIGMAS = (-0.5, 0.0, 0.5)
SUITE_R = (1.0, 2.0, 4.0, 8.0)
SUITE_SUBMOD_R = (1.0, 4.0)
SUITE_GRIDS = {1: ((128,), 1 / 32), 2: ((32, 32), 1 / 8), 3: ((12, 12, 12), 1 / 4)}
VERDICT_IDS = (
    "fon_rho_invariance", "fores_two_paths", "equfin_two_paths", "R_monotone", "r_monotone",
    "stabilization", "rate_bound", "truncation_bound", "global_lower_bound", "sigma_monotone",
    "submodularity", "log_lower_bound", "cross_engine", "potential_consistency",
    "rearrange_mass", "rearrange_idempotent", "equimeasurable", "riesz_inequality",
    "annulus_bound", "tv_single_layer", "tv_homogeneity", "tv_convexity",
)


def perturbed_table(table, factor=1.0 + 1e-6):
    """Copy of ``table`` with one weight at distance in [1, 2) scaled by ``factor``."""
    w = np.array(table.weights)
    i = int(np.flatnonzero(table.shell(1.0, 2.0))[0])
    w[i] *= factor
    return KernelTable(table.params, table.max_offset, np.array(table.offsets), w,
                       np.array(table.accuracy))


def _suite_tables(dim, threads, fault):
    extents, h = SUITE_GRIDS[dim]
    reach = max(SUITE_R) + 2 * h
    reach = max(reach, h * math.sqrt(sum(e * e for e in extents)) + 2 * h)
    clean, energy = {}, {}
    for s in SUITE_SIGMAS:
        if s <= -dim:
            continue
        t = build_kernel_table(KernelParams(dim, s, h), reach, threads)
        clean[s] = t
        energy[s] = perturbed_table(t) if fault == "perturb_table" else t
    return clean, energy


def _fon_mixed(E, etab, gtab, rho):
    # H + J from the energy table, discrete gamma from the reference table
    pc = pair_counts(E, etab)
    terms = [_direct_H_terms(pc, etab, rho), _direct_J_terms(pc, etab, rho)]
    if rho != 1.0:
        sw = discrete_gamma_weights(gtab, rho)
        terms.append(-product_terms(sw, np.full(len(sw), pc.total)))
    return math.fsum(np.concatenate(terms))


def property_suite(seed=42, dims=(1, 2), trials=20, threads=None, fault=None, tolerance=1e-9):
    """Randomized checks of every discrete identity and inequality; one verdict per id."""
    if fault not in (None, "perturb_table"):
        raise ParameterError(f"unknown fault {fault!r}")
    config = {"seed": seed, "dims": list(dims), "trials": trials, "fault": fault,
              "tolerance": tolerance, "sigmas": list(SUITE_SIGMAS), "R_grid": list(SUITE_R)}
    rec = ExperimentRecord("property_suite", config)
    if trials <= 0:
        return rec
    tol = tolerance
    V = {vid: Verdict(vid, 0.0 if vid in ("R_monotone", "r_monotone", "stabilization")
                      else (1e-12 if vid in ("fon_rho_invariance", "fores_two_paths",
                                             "equfin_two_paths", "potential_consistency",
                                             "tv_homogeneity")
                            else tol))
         for vid in VERDICT_IDS}
    rng_root = np.random.default_rng(seed)
    for dim in dims:
        if dim not in SUITE_GRIDS:
            raise ParameterError(f"suite dimension must be 1, 2 or 3, got {dim}")
        extents, h = SUITE_GRIDS[dim]
        dom = GridDomain(dim, extents, h, (0.0,) * dim)
        plan = build_plan(dom)
        clean, tables = _suite_tables(dim, threads, fault)
        rng = np.random.default_rng(rng_root.integers(2 ** 63))
        for trial in range(trials):
            sm = rng.uniform(1.0, 4.0)
            E1 = random_blob(dom, rng, fill=rng.uniform(0.1, 0.5), smoothing=sm)
            E2 = random_blob(dom, rng, fill=rng.uniform(0.1, 0.5), smoothing=rng.uniform(1.0, 4.0))
            _check_set(E1, E2, dom, clean, tables, V, rec, dim, trial, threads)
            _check_densities(dom, plan, clean, tables, V, rng, dim, threads)
    rec.verdicts = [V[k] for k in VERDICT_IDS]
    return rec


def _rel(a, b):
    return abs(a - b) / _scale(a, b)


def _check_set(E1, E2, dom, clean, tables, V, rec, dim, trial, threads):
    h, d = dom.cell_size, dom.dim
    vol = volume(E1)
    diam = diameter(E1) if vol > 0 else 0.0
    hats = []
    for s, tb in tables.items():
        gt = clean[s]
        # identities tied to the discrete constant
        fon = [_fon_mixed(E1, tb, gt, rho) for rho in (0.5, 1.0, 2.0, 4.0)]
        V["fon_rho_invariance"].record(-max(_rel(f, fon[0]) for f in fon))
        if vol == 0:
            hats.append((s, 0.0))
            continue
        h_inf = H_energy(E1, tb, math.inf, RenormMode.DISCRETE).value
        h1 = H_energy(E1, tb, 1.0).raw_energy
        j1 = J_energy(E1, tb, 1.0).raw_energy
        V["fores_two_paths"].record(-_rel(h_inf, h1 + j1))
        hats.append((s, h_inf))
        r_lim = h if s >= 0 else 0.0
        j_hat = J_energy(E1, tb, r_lim, RenormMode.DISCRETE)
        # the core correction H(r) vanishes for r = h (only the zero offset is inside)
        core = H_energy(E1, tb, r_lim).raw_energy if r_lim else 0.0
        V["equfin_two_paths"].record(-_rel(j_hat.value + core, h_inf))
        # monotonicity in R, stabilization beyond the diameter
        hv = [H_energy(E1, tb, R, RenormMode.DISCRETE).value for R in SUITE_R]
        for i in range(1, len(hv)):
            V["R_monotone"].record(hv[i - 1] - hv[i])
            if SUITE_R[i - 1] > diam:
                V["stabilization"].record(-abs(hv[i] - hv[i - 1]))
        if SUITE_R[-1] > diam:
            V["stabilization"].record(-abs(hv[-1] - h_inf))
        # monotonicity in r
        rs = ([0.0] if s < 0 else []) + [h, 2 * h, 0.5, 1.0, 2.0]
        jv = [J_energy(E1, tb, r, RenormMode.DISCRETE) for r in rs]
        for a, b in zip(jv, jv[1:]):
            V["r_monotone"].record(a.value - b.value)
        # rate bound against the r = h limit
        if s < 0:
            j_h = J_energy(E1, tb, h, RenormMode.DISCRETE).value
            for R, v in zip(SUITE_R[:3], hv[:3]):
                gap = v - j_h
                bound = vol ** 2 / R ** (d + s) + _rate_slack(E1)
                sc = _scale(v, j_h)
                V["rate_bound"].record(min(gap / sc, (bound - gap) / sc))
        # truncation and global bounds
        for rep in jv:
            r = rep.params.window.r
            if r > 0:
                bound = vol ** 2 / r ** (d + s)
                V["truncation_bound"].record((bound - abs(rep.raw_energy)) / _scale(bound))
            if r == 1.0:
                V["global_lower_bound"].record((rep.value + vol ** 2) / _scale(vol ** 2))
        if s == 0.0:
            h0 = H0_perimeter(E1, tb).value
            w = unit_ball_volume(d)
            lb = -vol * w * math.log(vol / w)
            V["log_lower_bound"].record((h0 - lb) / _scale(h0, lb))
        # submodularity
        for R in SUITE_SUBMOD_R:
            U, I = set_algebra(E1, E2, "union"), set_algebra(E1, E2, "intersection")
            lhs = math.fsum([H_energy(X, tb, R).raw_energy for X in (U, I)])
            rhs = math.fsum([H_energy(X, tb, R).raw_energy for X in (E1, E2)])
            V["submodularity"].record((rhs - lhs) / _scale(lhs, rhs))
        # engines
        R = (1.0, 2.0, 4.0)[trial % 3]
        a = H_energy(E1, tb, R, engine="direct").raw_energy
        b = H_energy(E1, tb, R, engine="conv").raw_energy
        r = max(h, 0.5)
        c = J_energy(E1, tb, r, engine="direct").raw_energy
        e = J_energy(E1, tb, r, engine="conv").raw_energy
        V["cross_engine"].record(-max(_rel(a, b), _rel(c, e)))
        # potentials
        r = 1.0
        field_ = potential_field(E1, tb, r, RenormMode.DISCRETE)
        total = math.fsum((field_[E1.cells] * dom.cell_volume).tolist())
        V["potential_consistency"].record(-_rel(total, jv[rs.index(1.0)].value))
        # tv on an indicator is its perimeter
        tv1 = tv_energy(E1, tb, 2.0)
        V["tv_single_layer"].record(-_rel(tv1, H_energy(E1, tb, 2.0).raw_energy))
    vals = [v for _, v in sorted(hats)]
    for a, b in zip(vals, vals[1:]):
        if vol > 0:
            V["sigma_monotone"].record(b - a)
    rec.points.append({"dim": dim, "trial": trial, "cells": E1.count,
                       "H_hat": {str(s): v for s, v in sorted(hats)}})


def _check_densities(dom, plan, clean, tables, V, rng, dim, threads):
    eta = random_density(dom, rng, smoothing=rng.uniform(1.0, 4.0), levels=int(rng.integers(2, 6)))
    star = rearrange(eta, plan)
    V["rearrange_mass"].record(0.0 if np.array_equal(np.sort(eta.cells.ravel()),
                                                     np.sort(star.cells.ravel())) else -1.0)
    V["rearrange_idempotent"].record(0.0 if rearrange(star, plan) == star else -1.0)
    ok = all(np.count_nonzero(eta.cells > t) == np.count_nonzero(star.cells > t)
             for t in np.unique(eta.cells))
    V["equimeasurable"].record(0.0 if ok else -1.0)
    t0 = tables[0.0]
    a = riesz_interaction(eta, eta, t0, Capped(1.0))
    b = riesz_interaction(star, star, t0, Capped(1.0))
    V["riesz_inequality"].record((b - a) / _scale(a, b))
    # annulus bound on a random subset of a ball around the center
    R = 1.0
    ball = (plan.dist2 * dom.cell_size ** 2) < R * R
    k = int(np.count_nonzero(ball))
    flat = np.zeros(ball.size, dtype=bool)
    chosen = rng.choice(k, size=max(1, k // 3), replace=False)
    flat[plan.cell_order[chosen]] = True
    F = IndicatorGrid(dom, flat.reshape(dom.extents))
    for s, tb in clean.items():
        lhs, rhs = annulus_bound_check(F, tb, R, cap_radius=None if s < 0 else 0.5)
        V["annulus_bound"].record((lhs - rhs) / _scale(lhs, rhs))
    # layer cake
    c = float(rng.uniform(0.1, 1.0))
    tv = tv_energy(eta, t0, 1.0)
    tvc = tv_energy(DensityGrid(dom, c * eta.cells), t0, 1.0)
    V["tv_homogeneity"].record(-_rel(tvc, c * tv))
    eta2 = random_density(dom, rng, smoothing=rng.uniform(1.0, 4.0), levels=int(rng.integers(2, 6)))
    mid = DensityGrid(dom, 0.5 * eta.cells + 0.5 * eta2.cells)
    lhs = tv_energy(mid, t0, 1.0)
    rhs = 0.5 * tv + 0.5 * tv_energy(eta2, t0, 1.0)
    V["tv_convexity"].record((rhs - lhs) / _scale(lhs, rhs))
