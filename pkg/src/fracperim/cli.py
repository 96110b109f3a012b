"""Command-line entry point: ``fracperim <command> [options]``.

Exit codes: 0 ok, 2 config error, 3 I/O error, 4 divergent request,
5 at least one verdict failed.
"""

import argparse
import json
import math
import sys
import warnings

from . import __version__, parallel
from .config import ConfigError, build, load_config, merge, parse_float, parse_window
from .energies import H_energy, J_energy, table_for
from .errors import (CoverageError, DivergenceError, FormatError, FracPerimError,
                     ParameterError)
from .formats import read_grid, write_grid
from .geometry import (DensityGrid, GridDomain, IndicatorGrid, diameter, rasterize,
                       shape_from_dict, volume)
from .harness import (IsoConfig, SweepConfig, _clean, isoperimetric_experiment,
                      property_suite, sweep_R_limit, sweep_r_limit, sweep_sigma_continuity)
from .kernels import RenormMode
from .rearrangement import build_plan, rearrange
from .tv import tv_energy

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGENCE, EXIT_VERDICT = 0, 2, 3, 4, 5


class _IOFailure(Exception):
    pass


def _emit(payload, args):
    text = json.dumps(_clean(payload), indent=2, sort_keys=True)
    sys.stdout.write(text + "\n")


def _write_text(path, text):
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise _IOFailure(f"cannot write {path}: {exc.strerror or exc}") from None


def _read_grid(path):
    try:
        return read_grid(path)
    except OSError as exc:
        raise _IOFailure(f"cannot read {path}: {exc.strerror or exc}") from None
    except FormatError as exc:
        raise _IOFailure(f"{path}: {exc}") from None


def _renorm(text):
    if text in (None, "none"):
        return None
    try:
        return RenormMode(text)
    except ValueError:
        raise ConfigError(f"key 'renorm': expected analytic, discrete or none, got {text!r}") from None


def _write_record(rec, output):
    if output:
        _write_text(f"{output}.json", rec.to_json())
        _write_text(f"{output}.csv", rec.to_csv())


# -- commands -------------------------------------------------------------------------

def cmd_rasterize(args):
    cfg = merge(load_config(args.config), {"cell_size": args.cell_size, "rule": args.rule,
                                            "output": args.output})
    allowed = {"shape", "cell_size", "rule", "output", "pad_cells", "domain"}
    for key in cfg:
        if key not in allowed:
            raise ConfigError(f"rasterize: unknown key {key!r} (allowed: {', '.join(sorted(allowed))})")
    for key in ("shape", "cell_size", "output"):
        if key not in cfg:
            raise ConfigError(f"rasterize: missing key {key!r}")
    shape = shape_from_dict(cfg["shape"])
    h = parse_float(cfg["cell_size"], "cell_size")
    if "domain" in cfg:
        d = cfg["domain"]
        if not isinstance(d, dict) or "extents" not in d or "origin" not in d:
            raise ConfigError("key 'domain': needs 'extents' and 'origin'")
        dom = GridDomain(len(d["extents"]), d["extents"], h, d["origin"])
    else:
        lo, hi = shape.bounds()
        dom = GridDomain.around(lo, hi, h, int(cfg.get("pad_cells", 2)))
    E = rasterize(shape, dom, cfg.get("rule", "center"))
    try:
        write_grid(cfg["output"], E)
    except OSError as exc:
        raise _IOFailure(f"cannot write {cfg['output']}: {exc.strerror or exc}") from None
    _emit({"version": __version__, "config": cfg, "cells": E.count, "volume": volume(E),
           "diameter": diameter(E) if E.count else 0.0, "extents": list(dom.extents)}, args)
    return EXIT_OK


def cmd_energy(args):
    cfg = merge(load_config(args.config), {
        "grid": args.grid, "sigma": args.sigma, "window": args.window, "renorm": args.renorm,
        "engine": args.engine, "cache": None if args.cache is None else args.cache})
    for key in cfg:
        if key not in ("grid", "sigma", "window", "renorm", "engine", "cache"):
            raise ConfigError(f"energy: unknown key {key!r}")
    for key in ("grid", "sigma", "window"):
        if key not in cfg:
            raise ConfigError(f"energy: missing key {key!r}")
    cfg.setdefault("renorm", "none")
    cfg.setdefault("engine", "direct")
    cfg.setdefault("cache", True)
    sigma = parse_float(cfg["sigma"], "sigma")
    kind, radius = parse_window(cfg["window"])
    renorm = _renorm(cfg.get("renorm", "none"))
    engine = cfg.get("engine", "direct")
    E = _read_grid(cfg["grid"])
    reach = radius if math.isfinite(radius) else 0.0
    if renorm is RenormMode.DISCRETE:
        reach = max(reach, 1.0)
    table = table_for(E, sigma, min_reach=reach, use_cache=cfg.get("cache", True),
                      threads=parallel.resolve_threads(args.threads))
    if kind == "R":
        rep = H_energy(E, table, radius, renorm, engine)
    else:
        rep = J_energy(E, table, radius, renorm, engine)
    out = rep.to_dict()
    out.update({"version": __version__, "config": cfg})
    _emit(out, args)
    return EXIT_OK


_SWEEPS = {"R": sweep_R_limit, "r": sweep_r_limit, "sigma": sweep_sigma_continuity}


def cmd_sweep(args):
    cfg = load_config(args.config)
    kind = args.kind or cfg.pop("kind", None)
    cfg.pop("kind", None)
    if kind not in _SWEEPS:
        raise ConfigError(f"sweep: key 'kind' must be one of R, r, sigma, got {kind!r}")
    if args.engine:
        cfg["engine"] = args.engine
    if args.threads is not None:
        cfg["threads"] = args.threads
    if "shape" not in cfg:
        raise ConfigError("sweep: missing key 'shape'")
    sc = build(SweepConfig, cfg, "sweep")
    rec = _SWEEPS[kind](sc)
    _write_record(rec, args.output)
    _emit(rec.to_dict(), args)
    return EXIT_OK if rec.passed else EXIT_VERDICT


def cmd_iso(args):
    cfg = load_config(args.config)
    if args.threads is not None:
        cfg["threads"] = args.threads
    ic = build(IsoConfig, cfg, "iso")
    rec = isoperimetric_experiment(ic)
    _write_record(rec, args.output)
    _emit(rec.to_dict(), args)
    return EXIT_OK if rec.passed else EXIT_VERDICT


def cmd_suite(args):
    dims = tuple(int(d) for part in args.dim for d in str(part).split(","))
    rec = property_suite(args.seed, dims, args.trials, args.threads, args.fault)
    _write_record(rec, args.output)
    _emit(rec.to_dict(), args)
    return EXIT_OK if rec.passed else EXIT_VERDICT


def cmd_rearrange(args):
    eta = _read_grid(args.grid)
    star = rearrange(eta, build_plan(eta.domain))
    try:
        write_grid(args.output, star)
    except OSError as exc:
        raise _IOFailure(f"cannot write {args.output}: {exc.strerror or exc}") from None
    mass = volume(eta) if isinstance(eta, IndicatorGrid) else eta.mass()
    _emit({"version": __version__, "config": {"grid": args.grid, "output": args.output},
           "mass": mass, "center": list(eta.domain.center_index)}, args)
    return EXIT_OK


def cmd_tv(args):
    u = _read_grid(args.grid)
    R = parse_float(args.R, "R")
    table = table_for(u, args.sigma, min_reach=R if math.isfinite(R) else 0.0, use_cache=True,
                      threads=parallel.resolve_threads(args.threads))
    value = tv_energy(u, table, R, args.engine)
    _emit({"version": __version__, "config": {"grid": args.grid, "sigma": args.sigma, "R": R,
                                              "engine": args.engine},
           "tv": value, "table_fingerprint": table.fingerprint}, args)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------

def build_parser():
    p = argparse.ArgumentParser(prog="fracperim", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"fracperim {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--threads", type=int, default=None, help="worker cap (default: all cores)")
        sp.add_argument("--json", action="store_true", help="JSON only on stdout, no stderr notes")

    sp = sub.add_parser("rasterize", help="rasterize a shape into an FPGR grid")
    sp.add_argument("--config")
    sp.add_argument("--cell-size", dest="cell_size", type=float)
    sp.add_argument("--rule", choices=["center", "fraction"])
    sp.add_argument("--output")
    common(sp)
    sp.set_defaults(func=cmd_rasterize)

    sp = sub.add_parser("energy", help="evaluate one energy on a grid file")
    sp.add_argument("grid", nargs="?")
    sp.add_argument("--config")
    sp.add_argument("--sigma", type=float)
    sp.add_argument("--window", help="R=<v> (H-type, v may be inf) or r=<v> (J-type)")
    sp.add_argument("--renorm", choices=["analytic", "discrete", "none"])
    sp.add_argument("--engine", choices=["direct", "conv"])
    sp.add_argument("--no-cache", dest="cache", action="store_const", const=False, default=None)
    common(sp)
    sp.set_defaults(func=cmd_energy)

    sp = sub.add_parser("sweep", help="R, r or sigma sweep from a config file")
    sp.add_argument("--config", required=True)
    sp.add_argument("--kind", choices=sorted(_SWEEPS))
    sp.add_argument("--engine", choices=["direct", "conv"])
    sp.add_argument("--output", help="path prefix for .json and .csv records")
    common(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("iso", help="isoperimetric comparison of the disc against competitors")
    sp.add_argument("--config")
    sp.add_argument("--output")
    common(sp)
    sp.set_defaults(func=cmd_iso)

    sp = sub.add_parser("suite", help="randomized property suite")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--dim", action="append", default=None, help="dimension(s), e.g. 1 or 1,2")
    sp.add_argument("--trials", type=int, default=20)
    sp.add_argument("--fault", choices=["perturb_table"])
    sp.add_argument("--output")
    common(sp)
    sp.set_defaults(func=cmd_suite)

    sp = sub.add_parser("rearrange", help="symmetric decreasing rearrangement of a grid")
    sp.add_argument("grid")
    sp.add_argument("--output", required=True)
    common(sp)
    sp.set_defaults(func=cmd_rearrange)

    sp = sub.add_parser("tv", help="layer-cake total variation of a density grid")
    sp.add_argument("grid")
    sp.add_argument("--sigma", type=float, required=True)
    sp.add_argument("--R", default="1.0")
    sp.add_argument("--engine", choices=["direct", "conv"], default="direct")
    common(sp)
    sp.set_defaults(func=cmd_tv)
    return p


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    if getattr(args, "command", None) == "suite" and args.dim is None:
        args.dim = ["1"]
    parallel.set_threads(args.threads)
    try:
        with warnings.catch_warnings():
            if args.json:
                warnings.simplefilter("ignore")
            return args.func(args)
    except DivergenceError as exc:
        print(f"fracperim: divergent request: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except _IOFailure as exc:
        print(f"fracperim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"fracperim: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ConfigError, ParameterError, CoverageError, FracPerimError) as exc:
        print(f"fracperim: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    finally:
        parallel.set_threads(None)


if __name__ == "__main__":
    sys.exit(main())
