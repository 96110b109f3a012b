"""Unit-interval closed forms under grid refinement.

Tracks three values whose continuum limits are known: the sigma = 0.5
renormalized perimeter (4), the 0-fractional perimeter (2) and the
sigma = -0.5 Riesz energy (-8/3).
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from _common import emit, parse_config
from fracperim.energies import H0_perimeter, H_energy, J_energy, table_for
from fracperim.geometry import GridDomain, IndicatorGrid
from fracperim.kernels import RenormMode


@dataclass
class Config:
    levels: list = field(default_factory=lambda: [6, 7, 8, 9, 10, 11])
    engine: str = "direct"


def interval(n):
    dom = GridDomain(1, (n + 8,), 1.0 / n, (-4.0 / n,))
    cells = np.zeros(n + 8, bool)
    cells[4:4 + n] = True
    return IndicatorGrid(dom, cells)


def run(cfg):
    rows = []
    for k in cfg.levels:
        E = interval(2 ** k)
        h_half = H_energy(E, table_for(E, 0.5), math.inf, RenormMode.ANALYTIC, cfg.engine).value
        h_zero = H0_perimeter(E, table_for(E, 0.0, min_reach=1.0), cfg.engine).value
        riesz = J_energy(E, table_for(E, -0.5), 0.0, None, cfg.engine).value
        rows.append({"h": 2.0 ** -k, "H_hat_0.5": h_half, "err_0.5": h_half - 4.0,
                     "H0": h_zero, "err_0": h_zero - 2.0,
                     "J_-0.5": riesz, "err_-0.5": riesz + 8 / 3})
    return {"config": asdict(cfg), "rows": rows}


if __name__ == "__main__":
    cfg, out = parse_config(Config, __doc__.splitlines()[0])
    emit(run(cfg), out)
