"""Renormalized perimeter of a shape across sigma, with brackets around sigma = 0."""

from dataclasses import dataclass, field

from _common import emit, parse_config
from fracperim.harness import SweepConfig, sweep_sigma_continuity


@dataclass
class Config:
    shape: str = "disc"
    cell_size: float = 0.05
    sigma_grid: list = field(default_factory=lambda: [-0.75, -0.5, -0.25, 0.0, 0.25, 0.5, 0.75])
    renorm: str = "analytic"
    kmax: int = 8


SHAPES = {
    "disc": {"type": "ball", "center": [0.0, 0.0], "radius": 1.0},
    "interval": {"type": "box", "low": [0.0], "high": [1.0]},
    "square": {"type": "box", "low": [-0.8, -0.8], "high": [0.8, 0.8]},
}

if __name__ == "__main__":
    cfg, out = parse_config(Config, __doc__)
    sweep = SweepConfig(shape=SHAPES[cfg.shape], resolutions=[cfg.cell_size],
                        sigma_grid=cfg.sigma_grid, renorm=cfg.renorm)
    rec = sweep_sigma_continuity(sweep, kmax=cfg.kmax)
    emit(rec.to_dict(), out)
    raise SystemExit(0 if rec.passed else 5)
