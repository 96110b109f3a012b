"""Randomized property suite; exits 5 when any verdict fails."""

import sys
from dataclasses import dataclass, field

from _common import emit, parse_config
from fracperim.harness import property_suite


@dataclass
class Config:
    seed: int = 42
    dims: list = field(default_factory=lambda: [1, 2])
    trials: int = 20
    fault: str = None
    tolerance: float = 1e-9


if __name__ == "__main__":
    cfg, out = parse_config(Config, __doc__)
    rec = property_suite(cfg.seed, tuple(cfg.dims), cfg.trials, fault=cfg.fault,
                         tolerance=cfg.tolerance)
    emit(rec.to_dict(), out)
    for v in rec.verdicts:
        print(f"{v.id:24s} {'pass' if v.passed else 'FAIL'}  checks={v.checked}"
              f"  worst={v.worst_margin:.3g}", file=sys.stderr)
    raise SystemExit(0 if rec.passed else 5)
