"""Disc against equal-area competitors, plus the small-mass split-pair instance."""

from _common import emit, parse_config
from fracperim.harness import IsoConfig, isoperimetric_experiment

if __name__ == "__main__":
    cfg, out = parse_config(IsoConfig, __doc__)
    rec = isoperimetric_experiment(cfg)
    emit(rec.to_dict(), out)
    raise SystemExit(0 if rec.passed else 5)
