"""Shared helpers for the experiment scripts."""

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from fracperim.harness import _clean


def parse_config(cls, description, argv=None):
    """Expose every dataclass field as a ``--flag``; lists take comma-separated values."""
    p = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, (list, tuple)):
            kind = type(default[0]) if default else float
            p.add_argument(flag, dest=f.name, default=default,
                           type=lambda s, k=kind: [k(x) for x in s.split(",")])
        elif isinstance(default, bool):
            p.add_argument(flag, dest=f.name, default=default, action=argparse.BooleanOptionalAction)
        else:
            p.add_argument(flag, dest=f.name, default=default,
                           type=type(default) if default is not None else str)
    p.add_argument("--out", type=Path, default=None, help="write the JSON result here")
    args = p.parse_args(argv)
    out = args.out
    cfg = cls(**{f.name: getattr(args, f.name) for f in dataclasses.fields(cls)})
    return cfg, out


def emit(result, out):
    text = json.dumps(_clean(result), indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)
        print(f"wrote {out}", file=sys.stderr)
