#!/usr/bin/env python3
"""Run every shipped preset through the CLI and collect the data files.

    python3 scripts/reproduce_figures.py --out results --threads 8
    python3 scripts/reproduce_figures.py --only fig4 fig5
"""

import argparse
import sys
from pathlib import Path

from jpspf import config
from jpspf.cli import main as cli


# presets carrying a sweep block go through `sweep`, the rest through `simulate`
def command_for(name: str) -> str:
    return "sweep" if "sweep" in config.load_preset(name) else "simulate"


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--threads", type=int, default=4)
    ap.add_argument("--only", nargs="*", default=None)
    args = ap.parse_args()
    names = args.only or config.preset_names()
    for name in names:
        cmd = command_for(name)
        print(f"{name}: jpspf {cmd}", flush=True)
        rc = cli([cmd, "--preset", name, "--out", str(args.out / name),
                  "--threads", str(args.threads)])
        if rc:
            return rc
    theory = ["theory", "--preset", "fig6", "--out", str(args.out / "theory")]
    return cli(theory)


if __name__ == "__main__":
    sys.exit(main())
