"""Run every experiment at its default settings into one output directory.

    python3 scripts/run_all.py results/ --seed 0
"""

import argparse
import sys
from pathlib import Path

from rcising.cli import EXPERIMENTS, main

ap = argparse.ArgumentParser()
ap.add_argument("outdir")
ap.add_argument("--seed", type=int, default=0)
ap.add_argument("--only", nargs="*", help="subset of experiment names")
args = ap.parse_args()

out = Path(args.outdir)
names = args.only or list(EXPERIMENTS)
status = 0
for name in names:
    suffix = ".json" if EXPERIMENTS[name].json_only else ".csv"
    print(f"{name} ...", flush=True)
    rc = main([name, "--seed", str(args.seed), "--out", str(out / (name + suffix))])
    if rc:
        print(f"{name} exited with {rc}", file=sys.stderr)
        status = rc
sys.exit(status)
