"""Block entropy of the ground state against block length, printed as a table.

    python3 scripts/entropy_plateau.py --theta 0.3 --m 4 --L-max 8
"""

import argparse

from rcising.spinchain import SpinChainParams, block_density, entanglement_entropy

ap = argparse.ArgumentParser()
ap.add_argument("--theta", type=float, default=0.3)
ap.add_argument("--m", type=int, default=4)
ap.add_argument("--L-max", type=int, default=8)
args = ap.parse_args()

prev = None
print("L  entropy_bits  increment")
for L in range(1, args.L_max + 1):
    s = entanglement_entropy(block_density(SpinChainParams.from_theta(args.m, L, args.theta)))
    inc = "" if prev is None else f"{s - prev:+.5f}"
    print(f"{L:<2d} {s:.6f}      {inc}")
    prev = s
