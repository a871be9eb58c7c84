"""Write the bundled PBG-like rate table.

The rate is a damped oscillation ``A exp(-t/tau) sin(w t)`` sampled on a
uniform grid. Its running integral levels off at ``A w / (1/tau^2 + w^2)``,
so the excited population freezes at a nonzero value. The shape is
qualitative only and is not fitted to any particular band-gap reservoir.
"""
import argparse
from pathlib import Path

import numpy as np

from nmqj.model import Tabulated, write_rate_table


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=Path("src/nmqj/data/pbg_like_rate.csv"))
    ap.add_argument("--amplitude", type=float, default=3.0)
    ap.add_argument("--tau", type=float, default=2.0)
    ap.add_argument("--omega", type=float, default=2.0)
    ap.add_argument("--t-max", type=float, default=20.0)
    ap.add_argument("--spacing", type=float, default=0.01)
    args = ap.parse_args()
    n = int(round(args.t_max / args.spacing))
    t = np.linspace(0.0, args.t_max, n + 1)
    rate = args.amplitude * np.exp(-t / args.tau) * np.sin(args.omega * t)
    write_rate_table(args.out, Tabulated(t, rate, source="generated"))
    plateau = args.amplitude * args.omega / (1 / args.tau**2 + args.omega**2)
    print(f"wrote {args.out} ({n + 1} rows); asymptotic integral {plateau:.6f}")


if __name__ == "__main__":
    main()
