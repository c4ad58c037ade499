#!/usr/bin/env python3
"""Plot NMSD curves written by `pgsr run` (one <label>.csv per algorithm)."""

import argparse
import csv
import math
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_curve(path):
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    return [int(r["iter"]) for r in rows], [float(r["mean_nmsd"]) for r in rows]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("run_dir", type=pathlib.Path)
    p.add_argument("-o", "--output", type=pathlib.Path, default=None)
    p.add_argument("--linear", action="store_true", help="linear y axis instead of dB")
    args = p.parse_args()

    fig, ax = plt.subplots(figsize=(6, 4))
    for csv_path in sorted(args.run_dir.glob("*.csv")):
        if csv_path.stem in ("curves_long", "trace") or csv_path.stem.endswith("_gmsd"):
            continue
        n, v = read_curve(csv_path)
        y = v if args.linear else [10 * math.log10(max(x, 1e-300)) for x in v]
        ax.plot(n, y, label=csv_path.stem)
    ax.set_xlabel("iteration")
    ax.set_ylabel("NMSD" if args.linear else "NMSD (dB)")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(args.output or args.run_dir / "nmsd.png", dpi=150)


if __name__ == "__main__":
    main()
