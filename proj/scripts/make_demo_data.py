#!/usr/bin/env python3
"""Write a small synthetic 54-sensor dataset in the Intel lab file layout.

mote_locs.txt: `id x y` per line, ids 1..54.
data.txt: `date time epoch moteid temperature humidity light voltage`.
"""

import argparse
import math
import random
from pathlib import Path


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="data/demo54")
    ap.add_argument("--seed", type=int, default=54)
    ap.add_argument("--epochs", type=int, default=4)
    args = ap.parse_args()

    rng = random.Random(args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    coords = []
    for i in range(54):
        # Sensors along the walls and in a few rows, like a lab floor plan.
        row, col = divmod(i, 9)
        x = 2.0 + col * 4.0 + rng.uniform(-1.0, 1.0)
        y = 2.0 + row * 5.0 + rng.uniform(-1.0, 1.0)
        coords.append((round(x, 2), round(y, 2)))
    with open(out / "mote_locs.txt", "w") as f:
        for i, (x, y) in enumerate(coords, start=1):
            f.write(f"{i} {x} {y}\n")

    with open(out / "data.txt", "w") as f:
        for epoch in range(1, args.epochs + 1):
            drift = 0.3 * epoch
            for i, (x, y) in enumerate(coords, start=1):
                if epoch > 1 and rng.random() < 0.05:
                    continue  # dropped reading
                t = 19.0 + drift + 2.0 * math.sin(x / 9.0) + 1.5 * math.cos(y / 7.0) + rng.gauss(0.0, 0.1)
                minute = epoch // 2
                second = (epoch % 2) * 30
                f.write(
                    f"2004-02-28 01:{minute:02d}:{second:02d}.000000 {epoch} {i} {t:.4f} "
                    f"{40.0 + rng.uniform(-2, 2):.4f} {rng.uniform(50, 150):.2f} 2.68\n"
                )


if __name__ == "__main__":
    main()
