"""Contour plots of the decision grids written by ``armed run``.

    python demos/plot_grids.py results/sim2/grids armed 0 1 2
"""

import csv
import sys
from pathlib import Path

import matplotlib.pyplot as plt
import numpy as np


def read_grid(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    x1 = np.array([float(r["x1"]) for r in rows])
    x2 = np.array([float(r["x2"]) for r in rows])
    p = np.array([float(r["probability"]) for r in rows])
    k = int(round(np.sqrt(len(rows))))
    return x1.reshape(k, k), x2.reshape(k, k), p.reshape(k, k)


def main(grid_dir, variant, clusters):
    fig, axes = plt.subplots(1, len(clusters), figsize=(4 * len(clusters), 4), squeeze=False)
    for ax, c in zip(axes[0], clusters):
        xx, yy, p = read_grid(Path(grid_dir) / f"{variant}_{c}.csv")
        cs = ax.contourf(xx, yy, p, levels=np.linspace(0, 1, 11), cmap="coolwarm")
        ax.contour(xx, yy, p, levels=[0.5], colors="k", linewidths=1)
        ax.set_title(f"{variant}, cluster {c}")
        ax.set_aspect("equal")
    fig.colorbar(cs, ax=axes[0].tolist(), shrink=0.8)
    out = Path(grid_dir) / f"{variant}_contours.png"
    fig.savefig(out, dpi=120)
    print(f"wrote {out}")


if __name__ == "__main__":
    if len(sys.argv) < 4:
        sys.exit(__doc__)
    main(sys.argv[1], sys.argv[2], [int(c) for c in sys.argv[3:]])
