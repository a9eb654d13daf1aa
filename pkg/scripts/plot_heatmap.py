"""
Render heatmap_<method>.csv, marking faulty elements from mask.csv in an inset.

    python scripts/plot_heatmap.py results/heatmap_max_slnr.csv results/mask.csv [out.png]
"""

import csv
import sys

import matplotlib.pyplot as plt
import numpy as np


def _read(path: str):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def main(heatmap: str, mask: str, out: str = "heatmap.png") -> None:
    rows = _read(heatmap)
    xs = sorted({float(r["x_m"]) for r in rows})
    ys = sorted({float(r["y_m"]) for r in rows})
    grid = np.array([float(r["power_dbm"]) for r in rows]).reshape(len(ys), len(xs))

    cells = _read(mask)
    nx = 1 + max(int(c["ix"]) for c in cells)
    ny = 1 + max(int(c["iy"]) for c in cells)
    faulty = np.zeros((ny, nx))
    for c in cells:
        faulty[int(c["iy"]), int(c["ix"])] = int(c["faulty"])

    fig, ax = plt.subplots(figsize=(6, 5))
    mesh = ax.pcolormesh(xs, ys, grid, shading="nearest")
    fig.colorbar(mesh, ax=ax, label="received power [dBm]")
    ax.set(xlabel="x [m]", ylabel="y [m]")
    inset = ax.inset_axes([0.72, 0.72, 0.25, 0.25])
    inset.imshow(faulty, origin="lower", cmap="Reds", vmin=0, vmax=1)
    inset.set_xticks([])
    inset.set_yticks([])
    fig.tight_layout()
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:])
