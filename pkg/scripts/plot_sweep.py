"""
Plot SLNR and SNR versus the number of faulty elements from sweep.csv.

    python scripts/plot_sweep.py results/sweep.csv [out.png]
"""

import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt


def main(path: str, out: str = "sweep.png") -> None:
    series = defaultdict(lambda: ([], [], []))
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            xs, slnr, snr = series[row["method"]]
            xs.append(int(row["fault_count"]))
            slnr.append(float(row["mean_slnr_db"]))
            snr.append(float(row["mean_snr_db"]))

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for method, (xs, slnr, snr) in series.items():
        ax1.plot(xs, slnr, marker="o", label=method)
        ax2.plot(xs, snr, marker="o", label=method)
    ax1.set(xlabel="faulty elements B", ylabel="SLNR [dB]")
    ax2.set(xlabel="faulty elements B", ylabel="SNR [dB]")
    ax1.legend()
    ax1.grid(True)
    ax2.grid(True)
    fig.tight_layout()
    fig.savefig(out, dpi=150)


if __name__ == "__main__":
    main(*sys.argv[1:])
