#!/usr/bin/env python3
"""Plot `pushframe sweep` or `pushframe pan` CSV output.

    python3 scripts/plot.py sweep.csv [out.png]
    python3 scripts/plot.py pan.csv [out.png]
"""
import csv
import sys
from collections import defaultdict

import matplotlib.pyplot as plt


def load(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def plot_sweep(rows, ax):
    series = defaultdict(list)
    for r in rows:
        series[(r["method"], int(r["b"]))].append((float(r["rate"]), float(r["ssim"])))
    for (method, b), pts in sorted(series.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=f"{method} b={b}")
    ax.set_xlabel("sampling rate m/n")


def plot_pan(rows, ax):
    ind = sorted((float(r["mbar_rate"]), float(r["ssim"])) for r in rows if r["route"] == "independent")
    best = {}
    for r in rows:
        if r["route"] == "pan":
            k = float(r["mbar_rate"])
            best[k] = max(best.get(k, -1.0), float(r["ssim"]))
    ax.plot([p[0] for p in ind], [p[1] for p in ind], marker="o", label="independent RGB")
    pts = sorted(best.items())
    ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="s", label="best pan-sharpened")
    ax.set_xlabel("effective rate m̄/n")


def main():
    if len(sys.argv) < 2:
        sys.exit(__doc__)
    rows = load(sys.argv[1])
    fig, ax = plt.subplots(figsize=(6, 4))
    (plot_pan if "route" in rows[0] else plot_sweep)(rows, ax)
    ax.set_ylabel("SSIM")
    ax.grid(alpha=0.3)
    ax.legend(fontsize="small")
    fig.tight_layout()
    if len(sys.argv) > 2:
        fig.savefig(sys.argv[2], dpi=150)
    else:
        plt.show()


if __name__ == "__main__":
    main()
