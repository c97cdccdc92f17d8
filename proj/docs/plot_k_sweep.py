#!/usr/bin/env python3
"""Plot mixer FLOPs vs window length K from an analyze --k-sweep CSV.

Usage:
    lamnet analyze --k-sweep sweep.csv
    python3 docs/plot_k_sweep.py sweep.csv [out.png]

The focal-window mixer is affine in K; the dense-window reference grows
quadratically. Plotting both against K makes the gap obvious.
"""
import csv
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def main() -> int:
    if len(sys.argv) < 2:
        print(__doc__)
        return 2
    path = sys.argv[1]
    out = sys.argv[2] if len(sys.argv) > 2 else "k_sweep.png"

    ks, fsa, window = [], [], []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            ks.append(int(row["k"]))
            fsa.append(int(row["fsa_mixer_flops"]))
            window.append(int(row["window_mixer_flops"]))

    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, fsa, "o-", label="focal window (affine in K)")
    ax.plot(ks, window, "s--", label="dense window (quadratic in K)")
    ax.set_xlabel("window length K")
    ax.set_ylabel("mixer FLOPs per frame")
    ax.set_title("token-mixer cost vs window length")
    ax.legend()
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
