"""Render the CSVs written by ``bayesinv report`` with matplotlib.

    python3 docs/plot_report.py results/fermi/report [--save figures/]

Convenience only: needs ``pip install artifact[plot]`` and is not covered by the tests.
"""

import argparse
import os

import matplotlib.pyplot as plt
import numpy as np


def load(report_dir, name):
    return np.genfromtxt(os.path.join(report_dir, name), delimiter=",", names=True)


def plot_heatmap(ax, t):
    ls, ks = np.unique(t["l"]), np.unique(t["k"])
    z = np.full((ls.size, ks.size), np.nan)
    for l, k, s in zip(t["l"], t["k"], t["score"]):
        z[np.searchsorted(ls, l), np.searchsorted(ks, k)] = s
    im = ax.imshow(z, aspect="auto", origin="lower",
                   extent=(ks[0] - 0.5, ks[-1] + 0.5, ls[0] - 0.5, ls[-1] + 0.5))
    ax.set(xlabel="order k", ylabel="family l", title="score over (k, l)")
    plt.colorbar(im, ax=ax)


def main(argv=None):
    p = argparse.ArgumentParser()
    p.add_argument("report_dir")
    p.add_argument("--save", help="directory for PNGs instead of showing windows")
    args = p.parse_args(argv)
    d = args.report_dir

    fig, axes = plt.subplots(2, 2, figsize=(11, 8))
    plot_heatmap(axes[0, 0], load(d, "heatmap.csv"))

    if os.path.exists(os.path.join(d, "posterior_l.csv")):
        pl = load(d, "posterior_l.csv")
        axes[0, 1].bar(pl["l"], pl["p"])
        axes[0, 1].set(xlabel="family l", ylabel="p(l | y)")

    rho = load(d, "overlay_rho.csv")
    axes[1, 0].plot(rho["r"], rho["rho"], label="true")
    axes[1, 0].plot(rho["r"], rho["rho_hat"], "--", label="estimate")
    axes[1, 0].set(xlabel="r", ylabel="rho(r)")
    axes[1, 0].legend()

    ff = load(d, "overlay_F.csv")
    axes[1, 1].plot(ff["q"], ff["log10_abs_F"], "o", label="data")
    axes[1, 1].plot(ff["q"], ff["log10_abs_F_hat"], "-", label="fit")
    axes[1, 1].set(xlabel="q", ylabel="log10 |F(q)|")
    axes[1, 1].legend()
    fig.tight_layout()

    if args.save:
        os.makedirs(args.save, exist_ok=True)
        fig.savefig(os.path.join(args.save, "report.png"), dpi=120)
    else:
        plt.show()


if __name__ == "__main__":
    main()
