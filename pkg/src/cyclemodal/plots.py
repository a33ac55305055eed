"""Static SVG figures rendered from the report CSVs (needs matplotlib)."""
from __future__ import annotations

import os

import numpy as np


def _load(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    return header, np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)


def render_report(report_dir) -> list:
    """Write one SVG per figure class next to the CSVs; returns their paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # fixed ids so reruns give byte-identical files
    matplotlib.rcParams["svg.hashsalt"] = "cyclemodal"
    out = []

    def save(fig, name):
        path = os.path.join(report_dir, name)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        out.append(path)

    # physical PSDs
    _, nat = _load(os.path.join(report_dir, "psd_natural.csv"))
    fig, ax = plt.subplots(figsize=(6, 3.5))
    for j in range(1, nat.shape[1]):
        ax.semilogy(nat[:, 0], nat[:, j], label=f"y{j}")
    ax.set(xlabel="frequency [Hz]", ylabel="PSD", xlim=(0, 2))
    ax.legend()
    save(fig, "psd_natural.svg")

    # PCA row over cycle-GAN row
    _, pca = _load(os.path.join(report_dir, "psd_pca.csv"))
    _, modal = _load(os.path.join(report_dir, "psd_modal.csv"))
    d = pca.shape[1] - 1
    fig, axes = plt.subplots(2, d, figsize=(3 * d, 5), squeeze=False, sharex=True)
    for row, (tab, name) in enumerate(((pca, "PCA"), (modal, "cycle-GAN"))):
        for j in range(d):
            ax = axes[row, j]
            ax.semilogy(tab[:, 0], tab[:, j + 1])
            ax.set_xlim(0, 2)
            ax.set_title(f"{name} u{j + 1}", fontsize=9)
    save(fig, "psd_pca_vs_modal.svg")

    # reconstruction overlay
    header, rec = _load(os.path.join(report_dir, "reconstruction.csv"))
    d = (len(header) - 1) // 2
    fig, axes = plt.subplots(d, 1, figsize=(7, 2 * d), squeeze=False, sharex=True)
    for j in range(d):
        ax = axes[j, 0]
        ax.plot(rec[:, 0], rec[:, 1 + j], lw=1.5, label="measured")
        ax.plot(rec[:, 0], rec[:, 1 + d + j], "--", lw=1, label="superposed")
        ax.set_ylabel(f"y{j + 1}")
    axes[0, 0].legend(fontsize=8)
    axes[-1, 0].set_xlabel("time [s]")
    save(fig, "reconstruction.svg")

    # correlation heat maps
    for kind in ("pearson", "distance"):
        path = os.path.join(report_dir, f"correlation_{kind}.csv")
        with open(path) as fh:
            labels = fh.readline().strip().split(",")[1:]
        vals = np.loadtxt(path, delimiter=",", skiprows=1, usecols=range(1, len(labels) + 1),
                          ndmin=2)
        fig, ax = plt.subplots(figsize=(3.5, 3))
        im = ax.imshow(np.abs(vals), vmin=0, vmax=1, cmap="viridis")
        ax.set_xticks(range(len(labels)), labels)
        ax.set_yticks(range(len(labels)), labels)
        fig.colorbar(im, ax=ax)
        ax.set_title(kind)
        save(fig, f"correlation_{kind}.svg")
    return out
