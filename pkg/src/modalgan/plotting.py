"""Matplotlib figures written next to the CSV/JSON outputs."""

from __future__ import annotations

import csv

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamps so repeated renders are byte-identical
plt.rcParams["svg.hashsalt"] = "modalgan"
SAVE_KW = {"metadata": {"Date": None}}


class PlotInputError(ValueError):
    pass


def read_samples_csv(path):
    """Read a ``mode,<c0>,<c1>,...`` CSV; returns ``(tags, coords, header)``."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise PlotInputError(f"{path} has no samples")
    header = rows[0]
    body = np.array(rows[1:], dtype=np.float64)
    return body[:, 0].astype(np.int64), body[:, 1:], header


def write_samples_csv(path, tags, coords, prefix="x"):
    coords = np.atleast_2d(coords)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode"] + [f"{prefix}_{j}" for j in range(coords.shape[1])])
        for t, row in zip(tags, coords):
            w.writerow([int(t)] + [repr(float(v)) for v in row])


def scatter_by_mode(tags, coords, out_path, title=None):
    """Scatter plot with one colour per mode tag; markers of mode k live in SVG group ``mode-k``."""
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 2:
        dim = coords.shape[1] if coords.ndim == 2 else coords.ndim
        raise PlotInputError(
            f"scatter plots need 2-D points, got {dim} coordinates; "
            "use the 'eval' command to summarise image data"
        )
    tags = np.asarray(tags, dtype=np.int64)
    fig, ax = plt.subplots(figsize=(5, 4))
    modes = np.unique(tags)
    cmap = plt.get_cmap("tab10")
    for k in modes:
        sel = tags == k
        sc = ax.scatter(coords[sel, 0], coords[sel, 1], s=6, color=cmap(int(k) % 10),
                        label=f"mode {k}: {sel.mean():.3f}")
        sc.set_gid(f"mode-{k}")
    ax.legend(title="modal mass", loc="best", fontsize=8, markerscale=2)
    ax.set_xlabel("x_0")
    ax.set_ylabel("x_1")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, **SAVE_KW)
    plt.close(fig)


def plot_trace(trace_rows, out_path):
    rows = np.asarray(trace_rows, dtype=np.float64)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if rows.size:
        for col, name in zip((1, 2, 3), ("d_loss", "g_loss", "inv_loss")):
            ax.plot(rows[:, 0], rows[:, col], label=name)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **SAVE_KW)
    plt.close(fig)


def plot_ablation(rows, out_path, metrics=("acc", "nmi", "ari")):
    """Grouped bars of clustering metrics, one panel per dataset."""
    datasets = list(dict.fromkeys(r["dataset"] for r in rows))
    fig, axes = plt.subplots(1, len(datasets), figsize=(4.5 * len(datasets), 3.5), squeeze=False)
    width = 0.8 / len(metrics)
    for ax, name in zip(axes[0], datasets):
        sub = [r for r in rows if r["dataset"] == name]
        xs = np.arange(len(sub))
        for j, met in enumerate(metrics):
            vals = [r.get(met, np.nan) if r["status"] == "ok" else np.nan for r in sub]
            ax.bar(xs + (j - (len(metrics) - 1) / 2) * width, vals, width, label=met.upper())
        ax.set_xticks(xs)
        ax.set_xticklabels([r["combo"] for r in sub], rotation=30, fontsize=8)
        ax.set_ylim(0, 1.05)
        ax.set_title(name)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, **SAVE_KW)
    plt.close(fig)
