"""Matplotlib figures written next to the CSV reports (Agg backend, no display)."""

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PNG_META = {"Software": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata=PNG_META)
    plt.close(fig)
    return path


def plot_confusion(cm, path, title=None):
    counts = np.asarray(cm.counts)
    names = cm.class_names or [str(i) for i in range(len(counts))]
    size = max(4.0, 0.3 * len(counts) + 2.0)
    fig, ax = plt.subplots(figsize=(size, size))
    rows = counts.sum(axis=1, keepdims=True)
    ax.imshow(counts / np.maximum(rows, 1), cmap="Blues", vmin=0.0, vmax=1.0)
    ticks = np.arange(len(counts))
    ax.set_xticks(ticks)
    ax.set_yticks(ticks)
    ax.set_xticklabels(names, rotation=90, fontsize=7)
    ax.set_yticklabels(names, fontsize=7)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    if len(counts) <= 20:
        for i, j in zip(*np.nonzero(counts)):
            ax.text(j, i, str(counts[i, j]), ha="center", va="center", fontsize=7,
                    color="white" if counts[i, j] > 0.5 * rows[i, 0] else "black")
    if title:
        ax.set_title(title)
    return _save(fig, path)


def plot_sweep(rows, path):
    ks = [r["K"] for r in rows]
    acc = [100.0 * r["accuracy"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.plot(ks, acc, marker="o")
    if len(ks) > 1 and min(ks) > 0:
        ax.set_xscale("log", base=2)
    ax.set_xticks(ks)
    ax.set_xticklabels([str(k) for k in ks])
    ax.set_xlabel("dictionary size K")
    ax.set_ylabel("recognition rate (%)")
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_ablation(rows, path):
    names = [r["condition"] for r in rows]
    acc = [100.0 * r["accuracy"] for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    bars = ax.bar(names, acc, color=["#9ecae1", "#3182bd", "#fdae6b", "#e6550d"][:len(rows)])
    for bar, a in zip(bars, acc):
        ax.text(bar.get_x() + bar.get_width() / 2, a, f"{a:.1f}", ha="center", va="bottom",
                fontsize=8)
    ax.set_ylabel("recognition rate (%)")
    ax.set_ylim(0, 105)
    return _save(fig, path)
