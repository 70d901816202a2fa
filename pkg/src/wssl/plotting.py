"""Report figures written next to the tabular outputs."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

CATEGORY_COLORS = plt.get_cmap("tab10")


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_convergence(objectives, path, title="WSSL restricted objective"):
    """Objective after each half-step (coefficient step, label step)."""
    obj = np.asarray(objectives, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    steps = np.arange(1, len(obj) + 1) / 2.0
    ax.plot(steps, obj, "-", color="0.6", lw=1)
    ax.plot(steps[0::2], obj[0::2], "o", ms=4, label="after U-step")
    ax.plot(steps[1::2], obj[1::2], "s", ms=4, label="after label step")
    ax.set_xlabel("iteration")
    ax.set_ylabel("objective")
    ax.set_title(title)
    ax.legend(frameon=False, fontsize=8)
    return _finish(fig, path)


def plot_accuracy(per_category, path, average=None, names=None):
    cats = sorted(per_category)
    vals = [per_category[c] for c in cats]
    labels = [names[c] if names else str(c) for c in cats]
    fig, ax = plt.subplots(figsize=(max(4, 0.5 * len(cats) + 2), 3.2))
    ax.bar(range(len(cats)), vals, color=[CATEGORY_COLORS(c % 10) for c in cats])
    if average is not None:
        ax.axhline(average, color="k", ls="--", lw=1, label=f"average {average:.1f}")
        ax.legend(frameon=False, fontsize=8)
    ax.set_xticks(range(len(cats)))
    ax.set_xticklabels(labels)
    ax.set_ylim(0, 100)
    ax.set_xlabel("category")
    ax.set_ylabel("pixel accuracy (%)")
    return _finish(fig, path)


def plot_noise_sweep(rows, path):
    """Mean and std of accuracy against the percentage of noisily tagged images."""
    levels = sorted({r["noise"] for r in rows})
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for method, marker in (("wssl", "o"), ("lgc", "s")):
        acc = np.array([[r[method] for r in rows if r["noise"] == p] for p in levels])
        ax.errorbar(levels, acc.mean(axis=1), yerr=acc.std(axis=1), marker=marker,
                    capsize=3, label=method.upper())
    ax.set_xlabel("noisily tagged images (%)")
    ax.set_ylabel("category-average accuracy (%)")
    ax.legend(frameon=False)
    return _finish(fig, path)


def plot_parse(image, pred, path, gt=None, void=255):
    """Image, predicted label map and optionally the ground truth side by side."""
    panels = [("image", image), ("prediction", pred)] + ([("ground truth", gt)] if gt is not None else [])
    fig, axes = plt.subplots(1, len(panels), figsize=(2.4 * len(panels), 2.6))
    for ax, (title, data) in zip(axes, panels):
        if data.ndim == 3:
            ax.imshow(data)
        else:
            shown = np.ma.masked_equal(data, void)
            ax.imshow(shown, cmap=CATEGORY_COLORS, vmin=0, vmax=9, interpolation="nearest")
        ax.set_title(title, fontsize=9)
        ax.axis("off")
    return _finish(fig, path)
