"""Report figures written straight to files (Agg backend, no display)."""
import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
    "figure.figsize": (6.0, 3.2),
}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_damage_statistics(path, stats, length, title=None, truth=None):
    """Element-wise mean damage with the min/max band across measurement sets."""
    n = stats["mean"].size
    h = length / n
    x = (np.arange(n) + 0.5) * h
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.fill_between(x, stats["min"], stats["max"], step="mid", color="0.8", label="min / max")
        ax.step(x, stats["mean"], where="mid", color="C0", label="mean")
        if truth is not None:
            ax.axvline(truth, color="C3", lw=0.8, ls="--", label="true location")
        ax.set_xlim(0, length)
        ax.set_ylim(bottom=0)
        ax.set_xlabel("position along beam [m]")
        ax.set_ylabel("damage d")
        if title:
            ax.set_title(title)
        ax.legend(frameon=False, fontsize=8)
        return _finish(fig, path)


def plot_marginal_2d(path, names, edges, density, truth=None, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        mesh = ax.pcolormesh(edges[0], edges[1], density.T, cmap="viridis", shading="flat")
        fig.colorbar(mesh, ax=ax, label="density")
        if truth is not None:
            ax.plot(*truth, marker="x", color="w", ms=8)
        ax.set_xlabel(names[0])
        ax.set_ylabel(names[1])
        if title:
            ax.set_title(title)
        return _finish(fig, path)


def plot_marginal_1d(path, name, edges, density, title=None):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        ax.stairs(density, edges, fill=True, color="C0", alpha=0.7)
        ax.set_xlabel(name)
        ax.set_ylabel("density")
        if title:
            ax.set_title(title)
        return _finish(fig, path)


def plot_enkf_windows(path, result, length):
    """Mean damage after each analysis window."""
    n = result.d_mean.shape[1]
    x = (np.arange(n) + 0.5) * length / n
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for w in range(result.windows):
            ax.plot(x, result.d_mean[w], marker=".", label=f"window {w + 1}")
        ax.set_xlabel("position along beam [m]")
        ax.set_ylabel("mean damage")
        ax.legend(frameon=False, fontsize=8)
        return _finish(fig, path)
