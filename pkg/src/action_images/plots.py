"""Optional figures for the CLI (needs matplotlib)."""

from pathlib import Path


def _plt():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def heatmap_strip(frames, path, title=None):
    """One row per view, one column per channel."""
    plt = _plt()
    n = len(frames)
    fig, axes = plt.subplots(n, 3, figsize=(9, 3 * n), squeeze=False)
    for v, f in enumerate(frames):
        for c, name in enumerate(("pos", "normal", "up + gripper")):
            ax = axes[v][c]
            ax.imshow(f[..., c], vmin=0.0, vmax=1.0, cmap="magma")
            ax.set_title(f"view {v}: {name}", fontsize=9)
            ax.axis("off")
    if title:
        fig.suptitle(title)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=80)
    plt.close(fig)


def sweep_plot(sweep, path):
    """Median position error against ray samples, one line per resolution."""
    plt = _plt()
    fig, ax = plt.subplots(figsize=(5, 4))
    for r, row in zip(sweep.resolutions, sweep.median_grid()):
        ks = [k for k, m in zip(sweep.ks, row) if m is not None]
        ms = [m * 1e3 for m in row if m is not None]
        ax.plot(ks, ms, marker="o", label=f"{r} px")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("ray samples k")
    ax.set_ylabel("median position error [mm]")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=100)
    plt.close(fig)
