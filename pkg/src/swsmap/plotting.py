"""Figure rendering for maps and TL planes (non-interactive backend)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _extent(shape, fsp_px_per_mm):
    X, Z = shape
    return [0, X / fsp_px_per_mm, Z / fsp_px_per_mm, 0]


def plot_maps(maps: dict, path, fsp_px_per_mm=1.0, vmin=None, vmax=None, title=None):
    """Side-by-side SWS maps (m/s) with a shared colour scale; invalid cells blank."""
    items = list(maps.items())
    vals = np.concatenate([m.data[m.valid] for _, m in items if m.valid.any()] or [np.zeros(1)])
    vmin = np.percentile(vals, 1) if vmin is None else vmin
    vmax = np.percentile(vals, 99) if vmax is None else vmax
    fig, axes = plt.subplots(1, len(items), figsize=(3.2 * len(items) + 0.8, 3.2), squeeze=False)
    im = None
    for ax, (name, m) in zip(axes[0], items):
        img = np.ma.masked_where(~m.valid, m.data).T
        im = ax.imshow(img, cmap="viridis", vmin=vmin, vmax=vmax, aspect="equal",
                       extent=_extent(m.shape, fsp_px_per_mm))
        ax.set_title(name)
        ax.set_xlabel("lateral (mm)")
    axes[0, 0].set_ylabel("axial (mm)")
    fig.colorbar(im, ax=axes[0].tolist(), label="SWS (m/s)", shrink=0.85)
    if title:
        fig.suptitle(title)
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_tl_plane(d, path, fs_hz, fsp_px_per_mm, title=None):
    """Time-lateral plane ``d[x, n]`` as an image (time down, lateral across)."""
    X, N = d.shape
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.imshow(d.T, cmap="gray", aspect="auto",
              extent=[0, X / fsp_px_per_mm, N / fs_hz * 1000.0, 0])
    ax.set_xlabel("lateral (mm)")
    ax.set_ylabel("time (ms)")
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
