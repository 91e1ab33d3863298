"""PNG figures written next to CLI reports (matplotlib, Agg backend)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .grid import GridFunction  # noqa: E402

STYLE = {
    "figure.figsize": (5.0, 3.4),
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
    "savefig.bbox": "tight",
}
# fixed metadata keeps reruns byte-identical
_META = {"Software": None}


def series_plot(path: str | Path, x: Sequence[float], series: dict[str, Sequence[float]], xlabel: str,
                ylabel: str, title: str = "", logy: bool = False) -> Path:
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        for label in sorted(series):
            ax.plot(list(x), list(series[label]), marker="o", label=label)
        if logy:
            ax.set_yscale("log")
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        if len(series) > 1:
            ax.legend()
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path


def field_plot(path: str | Path, f: GridFunction, title: str = "") -> Path:
    """Line plot in 1-D, image in 2-D, middle slice along the last axis above that."""
    path = Path(path)
    vals = np.asarray(f.values)
    while vals.ndim > 2:
        vals = vals[..., vals.shape[-1] // 2]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if vals.ndim == 1:
            ax.plot(f.axis(0), vals)
            ax.set_xlabel("x")
        else:
            _image(fig, ax, vals, (f.lower[0], f.upper[0], f.lower[1], f.upper[1]))
        if title:
            ax.set_title(title)
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path


def _image(fig, ax, vals: np.ndarray, extent) -> None:
    im = ax.imshow(vals.T, origin="lower", extent=extent, cmap="viridis", aspect="auto")
    fig.colorbar(im, ax=ax)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.grid(False)


def image_plot(path: str | Path, vals: np.ndarray, extent, title: str = "") -> Path:
    """2-D array image; masked entries stay blank."""
    path = Path(path)
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        _image(fig, ax, vals, extent)
        if title:
            ax.set_title(title)
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path


def panel_plot(path: str | Path, fields: dict[str, GridFunction], titles: dict[str, str] | None = None) -> Path:
    """Side-by-side images of 2-D fields."""
    path = Path(path)
    names = sorted(fields)
    with plt.rc_context(STYLE):
        fig, axes = plt.subplots(1, len(names), figsize=(3.2 * len(names), 3.0), squeeze=False)
        for ax, key in zip(axes[0], names):
            f = fields[key]
            ax.imshow(np.asarray(f.values).T, origin="lower", cmap="viridis",
                      extent=(f.lower[0], f.upper[0], f.lower[1], f.upper[1]))
            ax.set_title((titles or {}).get(key, key), fontsize=7)
            ax.grid(False)
        fig.savefig(path, metadata=_META)
        plt.close(fig)
    return path
