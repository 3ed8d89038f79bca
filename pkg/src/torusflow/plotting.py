"""Optional PNG figures rendered from the CSV sidecars of a report directory."""

from __future__ import annotations

from pathlib import Path

import numpy as np


def _load(path: Path):
    data = np.genfromtxt(path, delimiter=",", names=True, dtype=float)
    return np.atleast_1d(data)


def render_figures(outdir) -> list[Path]:
    """Write ``counting.png`` and ``samples.png`` where the CSVs exist."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out = Path(outdir)
    written = []
    csv_path = out / "counting.csv"
    if csv_path.exists():
        d = _load(csv_path)
        fig, ax = plt.subplots(figsize=(5, 3.5))
        ax.plot(d["T"], d["cumulative"], label="translates up to height T")
        ax.plot(d["T"], d["bound"], "--", label="T/2")
        ax.set_xlabel("T")
        ax.set_ylabel("count")
        ax.legend()
        fig.tight_layout()
        target = out / "counting.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)
    csv_path = out / "samples.csv"
    if csv_path.exists():
        d = _load(csv_path)
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.scatter(d["x_1"], d["x_2"], c=d["label"], s=1, cmap="tab10")
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_aspect("equal")
        ax.set_xlabel("x_1")
        ax.set_ylabel("x_2")
        fig.tight_layout()
        target = out / "samples.png"
        fig.savefig(target, dpi=120)
        plt.close(fig)
        written.append(target)
    return written
