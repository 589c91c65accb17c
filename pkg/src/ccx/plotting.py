"""SVG figures for report artifacts. Output bytes depend only on the input data."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import SchemaError  # noqa: E402

HEADERS = {
    "boundary-circle": ["angle", "product", "invariant"],
    "bound-curve": ["t", "displacement", "bound"],
    "homotopy-heatmap": ["v", "t", "point", "displacement"],
}

plt.rcParams["svg.hashsalt"] = "ccx"
plt.rcParams["svg.fonttype"] = "none"


def _read(path: Path, kind: str) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != HEADERS[kind]:
        raise SchemaError(f"{path.name} is not a {kind} table (header {rows[0] if rows else None})")
    return rows[1:]


def _save(fig, out: Path) -> Path:
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format="svg", metadata={"Date": None})
    plt.close(fig)
    return out


def _placeholder(ax, text: str):
    ax.text(0.5, 0.5, text, ha="center", va="center", transform=ax.transAxes)
    ax.set_axis_off()


def plot(path, kind: str, out) -> Path:
    if kind not in HEADERS:
        raise SchemaError(f"unknown plot kind {kind!r}")
    path, out = Path(path), Path(out)
    rows = _read(path, kind)
    fig, ax = plt.subplots(figsize=(6, 4.5))
    if kind == "boundary-circle":
        if not rows:
            _placeholder(ax, "empty boundary: no unsaturated ray pairs")
        else:
            a = np.array([[float(x) for x in r] for r in rows])
            ax.scatter(a[:, 0], a[:, 1], s=6, c="tab:blue", label="(x|y)")
            th = np.linspace(a[:, 0].min(), np.pi, 200)
            target = float(np.median(a[:, 2]))
            ax.plot(th, target / np.sin(th / 2), "k--", lw=1, label="c / sin(theta/2)")
            ax.set_xlabel("angle between rays")
            ax.set_ylabel("Gromov product")
            ax.legend()
    elif kind == "bound-curve":
        if not rows:
            _placeholder(ax, "no sampled radii")
        else:
            a = np.array([[float(x) for x in r] for r in rows])
            order = np.argsort(a[:, 0], kind="stable")
            a = a[order]
            ax.plot(a[:, 0], a[:, 2], "k-", lw=1, label="bound")
            ax.scatter(a[:, 0], a[:, 1], s=8, label="displacement")
            ax.set_xlabel("cone radius t")
            ax.set_ylabel("cone distance")
            ax.legend()
    else:
        if not rows:
            _placeholder(ax, "no homotopy tracks")
        else:
            vs = sorted({r[0] for r in rows}, key=lambda s: (len(s), s))
            idx = {v: i for i, v in enumerate(vs)}
            ts = np.array([float(r[1]) for r in rows])
            T = int(np.ceil(ts.max())) + 1
            grid = np.full((len(vs), T), np.nan)
            for r in rows:
                grid[idx[r[0]], int(round(float(r[1])))] = float(r[3])
            im = ax.imshow(grid, aspect="auto", interpolation="nearest", cmap="viridis")
            fig.colorbar(im, ax=ax, label="distance from start")
            ax.set_xlabel("t")
            ax.set_ylabel("net point")
    return _save(fig, out)
