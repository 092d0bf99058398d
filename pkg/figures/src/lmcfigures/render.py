"""Turn a figure spec into a matplotlib figure or an image file on disk.

:func:`build` returns the live Figure, which is what the tests inspect;
:func:`render` writes it out and closes it. Output bytes are deterministic
for identical inputs: the Agg backend draws everything with pinned PNG
metadata, while SVG output gets a fixed hash salt and no date stamp.

Every builder parses all of its inputs before it touches matplotlib, so a
schema error never leaves a half-drawn figure or a stale output file.
"""

from __future__ import annotations

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "lmcfigures"

import matplotlib.pyplot as plt
import numpy as np

from . import sources
from .spec import FigureSpec, SchemaError, expand_inputs

__all__ = ["build", "render"]

# beyond this amplitude a linear trajectory axis would flatten every
# well-behaved curve, so the plot switches to symlog
_SYMLOG_THRESHOLD = 1e3


def _panel_labels(spec: FigureSpec, files: list[Path]) -> tuple[str, ...]:
    return spec.labels if spec.labels else tuple(f.stem for f in files)


def _build_trajectory(spec: FigureSpec, files: list[Path]):
    trajectories = [sources.read_trajectory(f) for f in files]
    burn_in = spec.burn_in
    if burn_in is None:
        sidecar = sources.read_sidecar_config(files[0], required=False)
        burn_in = int(sidecar.get("burn_in", 0))

    fig, ax = plt.subplots(figsize=(7.0, 4.2), layout="constrained")
    if burn_in > 0:
        ax.axvspan(0, burn_in, color="0.88", zorder=0, label="_nolegend_")
    largest = 0.0
    for traj, label in zip(trajectories, _panel_labels(spec, files)):
        keep = np.isfinite(traj.x1)
        if traj.diverged_at is not None:
            keep &= traj.steps < traj.diverged_at
            label = f"{label} (diverged at step {traj.diverged_at})"
        steps, x1 = traj.steps[keep], traj.x1[keep]
        (line,) = ax.plot(steps, x1, label=label)
        if x1.size:
            largest = max(largest, float(np.max(np.abs(x1))))
        if traj.diverged_at is not None and steps.size:
            ax.plot(
                steps[-1],
                x1[-1],
                "x",
                color=line.get_color(),
                markersize=9,
                markeredgewidth=2,
                label="_nolegend_",
            )
    if largest > _SYMLOG_THRESHOLD:
        ax.set_yscale("symlog")
    ax.set_xlabel("step")
    ax.set_ylabel("first coordinate")
    ax.legend()
    return fig


def _sweep_points(
    spec: FigureSpec, files: list[Path], column: str
) -> dict[str, list[tuple[float, float]]]:
    by_method: dict[str, list[tuple[float, float]]] = {}
    for path in files:
        sidecar = sources.read_sidecar_config(path)
        if "tau" not in sidecar:
            raise SchemaError(f"{path.parent / 'config.toml'}: missing key 'tau'")
        tau = float(sidecar["tau"])
        rows = [
            r
            for r in sources.read_summary(path)
            if r.moment_order == spec.moment_order
        ]
        if not rows:
            raise SchemaError(
                f"{path}: no row with moment_order {spec.moment_order}"
            )
        for row in rows:
            value = getattr(row, column)
            by_method.setdefault(row.method, []).append((tau, value))
    return by_method


def _build_sweep(spec: FigureSpec, files: list[Path], column: str):
    by_method = _sweep_points(spec, files, column)
    what = {"re": "relative error", "cv": "coefficient of variation"}[column]

    fig, ax = plt.subplots(figsize=(6.0, 4.2), layout="constrained")
    for method in sorted(by_method):
        points = sorted(by_method[method])
        ax.plot(
            [p[0] for p in points],
            [p[1] for p in points],
            marker="o",
            label=method,
        )
    ax.set_xscale("log")
    ax.set_xlabel("step size τ")
    ax.set_ylabel(f"{what} (moment order {spec.moment_order})")
    ax.legend()
    return fig


def _build_image_grid(spec: FigureSpec, files: list[Path]):
    images = [sources.read_pgm(f) for f in files]
    labels = _panel_labels(spec, files)
    n = len(images)
    ncols = min(n, 3)
    nrows = math.ceil(n / ncols)

    fig, axes = plt.subplots(
        nrows,
        ncols,
        figsize=(3.2 * ncols, 3.5 * nrows),
        layout="constrained",
        squeeze=False,
    )
    for i, ax in enumerate(axes.flat):
        if i >= n:
            ax.set_axis_off()
            continue
        img, maxval = images[i]
        ax.imshow(img, cmap="gray", vmin=0, vmax=maxval, interpolation="nearest")
        ax.set_title(labels[i], fontsize=10)
        ax.set_xticks([])
        ax.set_yticks([])
    return fig


def build(spec: FigureSpec):
    """Parse the spec's inputs and return the drawn matplotlib Figure."""
    files = expand_inputs(spec)
    if spec.kind == "trajectory":
        fig = _build_trajectory(spec, files)
    elif spec.kind == "re_vs_tau":
        fig = _build_sweep(spec, files, "re")
    elif spec.kind == "cv_vs_tau":
        fig = _build_sweep(spec, files, "cv")
    else:
        fig = _build_image_grid(spec, files)
    if spec.title:
        fig.suptitle(spec.title)
    return fig


def render(spec: FigureSpec) -> Path:
    """Build the figure and write it to ``spec.output``.

    Nothing is written when the inputs fail to parse. Re-rendering the
    same spec over the same inputs reproduces the output byte for byte.
    """
    fig = build(spec)
    out = Path(spec.output)
    try:
        out.parent.mkdir(parents=True, exist_ok=True)
        if out.suffix.lower() == ".svg":
            fig.savefig(out, metadata={"Date": None})
        else:
            fig.savefig(out, metadata={"Software": "lmcfigures"})
    finally:
        plt.close(fig)
    return out
