"""Log–log scaling figures with fitted and reference slopes."""

from __future__ import annotations

from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 - backend must be set first
import numpy as np  # noqa: E402

from .fitting import PowerFit, fit_powerlaw, select  # noqa: E402


@dataclass(frozen=True)
class PlotSpec:
    """What to draw from one study table.

    ``reference_exponent`` adds a dashed guide line of that slope through
    the first data point; ``None`` skips it.  ``study`` narrows the rows
    when one table mixes study names.
    """

    observable: str
    x: str = "eps"
    study: str | None = None
    reference_exponent: float | None = None
    title: str | None = None
    xlabel: str | None = None
    ylabel: str | None = None


def plot_scaling(rows, spec: PlotSpec, out_path) -> PowerFit:
    """Render one scaling panel and return the fitted slope.

    Scatter of (x, value) on log–log axes, solid fitted line, optional
    dashed reference, and a slope annotation in the corner.  The fit is
    computed from the same rows that are drawn.
    """
    fit = fit_powerlaw(rows, spec.observable, x=spec.x, study=spec.study)
    picked = select(rows, spec.observable, spec.study)
    xs = np.array([r.eps if spec.x == "eps" else r.dt for r in picked])
    ys = np.array([r.value for r in picked])
    keep = np.isfinite(ys) & (ys > 0)
    xs, ys = xs[keep], ys[keep]
    order = np.argsort(xs)
    xs, ys = xs[order], ys[order]

    fig, ax = plt.subplots(figsize=(5.0, 3.8))
    ax.loglog(xs, ys, "o", color="tab:blue", label=spec.observable)
    grid_x = np.geomspace(xs.min(), xs.max(), 64)
    ax.loglog(grid_x, np.exp(fit.intercept) * grid_x**fit.slope, "-",
              color="tab:orange",
              label=f"fit: slope {fit.slope:.3f}")
    if spec.reference_exponent is not None:
        anchor = ys[0] * (grid_x / xs[0]) ** spec.reference_exponent
        ax.loglog(grid_x, anchor, "--", color="gray",
                  label=f"reference: slope {spec.reference_exponent:g}")
    ax.annotate(
        f"slope {fit.slope:.6f}\n$r^2$ = {fit.r_squared:.6f}",
        xy=(0.03, 0.04), xycoords="axes fraction",
        fontsize=8, family="monospace",
        bbox=dict(boxstyle="round", facecolor="white", alpha=0.8),
    )
    ax.set_xlabel(spec.xlabel or spec.x)
    ax.set_ylabel(spec.ylabel or spec.observable)
    if spec.title:
        ax.set_title(spec.title)
    ax.legend(fontsize=7, loc="upper left")
    ax.grid(True, which="both", alpha=0.25)
    fig.tight_layout()
    fig.savefig(out_path, dpi=130)
    plt.close(fig)
    return fit
