"""Render validation-suite figures to image files.

Only the validation path draws figures; sampling commands stay plain
JSON-lines.  The backend is forced to Agg so rendering works headless.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = ["render_figures"]


def _pyplot():
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    return plt


def render_figures(result, outdir: str) -> list[str]:
    """Write one PNG per available figure payload; return the paths."""
    plt = _pyplot()
    os.makedirs(outdir, exist_ok=True)
    written = []
    data = result.figure_data

    overlay = data.get("cdf_overlay")
    if overlay is not None:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.plot(overlay["grid"], overlay["oracle"], lw=1.5,
                label="quadrature oracle")
        ax.plot(overlay["empirical_x"], overlay["empirical_y"],
                lw=0.8, alpha=0.8, label="empirical")
        ax.set_xlabel("coordinate value")
        ax.set_ylabel("CDF")
        ax.set_title(f"Marginal CDF: {overlay['label']}")
        ax.legend(loc="upper left")
        path = os.path.join(outdir, "cdf_overlay.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    band = data.get("rate_band")
    if band:
        fig, ax = plt.subplots(figsize=(6, 4))
        labels = [b[0] for b in band]
        rates = [b[1] for b in band]
        x = np.arange(len(band))
        ax.bar(x, rates, width=0.5, color="#4878d0")
        ax.axhline(math.exp(-1.0), color="k", ls="--", lw=1,
                   label="$e^{-1}$ floor")
        ax.axhline(math.exp(-0.5), color="k", ls=":", lw=1,
                   label="$e^{-1/2}$ ceiling")
        ax.set_xticks(x, labels)
        ax.set_ylim(0, 1)
        ax.set_ylabel("acceptance rate")
        ax.set_title("Empirical acceptance vs proven band")
        ax.legend()
        path = os.path.join(outdir, "acceptance_band.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    curve = data.get("ratio_curve")
    if curve is not None:
        fig, ax = plt.subplots(figsize=(6, 4))
        ax.semilogy(curve["sigma_sq"], curve["best_ratio"], "o-")
        ax.axhline(1.0, color="k", lw=0.8)
        ax.set_xlabel(r"$\sigma^2$")
        ax.set_ylabel("best worst-case density ratio")
        ax.set_title("Angular-Gaussian envelope degrades with concentration")
        path = os.path.join(outdir, "ratio_curve.png")
        fig.savefig(path, dpi=120, bbox_inches="tight")
        plt.close(fig)
        written.append(path)

    return written
